import numpy as np
import pytest

from langsteer import demos as D
from langsteer import language as lang
from langsteer import models as M
from langsteer import sim
from langsteer.assets import data_path
from langsteer.demos import TrainingTriple
from langsteer.errors import DimensionError, UsageError

CFG = M.LatentActionConfig(state_dim=4, action_dim=4, latent_dim=2, embed_dim=16,
                           hidden_width=10, film_gen_hidden=12)


def small_embedding(seed=0, dim=16):
    return np.random.default_rng(seed).normal(size=dim)


# --- construction -------------------------------------------------------------

def test_config_validation():
    with pytest.raises(DimensionError):
        M.LatentActionConfig(state_dim=4, action_dim=4, latent_dim=5)
    with pytest.raises(DimensionError):
        M.LatentActionConfig(state_dim=0, action_dim=4, latent_dim=1)
    # equality is allowed: the 2-DoF baseline on the 2D world needs d == m
    M.LatentActionConfig(state_dim=2, action_dim=2, latent_dim=2)


def test_variant_structure():
    lb = M.new_bundle(CFG, "language", seed=0)
    assert lb.encoder.gen_spec is not None and lb.decoder.gen_spec is not None
    nb = M.new_bundle(CFG, "no_language", seed=0)
    assert nb.encoder.gen_spec is None and nb.decoder.gen_spec is None
    ib = M.new_bundle(CFG, "imitation", seed=0)
    assert ib.encoder is None and ib.policy is not None
    with pytest.raises(UsageError):
        M.new_bundle(CFG, "hybrid")


def test_il_parameter_parity():
    target = (M._encoder_spec(CFG).param_count() + M._decoder_spec(CFG).param_count())
    ib = M.new_bundle(CFG, "imitation", seed=0)
    got = ib.policy.spec.param_count()
    assert ib.policy.spec.n_layers == 6
    assert abs(got - target) / target < 0.10


# --- single-sample ops -----------------------------------------------------------

def test_encode_shape_and_determinism():
    b = M.new_bundle(CFG, "language", seed=1)
    s, a, e = np.zeros(4), np.ones(4) * 0.2, small_embedding()
    z1, z2 = M.encode(b, s, e, a), M.encode(b, s, e, a)
    assert z1.shape == (2,)
    assert np.array_equal(z1, z2)
    with pytest.raises(DimensionError):
        M.encode(b, np.zeros(3), e, a)


def test_encode_rejected_for_imitation():
    b = M.new_bundle(CFG, "imitation", seed=1)
    with pytest.raises(UsageError):
        M.encode(b, np.zeros(4), small_embedding(), np.zeros(4))
    with pytest.raises(UsageError):
        M.decode(b, np.zeros(4), small_embedding(), np.zeros(2))


def test_decode_shape_and_clipping():
    b = M.new_bundle(CFG, "language", seed=2)
    # inflate output weights so raw outputs exceed the limit many times over
    b.decoder.params["W3"] *= 500.0
    a = M.decode(b, np.ones(4), small_embedding(), np.array([1.0, -1.0]))
    assert a.shape == (4,)
    assert np.all(np.abs(a) <= CFG.action_limit + 1e-12)
    assert np.max(np.abs(a)) == pytest.approx(CFG.action_limit)


def test_decode_clamps_latent():
    b = M.new_bundle(CFG, "language", seed=3)
    e = small_embedding()
    wild = M.decode(b, np.zeros(4), e, np.array([7.0, -9.0]))
    edge = M.decode(b, np.zeros(4), e, np.array([1.0, -1.0]))
    assert np.array_equal(wild, edge)


def test_no_language_ignores_embedding():
    b = M.new_bundle(CFG, "no_language", seed=4)
    s, a = np.full(4, 0.1), np.full(4, -0.3)
    z1 = M.encode(b, s, small_embedding(1), a)
    z2 = M.encode(b, s, small_embedding(2), a)
    assert np.array_equal(z1, z2)
    d1 = M.decode(b, s, small_embedding(3), np.array([0.5, 0.5]))
    d2 = M.decode(b, s, None, np.array([0.5, 0.5]))
    assert np.array_equal(d1, d2)


def test_il_forward_shape_determinism_and_guard():
    b = M.new_bundle(CFG, "imitation", seed=5)
    e = small_embedding()
    a1 = M.il_forward(b, np.zeros(4), e)
    a2 = M.il_forward(b, np.zeros(4), e)
    assert a1.shape == (4,) and np.array_equal(a1, a2)
    lb = M.new_bundle(CFG, "language", seed=5)
    with pytest.raises(UsageError):
        M.il_forward(lb, np.zeros(4), e)


# --- training ----------------------------------------------------------------------

def _constant_triples(n=40):
    s = np.array([0.1, -0.2, 0.3, 0.5])
    return [TrainingTriple(utterance_id=0, s=s, a=np.zeros(4)) for _ in range(n)]


@pytest.mark.parametrize("variant", ["language", "no_language", "imitation"])
def test_train_constant_fit(variant):
    b = M.new_bundle(CFG, variant, seed=6)
    emb = {0: small_embedding()}
    _, losses = M.train(b, _constant_triples(), emb, epochs=60, batch_size=16, seed=0)
    assert losses[-1] < 1e-6
    assert losses[-1] < losses[0]


def test_train_deterministic():
    def run():
        b = M.new_bundle(CFG, "language", seed=7)
        rng = np.random.default_rng(0)
        triples = [
            TrainingTriple(utterance_id=i % 3, s=rng.normal(size=4), a=rng.normal(size=4) * 0.3)
            for i in range(50)
        ]
        emb = {i: small_embedding(i) for i in range(3)}
        _, losses = M.train(b, triples, emb, epochs=10, batch_size=16, seed=11)
        return losses

    assert run() == run()


def test_train_rejects_empty_and_bad_dims():
    b = M.new_bundle(CFG, "language", seed=8)
    with pytest.raises(ValueError):
        M.train(b, [], {0: small_embedding()}, epochs=1)
    bad = [TrainingTriple(utterance_id=0, s=np.zeros(3), a=np.zeros(4))]
    with pytest.raises(DimensionError):
        M.train(b, bad, {0: small_embedding()}, epochs=1)
    missing = [TrainingTriple(utterance_id=9, s=np.zeros(4), a=np.zeros(4))]
    with pytest.raises(ValueError):
        M.train(b, missing, {0: small_embedding()}, epochs=1)


# --- gradient check -------------------------------------------------------------------

@pytest.mark.parametrize("variant", ["language", "no_language", "imitation"])
def test_full_model_grad_check(variant):
    cfg = M.LatentActionConfig(state_dim=3, action_dim=3, latent_dim=1, embed_dim=8,
                               hidden_width=6, film_gen_hidden=7)
    b = M.new_bundle(cfg, variant, seed=9)
    rng = np.random.default_rng(10)
    triples = [
        TrainingTriple(utterance_id=i % 2, s=rng.normal(size=3), a=rng.normal(size=3) * 0.5)
        for i in range(4)
    ]
    emb = {0: rng.normal(size=8), 1: rng.normal(size=8)}
    report = M.grad_check(b, triples, emb)
    assert report.ok, report.summary()


# --- trained cross fixture -------------------------------------------------------------

@pytest.fixture(scope="module")
def cross_fixture():
    env = sim.CrossWorld()
    labeled = lang.load_exemplar_file(str(data_path("utterances_cross.json")))
    table = lang.EmbeddingTable.from_hash([t for _, t in labeled], dim=64)
    exemplars = lang.build_exemplars(labeled, table)
    demos = D.generate_demo_set(env, env.tasks, demos_per_task=10, style="sweeping", seed=100)
    D.assign_utterances(demos, lang.exemplar_ids_by_task(exemplars))
    cfg = D.AugmentConfig(window_size=5, noise_sigma=0.01, noise_multiplier=1)
    triples = D.build_triples(demos, cfg, seed=100, velocity_dims=env.velocity_dims)
    mcfg = M.LatentActionConfig(state_dim=2, action_dim=2, latent_dim=1, embed_dim=64)
    bundle = M.new_bundle(mcfg, "language", seed=100)
    embeddings = lang.embeddings_by_id(exemplars)
    bundle, losses = M.train(bundle, triples, embeddings, epochs=150, batch_size=512, seed=100)
    loss_before_cal = M.dataset_loss(bundle, triples, embeddings)
    M.calibrate_latent_axes(bundle, [(d.utterance_ids[0], d.states, d.actions) for d in demos],
                            embeddings)
    return {"bundle": bundle, "losses": losses, "demos": demos,
            "exemplars": exemplars, "table": table, "triples": triples,
            "loss_before_cal": loss_before_cal, "embeddings": embeddings}


def test_cross_training_reduces_loss(cross_fixture):
    losses = cross_fixture["losses"]
    assert losses[-1] < losses[0] / 10.0


def test_cross_encoder_separates_up_down(cross_fixture):
    bundle = cross_fixture["bundle"]
    exemplars = {e.id: e for e in cross_fixture["exemplars"]}
    z_means = {}
    for task in ("up", "down"):
        zs = []
        for demo in cross_fixture["demos"]:
            if demo.task != task:
                continue
            e = exemplars[demo.utterance_ids[0]].embedding
            for i in range(demo.length):
                zs.append(M.encode(bundle, demo.states[i], e, demo.actions[i])[0])
        z_means[task] = np.mean(zs)
    assert np.sign(z_means["up"]) != 0
    assert np.sign(z_means["up"]) == -np.sign(z_means["down"])


def test_cross_decode_sign_matches_command(cross_fixture):
    # after axis calibration, pushing the latent to +1 under "move to the
    # right" must produce a positive-x action from the origin
    bundle = cross_fixture["bundle"]
    ex_right = next(e for e in cross_fixture["exemplars"] if e.text == "move to the right")
    action = M.decode(bundle, np.zeros(2), ex_right.embedding, np.array([1.0]))
    assert action[0] > 0
    assert abs(action[0]) > abs(action[1])  # dominant motion along x


def test_calibration_preserves_reconstruction(cross_fixture):
    # the per-utterance affine lives outside the training path: dataset
    # reconstruction loss is untouched by calibration
    post = M.dataset_loss(cross_fixture["bundle"], cross_fixture["triples"],
                          cross_fixture["embeddings"])
    assert post == pytest.approx(cross_fixture["loss_before_cal"], rel=1e-12)


def test_calibrated_neutral_input_is_nearly_still(cross_fixture):
    bundle = cross_fixture["bundle"]
    for ex in cross_fixture["exemplars"][:4]:
        a = M.decode(bundle, np.zeros(2), ex.embedding, np.zeros(1))
        assert np.linalg.norm(a) < 0.2  # rest-anchored center: far below full speed


# --- checkpoints -------------------------------------------------------------------------

@pytest.mark.parametrize("variant", ["language", "no_language", "imitation"])
def test_bundle_checkpoint_roundtrip(tmp_path, variant):
    b = M.new_bundle(CFG, variant, seed=12)
    # take a couple of optimizer steps so moments are non-trivial
    emb = {0: small_embedding()}
    M.train(b, _constant_triples(8), emb, epochs=2, batch_size=4, seed=0)
    path = tmp_path / "bundle.json"
    M.save_bundle(str(path), b)
    b2 = M.load_bundle(str(path))
    assert b2.variant == b.variant and b2.config == b.config
    p1, p2 = M.bundle_param_dict(b), M.bundle_param_dict(b2)
    assert set(p1) == set(p2)
    for k in p1:
        assert np.array_equal(p1[k], p2[k]), k
        assert np.array_equal(b.adam.first_moment[k], b2.adam.first_moment[k])
    assert b2.adam.step_count == b.adam.step_count
    # behaviorally identical
    if variant == "imitation":
        x = M.il_forward(b, np.full(4, 0.2), small_embedding())
        y = M.il_forward(b2, np.full(4, 0.2), small_embedding())
    else:
        x = M.decode(b, np.full(4, 0.2), small_embedding(), np.zeros(2))
        y = M.decode(b2, np.full(4, 0.2), small_embedding(), np.zeros(2))
    assert np.array_equal(x, y)
