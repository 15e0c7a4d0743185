"""
Latent-action models and their training loop.

Three variants share one bundle structure:

* ``language``: an encoder (state, action) -> z and decoder (state, z) ->
  action, each a small GELU MLP with a feature-wise modulation site after
  its first layer driven by a per-network generator fed the utterance
  embedding. Trained as an autoencoder: reconstruct the action through
  the low-dimensional bottleneck.
* ``no_language``: the same autoencoder with the modulation machinery
  removed entirely; the embedding argument is never read.
* ``imitation``: a single state -> action policy MLP (one modulation site)
  sized to the same core parameter budget and layer count as the
  encoder + decoder pair, trained with plain regression.

During training the encoder's latent passes straight to the decoder,
unconstrained. At control time the user's latent input is clamped to
[-1, 1]^d and decoded actions are clipped to the per-dimension speed
limit before they reach a simulator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .demos import TrainingTriple
from .errors import DimensionError, UsageError

VARIANTS = ("language", "no_language", "imitation")


@dataclass(frozen=True)
class LatentActionConfig:
    state_dim: int
    action_dim: int
    latent_dim: int
    embed_dim: int = 768
    hidden_width: int = 30
    film_gen_hidden: int = 128
    action_limit: float = 1.0

    def __post_init__(self):
        dims = (self.state_dim, self.action_dim, self.latent_dim, self.embed_dim,
                self.hidden_width, self.film_gen_hidden)
        if any(d <= 0 for d in dims):
            raise DimensionError(f"all dims must be positive: {self}")
        # d is meant to be much smaller than m; equality is allowed because the
        # 2-DoF baseline on the 2D point world needs d == m.
        if not 1 <= self.latent_dim <= self.action_dim:
            raise DimensionError(
                f"latent dim must satisfy 1 <= d <= action_dim, got d={self.latent_dim}, "
                f"m={self.action_dim}"
            )


@dataclass
class Net:
    """One MLP plus its optional modulation generator."""

    spec: nn.MLPSpec
    params: dict[str, np.ndarray]
    gen_spec: nn.MLPSpec | None = None
    gen_params: dict[str, np.ndarray] | None = None


@dataclass
class ModelBundle:
    config: LatentActionConfig
    variant: str
    encoder: Net | None = None
    decoder: Net | None = None
    policy: Net | None = None
    adam: nn.AdamState | None = None
    # per-utterance live-control calibration, keyed by embedding digest:
    # digest -> (shift, signed_scale). decode maps the user's clamped input
    # u through z = shift + scale * u, so +-1 spans that utterance's own
    # latent band oriented so +1 is task-forward. Written by
    # calibrate_latent_axes; empty for uncalibrated bundles.
    latent_affine: dict = field(default_factory=dict)

    def nets(self) -> dict[str, Net]:
        out = {}
        if self.encoder is not None:
            out["enc"] = self.encoder
        if self.decoder is not None:
            out["dec"] = self.decoder
        if self.policy is not None:
            out["pol"] = self.policy
        return out


def il_hidden_width(config: LatentActionConfig) -> int:
    """Hidden width giving the imitation MLP the same core parameter budget
    as encoder + decoder at the same total layer count (6 dense layers)."""
    target = (_encoder_spec(config).param_count() + _decoder_spec(config).param_count())
    n, m = config.state_dim, config.action_dim

    def count(h):
        dims = [n] + [h] * 5 + [m]
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(6))

    best = min(range(2, 4 * config.hidden_width), key=lambda h: abs(count(h) - target))
    return best


def _encoder_spec(config, with_film=True) -> nn.MLPSpec:
    return nn.MLPSpec(
        (config.state_dim + config.action_dim, config.hidden_width, config.hidden_width,
         config.latent_dim),
        activation="gelu",
        film_after_layer=1 if with_film else None,
    )


def _decoder_spec(config, with_film=True) -> nn.MLPSpec:
    return nn.MLPSpec(
        (config.state_dim + config.latent_dim, config.hidden_width, config.hidden_width,
         config.action_dim),
        activation="gelu",
        film_after_layer=1 if with_film else None,
    )


def _gen_spec(config, width) -> nn.MLPSpec:
    return nn.MLPSpec((config.embed_dim, config.film_gen_hidden, 2 * width), activation="gelu")


def new_bundle(config: LatentActionConfig, variant: str, seed: int = 0,
               lr: float = 1e-3) -> ModelBundle:
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}")
    rng = np.random.default_rng(seed)
    bundle = ModelBundle(config=config, variant=variant)
    if variant == "imitation":
        h = il_hidden_width(config)
        spec = nn.MLPSpec((config.state_dim,) + (h,) * 5 + (config.action_dim,),
                          activation="gelu", film_after_layer=1)
        gen = _gen_spec(config, h)
        bundle.policy = Net(spec=spec, params=nn.init_params(spec, rng),
                            gen_spec=gen, gen_params=nn.init_params(gen, rng))
    else:
        with_film = variant == "language"
        enc_spec = _encoder_spec(config, with_film)
        dec_spec = _decoder_spec(config, with_film)
        bundle.encoder = Net(spec=enc_spec, params=nn.init_params(enc_spec, rng))
        bundle.decoder = Net(spec=dec_spec, params=nn.init_params(dec_spec, rng))
        if with_film:
            gen = _gen_spec(config, config.hidden_width)
            bundle.encoder.gen_spec = gen
            bundle.encoder.gen_params = nn.init_params(gen, rng)
            bundle.decoder.gen_spec = gen
            bundle.decoder.gen_params = nn.init_params(gen, rng)
    bundle.adam = nn.AdamState.for_params(bundle_param_dict(bundle), lr=lr)
    return bundle


def bundle_param_dict(bundle: ModelBundle) -> dict[str, np.ndarray]:
    """Flat name -> array view over every parameter in the bundle."""
    out: dict[str, np.ndarray] = {}
    for name, net in bundle.nets().items():
        for k, v in net.params.items():
            out[f"{name}.{k}"] = v
        if net.gen_params is not None:
            for k, v in net.gen_params.items():
                out[f"{name}_gen.{k}"] = v
    return out


def _check_vec(v, dim, what):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (dim,):
        raise DimensionError(f"{what} has shape {v.shape}, expected ({dim},)")
    return v


def _embedding_key(e: np.ndarray) -> str:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(np.asarray(e, dtype=np.float64)).tobytes()).hexdigest()


def latent_affine_for(bundle: ModelBundle, e) -> tuple[np.ndarray, np.ndarray]:
    """Per-utterance live-control affine (identity when uncalibrated)."""
    d = bundle.config.latent_dim
    if not bundle.latent_affine or e is None:
        return np.zeros(d), np.ones(d)
    entry = bundle.latent_affine.get(_embedding_key(e))
    if entry is None:
        return np.zeros(d), np.ones(d)
    shift, scale = entry
    return np.asarray(shift, dtype=np.float64), np.asarray(scale, dtype=np.float64)


def _film_vectors(net: Net, e: np.ndarray, dtype=None):
    if net.gen_spec is None:
        return None
    g, b = nn.film_generate(net.gen_spec, net.gen_params, e, dtype=dtype)
    return g, b


def encode(bundle: ModelBundle, s, e, a) -> np.ndarray:
    """Latent code for a (state, utterance embedding, action) triple."""
    if bundle.variant == "imitation":
        raise UsageError("imitation variant has no encoder")
    cfg = bundle.config
    s = _check_vec(s, cfg.state_dim, "state")
    a = _check_vec(a, cfg.action_dim, "action")
    film = None
    if bundle.variant == "language":
        e = _check_vec(e, cfg.embed_dim, "embedding")
        film = _film_vectors(bundle.encoder, e)
    z, _ = nn.dense_forward(bundle.encoder.spec, bundle.encoder.params,
                            np.concatenate([s, a]), film=film)
    return z


def decoder_film(bundle: ModelBundle, e) -> tuple[np.ndarray, np.ndarray] | None:
    """Decoder modulation vectors for an embedding; fixed for a whole episode,
    so callers in tick loops compute this once and pass it to decode."""
    if bundle.variant != "language":
        return None
    e = _check_vec(e, bundle.config.embed_dim, "embedding")
    return _film_vectors(bundle.decoder, e)


def decode(bundle: ModelBundle, s, e, z, film=None, affine=None) -> np.ndarray:
    """Action for a live latent input: clamps z, clips the output action.

    The clamped user input passes through the utterance's control
    calibration (shift + signed scale) before it reaches the decoder, so
    the joystick box lands on the latent band this utterance's behaviors
    actually occupy, oriented with +1 as task-forward.
    """
    if bundle.variant == "imitation":
        raise UsageError("imitation variant has no decoder")
    cfg = bundle.config
    s = _check_vec(s, cfg.state_dim, "state")
    z = np.clip(_check_vec(z, cfg.latent_dim, "latent"), -1.0, 1.0)
    if bundle.variant == "language":
        if film is None:
            film = decoder_film(bundle, e)
        if affine is None:
            affine = latent_affine_for(bundle, e)
        z = affine[0] + affine[1] * z
    a, _ = nn.dense_forward(bundle.decoder.spec, bundle.decoder.params,
                            np.concatenate([s, z]), film=film)
    return np.clip(a, -cfg.action_limit, cfg.action_limit)


def il_forward(bundle: ModelBundle, s, e) -> np.ndarray:
    """Imitation policy action, clipped to the speed limit."""
    if bundle.variant != "imitation":
        raise UsageError("il_forward requires the imitation variant")
    cfg = bundle.config
    s = _check_vec(s, cfg.state_dim, "state")
    e = _check_vec(e, cfg.embed_dim, "embedding")
    film = _film_vectors(bundle.policy, e)
    a, _ = nn.dense_forward(bundle.policy.spec, bundle.policy.params, s, film=film)
    return np.clip(a, -cfg.action_limit, cfg.action_limit)


# --- training ------------------------------------------------------------------

@dataclass
class Dataset:
    """Triples packed into arrays, embeddings deduplicated per utterance."""

    S: np.ndarray  # (N, n)
    A: np.ndarray  # (N, m)
    utt_index: np.ndarray  # (N,) int index into E_unique
    E_unique: np.ndarray  # (U, D)
    utterance_ids: list[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.S)


def pack_dataset(config: LatentActionConfig, triples: list[TrainingTriple],
                 embeddings: dict[int, np.ndarray] | None,
                 needs_language: bool = True) -> Dataset:
    if not triples:
        raise ValueError("empty dataset")
    S = np.stack([t.s for t in triples]).astype(np.float64)
    A = np.stack([t.a for t in triples]).astype(np.float64)
    if S.shape[1] != config.state_dim or A.shape[1] != config.action_dim:
        raise DimensionError(
            f"dataset dims {S.shape[1]}/{A.shape[1]} do not match config "
            f"{config.state_dim}/{config.action_dim}"
        )
    ids = sorted({t.utterance_id for t in triples})
    idx_of = {u: i for i, u in enumerate(ids)}
    utt_index = np.array([idx_of[t.utterance_id] for t in triples], dtype=np.intp)
    if needs_language:
        if embeddings is None:
            raise ValueError("this variant needs utterance embeddings")
        missing = [u for u in ids if u not in embeddings]
        if missing:
            raise ValueError(f"missing embeddings for utterance ids {missing}")
        E = np.stack([np.asarray(embeddings[u], dtype=np.float64) for u in ids])
        if E.shape[1] != config.embed_dim:
            raise DimensionError(f"embedding dim {E.shape[1]} != config {config.embed_dim}")
    else:
        E = np.zeros((len(ids), config.embed_dim))
    return Dataset(S=S, A=A, utt_index=utt_index, E_unique=E, utterance_ids=ids)


def _segment_sum(per_sample: np.ndarray, idx: np.ndarray, n_unique: int) -> np.ndarray:
    out = np.zeros((n_unique, per_sample.shape[1]), dtype=per_sample.dtype)
    np.add.at(out, idx, per_sample)
    return out


class _TrainGraph:
    """Batched forward/backward over a bundle, shared by train and grad_check."""

    def __init__(self, bundle: ModelBundle, data: Dataset):
        self.bundle = bundle
        self.data = data
        self.uses_film = bundle.variant in ("language", "imitation")

    def _gen_films(self, params: dict, sel_idx: np.ndarray, dtype):
        """Per-network modulation rows for the selected samples, plus caches."""
        films, caches = {}, {}
        E = self.data.E_unique.astype(dtype)
        for name, net in self.bundle.nets().items():
            if net.gen_spec is None:
                films[name] = None
                continue
            gen_params = {k.split(".", 1)[1]: v for k, v in params.items()
                          if k.startswith(f"{name}_gen.")}
            out, cache = nn.dense_forward(net.gen_spec, gen_params, E, dtype=dtype)
            half = net.gen_spec.out_dim // 2
            films[name] = (out[sel_idx, :half], out[sel_idx, half:])
            caches[name] = cache
        return films, caches

    def loss(self, params: dict, sel: np.ndarray, dtype=nn.DTYPE) -> float:
        pred = self._forward(params, sel, dtype)[0]
        return nn.mse_loss(pred, self.data.A[sel].astype(dtype))

    def _net_params(self, params, name):
        return {k.split(".", 1)[1]: v for k, v in params.items()
                if k.startswith(f"{name}.")}

    def _forward(self, params: dict, sel: np.ndarray, dtype):
        S = self.data.S[sel].astype(dtype)
        A = self.data.A[sel].astype(dtype)
        idx = self.data.utt_index[sel]
        films, gen_caches = self._gen_films(params, idx, dtype)
        caches = {"gen": gen_caches, "idx": idx, "sel": sel}
        if self.bundle.variant == "imitation":
            pred, caches["pol"] = nn.dense_forward(
                self.bundle.policy.spec, self._net_params(params, "pol"), S,
                film=films["pol"], dtype=dtype)
        else:
            z, caches["enc"] = nn.dense_forward(
                self.bundle.encoder.spec, self._net_params(params, "enc"),
                np.concatenate([S, A], axis=1), film=films["enc"], dtype=dtype)
            pred, caches["dec"] = nn.dense_forward(
                self.bundle.decoder.spec, self._net_params(params, "dec"),
                np.concatenate([S, z], axis=1), film=films["dec"], dtype=dtype)
        return pred, caches

    def grads(self, params: dict, sel: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        pred, caches = self._forward(params, sel, nn.DTYPE)
        target = self.data.A[sel]
        loss = nn.mse_loss(pred, target)
        d_pred = nn.mse_loss_grad(pred, target)
        grads: dict[str, np.ndarray] = {}
        film_grads: dict[str, tuple] = {}
        if self.bundle.variant == "imitation":
            _, g, fg = nn.dense_backward(self._net_params(params, "pol"), caches["pol"], d_pred)
            grads.update({f"pol.{k}": v for k, v in g.items()})
            film_grads["pol"] = fg
        else:
            n = self.bundle.config.state_dim
            d_x2, g_dec, fg_dec = nn.dense_backward(
                self._net_params(params, "dec"), caches["dec"], d_pred)
            grads.update({f"dec.{k}": v for k, v in g_dec.items()})
            film_grads["dec"] = fg_dec
            d_z = d_x2[:, n:]
            _, g_enc, fg_enc = nn.dense_backward(
                self._net_params(params, "enc"), caches["enc"], d_z)
            grads.update({f"enc.{k}": v for k, v in g_enc.items()})
            film_grads["enc"] = fg_enc
        # push per-sample modulation grads back through the shared generators
        idx = caches["idx"]
        for name, fg in film_grads.items():
            net = self.bundle.nets()[name]
            if net.gen_spec is None or fg is None:
                continue
            d_gamma, d_beta = fg
            n_unique = len(self.data.E_unique)
            d_out = np.concatenate(
                [_segment_sum(d_gamma, idx, n_unique), _segment_sum(d_beta, idx, n_unique)],
                axis=1)
            _, g_gen, _ = nn.dense_backward(
                {k.split(".", 1)[1]: v for k, v in params.items() if k.startswith(f"{name}_gen.")},
                caches["gen"][name], d_out)
            grads.update({f"{name}_gen.{k}": v for k, v in g_gen.items()})
        return loss, grads


def train(
    bundle: ModelBundle,
    triples: list[TrainingTriple],
    embeddings: dict[int, np.ndarray] | None,
    epochs: int,
    batch_size: int = 1024,
    seed: int = 0,
) -> tuple[ModelBundle, list[float]]:
    """Minimize reconstruction error with Adam; deterministic given seed.

    Returns the mutated bundle and the loss curve: entry 0 is the
    full-dataset loss before any update, entry i the full-dataset loss
    after epoch i.
    """
    data = pack_dataset(bundle.config, triples, embeddings,
                        needs_language=bundle.variant in ("language", "imitation"))
    graph = _TrainGraph(bundle, data)
    params = bundle_param_dict(bundle)
    if bundle.adam is None:
        bundle.adam = nn.AdamState.for_params(params)
    rng = np.random.default_rng(seed)
    everything = np.arange(data.size)
    losses = [graph.loss(params, everything)]
    for _ in range(epochs):
        order = rng.permutation(data.size)
        for start in range(0, data.size, batch_size):
            sel = order[start:start + batch_size]
            _, grads = graph.grads(params, sel)
            nn.adam_step(params, grads, bundle.adam)
        losses.append(graph.loss(params, everything))
    return bundle, losses


def _raw_latents(bundle: ModelBundle, states, actions, embedding):
    film = None
    if bundle.variant == "language":
        film = _film_vectors(bundle.encoder, embedding)
    x = np.concatenate([states, actions], axis=1)
    z, _ = nn.dense_forward(bundle.encoder.spec, bundle.encoder.params, x, film=film)
    return z


def calibrate_latent_axes(bundle: ModelBundle, demo_sequences,
                          embeddings: dict[int, np.ndarray]) -> dict:
    """Per-utterance live-control calibration of the latent axes.

    This step is language-conditioned by construction: each training
    utterance's demos yield a latent band, and the stick box is mapped
    onto that band. Center deflection anchors to the utterance's
    rest-action latent (the code for "hold still here"); full deflection
    anchors to the mean latent of its forward/retreat samples (band
    standard deviation as a minimum half-span), oriented so +1 moves the
    task forward. Every reachable latent stays inside bands the decoder
    was trained on.

    The no-language variant has no utterances to condition on, so it gets
    no calibration and runs its raw latent box live, as in the latent-
    actions lineage this baseline reproduces. That asymmetry is the point:
    a language-free model has no per-task context to calibrate with.
    """
    if bundle.variant != "language":
        raise UsageError("latent-axis calibration is conditioned on utterances; "
                         f"the {bundle.variant!r} variant has none")
    stats: dict[int, list] = {}
    per_utt_emb: dict[int, np.ndarray] = {}
    for utt_id, states, actions in demo_sequences:
        e = embeddings[utt_id]
        z = _raw_latents(bundle, states[:-1], actions, e)
        # the latent that encodes "hold still here", averaged along the demo
        z_rest = _raw_latents(bundle, states[:-1], np.zeros_like(actions), e)
        toward_goal = np.sign(np.sum((states[-1] - states[:-1]) * actions, axis=1))[:, None]
        rec = stats.setdefault(utt_id, [])
        rec.append((z, toward_goal, z_rest))
        per_utt_emb[utt_id] = e

    def band(recs):
        z = np.concatenate([r[0] for r in recs], axis=0)
        direction = np.concatenate([r[1] for r in recs], axis=0)[:, 0]
        neutral = np.concatenate([r[2] for r in recs], axis=0).mean(axis=0)
        m = z.mean(axis=0)
        sigma = z.std(axis=0)
        sigma = np.where(sigma < 1e-9, 1.0, sigma)
        corr_sign = np.where(np.sum((z - m) * direction[:, None], axis=0) < 0, -1.0, 1.0)
        fwd, back = z[direction > 0], z[direction < 0]
        if len(fwd) == 0 or len(back) == 0:
            return neutral, corr_sign * sigma
        gap = 0.5 * (fwd.mean(axis=0) - back.mean(axis=0))
        # anchor orientation, correlation as the tie-breaker for tiny gaps
        orient = np.where(np.abs(gap) >= 0.1 * sigma, np.sign(gap), corr_sign)
        orient = np.where(orient == 0, corr_sign, orient)
        return neutral, orient * np.maximum(np.abs(gap), sigma)

    bundle.latent_affine = {}
    for utt_id, recs in stats.items():
        m, ss = band(recs)
        bundle.latent_affine[_embedding_key(per_utt_emb[utt_id])] = (
            [float(v) for v in m], [float(v) for v in ss])
    return bundle.latent_affine


def dataset_loss(bundle: ModelBundle, triples: list[TrainingTriple],
                 embeddings: dict[int, np.ndarray] | None) -> float:
    data = pack_dataset(bundle.config, triples, embeddings,
                        needs_language=bundle.variant in ("language", "imitation"))
    graph = _TrainGraph(bundle, data)
    return graph.loss(bundle_param_dict(bundle), np.arange(data.size))


def grad_check(bundle: ModelBundle, triples: list[TrainingTriple],
               embeddings: dict[int, np.ndarray] | None,
               tolerance: float = 1e-4, eps: float = 1e-4) -> nn.GradCheckReport:
    """Analytic vs central finite-difference gradients over every parameter."""
    data = pack_dataset(bundle.config, triples, embeddings,
                        needs_language=bundle.variant in ("language", "imitation"))
    graph = _TrainGraph(bundle, data)
    params = bundle_param_dict(bundle)
    sel = np.arange(data.size)
    _, analytic = graph.grads(params, sel)

    def loss_fn(p):
        return graph.loss(p, sel, dtype=next(iter(p.values())).dtype)

    return nn.grad_check(loss_fn, params, analytic, eps=eps, tolerance=tolerance)


# --- bundle checkpoints -----------------------------------------------------------

def save_bundle(path: str, bundle: ModelBundle) -> None:
    doc = {
        "schema": "model-bundle/1",
        "variant": bundle.variant,
        "config": {
            "state_dim": bundle.config.state_dim,
            "action_dim": bundle.config.action_dim,
            "latent_dim": bundle.config.latent_dim,
            "embed_dim": bundle.config.embed_dim,
            "hidden_width": bundle.config.hidden_width,
            "film_gen_hidden": bundle.config.film_gen_hidden,
            "action_limit": bundle.config.action_limit,
        },
        "nets": {},
        "latent_affine": {k: [list(v[0]), list(v[1])] for k, v in bundle.latent_affine.items()},
    }
    for name, net in bundle.nets().items():
        doc["nets"][name] = nn.mlp_to_doc(net.spec, net.params)
        if net.gen_spec is not None:
            doc["nets"][f"{name}_gen"] = nn.mlp_to_doc(net.gen_spec, net.gen_params)
    if bundle.adam is not None:
        doc["adam"] = {
            "lr": bundle.adam.lr, "beta1": bundle.adam.beta1, "beta2": bundle.adam.beta2,
            "eps": bundle.adam.eps, "step_count": bundle.adam.step_count,
            "first_moment": {k: [float(x) for x in v.reshape(-1)]
                             for k, v in bundle.adam.first_moment.items()},
            "second_moment": {k: [float(x) for x in v.reshape(-1)]
                              for k, v in bundle.adam.second_moment.items()},
        }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_bundle(path: str) -> ModelBundle:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema") != "model-bundle/1":
        raise ValueError(f"not a model bundle file: {path}")
    config = LatentActionConfig(**doc["config"])
    affine = {k: (v[0], v[1]) for k, v in doc.get("latent_affine", {}).items()}
    bundle = ModelBundle(config=config, variant=doc["variant"], latent_affine=affine)
    nets = {name: nn.mlp_from_doc(block) for name, block in doc["nets"].items()}

    def build(name):
        spec, params = nets[name]
        net = Net(spec=spec, params=params)
        if f"{name}_gen" in nets:
            net.gen_spec, net.gen_params = nets[f"{name}_gen"]
        return net

    if bundle.variant == "imitation":
        bundle.policy = build("pol")
    else:
        bundle.encoder = build("enc")
        bundle.decoder = build("dec")
    if "adam" in doc:
        a = doc["adam"]
        params = bundle_param_dict(bundle)
        state = nn.AdamState.for_params(params, lr=a["lr"], beta1=a["beta1"],
                                        beta2=a["beta2"], eps=a["eps"])
        state.step_count = a["step_count"]
        for k, flat in a["first_moment"].items():
            state.first_moment[k] = np.array(flat).reshape(params[k].shape)
        for k, flat in a["second_moment"].items():
            state.second_moment[k] = np.array(flat).reshape(params[k].shape)
        bundle.adam = state
    return bundle
