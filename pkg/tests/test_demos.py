import numpy as np
import pytest

from langsteer import demos as D
from langsteer import sim
from langsteer.assets import data_path
from langsteer.errors import GenerationError


@pytest.fixture(scope="module")
def scene():
    return sim.load_scene(str(data_path("arm_scene.yaml")))


def cross_env():
    return sim.CrossWorld()


# --- scripting -------------------------------------------------------------------

def test_cross_pure_demo_monotone_and_reaches_goal():
    demo = D.script_demo(cross_env(), "right", style="pure", seed=4)
    xs = demo.states[:, 0]
    assert np.all(np.diff(xs) > 0)
    assert np.linalg.norm(demo.states[-1] - [1.0, 0.0]) < 0.05


def test_sweeping_demo_longer_than_pure():
    for task in ("right", "up"):
        pure = D.script_demo(cross_env(), task, style="pure", seed=9)
        sweep = D.script_demo(cross_env(), task, style="sweeping", seed=9)
        assert sweep.length > pure.length


def test_arm_pure_demo_passes_subtasks_in_order(scene):
    demo = D.script_demo(sim.ArmWorld(scene), "bowl_to_tray", style="pure", seed=6)
    env = sim.ArmWorld(scene)
    env.reset(demo.task, start=demo.states[0])
    tracker = sim.SubtaskTracker(env.task, scene.thresholds)
    first = {}
    for i, a in enumerate(demo.actions):
        env.step(a, demo.dt)
        for k, v in tracker.update(env.snapshot()).items():
            if v and k not in first:
                first[k] = i
    order = [first[k] for k in ("reached", "grasped", "brought", "completed")]
    assert order == sorted(order)
    assert len(first) == 4


def test_pour_demo_completes(scene):
    demo = D.script_demo(sim.ArmWorld(scene), "pour_cup_into_mug", style="pure", seed=8)
    env = sim.ArmWorld(scene)
    assert D.replay_matches(env, demo)


def test_demo_seed_determinism_and_variation(scene):
    a = D.script_demo(sim.ArmWorld(scene), "banana_in_basket", seed=12)
    b = D.script_demo(sim.ArmWorld(scene), "banana_in_basket", seed=12)
    c = D.script_demo(sim.ArmWorld(scene), "banana_in_basket", seed=13)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)
    assert a.states.shape != c.states.shape or not np.array_equal(a.states, c.states)


def test_open_loop_replay_oracle(scene):
    for task in ("banana_in_basket", "pour_cup_into_mug"):
        for style in ("pure", "sweeping"):
            demo = D.script_demo(sim.ArmWorld(scene), task, style=style, seed=3)
            assert D.replay_matches(sim.ArmWorld(scene), demo)


def test_unknown_style_rejected(scene):
    with pytest.raises(ValueError):
        D.script_demo(sim.ArmWorld(scene), "banana_in_basket", style="smooth")


# --- triples ---------------------------------------------------------------------

def _tiny_demo():
    states = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.1], [0.2, 0.2]])
    actions = (np.diff(states, axis=0)) / 0.125
    return D.Demonstration(task="right", utterance_ids=[5], states=states, actions=actions, dt=0.125)


def test_split_triples_count_and_alignment():
    demo = _tiny_demo()
    triples = D.split_triples(demo)
    assert len(triples) == demo.length == 3
    for i, t in enumerate(triples):
        assert np.array_equal(t.s, demo.states[i])
        assert np.array_equal(t.a, demo.actions[i])
        assert t.utterance_id == 5


def test_split_requires_utterance():
    demo = _tiny_demo()
    demo.utterance_ids = []
    with pytest.raises(ValueError):
        D.split_triples(demo)
    assert len(D.split_triples(demo, utterance_id=2)) == 3


def test_round_robin_assignment(scene):
    env = sim.ArmWorld(scene)
    demos = D.generate_demo_set(env, ["banana_in_basket"], demos_per_task=5, style="pure", seed=0)
    D.assign_utterances(demos, {"banana_in_basket": [10, 11]})
    assert [d.utterance_ids[0] for d in demos] == [10, 11, 10, 11, 10]


def test_training_set_scale_matches_demo_count(scene):
    # the standard recipe: 15 demonstrations per task across every task
    env = sim.ArmWorld(scene)
    demos = D.generate_demo_set(env, env.tasks, demos_per_task=15, style="sweeping", seed=1)
    assert len(demos) == 15 * len(env.tasks)
    per_task = {t: sum(d.task == t for d in demos) for t in env.tasks}
    assert set(per_task.values()) == {15}


# --- window augmentation -----------------------------------------------------------

def test_window_one_adds_nothing():
    triples = D.split_triples(_tiny_demo())
    assert D.augment_window(triples, 1) == []


def test_window_three_interior_counts():
    # uneven spacing so every step's action is distinct
    states = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [6.0, 0.0], [10.0, 0.0], [15.0, 0.0]])
    actions = np.diff(states, axis=0) / 0.125
    demo = D.Demonstration(task="right", utterance_ids=[1], states=states, actions=actions, dt=0.125)
    triples = D.split_triples(demo)  # T = 5
    aug = D.augment_window(triples, 3)
    # index 0 and 4 contribute 1 neighbor each; 1..3 contribute 2
    assert len(aug) == 1 + 2 + 2 + 2 + 1
    # every augmented triple keeps its source action but a neighboring state
    originals = {(tuple(t.s), tuple(t.a)) for t in triples}
    for t in aug:
        assert (tuple(t.s), tuple(t.a)) not in originals


def test_augment_never_mutates_originals():
    triples = D.split_triples(_tiny_demo())
    frozen = [(t.s.copy(), t.a.copy()) for t in triples]
    D.augment_window(triples, 5)
    D.augment_noise_fd(_tiny_demo(), 0.05, 2, seed=0)
    for t, (s, a) in zip(triples, frozen):
        assert np.array_equal(t.s, s) and np.array_equal(t.a, a)


# --- noise augmentation --------------------------------------------------------------

def test_noise_fd_spec_arithmetic():
    states = np.array([[0.10, 0.20], [0.15, 0.18]])
    actions = np.array([[0.05, -0.02]])
    demo = D.Demonstration(task="right", utterance_ids=[0], states=states, actions=actions, dt=1.0)
    t = D.noise_fd_triple(demo, 0, np.array([0.01, -0.01]), utterance_id=0)
    assert t.s == pytest.approx([0.11, 0.19], abs=1e-9)
    assert t.a == pytest.approx([0.04, -0.01], abs=1e-9)


def test_noise_zero_recovers_originals_bitwise(scene):
    env = sim.ArmWorld(scene)
    demo = D.script_demo(env, "banana_in_basket", seed=14)
    out = D.augment_noise_fd(demo, 0.0, 1, seed=0, utterance_id=0, velocity_dims=env.velocity_dims)
    assert len(out) == demo.length
    for i, t in enumerate(out):
        assert np.array_equal(t.s, demo.states[i])
        assert np.array_equal(t.a, demo.actions[i])


def test_noise_reconstruction_identity_bitwise(scene):
    env = sim.ArmWorld(scene)
    demo = D.script_demo(env, "pour_cup_into_mug", seed=15)
    v = env.velocity_dims
    out = D.augment_noise_fd(demo, 0.01, 3, seed=1, utterance_id=0, velocity_dims=v)
    assert len(out) == 3 * demo.length
    for j, t in enumerate(out):
        i = j % demo.length
        lhs = t.s[v] + t.a[v] * demo.dt
        assert np.array_equal(lhs, demo.states[i + 1][v])
        # gripper command channel untouched
        assert t.a[3] == demo.actions[i][3]


def test_build_triples_originals_first_and_disjoint(scene):
    env = sim.ArmWorld(scene)
    demos = D.generate_demo_set(env, ["banana_in_basket"], 2, "pure", seed=2)
    D.assign_utterances(demos, {"banana_in_basket": [0]})
    base_len = sum(d.length for d in demos)
    cfg = D.AugmentConfig(window_size=5, noise_sigma=0.01, noise_multiplier=1)
    triples = D.build_triples(demos, cfg, seed=0, velocity_dims=env.velocity_dims)
    assert len(triples) > 2 * base_len
    for i, d in enumerate(demos):
        pass
    head = triples[: demos[0].length]
    for i, t in enumerate(head):
        assert np.array_equal(t.s, demos[0].states[i])


# --- dataset files ----------------------------------------------------------------------

def test_dataset_files_roundtrip_and_byte_stable(tmp_path, scene):
    env = sim.ArmWorld(scene)
    demos = D.generate_demo_set(env, env.tasks, 2, "pure", seed=5)
    D.assign_utterances(demos, {t: [i] for i, t in enumerate(env.tasks)})
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    D.save_demos(str(p1), demos)
    demos2 = D.load_demos(str(p1))
    D.save_demos(str(p2), demos2)
    assert p1.read_bytes() == p2.read_bytes()
    for a, b in zip(demos, demos2):
        assert a.task == b.task and a.utterance_ids == b.utterance_ids
        assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)


def test_generation_is_seed_deterministic_to_the_byte(tmp_path, scene):
    def build(path):
        env = sim.ArmWorld(scene)
        demos = D.generate_demo_set(env, env.tasks, 3, "sweeping", seed=42)
        D.assign_utterances(demos, {t: [0, 1] for t in env.tasks})
        D.save_demos(path, demos)

    build(str(tmp_path / "x.jsonl"))
    build(str(tmp_path / "y.jsonl"))
    assert (tmp_path / "x.jsonl").read_bytes() == (tmp_path / "y.jsonl").read_bytes()
