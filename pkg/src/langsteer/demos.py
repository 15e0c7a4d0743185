"""
Scripted demonstration generation and dataset assembly.

Demonstrations are produced in-sim by proportional controllers driving
through task waypoints, in two styles: "pure" runs straight through the
task, "sweeping" backs off and repeats each motion segment so the learned
latent space also covers reversed motion. Every recorded step satisfies
s_{i+1} = step(s_i, a_i) exactly, which the augmentation identities rely
on.

Two augmentations expand the training set: a sliding-window scheme that
pairs each action with the neighboring states inside a window (latent
consistency across nearby states), and noise injection that perturbs a
state and recomputes the action as the finite difference toward the
recorded next state (recovery behavior). Noise applies only to the
velocity-integrated state dims; the gripper channel is a commanded
target, not an integrated quantity, and passes through unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError
from .sim import CROSS_TASKS, ArmWorld, CrossWorld, ik_planar, snap

# Power of two so that division and multiplication by dt are exact float
# scalings; the augmentation reconstruction identity depends on this.
DT_DEFAULT = 0.125

# Scripted controllers command slightly inside the env speed limit so the
# recorded effective actions (lattice difference quotients) never trip the
# env's clipping on replay.
_CMD_MARGIN = 1e-6


@dataclass
class Demonstration:
    task: str
    utterance_ids: list[int]
    states: np.ndarray  # (T+1, state_dim)
    actions: np.ndarray  # (T, action_dim)
    dt: float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if len(self.actions) != len(self.states) - 1:
            raise ValueError("need exactly one action between consecutive states")

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class TrainingTriple:
    utterance_id: int
    s: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class AugmentConfig:
    window_size: int = 5
    noise_sigma: float = 0.01
    noise_multiplier: int = 1

    def __post_init__(self):
        if self.window_size < 1 or self.noise_sigma < 0 or self.noise_multiplier < 0:
            raise ValueError(f"bad augment config {self}")


class _Recorder:
    """Steps an env while recording the exact (state, action) sequence.

    Velocity-dim actions are recorded as the effective difference quotient
    (s' - s) / dt rather than the raw command, so the stored demonstration
    satisfies s' = s + a*dt bit-for-bit. Command dims (the gripper target)
    are recorded as commanded.
    """

    def __init__(self, env, dt: float):
        self.env = env
        self.dt = dt
        self.states = [env.state_vector()]
        self.actions: list[np.ndarray] = []

    def step(self, action) -> None:
        action = np.asarray(action, dtype=np.float64)
        s0 = self.states[-1]
        self.env.step(action, self.dt)
        s1 = self.env.state_vector()
        eff = action.copy()
        vmask = self.env.velocity_dims
        eff[vmask] = (s1[vmask] - s0[vmask]) / self.dt
        self.actions.append(eff)
        self.states.append(s1)

    @property
    def n_steps(self) -> int:
        return len(self.actions)


def _cross_move(rec: _Recorder, goal, kp: float, tol: float, speed: float, max_steps: int = 400):
    cap = speed - _CMD_MARGIN
    while np.linalg.norm(rec.env.position - goal) > tol:
        if rec.n_steps >= max_steps:
            raise GenerationError("cross demo did not converge")
        err = goal - rec.env.position
        rec.step(np.clip(kp * err, -cap, cap))


def _script_cross(env: CrossWorld, task: str, style: str, seed: int, dt: float) -> Demonstration:
    rng = np.random.default_rng(seed)
    start = rng.normal(0.0, 0.02, size=2)
    env.reset(task, start=start)
    kp = rng.uniform(1.6, 2.4)
    rec = _Recorder(env, dt)
    goal = CROSS_TASKS[task]
    if style == "sweeping":
        _cross_move(rec, goal, kp, tol=0.25, speed=env.action_limit)
        _cross_move(rec, start, kp, tol=0.05, speed=env.action_limit)
    _cross_move(rec, goal, kp, tol=0.04, speed=env.action_limit)
    if not env.completed():
        raise GenerationError(f"cross demo for {task!r} ended incomplete")
    return Demonstration(task=task, utterance_ids=[], states=np.array(rec.states),
                         actions=np.array(rec.actions), dt=dt)


def _arm_move(rec: _Recorder, q_target, grip_cmd: float, kp: float, tol: float = 0.03,
              max_steps: int = 400):
    env: ArmWorld = rec.env
    cap = env.action_limit - _CMD_MARGIN
    for _ in range(max_steps):
        err = q_target - env.arm.joint_angles
        if np.max(np.abs(err)) <= tol:
            return
        qdot = np.clip(kp * err, -cap, cap)
        rec.step(np.concatenate([qdot, [grip_cmd]]))
    raise GenerationError("arm move segment did not converge")


def _arm_grip(rec: _Recorder, target: float, max_steps: int = 40):
    env: ArmWorld = rec.env
    for _ in range(max_steps):
        if abs(env.arm.gripper - target) <= 1e-9:
            return
        rec.step(np.array([0.0, 0.0, 0.0, target]))
    raise GenerationError("gripper never settled")


def _segment(rec, q_from, q_to, grip, kp, sweep: bool):
    """One motion segment, optionally executed approach-retreat-approach."""
    if sweep:
        _arm_move(rec, q_to, grip, kp, tol=0.08)
        _arm_move(rec, q_from, grip, kp, tol=0.08)
    _arm_move(rec, q_to, grip, kp)


def _script_arm(env: ArmWorld, task_id: str, style: str, seed: int, dt: float) -> Demonstration:
    rng = np.random.default_rng(seed)
    scene = env.scene
    task = scene.tasks[task_id]
    obj = scene.objects[task.object_id]
    tgt = scene.objects[task.target_id]
    sweep = style == "sweeping"

    start = np.array(scene.home) + rng.normal(0.0, 0.03, size=3)
    env.reset(task_id, start=start)
    kp = rng.uniform(2.5, 3.5)
    jitter = lambda: rng.normal(0.0, 0.03)

    rec = _Recorder(env, dt)
    phi_obj = math.atan2(obj.position[1], obj.position[0]) + jitter()
    q_grasp = ik_planar(obj.position, phi_obj, env.arm.joint_angles, scene.link_lengths)
    _segment(rec, start, q_grasp, 0.0, kp, sweep)
    _arm_grip(rec, 1.0)
    if env.arm.held_object != task.object_id:
        raise GenerationError(f"scripted grasp missed {task.object_id!r}")

    phi_tgt = math.atan2(tgt.position[1], tgt.position[0]) + jitter()
    q_carry = ik_planar(tgt.position, phi_tgt, env.arm.joint_angles, scene.link_lengths)
    _segment(rec, q_grasp, q_carry, 1.0, kp, sweep)

    if task.kind == "pick_place":
        _arm_grip(rec, 0.0)
    else:  # pour: sweep the EE orientation past the tilt threshold, in place
        thresh = obj.pour_angle_threshold
        if thresh is None:
            raise GenerationError(f"pour task {task_id!r} needs a pour_angle_threshold")
        pour_phi = thresh + 0.2
        qs = []
        prev = q_carry
        for phi in np.linspace(phi_tgt, pour_phi, 5)[1:]:
            prev = ik_planar(tgt.position, phi, prev, scene.link_lengths)
            qs.append(prev)
        prev = q_carry
        for i, q in enumerate(qs):
            do_sweep = sweep and i == len(qs) - 1
            _segment(rec, prev, q, 1.0, kp, do_sweep)
            prev = q
    if not env.completed():
        raise GenerationError(f"scripted demo for {task_id!r} ended incomplete")
    return Demonstration(task=task_id, utterance_ids=[], states=np.array(rec.states),
                         actions=np.array(rec.actions), dt=dt)


def script_demo(env, task: str, style: str = "pure", seed: int = 0, dt: float = DT_DEFAULT) -> Demonstration:
    """Generate one in-sim demonstration for a task, deterministic per seed."""
    if style not in ("pure", "sweeping"):
        raise ValueError(f"unknown demo style {style!r}")
    if isinstance(env, CrossWorld):
        return _script_cross(env, task, style, seed, dt)
    if isinstance(env, ArmWorld):
        return _script_arm(env, task, style, seed, dt)
    raise ValueError(f"cannot script demos for env {env!r}")


def replay_matches(env, demo: Demonstration, start=None) -> bool:
    """Open-loop replay oracle: driving the env with the recorded actions
    must reproduce the recorded states exactly."""
    env.reset(demo.task, start=demo.states[0])
    for i, action in enumerate(demo.actions):
        env.step(action, demo.dt)
        if not np.array_equal(env.state_vector(), demo.states[i + 1]):
            return False
    return True


# --- triples and augmentation -------------------------------------------------

def split_triples(demo: Demonstration, utterance_id: int | None = None) -> list[TrainingTriple]:
    """One triple per timestep, order preserved."""
    if utterance_id is None:
        if not demo.utterance_ids:
            raise ValueError("demonstration has no utterance assigned")
        utterance_id = demo.utterance_ids[0]
    return [
        TrainingTriple(utterance_id=utterance_id, s=demo.states[i], a=demo.actions[i])
        for i in range(demo.length)
    ]


def augment_window(triples: list[TrainingTriple], window_size: int) -> list[TrainingTriple]:
    """Latent-consistency augmentation over one demo's ordered triples.

    For each index i, every in-range neighbor j with |j - i| <= window//2
    (j != i) contributes a new triple pairing state s_j with action a_i.
    """
    half = window_size // 2
    out: list[TrainingTriple] = []
    for i, t in enumerate(triples):
        for j in range(max(0, i - half), min(len(triples), i + half + 1)):
            if j != i:
                out.append(TrainingTriple(utterance_id=t.utterance_id, s=triples[j].s, a=t.a))
    return out


def noise_fd_triple(
    demo: Demonstration,
    index: int,
    eps: np.ndarray,
    utterance_id: int,
    velocity_dims: np.ndarray | None = None,
) -> TrainingTriple:
    """One noise-augmented triple with an explicit perturbation.

    The velocity-dim state entries move to snap(s_i + eps) and the action
    is re-derived as the finite difference that still lands on the recorded
    next state: a' = (s_{i+1} - (s_i + eps)) / dt. Command dims (gripper
    target) pass through untouched.
    """
    n = demo.states.shape[1]
    vmask = np.ones(n, dtype=bool) if velocity_dims is None else np.asarray(velocity_dims, dtype=bool)
    eps = np.asarray(eps, dtype=np.float64)
    s_noisy = demo.states[index].copy()
    s_noisy[vmask] = snap(demo.states[index][vmask] + eps[vmask])
    a = demo.actions[index].copy()
    a[vmask] = (demo.states[index + 1][vmask] - s_noisy[vmask]) / demo.dt
    return TrainingTriple(utterance_id=utterance_id, s=s_noisy, a=a)


def augment_noise_fd(
    demo: Demonstration,
    sigma: float,
    k: int,
    seed: int,
    utterance_id: int | None = None,
    velocity_dims: np.ndarray | None = None,
) -> list[TrainingTriple]:
    """Noise-and-recompute augmentation, k fresh draws per timestep.

    With sigma = 0 this reproduces the original triples exactly (the demo
    states already sit on the simulation lattice).
    """
    if utterance_id is None:
        if not demo.utterance_ids:
            raise ValueError("demonstration has no utterance assigned")
        utterance_id = demo.utterance_ids[0]
    n = demo.states.shape[1]
    vmask = np.ones(n, dtype=bool) if velocity_dims is None else np.asarray(velocity_dims, dtype=bool)
    rng = np.random.default_rng(seed)
    out: list[TrainingTriple] = []
    for _ in range(k):
        for i in range(demo.length):
            eps = np.zeros(n)
            eps[vmask] = rng.normal(0.0, sigma, size=int(vmask.sum()))
            out.append(noise_fd_triple(demo, i, eps, utterance_id, vmask))
    return out


@dataclass
class DatasetBuild:
    """A generated demo set plus the triples derived from it."""

    demos: list[Demonstration]
    triples: list[TrainingTriple] = field(default_factory=list)


def assign_utterances(demos: list[Demonstration], task_to_ids: dict[str, list[int]]) -> None:
    """Round-robin one utterance id per demo within each task."""
    counters = {task: 0 for task in task_to_ids}
    for demo in demos:
        ids = task_to_ids.get(demo.task)
        if not ids:
            raise ValueError(f"no utterances for task {demo.task!r}")
        demo.utterance_ids = [ids[counters[demo.task] % len(ids)]]
        counters[demo.task] += 1


def generate_demo_set(
    env,
    tasks: list[str],
    demos_per_task: int,
    style: str,
    seed: int,
    dt: float = DT_DEFAULT,
) -> list[Demonstration]:
    """Scripted demos for each task, per-demo seeds derived from the root."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(tasks) * demos_per_task)
    demos = []
    i = 0
    for task in tasks:
        for _ in range(demos_per_task):
            demo_seed = int(children[i].generate_state(1)[0])
            demos.append(script_demo(env, task, style=style, seed=demo_seed, dt=dt))
            i += 1
    return demos


def build_triples(
    demos: list[Demonstration],
    augment: AugmentConfig | None,
    seed: int,
    velocity_dims: np.ndarray | None = None,
    use_window: bool = True,
) -> list[TrainingTriple]:
    """Base triples plus both augmentations; originals always come first."""
    out: list[TrainingTriple] = []
    extra: list[TrainingTriple] = []
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(demos))
    for demo, child in zip(demos, children):
        base = split_triples(demo)
        out.extend(base)
        if augment is not None:
            if use_window and augment.window_size > 1:
                extra.extend(augment_window(base, augment.window_size))
            if augment.noise_multiplier > 0 and augment.noise_sigma >= 0:
                extra.extend(
                    augment_noise_fd(
                        demo,
                        augment.noise_sigma,
                        augment.noise_multiplier,
                        seed=int(child.generate_state(1)[0]),
                        velocity_dims=velocity_dims,
                    )
                )
    return out + extra


# --- dataset files --------------------------------------------------------------

def save_demos(path: str, demos: list[Demonstration]) -> None:
    """Line-delimited records, one demonstration per line, byte-stable."""
    with open(path, "w") as f:
        for d in demos:
            rec = {
                "task": d.task,
                "utterance_ids": d.utterance_ids,
                "dt": d.dt,
                "states": [[float(v) for v in row] for row in d.states],
                "actions": [[float(v) for v in row] for row in d.actions],
            }
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_demos(path: str) -> list[Demonstration]:
    demos = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            demos.append(
                Demonstration(
                    task=rec["task"],
                    utterance_ids=list(rec["utterance_ids"]),
                    states=np.array(rec["states"]),
                    actions=np.array(rec["actions"]),
                    dt=rec["dt"],
                )
            )
    return demos
