"""
Runtime controllers and the measurement tooling around them.

A control session owns one env instance plus whatever frozen model it
drives. The latent controller decodes the user's low-DoF input through
the trained decoder each tick; the end-effector baseline maps a 2-axis
input onto either EE translation (damped least-squares through the
position Jacobian) or orientation/gripper, with a toggle cycling the two
modes; the imitation controller runs the policy closed-loop with no user
input at all.

A scripted expert stands in for the human operator so experiments run
unattended: each tick it tries every input on a small grid, simulates a
single lookahead step, and keeps the input that most improves task
progress. Jerk (third derivative of position, computed as the second
difference of a velocity signal and averaged over fixed windows) is the
smoothness metric, and the sampling-jitter study perturbs the tick
period to probe how each method degrades without a fixed control rate.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import models as M
from .errors import StateError, UsageError
from .language import Exemplar, retrieve_nearest
from .sim import ArmWorld, CrossWorld, position_jacobian

Z_GRID_LEVELS = (-1.0, -0.5, 0.0, 0.5, 1.0)
DLS_DAMPING = 0.01


@dataclass
class TrajectoryLog:
    """Per-tick record of a control episode."""

    dt_nominal: float
    times: list[float] = field(default_factory=list)
    inputs: list[np.ndarray] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    ee: list[tuple] = field(default_factory=list)
    gripper: list[float] = field(default_factory=list)
    held: list = field(default_factory=list)
    flags: list[dict] = field(default_factory=list)

    def append(self, t, z, snapshot) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("timestamps must strictly increase")
        self.times.append(float(t))
        self.inputs.append(np.asarray(z, dtype=np.float64).copy())
        self.states.append(np.asarray(snapshot["state"]).copy())
        self.ee.append(tuple(snapshot["ee"]))
        self.gripper.append(float(snapshot["gripper"]))
        self.held.append(snapshot["held"])
        self.flags.append(dict(snapshot["flags"]))

    def __len__(self) -> int:
        return len(self.times)

    def ee_positions(self) -> np.ndarray:
        return np.array([[e[0], e[1]] for e in self.ee])

    def input_matrix(self) -> np.ndarray:
        return np.array(self.inputs)

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            for i in range(len(self)):
                rec = {
                    "tick": i,
                    "t": self.times[i],
                    "z": [float(v) for v in self.inputs[i]],
                    "state": [float(v) for v in self.states[i]],
                    "ee": [float(v) for v in self.ee[i]],
                    "gripper": self.gripper[i],
                    "held": self.held[i],
                    "flags": self.flags[i],
                }
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _embedding_digest(e: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(e).tobytes()).hexdigest()


@dataclass
class ControlSession:
    """One live control loop: env + frozen model + fixed episode utterance."""

    variant: str  # language | no_language | imitation | ee
    env: object
    dt: float
    bundle: M.ModelBundle | None = None
    exemplar: Exemplar | None = None
    embedding: np.ndarray | None = None
    mode_index: int = 0
    tick_count: int = 0
    log: TrajectoryLog | None = None
    _embedding_digest: str | None = None
    _dec_film: tuple | None = None
    _latent_affine: tuple | None = None

    def __post_init__(self):
        if self.log is None:
            self.log = TrajectoryLog(dt_nominal=self.dt)

    def set_utterance(self, text: str, table, exemplars,
                      allow_hash_fallback: bool = False) -> tuple[Exemplar, float]:
        """Retrieve the nearest training exemplar once per episode; its stored
        embedding is what the models consume for every subsequent tick."""
        ex, sim_score = retrieve_nearest(text, table, exemplars,
                                         allow_hash_fallback=allow_hash_fallback)
        self.use_embedding(ex.embedding)
        self.exemplar = ex
        return ex, sim_score

    def use_embedding(self, embedding: np.ndarray) -> None:
        """Pin an embedding directly (batch experiments skip retrieval)."""
        self.embedding = np.asarray(embedding, dtype=np.float64).copy()
        self._embedding_digest = _embedding_digest(self.embedding)
        self._dec_film = None
        self._latent_affine = None
        if self.bundle is not None and self.bundle.variant == "language":
            self._dec_film = M.decoder_film(self.bundle, self.embedding)
            self._latent_affine = M.latent_affine_for(self.bundle, self.embedding)

    def _assert_embedding_unchanged(self) -> None:
        if self.embedding is not None:
            if _embedding_digest(self.embedding) != self._embedding_digest:
                raise StateError("episode embedding changed mid-session")

    def reset_episode(self, task_id: str, start=None) -> None:
        self.env.reset(task_id, start=start)
        self.exemplar = None
        self.embedding = None
        self._embedding_digest = None
        self.mode_index = 0
        self.tick_count = 0
        self.log = TrajectoryLog(dt_nominal=self.dt)


def latent_tick(session: ControlSession, z, dt: float | None = None) -> np.ndarray:
    """Decode the user's latent input and step the env once."""
    if session.variant not in ("language", "no_language"):
        raise UsageError(f"latent_tick needs a latent variant, session is {session.variant!r}")
    if session.embedding is None:
        raise StateError("no utterance set for this episode")
    session._assert_embedding_unchanged()
    dt = session.dt if dt is None else dt
    z = np.asarray(z, dtype=np.float64)
    action = M.decode(session.bundle, session.env.state_vector(), session.embedding, z,
                      film=session._dec_film, affine=session._latent_affine)
    session.env.step(action, dt)
    session.tick_count += 1
    session.log.append(session.tick_count * session.dt, z, session.env.snapshot())
    return action


def dls_joint_velocities(jacobian: np.ndarray, ee_velocity: np.ndarray,
                         damping: float = DLS_DAMPING) -> np.ndarray:
    """Damped least-squares inverse: finite everywhere, even at singularities."""
    jjt = jacobian @ jacobian.T + (damping ** 2) * np.eye(jacobian.shape[0])
    return jacobian.T @ np.linalg.solve(jjt, ee_velocity)


def ee_mode_switch_tick(session: ControlSession, u1: float, u2: float,
                        toggle_mode: bool = False, dt: float | None = None) -> np.ndarray:
    """Two-axis end-effector control with mode cycling.

    Mode 0 maps (u1, u2) to EE (xdot, ydot) through the damped Jacobian
    inverse; mode 1 maps u1 to an orientation rate on the last joint and
    u2 to the gripper command. A toggle advances the mode before the
    input applies.
    """
    env = session.env
    if not isinstance(env, ArmWorld):
        raise UsageError("the mode-switch baseline drives the planar arm")
    if toggle_mode:
        session.mode_index = (session.mode_index + 1) % 2
    dt = session.dt if dt is None else dt
    grip_cmd = 1.0 if env.arm.gripper >= 0.5 else 0.0  # hold current gripper intent
    if session.mode_index == 0:
        jac = position_jacobian(env.arm.joint_angles, env.scene.link_lengths)
        qdot = dls_joint_velocities(jac, np.array([u1, u2], dtype=np.float64))
    else:
        qdot = np.array([0.0, 0.0, float(u1)])
        grip_cmd = float(np.clip(u2, 0.0, 1.0))
    action = np.concatenate([qdot, [grip_cmd]])
    env.step(action, dt)
    session.tick_count += 1
    session.log.append(session.tick_count * session.dt, [u1, u2], env.snapshot())
    return action


def il_rollout(bundle: M.ModelBundle, embedding: np.ndarray, env, max_ticks: int,
               dt_schedule, log_dt: float | None = None) -> TrajectoryLog:
    """Closed-loop imitation rollout; stops at completion or the tick budget.

    ``dt_schedule`` is a scalar for a fixed rate or a per-tick sequence of
    periods (the jitter study feeds the latter).
    """
    if bundle.variant != "imitation":
        raise UsageError("il_rollout requires an imitation bundle")
    if np.isscalar(dt_schedule):
        schedule = np.full(max_ticks, float(dt_schedule))
    else:
        schedule = np.asarray(dt_schedule, dtype=np.float64)
        if len(schedule) < max_ticks:
            raise ValueError("dt schedule shorter than the tick budget")
    log = TrajectoryLog(dt_nominal=float(log_dt or np.mean(schedule)))
    t = 0.0
    for i in range(max_ticks):
        action = M.il_forward(bundle, env.state_vector(), embedding)
        env.step(action, schedule[i])
        t += schedule[i]
        log.append(t, np.zeros(1), env.snapshot())
        if env.completed():
            break
    return log


# --- scripted operators ------------------------------------------------------------

def task_progress_metric(env) -> float:
    """Scalar progress: lower is better. Phase-aware distance to the current
    subtask goal, with bonuses for crossing grasp/bring/complete stages."""
    if isinstance(env, CrossWorld):
        return float(np.linalg.norm(env.position - env.goal()))
    big = 20.0
    flags = env.subtask_flags()
    if flags["completed"]:
        return -3.0 * big
    task = env.task
    obj_pos = env.object_positions[task.object_id]
    tgt_pos = env.object_positions[task.target_id]
    thr = env.scene.thresholds
    holding = env.arm.held_object == task.object_id
    ee = np.array(env.ee_pose()[:2])
    if holding:
        d = float(np.linalg.norm(obj_pos - tgt_pos))
        score = -2.0 * big + d
        if d <= thr.r_target:
            if task.kind == "pick_place":
                score += 0.3 * env.arm.gripper  # release to finish
            else:
                obj = env.scene.objects[task.object_id]
                score += max(0.0, obj.pour_angle_threshold - abs(env.ee_pose()[2]))
        else:
            score += 0.3 * (1.0 - env.arm.gripper)  # keep hold of it
        return score
    d = float(np.linalg.norm(ee - obj_pos))
    if d <= thr.grasp_radius:
        return d + 0.5 * (1.0 - env.arm.gripper)  # close to acquire
    return d + 0.2 * env.arm.gripper  # approach with an open gripper


def scripted_expert(session: ControlSession, z_levels=Z_GRID_LEVELS) -> np.ndarray:
    """Greedy one-step-lookahead choice of latent input.

    Ties break toward the gentlest input (smallest magnitude, then
    lexicographic order), so a session already at its goal idles at zero.
    """
    if session.variant not in ("language", "no_language"):
        raise UsageError("the scripted expert drives latent-variant sessions")
    if session.embedding is None:
        raise StateError("no utterance set for this episode")
    env = session.env
    d = session.bundle.config.latent_dim
    best_z, best_key = None, None
    saved = env.clone_state()
    for cand in itertools.product(z_levels, repeat=d):
        z = np.array(cand)
        action = M.decode(session.bundle, env.state_vector(), session.embedding, z,
                          film=session._dec_film, affine=session._latent_affine)
        env.step(action, session.dt)
        metric = task_progress_metric(env)
        env.restore_state(saved)
        key = (metric, float(np.sum(np.abs(z))), cand)
        if best_key is None or key < best_key:
            best_key, best_z = key, z
    return best_z


def scripted_ee_operator(session: ControlSession) -> tuple[float, float, bool]:
    """Scripted mode-switch operator for the EE baseline.

    Returns (u1, u2, toggle) for this tick. Inputs are quantized to the
    same five-level grid the latent expert uses, mirroring coarse joystick
    deflections; the mode dance (translate, toggle, grip/rotate, toggle
    back) is what drives the baseline's characteristic stop-and-go motion.
    """
    env: ArmWorld = session.env
    task = env.task
    thr = env.scene.thresholds
    flags = env.subtask_flags()
    obj_pos = env.object_positions[task.object_id]
    tgt_pos = env.object_positions[task.target_id]
    ee = np.array(env.ee_pose()[:2])
    holding = env.arm.held_object == task.object_id

    def want(mode: int, u1: float, u2: float):
        toggle = session.mode_index != mode
        if toggle:
            return 0.0, 0.0, True  # spend the tick switching modes
        return u1, u2, False

    def quantized_direction(vec: np.ndarray, gain: float = 6.0):
        levels = np.array(Z_GRID_LEVELS)
        out = []
        for v in vec:
            out.append(levels[np.argmin(np.abs(levels - np.clip(gain * v, -1, 1)))])
        return out

    if flags["completed"]:
        return 0.0, 0.0, False
    if not holding:
        if env.arm.gripper >= 0.5:
            return want(1, 0.0, 0.0)  # a close that caught nothing: reopen, retry
        d = float(np.linalg.norm(ee - obj_pos))
        if d > thr.grasp_radius * 0.6:
            u = quantized_direction(obj_pos - ee)
            return want(0, u[0], u[1])
        return want(1, 0.0, 1.0)  # close over the object
    d = float(np.linalg.norm(obj_pos - tgt_pos))
    if task.kind == "pick_place":
        if d > thr.r_target * 0.6:
            u = quantized_direction(tgt_pos - ee)
            return want(0, u[0], u[1])
        return want(1, 0.0, 0.0)  # open to drop it in
    # pour: alternate between holding position over the target and tilting
    if d > thr.r_target * 0.8:
        u = quantized_direction(tgt_pos - ee)
        return want(0, u[0], u[1])
    obj = env.scene.objects[task.object_id]
    orient = env.ee_pose()[2]
    if abs(orient) < obj.pour_angle_threshold:
        rate = 1.0 if orient >= 0 else -1.0
        return want(1, rate, 1.0)
    return 0.0, 0.0, False


def run_expert_episode(bundle: M.ModelBundle, embedding: np.ndarray, env, task_id: str,
                       max_ticks: int, dt: float, start=None,
                       stop_on_complete: bool = True) -> TrajectoryLog:
    """Scripted expert driving a latent-model session until done or budget.

    With ``stop_on_complete=False`` the episode always runs the full
    budget, which is how terminal-position success (parking at the goal,
    not just passing through it) gets measured.
    """
    env.reset(task_id, start=start)
    session = ControlSession(variant=bundle.variant, env=env, dt=dt, bundle=bundle)
    session.use_embedding(embedding)
    for _ in range(max_ticks):
        z = scripted_expert(session)
        latent_tick(session, z)
        if stop_on_complete and env.completed():
            break
    return session.log


def run_ee_episode(env: ArmWorld, task_id: str, max_ticks: int, dt: float,
                   start=None) -> TrajectoryLog:
    """Scripted operator driving the mode-switch baseline."""
    env.reset(task_id, start=start)
    session = ControlSession(variant="ee", env=env, dt=dt)
    for _ in range(max_ticks):
        u1, u2, toggle = scripted_ee_operator(session)
        ee_mode_switch_tick(session, u1, u2, toggle)
        if env.completed():
            break
    return session.log


# --- metrics ---------------------------------------------------------------------------

def jerk(signal, dt: float, window: int = 10, kind: str = "position",
         estimator: str = "velocity_second_diff") -> float:
    """Mean windowed jerk magnitude of a sampled signal.

    ``kind`` says whether the samples are positions (velocity derived as a
    first difference) or already a velocity-like signal (joystick inputs).
    Both estimators target the same third derivative; they differ only in
    the order the finite differences are evaluated.
    """
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim == 1:
        sig = sig[:, None]
    if dt <= 0:
        raise ValueError("dt must be positive")
    if kind == "position":
        v = np.diff(sig, axis=0) / dt
    elif kind == "velocity":
        v = sig
    else:
        raise ValueError(f"unknown signal kind {kind!r}")
    if len(v) < 3:
        raise ValueError("signal too short for a second difference")
    if estimator == "velocity_second_diff":
        j = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (dt * dt)
    elif estimator == "acceleration_first_diff":
        acc = np.diff(v, axis=0) / dt
        j = np.diff(acc, axis=0) / dt
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    mags = np.linalg.norm(j, axis=1)
    n_windows = max(1, len(mags) // window)
    means = [
        float(np.mean(mags[w * window:(w + 1) * window]))
        for w in range(n_windows)
        if len(mags[w * window:(w + 1) * window])
    ]
    return float(np.mean(means))


def jitter_schedule(dt: float, j: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-tick periods drawn from U(dt(1-j), dt(1+j)); j=0 is exactly fixed."""
    if not 0.0 <= j < 1.0:
        raise ValueError("jitter fraction must satisfy 0 <= j < 1")
    if j == 0.0:
        return np.full(n, dt)
    return rng.uniform(dt * (1.0 - j), dt * (1.0 + j), size=n)


@dataclass
class JitterReport:
    """Terminal-error comparison between fixed-rate and jittered control."""

    jitter_fraction: float
    il_fixed_error: float
    il_jitter_errors: list[float]
    lang_fixed_completed: bool
    lang_jitter_completed: list[bool]

    @property
    def il_jitter_mean(self) -> float:
        return float(np.mean(self.il_jitter_errors))

    @property
    def lang_completion_rate(self) -> float:
        return float(np.mean(self.lang_jitter_completed))


def jitter_study(il_bundle: M.ModelBundle, lang_bundle: M.ModelBundle, env_factory,
                 task_id: str, il_embedding: np.ndarray, lang_embedding: np.ndarray,
                 ideal_terminal_ee: np.ndarray, j: float, seeds, dt: float,
                 max_ticks: int) -> JitterReport:
    """Replicate the sampling-rate sensitivity study on one task.

    The imitation rollout runs open-loop at perturbed tick periods; its
    terminal EE distance from the scripted ideal is the error measure.
    The latent model runs under the scripted expert (closed-loop human
    stand-in) at the same perturbed periods, scored by completion.
    """
    env = env_factory()
    env.reset(task_id)
    fixed = il_rollout(il_bundle, il_embedding, env, max_ticks, dt)
    il_fixed_err = float(np.linalg.norm(fixed.ee_positions()[-1] - ideal_terminal_ee))

    env = env_factory()
    run_expert_episode(lang_bundle, lang_embedding, env, task_id, max_ticks, dt)
    lang_fixed_done = bool(env.completed())

    il_errors, lang_done = [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        schedule = jitter_schedule(dt, j, max_ticks, rng)
        env = env_factory()
        env.reset(task_id)
        log = il_rollout(il_bundle, il_embedding, env, max_ticks, schedule, log_dt=dt)
        il_errors.append(float(np.linalg.norm(log.ee_positions()[-1] - ideal_terminal_ee)))

        env = env_factory()
        env.reset(task_id)
        session = ControlSession(variant=lang_bundle.variant, env=env, dt=dt,
                                 bundle=lang_bundle)
        session.use_embedding(lang_embedding)
        for i in range(max_ticks):
            z = scripted_expert(session)
            latent_tick(session, z, dt=schedule[i])
            if env.completed():
                break
        lang_done.append(bool(env.completed()))
    return JitterReport(
        jitter_fraction=j,
        il_fixed_error=il_fixed_err,
        il_jitter_errors=il_errors,
        lang_fixed_completed=lang_fixed_done,
        lang_jitter_completed=lang_done,
    )
