"""
Deterministic kinematic environments.

Two worlds at desk scale: a 2D point navigating toward the four arms of a
cross (the minimal setting where a 1-DoF controller cannot disambiguate
intent), and a 3-joint planar arm doing pick-and-place / pouring over a
small tabletop scene. Both integrate actions with explicit Euler steps,
have no physics beyond clamping, and are bit-reproducible: identical
action streams give identical trajectories.

The arm's grasp model is a kinematic snap: closing the gripper near a
graspable object attaches it to the end-effector; opening releases it in
place. Partial task credit follows the four-stage rubric (reach, grasp,
bring, complete) with monotone flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, GenerationError

TWO_PI = 2.0 * math.pi

# States live on a 2^-32 lattice (~2.3e-10 spacing). At these magnitudes all
# lattice differences are exactly representable in float64, which is what
# makes recorded actions and the noise-augmentation reconstruction identity
# s + a*dt == s' hold bitwise (with a power-of-two dt).
_SNAP_SCALE = 2.0 ** 32


def snap(x):
    """Quantize state values to the simulation lattice."""
    return np.round(np.asarray(x, dtype=np.float64) * _SNAP_SCALE) / _SNAP_SCALE


def wrap_angle(x):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(x, dtype=np.float64) + math.pi, TWO_PI) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def forward_kinematics(joint_angles, link_lengths=(1.0, 1.0, 1.0)):
    """Planar chain FK: returns (ee_x, ee_y, ee_orientation).

    Orientation is the wrapped cumulative joint angle.
    """
    q = np.asarray(joint_angles, dtype=np.float64)
    if q.shape != (len(link_lengths),):
        raise ValueError(f"expected {len(link_lengths)} joint angles, got {q.shape}")
    cum = np.cumsum(q)
    x = float(np.sum(link_lengths * np.cos(cum)))
    y = float(np.sum(link_lengths * np.sin(cum)))
    return x, y, float(wrap_angle(cum[-1]))


def position_jacobian(joint_angles, link_lengths=(1.0, 1.0, 1.0)) -> np.ndarray:
    """2x3 Jacobian of EE position w.r.t. joint angles."""
    q = np.asarray(joint_angles, dtype=np.float64)
    cum = np.cumsum(q)
    sins = link_lengths * np.sin(cum)
    coss = link_lengths * np.cos(cum)
    j = np.zeros((2, len(q)))
    for i in range(len(q)):
        j[0, i] = -np.sum(sins[i:])
        j[1, i] = np.sum(coss[i:])
    return j


def ik_planar(target_xy, orientation, current_angles, link_lengths=(1.0, 1.0, 1.0)):
    """3R planar IK with a specified EE orientation.

    Reduces to a 2R problem for the wrist point, picks the elbow branch
    closest to ``current_angles`` so scripted motion stays continuous.
    """
    l1, l2, l3 = link_lengths
    wx = target_xy[0] - l3 * math.cos(orientation)
    wy = target_xy[1] - l3 * math.sin(orientation)
    r2 = wx * wx + wy * wy
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if not -1.0 <= c2 <= 1.0:
        raise GenerationError(
            f"IK target {tuple(target_xy)} at orientation {orientation:.3f} unreachable"
        )
    best = None
    for sign in (1.0, -1.0):
        t2 = sign * math.acos(c2)
        t1 = math.atan2(wy, wx) - math.atan2(l2 * math.sin(t2), l1 + l2 * math.cos(t2))
        t3 = orientation - t1 - t2
        cand = wrap_angle(np.array([t1, t2, t3]))
        dist = np.linalg.norm(wrap_angle(cand - np.asarray(current_angles)))
        if best is None or dist < best[0]:
            best = (dist, cand)
    return best[1]


# --- cross world -------------------------------------------------------------

CROSS_TASKS = {
    "right": np.array([1.0, 0.0]),
    "left": np.array([-1.0, 0.0]),
    "up": np.array([0.0, 1.0]),
    "down": np.array([0.0, -1.0]),
}


class CrossWorld:
    """Point mass on a bounded plane, velocity-controlled."""

    name = "cross"
    state_dim = 2
    action_dim = 2
    action_limit = 1.0
    latent_dim_default = 1

    def __init__(self, bound: float = 1.5, success_radius: float = 0.05):
        self.bound = bound
        self.success_radius = success_radius
        self.task_id: str | None = None
        self.position = np.zeros(2)
        self._completed = False

    @property
    def velocity_dims(self) -> np.ndarray:
        return np.array([True, True])

    @property
    def tasks(self):
        return list(CROSS_TASKS)

    def goal(self) -> np.ndarray:
        return CROSS_TASKS[self.task_id]

    def reset(self, task_id: str, start=None) -> None:
        if task_id not in CROSS_TASKS:
            raise ValueError(f"unknown cross task {task_id!r}")
        self.task_id = task_id
        self.position = np.zeros(2) if start is None else snap(
            np.clip(np.asarray(start, dtype=np.float64), -self.bound, self.bound)
        )
        self._completed = False

    def state_vector(self) -> np.ndarray:
        return self.position.copy()

    def step(self, action, dt: float) -> np.ndarray:
        a = np.clip(np.asarray(action, dtype=np.float64), -self.action_limit, self.action_limit)
        if not np.isfinite(a).all():
            raise ValueError("non-finite action")
        self.position = snap(np.clip(self.position + a * dt, -self.bound, self.bound))
        if np.linalg.norm(self.position - self.goal()) <= self.success_radius:
            self._completed = True
        return self.position.copy()

    def ee_pose(self):
        return float(self.position[0]), float(self.position[1]), 0.0

    def completed(self) -> bool:
        return self._completed

    def subtask_flags(self) -> dict:
        return {"completed": self._completed}

    def clone_state(self):
        return (self.position.copy(), self._completed)

    def restore_state(self, saved) -> None:
        self.position = saved[0].copy()
        self._completed = saved[1]

    def snapshot(self) -> dict:
        return {
            "state": self.position.copy(),
            "ee": self.ee_pose(),
            "gripper": 0.0,
            "held": None,
            "objects": {t: g.copy() for t, g in CROSS_TASKS.items()},
            "flags": self.subtask_flags(),
        }


# --- planar arm world ---------------------------------------------------------

@dataclass(frozen=True)
class SceneObject:
    id: str
    position: tuple[float, float]
    radius: float
    kind: str  # graspable | container | target_zone
    pour_angle_threshold: float | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError(f"object {self.id!r} radius must be positive")
        if self.kind not in ("graspable", "container", "target_zone"):
            raise ConfigError(f"object {self.id!r} has unknown kind {self.kind!r}")


@dataclass(frozen=True)
class TaskSpec:
    id: str
    kind: str  # pick_place | pour
    object_id: str
    target_id: str

    def __post_init__(self):
        if self.kind not in ("pick_place", "pour"):
            raise ConfigError(f"task {self.id!r} has unknown kind {self.kind!r}")
        if self.object_id == self.target_id:
            raise ConfigError(f"task {self.id!r}: object and target must differ")


@dataclass(frozen=True)
class Thresholds:
    r_reach: float = 0.15
    r_target: float = 0.2
    grasp_radius: float = 0.15


@dataclass(frozen=True)
class ArmState:
    joint_angles: np.ndarray  # (3,), wrapped to (-pi, pi]
    gripper: float  # 0 open .. 1 closed
    held_object: str | None = None

    def vector(self) -> np.ndarray:
        return np.concatenate([self.joint_angles, [self.gripper]])


@dataclass(frozen=True)
class ArmScene:
    objects: dict[str, SceneObject]
    tasks: dict[str, TaskSpec]
    home: tuple[float, float, float]
    link_lengths: tuple[float, float, float] = (1.0, 1.0, 1.0)
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        reach = sum(self.link_lengths)
        for obj in self.objects.values():
            if math.hypot(*obj.position) > reach:
                raise ConfigError(f"object {obj.id!r} lies outside the reach envelope")
        for task in self.tasks.values():
            for oid in (task.object_id, task.target_id):
                if oid not in self.objects:
                    raise ConfigError(f"task {task.id!r} references missing object {oid!r}")


def load_scene(path: str) -> ArmScene:
    with open(path) as f:
        doc = yaml.safe_load(f)
    if doc.get("schema") != "arm-scene/1":
        raise ConfigError(f"not an arm scene file: {path}")
    objects = {
        o["id"]: SceneObject(
            id=o["id"],
            position=tuple(o["position"]),
            radius=float(o["radius"]),
            kind=o["kind"],
            pour_angle_threshold=o.get("pour_angle_threshold"),
        )
        for o in doc["objects"]
    }
    tasks = {
        t["id"]: TaskSpec(id=t["id"], kind=t["kind"], object_id=t["object"], target_id=t["target"])
        for t in doc["tasks"]
    }
    thr = doc.get("thresholds", {})
    return ArmScene(
        objects=objects,
        tasks=tasks,
        home=tuple(doc["home"]),
        link_lengths=tuple(doc.get("link_lengths", (1.0, 1.0, 1.0))),
        thresholds=Thresholds(
            r_reach=thr.get("r_reach", 0.15),
            r_target=thr.get("r_target", 0.2),
            grasp_radius=thr.get("grasp_radius", 0.15),
        ),
    )


class SubtaskTracker:
    """Monotone reach/grasp/bring/complete flags over a trajectory."""

    ORDER = ("reached", "grasped", "brought", "completed")

    def __init__(self, task: TaskSpec, thresholds: Thresholds,
                 pour_angle_threshold: float | None = None):
        self.task = task
        self.thr = thresholds
        self.pour_angle_threshold = pour_angle_threshold
        self.flags = {k: False for k in self.ORDER}
        self._prev_held = None

    def update(self, snapshot: dict) -> dict:
        ee = np.array(snapshot["ee"][:2])
        orientation = snapshot["ee"][2]
        held = snapshot["held"]
        obj_pos = np.asarray(snapshot["objects"][self.task.object_id])
        tgt_pos = np.asarray(snapshot["objects"][self.task.target_id])

        if np.linalg.norm(ee - obj_pos) <= self.thr.r_reach:
            self.flags["reached"] = True
        holding = held == self.task.object_id
        if holding:
            self.flags["grasped"] = True
        near_target = np.linalg.norm(obj_pos - tgt_pos) <= self.thr.r_target
        if holding and near_target:
            self.flags["brought"] = True
        if self.task.kind == "pick_place":
            released = self._prev_held == self.task.object_id and held is None
            if released and near_target:
                self.flags["completed"] = True
        else:  # pour
            thresh = self.pour_angle_threshold
            if thresh is not None and holding and near_target and abs(orientation) >= thresh:
                self.flags["completed"] = True
        self._prev_held = held
        return dict(self.flags)

    @property
    def progress(self) -> int:
        return sum(self.flags.values())


def subtask_status(trajectory, task: TaskSpec, thresholds: Thresholds,
                   pour_angle_threshold: float | None = None) -> dict:
    """Run the rubric over a full trajectory of env snapshots."""
    if not trajectory:
        raise ValueError("empty trajectory")
    tracker = SubtaskTracker(task, thresholds, pour_angle_threshold)
    for snap in trajectory:
        tracker.update(snap)
    return dict(tracker.flags)


class ArmWorld:
    """3-joint planar arm over a tabletop scene, joint-velocity controlled.

    Action layout: (qdot1, qdot2, qdot3, gripper_command). Joint rates are
    clipped to +-1 rad/s; the gripper state slews toward the commanded
    value at a fixed rate. Held objects are pinned to the end-effector.
    """

    name = "arm"
    state_dim = 4
    action_dim = 4
    action_limit = 1.0
    latent_dim_default = 2
    gripper_rate = 2.0  # full travel in 0.5 s

    def __init__(self, scene: ArmScene):
        self.scene = scene
        self.task: TaskSpec | None = None
        self.arm = ArmState(joint_angles=np.array(scene.home), gripper=0.0)
        self.object_positions = {oid: np.array(o.position) for oid, o in scene.objects.items()}
        self.tracker: SubtaskTracker | None = None

    @property
    def velocity_dims(self) -> np.ndarray:
        return np.array([True, True, True, False])

    @property
    def tasks(self):
        return list(self.scene.tasks)

    def reset(self, task_id: str, start=None) -> None:
        if task_id not in self.scene.tasks:
            raise ValueError(f"unknown arm task {task_id!r}")
        self.task = self.scene.tasks[task_id]
        angles = np.array(self.scene.home) if start is None else np.asarray(start[:3], dtype=np.float64)
        gripper = 0.0 if start is None or len(start) < 4 else float(start[3])
        self.arm = ArmState(joint_angles=snap(wrap_angle(angles)), gripper=float(snap(gripper)))
        self.object_positions = {oid: np.array(o.position) for oid, o in self.scene.objects.items()}
        obj = self.scene.objects[self.task.object_id]
        self.tracker = SubtaskTracker(self.task, self.scene.thresholds, obj.pour_angle_threshold)
        self.tracker.update(self.snapshot())

    def ee_pose(self):
        return forward_kinematics(self.arm.joint_angles, self.scene.link_lengths)

    def state_vector(self) -> np.ndarray:
        return self.arm.vector()

    def step(self, action, dt: float) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (4,) or not np.isfinite(a).all():
            raise ValueError(f"bad arm action {a!r}")
        qdot = np.clip(a[:3], -self.action_limit, self.action_limit)
        cmd = float(np.clip(a[3], 0.0, 1.0))

        angles = snap(wrap_angle(self.arm.joint_angles + qdot * dt))
        prev_grip = self.arm.gripper
        delta = np.clip(cmd - prev_grip, -self.gripper_rate * dt, self.gripper_rate * dt)
        gripper = float(snap(np.clip(prev_grip + delta, 0.0, 1.0)))

        held = self.arm.held_object
        ee = forward_kinematics(angles, self.scene.link_lengths)
        ee_xy = np.array(ee[:2])

        if held is None and prev_grip < 0.5 <= gripper:
            # closing past the midpoint: snap-grasp the nearest graspable in range
            best = None
            for oid, obj in self.scene.objects.items():
                if obj.kind != "graspable":
                    continue
                d = np.linalg.norm(ee_xy - self.object_positions[oid])
                if d <= self.scene.thresholds.grasp_radius and (best is None or d < best[0]):
                    best = (d, oid)
            if best is not None:
                held = best[1]
        if held is not None and gripper < 0.5:
            held = None

        self.arm = ArmState(joint_angles=angles, gripper=gripper, held_object=held)
        if held is not None:
            self.object_positions[held] = ee_xy.copy()
        if self.tracker is not None:
            self.tracker.update(self.snapshot())
        return self.state_vector()

    def subtask_flags(self) -> dict:
        if self.tracker is None:
            return {k: False for k in SubtaskTracker.ORDER}
        return dict(self.tracker.flags)

    def completed(self) -> bool:
        return self.subtask_flags().get("completed", False)

    def clone_state(self):
        """Cheap save point for lookahead rollouts (no deepcopy)."""
        return (
            self.arm,
            {k: v.copy() for k, v in self.object_positions.items()},
            dict(self.tracker.flags) if self.tracker else None,
            self.tracker._prev_held if self.tracker else None,
        )

    def restore_state(self, saved) -> None:
        arm, positions, flags, prev_held = saved
        self.arm = arm
        self.object_positions = {k: v.copy() for k, v in positions.items()}
        if self.tracker is not None and flags is not None:
            self.tracker.flags = dict(flags)
            self.tracker._prev_held = prev_held

    def snapshot(self) -> dict:
        return {
            "state": self.state_vector(),
            "ee": self.ee_pose(),
            "gripper": self.arm.gripper,
            "held": self.arm.held_object,
            "objects": {oid: pos.copy() for oid, pos in self.object_positions.items()},
            "flags": self.subtask_flags() if self.tracker is not None else {},
        }
