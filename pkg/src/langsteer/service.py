"""
Deterministic session service core for live teleoperation.

The core is transport-free: it consumes already-parsed wire messages and
tick events, mutates per-session state, and returns the outbound messages
to send. All timing lives in the transport (a websocket server at a fixed
tick rate); nothing in here reads a clock, so replaying a recorded event
stream against a fresh core reproduces the outbound stream byte for byte.

Wire schema (JSON objects, one per message):

  client->server
    {"type": "hello", "env": "arm"|"cross", "variant": ..., "checkpoint_id": ...,
     "task": optional}
    {"type": "utterance", "text": ...}
    {"type": "input", "z": [..]}            (latent variants)
    {"type": "input", "u1": f, "u2": f, "toggle": bool}   (ee variant)
    {"type": "reset"}
  server->client
    {"type": "session", "id": ..., "config": {...}}
    {"type": "retrieved", "exemplar_id": int, "text": ..., "similarity": f}
    {"type": "state", "tick": int, "s": [..], "ee": [..], "gripper": f,
     "objects": [..], "subtasks": {..}, "jerk_running": f, "mode": int,
     "task": ...}
    {"type": "error", "code": ..., "message": ...}

Input buffering is latest-wins between ticks; the tick loop applies at
most one input per tick and broadcasts exactly one state message per tick
once a session exists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import control as C
from . import models as M
from . import sim
from .language import EmbeddingTable, Exemplar

PROTOCOL_VERSION = 1
DT_LIVE = 0.05  # 20 Hz tick


def _err(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}


@dataclass
class SessionRecord:
    id: str
    session: C.ControlSession
    variant: str
    env_name: str
    task: str
    tick: int = 0
    latest_input: dict | None = None
    utterance_set: bool = False


@dataclass
class ServiceCore:
    """All live session state plus the frozen models behind it."""

    scene: sim.ArmScene
    table: EmbeddingTable
    exemplars: list[Exemplar]
    checkpoints: dict[str, M.ModelBundle]
    dt: float = DT_LIVE
    allow_hash_fallback: bool = True
    sessions: dict[str, SessionRecord] = field(default_factory=dict)
    _next_session: int = 1

    def _make_env(self, env_name: str):
        if env_name == "cross":
            return sim.CrossWorld()
        if env_name == "arm":
            return sim.ArmWorld(self.scene)
        raise ValueError(f"unknown env {env_name!r}")

    def handle_message(self, session_id: str | None, msg: dict) -> list[dict]:
        """Process one inbound message; returns outbound messages."""
        if not isinstance(msg, dict) or "type" not in msg:
            return [_err("BAD_MESSAGE", "messages are objects with a 'type' tag")]
        mtype = msg["type"]
        if mtype == "hello":
            return self._hello(msg)
        rec = self.sessions.get(session_id)
        if rec is None:
            return [_err("NO_SESSION", "send hello first")]
        if mtype == "utterance":
            return self._utterance(rec, msg)
        if mtype == "input":
            return self._input(rec, msg)
        if mtype == "reset":
            return self._reset(rec)
        return [_err("BAD_MESSAGE", f"unknown message type {mtype!r}")]

    def _hello(self, msg: dict) -> list[dict]:
        env_name = msg.get("env", "arm")
        variant = msg.get("variant", "language")
        if variant not in ("language", "no_language", "imitation", "ee"):
            return [_err("BAD_MESSAGE", f"unknown variant {variant!r}")]
        try:
            env = self._make_env(env_name)
        except ValueError as e:
            return [_err("BAD_MESSAGE", str(e))]
        bundle = None
        if variant != "ee":
            ck = msg.get("checkpoint_id")
            bundle = self.checkpoints.get(ck)
            if bundle is None:
                return [_err("BAD_MESSAGE", f"unknown checkpoint {ck!r}")]
            if bundle.variant != variant:
                return [_err("BAD_MESSAGE",
                             f"checkpoint {ck!r} holds a {bundle.variant!r} model")]
        task = msg.get("task") or env.tasks[0]
        if task not in env.tasks:
            return [_err("BAD_MESSAGE", f"unknown task {task!r}")]
        env.reset(task)
        sid = f"s{self._next_session}"
        self._next_session += 1
        session = C.ControlSession(variant=variant, env=env, dt=self.dt, bundle=bundle)
        self.sessions[sid] = SessionRecord(
            id=sid, session=session, variant=variant, env_name=env_name, task=task)
        config = {
            "protocol": PROTOCOL_VERSION,
            "env": env_name,
            "variant": variant,
            "task": task,
            "dt": self.dt,
            "latent_dim": bundle.config.latent_dim if bundle is not None else None,
            "tasks": list(env.tasks),
        }
        return [{"type": "session", "id": sid, "config": config}]

    def _utterance(self, rec: SessionRecord, msg: dict) -> list[dict]:
        text = msg.get("text")
        if not isinstance(text, str) or not text.strip():
            return [_err("BAD_MESSAGE", "utterance needs non-empty text")]
        if rec.variant == "ee":
            return [_err("BAD_MESSAGE", "the ee variant takes no utterance")]
        try:
            ex, similarity = rec.session.set_utterance(
                text, self.table, self.exemplars,
                allow_hash_fallback=self.allow_hash_fallback)
        except LookupError as e:
            return [_err("UNKNOWN_UTTERANCE", str(e))]
        rec.utterance_set = True
        # the retrieved exemplar names the commanded task; score against it
        if ex.task in rec.session.env.tasks and ex.task != rec.task:
            rec.task = ex.task
            rec.session.env.reset(ex.task)
        return [{
            "type": "retrieved",
            "exemplar_id": ex.id,
            "text": ex.text,
            "similarity": similarity,
            "task": ex.task,
        }]

    def _input(self, rec: SessionRecord, msg: dict) -> list[dict]:
        if rec.variant in ("language", "no_language", "imitation") and not rec.utterance_set:
            return [_err("NO_UTTERANCE", "set an utterance before streaming inputs")]
        if rec.variant == "ee":
            if "u1" not in msg or "u2" not in msg:
                return [_err("BAD_MESSAGE", "ee input needs u1 and u2")]
        else:
            z = msg.get("z")
            d = rec.session.bundle.config.latent_dim
            if not isinstance(z, list) or len(z) != d:
                return [_err("BAD_MESSAGE", f"input z must be a list of {d} numbers")]
        rec.latest_input = msg
        return []

    def _reset(self, rec: SessionRecord) -> list[dict]:
        rec.session.reset_episode(rec.task)
        rec.tick = 0
        rec.latest_input = None
        rec.utterance_set = False
        return []

    def tick(self, session_id: str) -> list[dict]:
        """Advance one control tick: apply the latest input, broadcast state."""
        rec = self.sessions.get(session_id)
        if rec is None:
            return [_err("NO_SESSION", "send hello first")]
        session = rec.session
        stepped = False
        if rec.variant == "ee":
            msg = rec.latest_input or {}
            C.ee_mode_switch_tick(session, float(msg.get("u1", 0.0)),
                                  float(msg.get("u2", 0.0)),
                                  bool(msg.get("toggle", False)))
            if rec.latest_input is not None:
                rec.latest_input = dict(rec.latest_input, toggle=False)
            stepped = True
        elif rec.variant == "imitation":
            if rec.utterance_set:
                action = M.il_forward(session.bundle, session.env.state_vector(),
                                      session.embedding)
                session.env.step(action, self.dt)
                session.tick_count += 1
                session.log.append(session.tick_count * self.dt, np.zeros(1),
                                   session.env.snapshot())
                stepped = True
        else:
            if rec.utterance_set:
                msg = rec.latest_input or {}
                d = session.bundle.config.latent_dim
                z = np.asarray(msg.get("z", [0.0] * d), dtype=np.float64)
                C.latent_tick(session, z)
                stepped = True
        rec.tick += 1
        return [self._state_message(rec, stepped)]

    def _state_message(self, rec: SessionRecord, stepped: bool) -> dict:
        env = rec.session.env
        snap = env.snapshot()
        objects = []
        joints = []
        if isinstance(env, sim.ArmWorld):
            # FK chain points so the client renders links without simulating
            cum = 0.0
            x = y = 0.0
            for angle, length in zip(snap["state"][:3], env.scene.link_lengths):
                cum += angle
                x += length * np.cos(cum)
                y += length * np.sin(cum)
                joints.append([float(x), float(y)])
            for oid, obj in env.scene.objects.items():
                pos = snap["objects"][oid]
                objects.append({
                    "id": oid, "x": float(pos[0]), "y": float(pos[1]),
                    "radius": obj.radius, "kind": obj.kind,
                    "held": snap["held"] == oid,
                })
        else:
            for tid, goal in snap["objects"].items():
                objects.append({"id": tid, "x": float(goal[0]), "y": float(goal[1]),
                                "radius": env.success_radius, "kind": "target_zone",
                                "held": False})
        log = rec.session.log
        jerk_running = 0.0
        if len(log) >= 4:
            jerk_running = C.jerk(log.ee_positions(), self.dt, kind="position")
        return {
            "type": "state",
            "tick": rec.tick,
            "stepped": stepped,
            "s": [float(v) for v in snap["state"]],
            "joints": joints,
            "ee": [float(v) for v in snap["ee"]],
            "gripper": float(snap["gripper"]),
            "objects": objects,
            "subtasks": {k: bool(v) for k, v in snap["flags"].items()},
            "jerk_running": jerk_running,
            "mode": rec.session.mode_index,
            "task": rec.task,
        }

    def drop_session(self, session_id: str) -> None:
        self.sessions.pop(session_id, None)


# --- recording and replay ------------------------------------------------------------

def encode_outbound(session_id: str, messages: list[dict]) -> bytes:
    """Canonical serialization of outbound messages for one event."""
    out = b""
    for m in messages:
        rec = {"session": session_id, "msg": m}
        out += json.dumps(rec, separators=(",", ":"), sort_keys=True).encode() + b"\n"
    return out


def replay_events(core: ServiceCore, events: list[dict]) -> bytes:
    """Drive a fresh core with a recorded inbound event stream.

    Events are {"event": "message", "session": id|None, "msg": {...}} or
    {"event": "tick", "session": id}. Returns the full outbound byte
    stream; with an identically-configured core this is reproducible
    byte for byte.
    """
    out = b""
    for ev in events:
        if ev["event"] == "message":
            msgs = core.handle_message(ev.get("session"), ev["msg"])
        elif ev["event"] == "tick":
            msgs = core.tick(ev["session"])
        else:
            raise ValueError(f"unknown event {ev['event']!r}")
        out += encode_outbound(ev.get("session") or "", msgs)
    return out


def save_events(path: str, events: list[dict]) -> None:
    with open(path, "w") as f:
        for ev in events:
            f.write(json.dumps(ev, separators=(",", ":"), sort_keys=True) + "\n")


def load_events(path: str) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
