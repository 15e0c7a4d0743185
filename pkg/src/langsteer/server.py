"""
Websocket transport and static-asset host for the session service.

One websocket connection drives one (or more) sessions. Each connection
runs a single coroutine that interleaves message handling with a fixed
20 Hz tick loop, so a session's env is never touched concurrently. The
browser client is served from ``frontend/dist`` when it has been built;
the wire protocol works headless regardless.

Bind address resolves from, in order: explicit arguments, the
LANGSTEER_BIND env var ("host:port"), then 127.0.0.1:8800.
"""

from __future__ import annotations

import asyncio
import json
import os
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .service import ServiceCore, save_events

DEFAULT_BIND = "127.0.0.1:8800"

_PLACEHOLDER = """<!doctype html>
<title>langsteer</title>
<h1>langsteer teleoperation service</h1>
<p>The service is running and speaking the wire protocol on <code>/ws</code>.</p>
<p>No browser client is built. Build one with <code>cd frontend && npm install && npm run build</code>,
then restart the service.</p>
"""


def resolve_bind(host: str | None = None, port: int | None = None) -> tuple[str, int]:
    env = os.environ.get("LANGSTEER_BIND", DEFAULT_BIND)
    env_host, _, env_port = env.partition(":")
    return host or env_host or "127.0.0.1", port or int(env_port or 8800)


def make_app(core: ServiceCore, frontend_dir: str | None = None,
             record_path: str | None = None) -> FastAPI:
    app = FastAPI(title="langsteer teleop service")
    recorded: list[dict] = []

    disconnect = object()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session_id: str | None = None
        inbound: asyncio.Queue = asyncio.Queue()

        async def reader():
            try:
                while True:
                    raw = await ws.receive_text()
                    try:
                        msg = json.loads(raw)
                    except json.JSONDecodeError:
                        msg = {"type": "__unparseable__"}
                    await inbound.put(msg)
            except WebSocketDisconnect:
                await inbound.put(disconnect)

        async def send(out: dict):
            await ws.send_text(json.dumps(out, separators=(",", ":"), sort_keys=True))

        reader_task = asyncio.create_task(reader())
        try:
            loop = asyncio.get_running_loop()
            next_tick = loop.time() + core.dt
            while True:
                timeout = max(0.0, next_tick - loop.time())
                item = None
                try:
                    item = await asyncio.wait_for(inbound.get(), timeout=timeout)
                except asyncio.TimeoutError:
                    pass
                if item is disconnect:
                    break
                if item is not None:
                    if item == {"type": "__unparseable__"}:
                        await send({"type": "error", "code": "BAD_MESSAGE",
                                    "message": "payload is not valid JSON"})
                    else:
                        recorded.append({"event": "message", "session": session_id, "msg": item})
                        for out in core.handle_message(session_id, item):
                            if out.get("type") == "session":
                                session_id = out["id"]
                            await send(out)
                if loop.time() >= next_tick:
                    next_tick += core.dt
                    if session_id is not None:
                        recorded.append({"event": "tick", "session": session_id})
                        for out in core.tick(session_id):
                            await send(out)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            reader_task.cancel()
            if session_id is not None:
                core.drop_session(session_id)
            if record_path and recorded:
                save_events(record_path, recorded)

    front = Path(frontend_dir) if frontend_dir else Path("frontend/dist")
    if front.is_dir() and (front / "index.html").exists():
        app.mount("/", StaticFiles(directory=str(front), html=True), name="ui")
    else:
        @app.get("/")
        async def placeholder():
            return HTMLResponse(_PLACEHOLDER)

    return app


def serve(core: ServiceCore, host: str | None = None, port: int | None = None,
          frontend_dir: str | None = None, record_path: str | None = None) -> None:
    import uvicorn

    host, port = resolve_bind(host, port)
    app = make_app(core, frontend_dir=frontend_dir, record_path=record_path)
    uvicorn.run(app, host=host, port=port, log_level="warning")
