"""Real-time teleoperation service: drive an env, record a dataset.

One session owns one env instance. A server-side clock ticks the env at a
fixed period; between client messages the last received action is held
(zero before the first message), so the recorded time discretization is
uniform no matter how bursty the human input is. Every tick appends the
pre-step state and the exact post-clip action the env executed.

Wire protocol (one JSON object per websocket message):
  client -> server:  {"type": "action", "a": [..]}
                     {"type": "reset"}
                     {"type": "finish"}
  server -> client:  {"type": "state", "s": [..], "render": {..},
                      "reward": r, "terminal": b, "pairs": n, "episode": k}
                     {"type": "saved", "path": p, "pairs": n}
                     {"type": "error", "message": m}

Lifecycle: POST /session creates (status idle), the websocket at
/session/{id}/stream drives it (running), disconnecting pauses it, and a
pause longer than the configured timeout discards it unrecorded. A finish
message writes the buffer as JSONL, replies with the path, and closes.
"""

from __future__ import annotations

import asyncio
import json
import secrets
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse

from counterbc.dataset import Dataset, save_jsonl
from counterbc.envs import env_ids, make_env

DEFAULT_TICK_MS = 50
DEFAULT_PAUSE_TIMEOUT_S = 60.0


class TeleopSession:
    """State machine for one live env; owned by a single stream at a time."""

    def __init__(self, session_id: str, env, tick_ms: int, seed=None):
        self.id = session_id
        self.env = env
        self.tick_ms = tick_ms
        self.rng = np.random.default_rng(seed)
        self.status = "idle"
        self.state = env.reset(self.rng)
        self.last_action = np.zeros(env.action_spec.dim)
        self.states: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.episode = 0
        self.episode_starts = [0]
        self.saved_path: str | None = None
        self.pause_count = 0

    @property
    def pairs(self) -> int:
        return len(self.states)

    def _begin_episode(self) -> None:
        self.state = self.env.reset(self.rng)
        self.episode += 1
        if self.episode_starts[-1] != self.pairs:
            self.episode_starts.append(self.pairs)

    def tick(self) -> dict:
        """Advance one step under the held action; record the pair."""
        s_before = self.state.copy()
        a = self.env.action_spec.clip(self.last_action)
        result = self.env.step(a)
        self.states.append(s_before)
        self.actions.append(a)
        self.state = result.state
        payload = {
            "type": "state",
            "s": result.state.tolist(),
            "render": self.env.render(result.state),
            "reward": result.reward,
            "terminal": result.terminal,
            "pairs": self.pairs,
            "episode": self.episode,
        }
        if result.terminal:
            self._begin_episode()
        return payload

    def handle(self, msg) -> dict | None:
        """Apply one client message; returns a reply envelope or None."""
        if not isinstance(msg, dict) or "type" not in msg:
            return {"type": "error", "message": "message must have a 'type'"}
        kind = msg["type"]
        if kind == "action":
            return self._handle_action(msg.get("a"))
        if kind == "reset":
            self._begin_episode()
            return None
        if kind == "finish":
            return self._handle_finish()
        return {"type": "error", "message": f"unknown message type {kind!r}"}

    def _handle_action(self, a) -> dict | None:
        dim = self.env.action_spec.dim
        if not isinstance(a, (list, tuple)) or len(a) != dim:
            return {
                "type": "error",
                "message": f"action must be a list of {dim} numbers",
            }
        try:
            arr = np.array([float(v) for v in a], dtype=np.float64)
        except (TypeError, ValueError):
            return {"type": "error", "message": "action entries must be numbers"}
        if not np.isfinite(arr).all():
            return {"type": "error", "message": "action entries must be finite"}
        self.last_action = arr
        return None

    def _handle_finish(self) -> dict:
        if self.pairs == 0:
            return {"type": "error", "message": "nothing recorded yet"}
        self.status = "finished"
        return {"type": "saved", "path": self.saved_path, "pairs": self.pairs}

    def to_dataset(self) -> Dataset:
        return Dataset(
            states=np.array(self.states),
            actions=np.array(self.actions),
            provenance={
                "env": self.env.env_id,
                "session": self.id,
                "created": datetime.now(timezone.utc).isoformat(),
                "tick_ms": self.tick_ms,
                "episode_starts": [i for i in self.episode_starts if i < self.pairs],
            },
        )


def create_app(
    data_dir,
    default_tick_ms: int = DEFAULT_TICK_MS,
    pause_timeout_s: float = DEFAULT_PAUSE_TIMEOUT_S,
    static_dir=None,
) -> FastAPI:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="counterbc teleop")
    sessions: dict[str, TeleopSession] = {}
    app.state.sessions = sessions
    if static_dir is not None:
        # mounted last (end of this factory) so API routes keep precedence
        static_dir = Path(static_dir)
        if not static_dir.is_dir():
            raise ValueError(f"static dir {static_dir} does not exist")

    @app.post("/session")
    async def open_session(body: dict):
        env_id = body.get("env")
        if env_id not in env_ids():
            return JSONResponse(
                status_code=404, content={"detail": f"unknown env {env_id!r}"}
            )
        env = make_env(env_id)
        if not env.teleoperable:
            return JSONResponse(
                status_code=400,
                content={"detail": f"{env_id} has no temporal dynamics to drive"},
            )
        tick_ms = body.get("tick_ms", default_tick_ms)
        if not isinstance(tick_ms, int) or tick_ms < 1:
            return JSONResponse(
                status_code=400,
                content={"detail": "tick_ms must be a positive integer"},
            )
        seed = body.get("seed")
        sid = secrets.token_hex(8)
        session = TeleopSession(sid, env, tick_ms, seed=seed)
        sessions[sid] = session
        return {
            "session_id": sid,
            "env": env_id,
            "state_dim": env.state_dim,
            "action_dim": env.action_spec.dim,
            "action_low": env.action_spec.low.tolist(),
            "action_high": env.action_spec.high.tolist(),
            "tick_ms": tick_ms,
            "render_keys": sorted(env.render(session.state).keys()),
        }

    @app.get("/session/{sid}")
    async def session_info(sid: str):
        session = sessions.get(sid)
        if session is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        return {
            "session_id": sid,
            "status": session.status,
            "pairs": session.pairs,
            "episode": session.episode,
        }

    @app.delete("/session/{sid}")
    async def close_session(sid: str):
        if sid not in sessions:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        del sessions[sid]
        return {"deleted": sid}

    @app.get("/session/{sid}/dataset")
    async def download_dataset(sid: str):
        session = sessions.get(sid)
        if session is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        if session.saved_path is None:
            return JSONResponse(
                status_code=404, content={"detail": "session has no saved dataset"}
            )
        return FileResponse(session.saved_path, media_type="application/jsonl")

    async def _discard_if_still_paused(sid: str, generation: int):
        await asyncio.sleep(pause_timeout_s)
        session = sessions.get(sid)
        if (
            session is not None
            and session.status == "paused"
            and session.pause_count == generation
        ):
            del sessions[sid]

    async def _ticker(session: TeleopSession, ws: WebSocket):
        period = session.tick_ms / 1000.0
        try:
            while session.status == "running":
                await asyncio.sleep(period)
                if session.status != "running":
                    break
                await ws.send_text(json.dumps(session.tick()))
        except RuntimeError:
            # socket closed mid-send; the reader side owns the cleanup
            return

    async def _reader(session: TeleopSession, ws: WebSocket):
        while session.status == "running":
            msg = await ws.receive_text()
            try:
                parsed = json.loads(msg)
            except json.JSONDecodeError:
                await ws.send_text(
                    json.dumps({"type": "error", "message": "invalid JSON"})
                )
                continue
            if isinstance(parsed, dict) and parsed.get("type") == "finish":
                reply = session.handle(parsed)
                if reply["type"] == "saved":
                    path = data_dir / f"{session.env.env_id}-{session.id}.jsonl"
                    save_jsonl(session.to_dataset(), path)
                    session.saved_path = str(path)
                    reply["path"] = session.saved_path
                await ws.send_text(json.dumps(reply))
                continue
            reply = session.handle(parsed)
            if reply is not None:
                await ws.send_text(json.dumps(reply))

    @app.websocket("/session/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        await ws.accept()
        session = sessions.get(sid)
        if session is None:
            await ws.send_text(
                json.dumps({"type": "error", "message": "unknown session"})
            )
            await ws.close()
            return
        if session.status == "finished":
            await ws.send_text(
                json.dumps({"type": "error", "message": "session already finished"})
            )
            await ws.close()
            return
        if session.status == "running":
            await ws.send_text(
                json.dumps({"type": "error", "message": "session already streaming"})
            )
            await ws.close()
            return

        session.status = "running"
        tasks = [
            asyncio.create_task(_ticker(session, ws)),
            asyncio.create_task(_reader(session, ws)),
        ]
        try:
            done, _ = await asyncio.wait(tasks, return_when=asyncio.FIRST_COMPLETED)
            for t in done:
                exc = t.exception()
                if exc is not None and not isinstance(exc, WebSocketDisconnect):
                    raise exc
        finally:
            for t in tasks:
                t.cancel()

        if session.status != "finished":
            # connection lost (or stream ended) with work unrecorded: pause,
            # and discard the session if nobody reconnects in time
            session.status = "paused"
            session.pause_count += 1
            asyncio.create_task(_discard_if_still_paused(sid, session.pause_count))
        try:
            await ws.close()
        except RuntimeError:
            pass

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True))

    return app
