"""HTTP chat service: session-scoped pipeline access for UIs and tools.

Sessions live in memory, expire after an idle timeout, and are strictly
serialized by a per-session lock; the model and databases are shared
read-only.  Every reply carries debug fields (inferred acts, system action,
belief snapshot) for inspector panels.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException

from .pipeline import DialogSystem, SessionContext


@dataclass
class Session:
    ctx: SessionContext
    created_at: float
    last_active: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, ttl_seconds: float = 3600.0):
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, ctx: SessionContext) -> str:
        sid = secrets.token_hex(16)
        now = time.time()
        with self._lock:
            self._sweep(now)
            self._sessions[sid] = Session(ctx, now, now)
        return sid

    def get(self, sid: str) -> Session:
        now = time.time()
        with self._lock:
            self._sweep(now)
            session = self._sessions.get(sid)
            if session is None:
                raise KeyError(sid)
            session.last_active = now
            return session

    def _sweep(self, now: float) -> None:
        dead = [sid for sid, s in self._sessions.items() if now - s.last_active > self.ttl]
        for sid in dead:
            del self._sessions[sid]

    def __len__(self) -> int:
        return len(self._sessions)


def _state_snapshot(ctx: SessionContext) -> dict:
    return {
        "belief_state": ctx.state.belief_state,
        "request_state": ctx.state.request_state,
        "user_action": ctx.state.user_action,
    }


def create_app(system: DialogSystem, ttl_seconds: float = 3600.0,
               transcript_dir: str | None = None, session_seed: int = 0) -> FastAPI:
    app = FastAPI(title="contextdial service")
    store = SessionStore(ttl_seconds)
    counter = {"n": session_seed}

    def persist(sid: str, record: dict) -> None:
        if transcript_dir is None:
            return
        os.makedirs(transcript_dir, exist_ok=True)
        with open(os.path.join(transcript_dir, f"{sid}.jsonl"), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions")
    def open_session():
        counter["n"] += 1
        sid = store.create(system.new_session(seed=counter["n"]))
        return {"id": sid}

    @app.post("/sessions/{sid}/messages")
    def post_message(sid: str, body: dict):
        text = (body or {}).get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise HTTPException(status_code=400, detail="text must be a non-empty string")
        try:
            session = store.get(sid)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session") from None
        with session.lock:
            response = system.respond_to_text(session.ctx, text)
            record = {
                "utterance": response.utterance,
                "action": response.action,
                "acts": [[a.domain, a.intent, a.slot, a.value] for a in response.user_acts],
                "state": _state_snapshot(session.ctx),
                "closed": session.ctx.closed,
            }
        persist(sid, {"text": text, **record})
        return record

    @app.get("/sessions/{sid}")
    def get_state(sid: str):
        try:
            session = store.get(sid)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session") from None
        with session.lock:
            return {
                "state": _state_snapshot(session.ctx),
                "transcript": session.ctx.transcript,
                "closed": session.ctx.closed,
            }

    return app
