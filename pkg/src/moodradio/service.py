"""HTTP facade over the session engine and its model artifacts.

Artifacts load as one immutable bundle; a reload builds the next bundle off to
the side and swaps a single reference, so every request sees one consistent
version. Sessions started earlier keep the bundle they were born with until
they end. Each live session carries its own lock: requests to one session are
serialized, requests to different sessions run freely in parallel (handlers
are plain functions, executed on the server's worker threads).
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .artifacts import ArtifactBundle, ArtifactError, load_bundle
from .catalog import Mood
from .sessions import (
    FEEDBACK_KINDS,
    FeedbackError,
    FeedbackEvent,
    SessionConfig,
    SessionDeps,
    SessionError,
    SessionExhausted,
    SessionState,
    apply_feedback,
    next_track,
    start_session,
    state_to_dict,
)

logger = logging.getLogger(__name__)

DEFAULT_SESSION_TTL = 24 * 3600.0
QUEUE_PREVIEW_LENGTH = 5


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class LiveSession:
    state: SessionState
    deps: SessionDeps  # pinned at creation; survives artifact reloads
    model_version: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = 0.0
    feedback_seen: dict[str, dict] = field(default_factory=dict)


class ServiceState:
    """Shared mutable state: the current bundle and the live session table."""

    def __init__(
        self,
        bundle: ArtifactBundle,
        config: SessionConfig | None = None,
        clock: Callable[[], float] | None = None,
        session_ttl: float = DEFAULT_SESSION_TTL,
    ):
        self.config = config or SessionConfig()
        self.clock = clock or time.time
        self.session_ttl = session_ttl
        self._lock = threading.Lock()
        self._bundle = bundle
        self._deps = bundle.session_deps(self.config)
        self._sessions: dict[str, LiveSession] = {}

    @property
    def bundle(self) -> ArtifactBundle:
        return self._bundle

    def current(self) -> tuple[ArtifactBundle, SessionDeps]:
        """One consistent (bundle, deps) pair for the duration of a request."""
        with self._lock:
            return self._bundle, self._deps

    def swap_bundle(self, bundle: ArtifactBundle) -> None:
        with self._lock:
            self._bundle = bundle
            self._deps = bundle.session_deps(self.config)

    def add_session(self, live: LiveSession) -> None:
        with self._lock:
            self._evict_idle_locked()
            self._sessions[live.state.session_id] = live

    def get_session(self, session_id: str) -> LiveSession:
        with self._lock:
            live = self._sessions.get(session_id)
            if live is not None and self.clock() - live.last_access > self.session_ttl:
                del self._sessions[session_id]
                live = None
        if live is None:
            raise ApiError(404, "unknown_session", f"no live session {session_id!r}")
        return live

    def drop_session(self, session_id: str) -> None:
        with self._lock:
            self._sessions.pop(session_id, None)

    def session_count(self) -> int:
        with self._lock:
            return len(self._sessions)

    def _evict_idle_locked(self) -> None:
        now = self.clock()
        stale = [
            sid for sid, live in self._sessions.items()
            if now - live.last_access > self.session_ttl
        ]
        for sid in stale:
            del self._sessions[sid]
        if stale:
            logger.info("evicted %d idle sessions", len(stale))


def reload_artifacts(state: ServiceState, snapshot_dir: str) -> str:
    """Load a fresh bundle and swap it in atomically. Returns its version."""
    bundle = load_bundle(snapshot_dir)  # heavy lifting outside the lock
    state.swap_bundle(bundle)
    logger.info("artifacts reloaded: model_version=%s", bundle.model_version)
    return bundle.model_version


def _track_payload(deps: SessionDeps, session: SessionState, song_id: str) -> dict:
    song = deps.catalog.songs[song_id]
    artist = deps.catalog.artists.get(song.artist_id)
    payload = {
        "song_id": song_id,
        "title": song.title,
        "artist": artist.name if artist is not None else song.artist_id,
        "artist_id": song.artist_id,
    }
    if session.mood is not None:
        score = deps.score_table.songs_for(session.mood).get(song_id)
        if score is not None:
            payload["mood_score"] = score
    return payload


def _session_summary(live: LiveSession) -> dict:
    session, deps = live.state, live.deps
    current = session.history[-1] if session.history else None
    return {
        "session_id": session.session_id,
        "user_id": session.user_id,
        "mood": session.mood.id if session.mood is not None else None,
        "threshold": session.threshold,
        "fallback_active": session.fallback_active,
        "model_version": live.model_version,
        "current_track": _track_payload(deps, session, current) if current else None,
        "queue_preview": [
            _track_payload(deps, session, song_id)
            for song_id, _ in session.queue[:QUEUE_PREVIEW_LENGTH]
        ],
        "history_length": len(session.history),
        "artist_weights": dict(session.artist_weights),
        "excluded_songs": sorted(session.excluded_songs),
        "excluded_artists": sorted(session.excluded_artists),
    }


def _require(payload: dict, key: str, kind: type) -> object:
    if key not in payload:
        raise ApiError(400, "validation_error", f"missing field {key!r}")
    value = payload[key]
    if not isinstance(value, kind):
        raise ApiError(400, "validation_error", f"field {key!r} must be {kind.__name__}")
    return value


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="moodradio", docs_url=None, redoc_url=None)
    app.state.service = state

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"code": "validation_error", "message": str(exc)})

    @app.get("/v1/moods")
    def list_moods() -> list[dict]:
        return [
            {"id": mood.id, "name": mood.display_name, "description": mood.description}
            for mood in Mood
        ]

    @app.get("/v1/health")
    def health() -> dict:
        bundle, _ = state.current()
        return {
            "status": "ok",
            "model_version": bundle.model_version,
            "live_sessions": state.session_count(),
        }

    @app.post("/v1/session")
    def open_session(payload: dict) -> dict:
        user_id = _require(payload, "user_id", str)
        mood_id = payload.get("mood")
        mood = None
        if mood_id is not None:
            try:
                mood = Mood.from_id(mood_id)
            except Exception:
                raise ApiError(400, "invalid_mood", f"unknown mood id {mood_id!r}")
        seed = payload.get("seed")
        if seed is None:
            seed = int(uuid.uuid4().int % 2**31)
        elif not isinstance(seed, int):
            raise ApiError(400, "validation_error", "field 'seed' must be int")

        bundle, deps = state.current()
        if user_id not in deps.catalog.users:
            raise ApiError(404, "unknown_user", f"unknown user {user_id!r}")
        session_id = uuid.uuid4().hex[:16]
        try:
            session = start_session(user_id, mood, deps, seed=seed, session_id=session_id)
            first = next_track(session, deps)
        except SessionExhausted as exc:
            raise ApiError(409, "session_exhausted", str(exc))
        except SessionError as exc:
            raise ApiError(400, "cannot_start_session", str(exc))

        live = LiveSession(
            state=session,
            deps=deps,
            model_version=bundle.model_version,
            last_access=state.clock(),
        )
        state.add_session(live)
        return {
            "session_id": session.session_id,
            "track": _track_payload(deps, session, first),
            "fallback_active": session.fallback_active,
            "model_version": bundle.model_version,
        }

    @app.post("/v1/session/{session_id}/next")
    def advance(session_id: str) -> dict:
        live = state.get_session(session_id)
        with live.lock:
            live.last_access = state.clock()
            try:
                song_id = next_track(live.state, live.deps)
            except SessionExhausted as exc:
                raise ApiError(409, "session_exhausted", str(exc))
            return {
                "track": _track_payload(live.deps, live.state, song_id),
                "fallback_active": live.state.fallback_active,
            }

    @app.post("/v1/session/{session_id}/feedback")
    def feedback(session_id: str, payload: dict) -> dict:
        event_id = _require(payload, "event_id", str)
        kind = _require(payload, "kind", str)
        song_id = _require(payload, "song_id", str)
        if kind not in FEEDBACK_KINDS:
            raise ApiError(400, "invalid_kind", f"kind must be one of {', '.join(FEEDBACK_KINDS)}")
        live = state.get_session(session_id)
        with live.lock:
            live.last_access = state.clock()
            if event_id in live.feedback_seen:
                return live.feedback_seen[event_id]
            event = FeedbackEvent(kind=kind, song_id=song_id, timestamp=state.clock())
            try:
                apply_feedback(live.state, event, live.deps)
            except FeedbackError as exc:
                raise ApiError(400, "invalid_feedback", str(exc))
            response: dict = {"ok": True}
            if kind in ("like", "skip"):
                artist = live.deps.catalog.songs[song_id].artist_id
                response["artist_weight"] = live.state.artist_weight(artist)
            live.feedback_seen[event_id] = response
            return response

    @app.get("/v1/session/{session_id}")
    def summary(session_id: str) -> dict:
        live = state.get_session(session_id)
        with live.lock:
            live.last_access = state.clock()
            return _session_summary(live)

    @app.post("/v1/reload")
    def reload(payload: dict) -> dict:
        snapshot_dir = _require(payload, "snapshot_dir", str)
        try:
            version = reload_artifacts(state, snapshot_dir)
        except ArtifactError as exc:
            raise ApiError(400, "artifact_error", str(exc))
        return {"ok": True, "model_version": version}

    @app.get("/v1/session/{session_id}/debug")
    def debug_state(session_id: str) -> dict:
        live = state.get_session(session_id)
        with live.lock:
            return state_to_dict(live.state)

    return app


def build_service(
    snapshot_dir: str,
    config: SessionConfig | None = None,
    clock: Callable[[], float] | None = None,
    session_ttl: float = DEFAULT_SESSION_TTL,
) -> tuple[FastAPI, ServiceState]:
    state = ServiceState(
        load_bundle(snapshot_dir),
        config=config,
        clock=clock,
        session_ttl=session_ttl,
    )
    return create_app(state), state


__all__ = [
    "ApiError",
    "DEFAULT_SESSION_TTL",
    "LiveSession",
    "ServiceState",
    "build_service",
    "create_app",
    "reload_artifacts",
]
