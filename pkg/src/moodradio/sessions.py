"""Mood-filtered, feedback-adaptive radio sessions.

A session owns an ordered queue of upcoming songs and a play history. Tracks
are popped by priority (affinity times an adaptive per-artist weight), with a
spacing rule that avoids repeating an artist within the last few plays when
another choice exists. Feedback reshapes the rest of the session: likes boost
an artist, skips penalize one and bar the song, exclusions purge the queue.

Refills prefer fresh personalized candidates, then the pre-built fallback pool,
and only then recycle songs whose last play is at least ``no_repeat_window``
plays in the past. All decisions are deterministic given the session seed: the
only random draws are queue-interleaving positions from a per-session PCG64
generator whose state travels with the serialized session.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .ann import AnnIndex, query
from .catalog import Catalog, Mood, eligible_for_radio
from .embeddings import EmbeddingSpace
from .forests import MoodScoreTable

FEEDBACK_KINDS = ("like", "skip", "exclude_song", "exclude_artist")

STATE_VERSION = 1


class SessionError(Exception):
    pass


class SessionExhausted(SessionError):
    """No playable song remains: candidates, fallback and recycling all empty."""


class FeedbackError(SessionError):
    pass


class FallbackError(SessionError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    threshold: float = 0.5  # minimum mood score to qualify
    candidate_k: int = 500
    min_candidates: int = 50
    favorites_ratio: float = 0.3
    artist_spacing: int = 3
    like_boost: float = 1.5
    skip_penalty: float = 0.5
    no_repeat_window: int = 100
    queue_batch: int = 20  # queue is topped up to this length
    refill_below: int = 5
    mood_thresholds: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        thresholds = [self.threshold, *self.mood_thresholds.values()]
        for t in thresholds:
            if not (0.0 < t < 1.0):
                raise SessionError(f"threshold must be in (0, 1), got {t}")
        if not (0.0 <= self.favorites_ratio <= 1.0):
            raise SessionError(f"favorites_ratio must be in [0, 1], got {self.favorites_ratio}")
        if self.artist_spacing < 1:
            raise SessionError(f"artist_spacing must be >= 1, got {self.artist_spacing}")
        if self.like_boost <= 1.0:
            raise SessionError(f"like_boost must be > 1, got {self.like_boost}")
        if not (0.0 < self.skip_penalty < 1.0):
            raise SessionError(f"skip_penalty must be in (0, 1), got {self.skip_penalty}")
        if self.no_repeat_window < 1:
            raise SessionError(f"no_repeat_window must be >= 1, got {self.no_repeat_window}")
        if self.candidate_k < 1 or self.queue_batch < 1 or self.refill_below < 1:
            raise SessionError("candidate_k, queue_batch and refill_below must be >= 1")

    def threshold_for(self, mood: Mood) -> float:
        return self.mood_thresholds.get(mood.id, self.threshold)


class FallbackPool:
    """Pre-selected songs per mood for users the personalized path cannot serve."""

    def __init__(self, pools: dict[Mood, list[str]] | None = None):
        self._pools: dict[Mood, tuple[str, ...]] = {}
        for mood, songs in (pools or {}).items():
            self._pools[mood] = tuple(songs)

    def set_pool(self, mood: Mood, songs: list[str]) -> None:
        self._pools[mood] = tuple(songs)

    def for_mood(self, mood: Mood) -> tuple[str, ...]:
        return self._pools.get(mood, ())

    @property
    def moods(self) -> list[Mood]:
        return [m for m in Mood if m in self._pools]

    def __len__(self) -> int:
        return sum(len(p) for p in self._pools.values())

    def to_dict(self) -> dict:
        return {mood.id: list(songs) for mood, songs in self._pools.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FallbackPool":
        return cls({Mood.from_id(mid): list(songs) for mid, songs in d.items()})


@dataclass
class SessionDeps:
    catalog: Catalog
    space: EmbeddingSpace | None
    index: AnnIndex | None
    score_table: MoodScoreTable
    fallback: FallbackPool
    config: SessionConfig = field(default_factory=SessionConfig)


@dataclass(frozen=True)
class FeedbackEvent:
    kind: str
    song_id: str
    timestamp: float = 0.0


@dataclass
class SessionState:
    session_id: str
    user_id: str
    mood: Mood | None
    threshold: float
    rng_seed: int
    queue: list[tuple[str, float]] = field(default_factory=list)
    history: list[str] = field(default_factory=list)
    artist_weights: dict[str, float] = field(default_factory=dict)
    excluded_songs: set[str] = field(default_factory=set)
    excluded_artists: set[str] = field(default_factory=set)
    barred_songs: set[str] = field(default_factory=set)
    fallback_active: bool = False
    last_played: dict[str, int] = field(default_factory=dict)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    def artist_weight(self, artist_id: str) -> float:
        return self.artist_weights.get(artist_id, 1.0)

    @property
    def queued_songs(self) -> set[str]:
        return {song_id for song_id, _ in self.queue}


def _mood_score(deps: SessionDeps, song_id: str, mood: Mood) -> float | None:
    return deps.score_table.songs_for(mood).get(song_id)


def _passes_mood(deps: SessionDeps, session: SessionState, song_id: str) -> bool:
    if session.mood is None:
        return True
    score = _mood_score(deps, song_id, session.mood)
    return score is not None and score >= session.threshold


def _playable(deps: SessionDeps, session: SessionState, song_id: str) -> bool:
    song = deps.catalog.songs.get(song_id)
    if song is None:
        return False
    if song_id in session.excluded_songs or song_id in session.barred_songs:
        return False
    return song.artist_id not in session.excluded_artists


def candidate_pool(
    user_id: str,
    mood: Mood | None,
    deps: SessionDeps,
    history: set[str] | None = None,
    excluded_songs: set[str] | None = None,
    excluded_artists: set[str] | None = None,
    barred_songs: set[str] | None = None,
    threshold: float | None = None,
) -> list[tuple[str, float]]:
    """Personalized candidates: nearest songs by affinity, filtered.

    Filtering removes excluded, barred and already-played songs, then, when a
    mood is set, unscored songs and songs below the threshold. The affinity
    ordering from the index survives filtering untouched.
    """
    if deps.space is None or deps.index is None or not deps.space.has_user(user_id):
        raise SessionError(f"no embedding vector for user {user_id!r}")
    history = history or set()
    excluded_songs = excluded_songs or set()
    excluded_artists = excluded_artists or set()
    barred_songs = barred_songs or set()
    if threshold is None:
        threshold = deps.config.threshold_for(mood) if mood is not None else deps.config.threshold

    neighbors = query(deps.index, deps.space.user_vector(user_id), k=deps.config.candidate_k)
    scores = deps.score_table.songs_for(mood) if mood is not None else None
    out: list[tuple[str, float]] = []
    for song_id, affinity in neighbors:
        if song_id in history or song_id in excluded_songs or song_id in barred_songs:
            continue
        song = deps.catalog.songs.get(song_id)
        if song is None or song.artist_id in excluded_artists:
            continue
        if scores is not None:
            score = scores.get(song_id)
            if score is None or score < threshold:
                continue
        out.append((song_id, float(affinity)))
    return out


def _favorite_candidates(session: SessionState, deps: SessionDeps) -> list[tuple[str, float]]:
    """User favorites that pass every session filter, best affinity first."""
    user = deps.catalog.users[session.user_id]
    queued = session.queued_songs
    history = set(session.history)
    picks: list[tuple[str, float]] = []
    has_vector = deps.space is not None and deps.space.has_user(session.user_id)
    for song_id in sorted(user.favorite_song_ids):
        if song_id in queued or song_id in history:
            continue
        if not _playable(deps, session, song_id):
            continue
        if not _passes_mood(deps, session, song_id):
            continue
        if has_vector and deps.space.has_song(song_id):
            base = float(np.dot(deps.space.user_vector(session.user_id), deps.space.song_vector(song_id)))
        else:
            base = 1.0
        picks.append((song_id, base))
    if has_vector:
        picks.sort(key=lambda e: (-e[1], e[0]))
    return picks


def _fallback_candidates(session: SessionState, deps: SessionDeps, need: int) -> list[tuple[str, float]]:
    """Next unplayed entries of the fallback pool, in pool order.

    A regular session (no mood) walks a round-robin union of all pools, the
    entry point chosen by the session rng so distinct seeds vary the mix.
    """
    if session.mood is not None:
        ordered = list(deps.fallback.for_mood(session.mood))
    else:
        pools = [list(deps.fallback.for_mood(m)) for m in Mood]
        pools = [p for p in pools if p]
        ordered = []
        if pools:
            offset = int(session.rng.integers(0, len(pools)))
            longest = max(len(p) for p in pools)
            for i in range(longest):
                for j in range(len(pools)):
                    pool = pools[(offset + j) % len(pools)]
                    if i < len(pool):
                        ordered.append(pool[i])
    queued = session.queued_songs
    history = set(session.history)
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for song_id in ordered:
        if len(out) >= need:
            break
        if song_id in seen or song_id in queued or song_id in history:
            continue
        seen.add(song_id)
        if _playable(deps, session, song_id):
            out.append((song_id, 1.0))
    return out


def _recycle_candidates(session: SessionState, deps: SessionDeps, need: int) -> list[tuple[str, float]]:
    """Re-admit long-ago plays, least recently played first.

    A song is eligible again once its last play lies at least
    ``no_repeat_window`` plays in the past; everything else about playability
    and the mood filter is re-checked because feedback may have changed it.
    """
    window = deps.config.no_repeat_window
    n = len(session.history)
    queued = session.queued_songs
    has_vector = deps.space is not None and deps.space.has_user(session.user_id)
    eligible = sorted(
        (pos, song_id)
        for song_id, pos in session.last_played.items()
        if n - pos >= window and song_id not in queued
    )
    out: list[tuple[str, float]] = []
    for _, song_id in eligible:
        if len(out) >= need:
            break
        if not _playable(deps, session, song_id):
            continue
        if not _passes_mood(deps, session, song_id):
            continue
        if has_vector and deps.space.has_song(song_id):
            base = float(np.dot(deps.space.user_vector(session.user_id), deps.space.song_vector(song_id)))
        else:
            base = 1.0
        out.append((song_id, base))
    return out


def _refill(session: SessionState, deps: SessionDeps) -> None:
    cfg = deps.config
    need = cfg.queue_batch - len(session.queue)
    if need <= 0:
        return

    if not session.fallback_active:
        has_vector = deps.space is not None and deps.space.has_user(session.user_id)
        if has_vector:
            favorites = _favorite_candidates(session, deps)
            discoveries = candidate_pool(
                session.user_id,
                session.mood,
                deps,
                history=set(session.history),
                excluded_songs=session.excluded_songs,
                excluded_artists=session.excluded_artists,
                barred_songs=session.barred_songs,
                threshold=session.threshold,
            )
            queued = session.queued_songs
            fav_ids = {s for s, _ in favorites}
            discoveries = [e for e in discoveries if e[0] not in queued and e[0] not in fav_ids]

            n_fav = min(int(round(need * cfg.favorites_ratio)), len(favorites))
            batch = discoveries[: need - n_fav]
            short = (need - n_fav) - len(batch)
            if short > 0:  # not enough discoveries, let favorites cover the gap
                n_fav = min(n_fav + short, len(favorites))
            for song_id, base in favorites[:n_fav]:
                pos = int(session.rng.integers(0, len(batch) + 1))
                batch.insert(pos, (song_id, base))
            if batch:
                session.queue.extend(batch[:need])
                return
        # personalized path dried up (or never existed): latch onto fallback
        session.fallback_active = True

    entries = _fallback_candidates(session, deps, need)
    if entries:
        session.queue.extend(entries)
        return
    session.queue.extend(_recycle_candidates(session, deps, need))


def _make_session_id(user_id: str, mood: Mood | None, seed: int) -> str:
    digest = hashlib.sha256(f"{user_id}|{mood.id if mood else ''}|{seed}".encode()).hexdigest()
    return f"s{digest[:12]}"


def start_session(
    user_id: str,
    mood: Mood | None,
    deps: SessionDeps,
    seed: int = 0,
    session_id: str | None = None,
) -> SessionState:
    """Open a session and seed its queue.

    Fallback mode engages from the start when the user has no embedding
    vector, or when fewer than ``min_candidates`` songs survive the mood
    filter over the personalized candidates.
    """
    deps.config.validate()
    user = deps.catalog.users.get(user_id)
    if user is None:
        raise SessionError(f"unknown user {user_id!r}")
    if not eligible_for_radio(user):
        raise SessionError(f"user {user_id!r} has too few favorites for a radio session")

    threshold = deps.config.threshold_for(mood) if mood is not None else deps.config.threshold
    session = SessionState(
        session_id=session_id or _make_session_id(user_id, mood, seed),
        user_id=user_id,
        mood=mood,
        threshold=threshold,
        rng_seed=seed,
        rng=np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed]))),
    )

    has_vector = deps.space is not None and deps.space.has_user(user_id)
    if has_vector:
        candidates = candidate_pool(
            user_id,
            mood,
            deps,
            excluded_songs=session.excluded_songs,
            excluded_artists=session.excluded_artists,
            threshold=threshold,
        )
        session.fallback_active = len(candidates) < deps.config.min_candidates
    else:
        session.fallback_active = True

    _refill(session, deps)
    if not session.queue:
        raise FallbackError(
            f"cannot seed session for user {user_id!r}: no candidates and empty fallback pool"
        )
    return session


def next_track(session: SessionState, deps: SessionDeps) -> str:
    """Pop the best queued song, replay-safe and artist-spaced.

    Priority is base affinity times the artist's adaptive weight. Among
    queued songs, those whose artist did not appear in the last
    ``artist_spacing`` plays win; if every queued song collides, spacing is
    waived rather than stalling the session.
    """
    if len(session.queue) < deps.config.refill_below:
        _refill(session, deps)
    if not session.queue:
        raise SessionExhausted(
            f"session {session.session_id}: no playable songs remain"
        )

    recent_artists = {
        deps.catalog.songs[s].artist_id
        for s in session.history[-deps.config.artist_spacing :]
        if s in deps.catalog.songs
    }

    best = -1
    best_priority = -np.inf
    best_spaced = False
    for i, (song_id, base) in enumerate(session.queue):
        artist = deps.catalog.songs[song_id].artist_id
        priority = base * session.artist_weight(artist)
        spaced = artist not in recent_artists
        if (spaced, priority) > (best_spaced, best_priority):
            best, best_priority, best_spaced = i, priority, spaced

    song_id, _ = session.queue.pop(best)
    session.last_played[song_id] = len(session.history)
    session.history.append(song_id)
    return song_id


def apply_feedback(session: SessionState, event: FeedbackEvent, deps: SessionDeps) -> SessionState:
    """Fold one feedback event into the session.

    like multiplies the artist weight by ``like_boost``; skip multiplies it
    by ``skip_penalty`` and bars the song for the rest of the session;
    exclusions extend the session's exclusion sets. Queued songs that the
    event disqualifies are purged immediately.
    """
    if event.kind not in FEEDBACK_KINDS:
        raise FeedbackError(f"unknown feedback kind {event.kind!r}")
    if event.song_id not in session.last_played:
        raise FeedbackError(
            f"song {event.song_id!r} was never played in session {session.session_id}"
        )
    song = deps.catalog.songs[event.song_id]
    artist = song.artist_id

    if event.kind == "like":
        session.artist_weights[artist] = session.artist_weight(artist) * deps.config.like_boost
    elif event.kind == "skip":
        session.artist_weights[artist] = session.artist_weight(artist) * deps.config.skip_penalty
        session.barred_songs.add(event.song_id)
    elif event.kind == "exclude_song":
        session.excluded_songs.add(event.song_id)
    else:
        session.excluded_artists.add(artist)

    session.queue = [
        (song_id, base)
        for song_id, base in session.queue
        if _playable(deps, session, song_id)
    ]
    return session


def build_fallback_pool(
    mood: Mood,
    score_table: MoodScoreTable,
    popularity: dict[str, float],
    size: int = 200,
    threshold: float = 0.5,
) -> list[str]:
    """Most popular songs qualifying for the mood, best first."""
    scores = score_table.songs_for(mood)
    qualifying = [s for s, v in scores.items() if v >= threshold]
    if not qualifying:
        raise FallbackError(f"no songs score >= {threshold} for mood {mood.value}")
    qualifying.sort(key=lambda s: (-popularity.get(s, 0.0), s))
    return qualifying[:size]


def state_to_dict(session: SessionState) -> dict:
    """JSON-safe session snapshot, complete enough to resume mid-session."""
    return {
        "version": STATE_VERSION,
        "session_id": session.session_id,
        "user_id": session.user_id,
        "mood": session.mood.id if session.mood is not None else None,
        "threshold": session.threshold,
        "rng_seed": session.rng_seed,
        "queue": [[song_id, base] for song_id, base in session.queue],
        "history": list(session.history),
        "artist_weights": dict(session.artist_weights),
        "excluded_songs": sorted(session.excluded_songs),
        "excluded_artists": sorted(session.excluded_artists),
        "barred_songs": sorted(session.barred_songs),
        "fallback_active": session.fallback_active,
        "last_played": dict(session.last_played),
        "rng_state": session.rng.bit_generator.state,
    }


def state_from_dict(d: dict) -> SessionState:
    version = d.get("version")
    if version != STATE_VERSION:
        raise SessionError(f"unsupported session state version {version!r}")
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = d["rng_state"]
    return SessionState(
        session_id=d["session_id"],
        user_id=d["user_id"],
        mood=Mood.from_id(d["mood"]) if d["mood"] is not None else None,
        threshold=float(d["threshold"]),
        rng_seed=int(d["rng_seed"]),
        queue=[(song_id, float(base)) for song_id, base in d["queue"]],
        history=list(d["history"]),
        artist_weights={k: float(v) for k, v in d["artist_weights"].items()},
        excluded_songs=set(d["excluded_songs"]),
        excluded_artists=set(d["excluded_artists"]),
        barred_songs=set(d["barred_songs"]),
        fallback_active=bool(d["fallback_active"]),
        last_played={k: int(v) for k, v in d["last_played"].items()},
        rng=rng,
    )


__all__ = [
    "FEEDBACK_KINDS",
    "FallbackError",
    "FallbackPool",
    "FeedbackError",
    "FeedbackEvent",
    "SessionConfig",
    "SessionDeps",
    "SessionError",
    "SessionExhausted",
    "SessionState",
    "apply_feedback",
    "build_fallback_pool",
    "candidate_pool",
    "next_track",
    "start_session",
    "state_from_dict",
    "state_to_dict",
]
