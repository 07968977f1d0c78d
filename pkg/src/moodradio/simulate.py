"""Synthetic worlds and mood-conditioned listening traffic.

The generator builds a catalog whose audio embeddings carry a planted
signature per mood: a small block of dimensions shifted upward for songs that
belong to the mood. Labels follow the same rule with a margin band, so the
classifiers have a clean learnable target and the labeling oracle is the
generator itself.

The traffic simulator then drives real sessions through the trained stack.
Each simulated day, users open sessions whose moods are drawn from a
day-of-week intensity profile, stream a geometric number of tracks, and emit
occasional feedback. Every stream lands in a log row; per-day mood shares over
that log are the simulation's observable output.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import (
    AUDIO_EMBEDDING_DIM,
    Artist,
    Catalog,
    InteractionEvent,
    Mood,
    MoodLabel,
    Song,
    User,
)
from .sessions import (
    FeedbackEvent,
    SessionDeps,
    SessionError,
    SessionExhausted,
    apply_feedback,
    next_track,
    start_session,
)

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400

# day-of-week intensity rows, Monday first; margins sized so the expected
# share gaps stay several sigma wide at the default daily volume
DEFAULT_MOOD_TIME_PROFILE: dict[str, tuple[float, ...]] = {
    "motivation": (30.0, 30.0, 30.0, 30.0, 30.0, 30.0, 30.0),
    "chill": (18.0, 18.0, 18.0, 18.0, 18.0, 18.0, 24.3),
    "focus": (20.0, 20.0, 20.0, 20.0, 20.0, 10.0, 10.0),
    "party": (10.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0),
    "melancholy": (8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0),
    "you_and_me": (7.0, 7.0, 7.0, 7.0, 7.0, 7.0, 7.0),
}


class SimError(Exception):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_users: int = 1200
    n_songs: int = 3000
    n_artists: int = 300
    n_days: int = 14
    seed: int = 0
    mood_time_profile: dict[str, tuple[float, ...]] = field(
        default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_MOOD_TIME_PROFILE.items()}
    )
    # embedding generator: signature block shift and labeling margins
    signature_dims: int = 8
    shift_low: float = 1.2
    shift_high: float = 3.0
    positive_margin: float = 1.2
    negative_margin: float = 0.6
    home_mood_fraction: float = 0.85
    min_labels_per_mood: int = 100
    # behavior model
    interactions_per_user: int = 80
    favorites_per_user: int = 18
    sessions_per_day: float = 1.6
    mean_session_length: float = 10.0
    regular_share: float = 0.08  # sessions launched without a mood
    skip_base: float = 0.12
    like_base: float = 0.05

    def validate(self) -> None:
        if min(self.n_users, self.n_songs, self.n_artists, self.n_days) < 1:
            raise SimError("n_users, n_songs, n_artists and n_days must all be >= 1")
        for mood in Mood:
            if mood.id not in self.mood_time_profile:
                raise SimError(f"mood_time_profile lacks an entry for {mood.id}")
            if len(self.mood_time_profile[mood.id]) != 7:
                raise SimError("each mood_time_profile row needs 7 day-of-week intensities")
        rows = np.array([self.mood_time_profile[m.id] for m in Mood], dtype=np.float64)
        if (rows < 0).any():
            raise SimError("mood intensities must be >= 0")
        if (rows.sum(axis=0) <= 0).any():
            raise SimError("every day of week needs at least one positive mood intensity")
        if not (0.0 <= self.regular_share < 1.0):
            raise SimError(f"regular_share must be in [0, 1), got {self.regular_share}")
        required = len(Mood) * self.min_labels_per_mood
        if self.n_songs < required:
            raise SimError(
                f"{self.n_songs} songs cannot carry {self.min_labels_per_mood} positive "
                f"labels for each of {len(Mood)} moods (need >= {required})"
            )


@dataclass
class World:
    catalog: Catalog
    interactions: list[InteractionEvent]
    labels: list[MoodLabel]
    signature_blocks: dict[str, tuple[int, ...]]  # mood id -> planted dimensions


def _signature_blocks(config: SimConfig) -> dict[str, tuple[int, ...]]:
    blocks: dict[str, tuple[int, ...]] = {}
    for i, mood in enumerate(Mood):
        start = i * config.signature_dims
        blocks[mood.id] = tuple(range(start, start + config.signature_dims))
    return blocks


def generate_world(config: SimConfig) -> World:
    """Build a synthetic catalog, listening history and mood labels.

    Deterministic given config.seed. Every user ends up with enough favorites
    to be radio-eligible, and every mood with at least min_labels_per_mood
    positive and negative labels.
    """
    config.validate()
    if len(Mood) * config.signature_dims > AUDIO_EMBEDDING_DIM:
        raise SimError("signature blocks exceed the embedding dimension")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed])))
    moods = list(Mood)
    blocks = _signature_blocks(config)

    artists = {
        f"a{i:05d}": Artist(artist_id=f"a{i:05d}", name=f"Artist {i}")
        for i in range(config.n_artists)
    }
    artist_ids = sorted(artists)

    # embeddings: unit noise plus a planted shift on the home mood's block
    embeddings = rng.normal(0.0, 1.0, size=(config.n_songs, AUDIO_EMBEDDING_DIM))
    home = np.full(config.n_songs, -1, dtype=np.int64)
    n_home = int(config.n_songs * config.home_mood_fraction)
    home[:n_home] = np.arange(n_home) % len(moods)  # even split, rest moodless
    shifts = rng.uniform(config.shift_low, config.shift_high, size=config.n_songs)
    for s in range(n_home):
        embeddings[s, list(blocks[moods[home[s]].id])] += shifts[s]

    songs: dict[str, Song] = {}
    for s in range(config.n_songs):
        song_id = f"t{s:06d}"
        songs[song_id] = Song(
            song_id=song_id,
            artist_id=artist_ids[s % len(artist_ids)],
            title=f"Track {s}",
            audio_embedding=tuple(float(v) for v in embeddings[s]),
        )
    song_ids = sorted(songs)

    # labels by planted-block proximity, with an unlabeled margin band
    labels: list[MoodLabel] = []
    pos_counts = {m: 0 for m in moods}
    neg_counts = {m: 0 for m in moods}
    for s, song_id in enumerate(song_ids):
        for m, mood in enumerate(moods):
            proximity = float(embeddings[s, list(blocks[mood.id])].mean())
            if proximity >= config.positive_margin:
                labels.append(MoodLabel(song_id=song_id, mood=mood, label=1))
                pos_counts[mood] += 1
            elif proximity <= config.negative_margin:
                labels.append(MoodLabel(song_id=song_id, mood=mood, label=0))
                neg_counts[mood] += 1
    for mood in moods:
        if pos_counts[mood] < config.min_labels_per_mood or neg_counts[mood] < config.min_labels_per_mood:
            raise SimError(
                f"generated labels too sparse for {mood.value}: "
                f"{pos_counts[mood]} positive, {neg_counts[mood]} negative "
                f"(need {config.min_labels_per_mood} of each); grow n_songs"
            )

    # per-mood song pools drive user listening
    mood_pool = {
        m: [song_ids[s] for s in range(config.n_songs) if home[s] == i]
        for i, m in enumerate(moods)
    }
    moodless = [song_ids[s] for s in range(config.n_songs) if home[s] < 0]

    users: dict[str, User] = {}
    interactions: list[InteractionEvent] = []
    for u in range(config.n_users):
        user_id = f"u{u:05d}"
        urng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 1, u])))
        taste = urng.dirichlet(np.full(len(moods), 0.4))
        listened: dict[str, float] = {}
        for _ in range(config.interactions_per_user):
            if moodless and urng.random() < 0.1:
                pool = moodless
            else:
                pool = mood_pool[moods[int(urng.choice(len(moods), p=taste))]]
            song_id = pool[int(urng.integers(0, len(pool)))]
            listened[song_id] = listened.get(song_id, 0.0) + float(1 + urng.geometric(0.5))
        base_ts = float(u * 1000)
        for j, song_id in enumerate(sorted(listened)):
            interactions.append(
                InteractionEvent(
                    user_id=user_id,
                    song_id=song_id,
                    weight=listened[song_id],
                    timestamp=base_ts + j,
                )
            )
        by_weight = sorted(listened.items(), key=lambda kv: (-kv[1], kv[0]))
        favorites = [s for s, _ in by_weight[: config.favorites_per_user]]
        if len(favorites) < config.favorites_per_user:
            # few distinct listens: pad from the dominant taste pool
            pool = mood_pool[moods[int(np.argmax(taste))]] or song_ids
            for song_id in pool:
                if len(favorites) >= config.favorites_per_user:
                    break
                if song_id not in listened:
                    favorites.append(song_id)
        users[user_id] = User(user_id=user_id, favorite_song_ids=frozenset(favorites))

    catalog = Catalog(songs=songs, artists=artists, users=users)
    logger.info(
        "generated world: %d songs, %d users, %d interactions, %d labels",
        config.n_songs, config.n_users, len(interactions), len(labels),
    )
    return World(
        catalog=catalog,
        interactions=sorted(interactions, key=lambda e: (e.timestamp, e.user_id, e.song_id)),
        labels=labels,
        signature_blocks=blocks,
    )


@dataclass(frozen=True)
class StreamRecord:
    timestamp: float
    user_id: str
    song_id: str
    mood: Mood | None
    session_id: str


def simulate_days(deps: SessionDeps, config: SimConfig) -> list[StreamRecord]:
    """Replay config.n_days of listening through real sessions.

    Day 0 is a Monday. Per user and day, an independent child seed drives the
    session count, mood choices, session lengths and feedback, so the log is
    reproducible and insensitive to user iteration order. Exhausted sessions
    end the user's day quietly.
    """
    config.validate()
    user_ids = sorted(deps.catalog.users)
    moods = list(Mood)
    profile = np.array([config.mood_time_profile[m.id] for m in moods], dtype=np.float64)
    records: list[StreamRecord] = []
    exhausted = 0
    t_start = time.monotonic()

    for day in range(config.n_days):
        dow = day % 7
        intensities = profile[:, dow]
        mood_p = intensities / intensities.sum()
        for u, user_id in enumerate(user_ids):
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([config.seed, 1000 + day, u]))
            )
            n_sessions = int(rng.poisson(config.sessions_per_day))
            for si in range(n_sessions):
                if rng.random() < config.regular_share:
                    mood = None
                else:
                    mood = moods[int(rng.choice(len(moods), p=mood_p))]
                # cap the geometric tail so a session's streams stay in its day
                length = min(int(rng.geometric(1.0 / config.mean_session_length)), 60)
                session_seed = int(rng.integers(0, 2**31))
                start_s = int(rng.integers(0, SECONDS_PER_DAY - 61 * 210))
                try:
                    session = start_session(
                        user_id, mood, deps, seed=session_seed,
                        session_id=f"sim-{day}-{u}-{si}",
                    )
                except SessionError:
                    exhausted += 1
                    continue
                for step in range(length):
                    try:
                        song_id = next_track(session, deps)
                    except SessionExhausted:
                        exhausted += 1
                        break
                    records.append(
                        StreamRecord(
                            timestamp=float(day * SECONDS_PER_DAY + start_s + step * 210),
                            user_id=user_id,
                            song_id=song_id,
                            mood=mood,
                            session_id=session.session_id,
                        )
                    )
                    affinity = _affinity_or_zero(deps, user_id, song_id)
                    p_skip = config.skip_base / (1.0 + max(affinity, 0.0))
                    draw = rng.random()
                    if draw < p_skip:
                        apply_feedback(session, FeedbackEvent("skip", song_id), deps)
                    elif draw < p_skip + config.like_base:
                        apply_feedback(session, FeedbackEvent("like", song_id), deps)

    records.sort(key=lambda r: (r.timestamp, r.user_id, r.session_id, r.song_id))
    logger.info(
        "simulated %d days: %d streams, %d exhausted sessions, %.1fs",
        config.n_days, len(records), exhausted, time.monotonic() - t_start,
    )
    return records


def _affinity_or_zero(deps: SessionDeps, user_id: str, song_id: str) -> float:
    if deps.space is None or not deps.space.has_user(user_id) or not deps.space.has_song(song_id):
        return 0.0
    return float(np.dot(deps.space.user_vector(user_id), deps.space.song_vector(song_id)))


def mood_distribution(records: list[StreamRecord]) -> dict[int, dict[Mood, float]]:
    """Per-day share of mood-tagged streams.

    Days whose streams are all mood-less map to an empty dict. Shares within a
    day sum to 1 up to float error.
    """
    if not records:
        raise SimError("empty stream log")
    counts: dict[int, dict[Mood, int]] = {}
    for rec in records:
        day = int(rec.timestamp // SECONDS_PER_DAY)
        day_counts = counts.setdefault(day, {})
        if rec.mood is not None:
            day_counts[rec.mood] = day_counts.get(rec.mood, 0) + 1
    shares: dict[int, dict[Mood, float]] = {}
    for day in sorted(counts):
        total = sum(counts[day].values())
        if total == 0:
            shares[day] = {}
        else:
            shares[day] = {m: c / total for m, c in sorted(counts[day].items(), key=lambda kv: kv[0].id)}
    return shares


_LOG_HEADER = ["timestamp", "user_id", "song_id", "mood", "session_id"]


def write_stream_log(path: str | Path, records: list[StreamRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOG_HEADER)
        for rec in records:
            writer.writerow([
                repr(rec.timestamp),
                rec.user_id,
                rec.song_id,
                rec.mood.id if rec.mood is not None else "",
                rec.session_id,
            ])


def read_stream_log(path: str | Path) -> list[StreamRecord]:
    path = Path(path)
    if not path.exists():
        raise SimError(f"stream log not found: {path}")
    records: list[StreamRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _LOG_HEADER:
            raise SimError(f"unexpected stream log header in {path}: {header}")
        for row in reader:
            ts, user_id, song_id, mood_id, session_id = row
            records.append(
                StreamRecord(
                    timestamp=float(ts),
                    user_id=user_id,
                    song_id=song_id,
                    mood=Mood.from_id(mood_id) if mood_id else None,
                    session_id=session_id,
                )
            )
    return records


def write_distribution(path: str | Path, shares: dict[int, dict[Mood, float]]) -> None:
    """Plot-ready table: one row per (day, mood), shares to 6 decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "mood", "share"])
        for day in sorted(shares):
            for mood, share in shares[day].items():
                writer.writerow([day, mood.value, f"{share:.6f}"])


__all__ = [
    "DEFAULT_MOOD_TIME_PROFILE",
    "SECONDS_PER_DAY",
    "SimConfig",
    "SimError",
    "StreamRecord",
    "World",
    "generate_world",
    "mood_distribution",
    "read_stream_log",
    "simulate_days",
    "write_distribution",
    "write_stream_log",
]
