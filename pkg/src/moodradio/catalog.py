"""Core entities: moods, songs, artists, users, labels, and interaction logs.

File formats (documented contracts):

* Catalog file: newline-delimited JSON, one object per line with a ``type``
  field of ``artist``, ``song``, or ``user``. Songs may carry a 256-number
  ``audio_embedding`` array. See the README for full field lists.
* Interactions file: CSV with columns ``user_id,song_id,weight,timestamp``
  (header row optional).
* Labels file: CSV with columns ``song_id,mood,label`` where mood is spelled
  exactly as the enumerant name (``Chill`` .. ``YouAndMe``) and label is 0/1.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

AUDIO_EMBEDDING_DIM = 256
RADIO_ELIGIBILITY_THRESHOLD = 16


class CatalogError(Exception):
    """Invalid catalog, interactions, or labels input."""


class Mood(enum.Enum):
    """The six selectable moods."""

    CHILL = "Chill"
    FOCUS = "Focus"
    MELANCHOLY = "Melancholy"
    MOTIVATION = "Motivation"
    PARTY = "Party"
    YOU_AND_ME = "YouAndMe"

    @property
    def id(self) -> str:
        """Lowercase identifier used in the HTTP API and file outputs."""
        return _MOOD_IDS[self]

    @property
    def display_name(self) -> str:
        return _MOOD_DISPLAY[self]

    @property
    def description(self) -> str:
        return _MOOD_DESCRIPTIONS[self]

    @classmethod
    def from_name(cls, name: str) -> "Mood":
        """Parse the enumerant spelling used in label files (e.g. ``YouAndMe``)."""
        try:
            return cls(name)
        except ValueError:
            raise CatalogError(f"unknown mood name {name!r}") from None

    @classmethod
    def from_id(cls, mood_id: str) -> "Mood":
        """Parse the lowercase API identifier (e.g. ``you_and_me``)."""
        for mood, mid in _MOOD_IDS.items():
            if mid == mood_id:
                return mood
        raise CatalogError(f"unknown mood id {mood_id!r}")


_MOOD_IDS = {
    Mood.CHILL: "chill",
    Mood.FOCUS: "focus",
    Mood.MELANCHOLY: "melancholy",
    Mood.MOTIVATION: "motivation",
    Mood.PARTY: "party",
    Mood.YOU_AND_ME: "you_and_me",
}

_MOOD_DISPLAY = {
    Mood.CHILL: "Chill",
    Mood.FOCUS: "Focus",
    Mood.MELANCHOLY: "Melancholy",
    Mood.MOTIVATION: "Motivation",
    Mood.PARTY: "Party",
    Mood.YOU_AND_ME: "You & Me",
}

# Product copy shown next to each mood in selection UIs.
_MOOD_DESCRIPTIONS = {
    Mood.CHILL: (
        "Time to kick back? Relax with your favorite artists that help you "
        "unwind and let go."
    ),
    Mood.FOCUS: (
        "No distractions, please! Let us help you stay in your zone with the "
        "right kind of music to help you achieve your goal."
    ),
    Mood.MELANCHOLY: (
        "We all get the blues now and then. If you are in the mood for a good "
        "cry or want to wallow in sorrow - let it all out here."
    ),
    Mood.MOTIVATION: (
        "Need a little nudge? Make workouts a joyful experience with a power "
        "mix to keep you moving."
    ),
    Mood.PARTY: (
        "Whether it's a party of one or party of more, get in the spirit with "
        "an endless mix of crowd-pleasing music to get you dancing."
    ),
    Mood.YOU_AND_ME: (
        "Feeling a little frisky? Let us set the mood for romance with "
        "feel-good tracks that you and your partner will love."
    ),
}


@dataclass(frozen=True)
class Artist:
    artist_id: str
    name: str = ""


@dataclass(frozen=True)
class Song:
    song_id: str
    artist_id: str
    title: str = ""
    audio_embedding: tuple[float, ...] | None = None


@dataclass(frozen=True)
class User:
    user_id: str
    favorite_song_ids: frozenset[str] = field(default_factory=frozenset)
    favorite_artist_ids: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class InteractionEvent:
    user_id: str
    song_id: str
    weight: float
    timestamp: float


@dataclass(frozen=True)
class MoodLabel:
    song_id: str
    mood: Mood
    label: int  # 1 = complies with the mood, 0 = does not


@dataclass(frozen=True)
class Catalog:
    """Immutable, id-indexed song/artist/user collections."""

    songs: dict[str, Song]
    artists: dict[str, Artist]
    users: dict[str, User]

    def counts(self) -> tuple[int, int, int]:
        return len(self.songs), len(self.artists), len(self.users)


def eligible_for_radio(user: User, threshold: int = RADIO_ELIGIBILITY_THRESHOLD) -> bool:
    """True when the user's favorite songs plus favorite artists reach the threshold."""
    return len(user.favorite_song_ids) + len(user.favorite_artist_ids) >= threshold


def _parse_song(obj: dict, line_no: int) -> Song:
    try:
        song_id = str(obj["song_id"])
        artist_id = str(obj["artist_id"])
    except KeyError as exc:
        raise CatalogError(f"line {line_no}: song record missing field {exc}") from None
    embedding = obj.get("audio_embedding")
    emb_tuple: tuple[float, ...] | None = None
    if embedding is not None:
        if not isinstance(embedding, list):
            raise CatalogError(f"line {line_no}: audio_embedding of song {song_id!r} is not an array")
        if len(embedding) != AUDIO_EMBEDDING_DIM:
            raise CatalogError(
                f"line {line_no}: audio_embedding of song {song_id!r} has "
                f"{len(embedding)} dimensions, expected {AUDIO_EMBEDDING_DIM}"
            )
        emb_tuple = tuple(float(v) for v in embedding)
    return Song(
        song_id=song_id,
        artist_id=artist_id,
        title=str(obj.get("title", "")),
        audio_embedding=emb_tuple,
    )


def load_catalog(path: str | Path) -> Catalog:
    """Load and validate a newline-delimited catalog file.

    Raises CatalogError with a line number for malformed rows, duplicate ids,
    dangling references, and wrong-size embeddings.
    """
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"catalog file not found: {path}")

    songs: dict[str, Song] = {}
    artists: dict[str, Artist] = {}
    users: dict[str, User] = {}
    pending_users: list[tuple[int, User]] = []
    song_lines: dict[str, int] = {}

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CatalogError(f"line {line_no}: not valid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "type" not in obj:
                raise CatalogError(f"line {line_no}: record has no 'type' field")
            kind = obj["type"]
            if kind == "artist":
                artist_id = str(obj.get("artist_id", ""))
                if not artist_id:
                    raise CatalogError(f"line {line_no}: artist record missing artist_id")
                if artist_id in artists:
                    raise CatalogError(f"line {line_no}: duplicate artist_id {artist_id!r}")
                artists[artist_id] = Artist(artist_id=artist_id, name=str(obj.get("name", "")))
            elif kind == "song":
                song = _parse_song(obj, line_no)
                if song.song_id in songs:
                    raise CatalogError(
                        f"line {line_no}: duplicate song_id {song.song_id!r} "
                        f"(first seen on line {song_lines[song.song_id]})"
                    )
                songs[song.song_id] = song
                song_lines[song.song_id] = line_no
            elif kind == "user":
                user_id = str(obj.get("user_id", ""))
                if not user_id:
                    raise CatalogError(f"line {line_no}: user record missing user_id")
                if user_id in users:
                    raise CatalogError(f"line {line_no}: duplicate user_id {user_id!r}")
                user = User(
                    user_id=user_id,
                    favorite_song_ids=frozenset(str(s) for s in obj.get("favorite_song_ids", [])),
                    favorite_artist_ids=frozenset(str(a) for a in obj.get("favorite_artist_ids", [])),
                )
                users[user_id] = user
                pending_users.append((line_no, user))
            else:
                raise CatalogError(f"line {line_no}: unknown record type {kind!r}")

    for song_id, song in songs.items():
        if song.artist_id not in artists:
            raise CatalogError(
                f"line {song_lines[song_id]}: song {song_id!r} references "
                f"unknown artist {song.artist_id!r}"
            )
    for line_no, user in pending_users:
        for fav in user.favorite_song_ids:
            if fav not in songs:
                raise CatalogError(
                    f"line {line_no}: user {user.user_id!r} favorite song {fav!r} not in catalog"
                )
        for fav in user.favorite_artist_ids:
            if fav not in artists:
                raise CatalogError(
                    f"line {line_no}: user {user.user_id!r} favorite artist {fav!r} not in catalog"
                )

    logger.info("loaded catalog: %d songs, %d artists, %d users", len(songs), len(artists), len(users))
    return Catalog(songs=songs, artists=artists, users=users)


_INTERACTION_HEADER = ["user_id", "song_id", "weight", "timestamp"]


@dataclass(frozen=True)
class LoadWarnings:
    dropped_unknown_user: int = 0
    dropped_unknown_song: int = 0

    @property
    def total(self) -> int:
        return self.dropped_unknown_user + self.dropped_unknown_song


def load_interactions(
    path: str | Path, catalog: Catalog
) -> tuple[list[InteractionEvent], LoadWarnings]:
    """Load interaction events sorted by timestamp ascending.

    Rows referencing ids missing from the catalog are dropped and counted in
    the returned warning summary.
    """
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"interactions file not found: {path}")

    events: list[InteractionEvent] = []
    unknown_user = 0
    unknown_song = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if line_no == 1 and row == _INTERACTION_HEADER:
                continue
            if len(row) != 4:
                raise CatalogError(f"line {line_no}: expected 4 columns, got {len(row)}")
            user_id, song_id, weight_s, ts_s = row
            try:
                weight = float(weight_s)
                timestamp = float(ts_s)
            except ValueError:
                raise CatalogError(f"line {line_no}: unparseable weight/timestamp") from None
            if weight < 0:
                raise CatalogError(f"line {line_no}: negative weight {weight}")
            if user_id not in catalog.users:
                unknown_user += 1
                continue
            if song_id not in catalog.songs:
                unknown_song += 1
                continue
            events.append(InteractionEvent(user_id, song_id, weight, timestamp))

    events.sort(key=lambda e: e.timestamp)
    warnings = LoadWarnings(dropped_unknown_user=unknown_user, dropped_unknown_song=unknown_song)
    if warnings.total:
        logger.warning(
            "dropped %d interaction rows (%d unknown user, %d unknown song)",
            warnings.total, unknown_user, unknown_song,
        )
    return events, warnings


def load_labels(path: str | Path, catalog: Catalog | None = None) -> list[MoodLabel]:
    """Load mood labels; at most one label per (song_id, mood) is enforced."""
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"labels file not found: {path}")

    labels: list[MoodLabel] = []
    seen: set[tuple[str, Mood]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if line_no == 1 and row == ["song_id", "mood", "label"]:
                continue
            if len(row) != 3:
                raise CatalogError(f"line {line_no}: expected 3 columns, got {len(row)}")
            song_id, mood_s, label_s = row
            mood = Mood.from_name(mood_s)
            if label_s not in ("0", "1"):
                raise CatalogError(f"line {line_no}: label must be 0 or 1, got {label_s!r}")
            if catalog is not None and song_id not in catalog.songs:
                raise CatalogError(f"line {line_no}: label references unknown song {song_id!r}")
            key = (song_id, mood)
            if key in seen:
                raise CatalogError(f"line {line_no}: duplicate label for ({song_id!r}, {mood_s})")
            seen.add(key)
            labels.append(MoodLabel(song_id=song_id, mood=mood, label=int(label_s)))
    return labels


def write_catalog(path: str | Path, catalog: Catalog) -> None:
    """Write a catalog in the newline-delimited format, deterministically ordered."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for artist_id in sorted(catalog.artists):
            artist = catalog.artists[artist_id]
            fh.write(json.dumps(
                {"type": "artist", "artist_id": artist.artist_id, "name": artist.name},
                sort_keys=True,
            ) + "\n")
        for song_id in sorted(catalog.songs):
            song = catalog.songs[song_id]
            record: dict = {
                "type": "song",
                "song_id": song.song_id,
                "artist_id": song.artist_id,
                "title": song.title,
            }
            if song.audio_embedding is not None:
                record["audio_embedding"] = list(song.audio_embedding)
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        for user_id in sorted(catalog.users):
            user = catalog.users[user_id]
            fh.write(json.dumps(
                {
                    "type": "user",
                    "user_id": user.user_id,
                    "favorite_song_ids": sorted(user.favorite_song_ids),
                    "favorite_artist_ids": sorted(user.favorite_artist_ids),
                },
                sort_keys=True,
            ) + "\n")


def write_interactions(path: str | Path, events: list[InteractionEvent]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_INTERACTION_HEADER)
        for ev in events:
            writer.writerow([ev.user_id, ev.song_id, repr(ev.weight), repr(ev.timestamp)])


def write_labels(path: str | Path, labels: list[MoodLabel]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["song_id", "mood", "label"])
        for lab in labels:
            writer.writerow([lab.song_id, lab.mood.value, lab.label])
