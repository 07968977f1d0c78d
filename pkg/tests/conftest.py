"""Shared fixtures: a hand-built session world and a small trained pipeline."""

from __future__ import annotations

import numpy as np
import pytest

from moodradio.ann import IndexConfig, build_index
from moodradio.catalog import Artist, Catalog, InteractionEvent, Mood, Song, User
from moodradio.embeddings import EmbeddingSpace, TrainingConfig
from moodradio.forests import MoodScoreTable
from moodradio.sessions import FallbackPool, SessionConfig, SessionDeps, build_fallback_pool


def make_two_block_world(
    n_users_per_block: int = 20,
    n_songs_per_block: int = 60,
    listens_per_user: int = 25,
    seed: int = 42,
) -> tuple[Catalog, list[InteractionEvent], set[str], set[str]]:
    """Two disjoint listener communities with no cross-block interactions."""
    rng = np.random.Generator(np.random.PCG64(seed))
    artists = {"aA": Artist("aA", "Block A"), "aB": Artist("aB", "Block B")}
    songs: dict[str, Song] = {}
    block_a: set[str] = set()
    block_b: set[str] = set()
    for i in range(n_songs_per_block):
        sa, sb = f"sa{i:03d}", f"sb{i:03d}"
        songs[sa] = Song(sa, "aA", title=f"A {i}")
        songs[sb] = Song(sb, "aB", title=f"B {i}")
        block_a.add(sa)
        block_b.add(sb)

    users: dict[str, User] = {}
    events: list[InteractionEvent] = []
    ts = 0.0
    for block, prefix in ((sorted(block_a), "ua"), (sorted(block_b), "ub")):
        for u in range(n_users_per_block):
            user_id = f"{prefix}{u:03d}"
            # round-robin base guarantees every song keeps several listeners
            picks = {block[(u * 7 + j) % len(block)] for j in range(listens_per_user)}
            for song_id in sorted(picks):
                events.append(
                    InteractionEvent(user_id, song_id, weight=float(rng.integers(2, 6)), timestamp=ts)
                )
                ts += 1.0
            users[user_id] = User(user_id, favorite_song_ids=frozenset(sorted(picks)[:16]))
    catalog = Catalog(songs=songs, artists=artists, users=users)
    return catalog, events, block_a, block_b


N_SESSION_SONGS = 48
N_SESSION_ARTISTS = 6


def make_session_deps(config: SessionConfig | None = None) -> SessionDeps:
    """Small deterministic world wired straight into SessionDeps.

    Mood scores follow a fixed pattern: song i scores ((i + mood_index) % 10) / 10
    for mood number mood_index, so tests can predict exactly which songs pass a
    threshold. Song popularity equals its index.
    """
    rng = np.random.Generator(np.random.PCG64(7))
    artists = {f"a{j}": Artist(f"a{j}", f"Artist {j}") for j in range(N_SESSION_ARTISTS)}
    songs = {
        f"s{i:02d}": Song(f"s{i:02d}", f"a{i % N_SESSION_ARTISTS}", title=f"Song {i}")
        for i in range(N_SESSION_SONGS)
    }
    song_ids = sorted(songs)

    song_matrix = rng.normal(0.0, 1.0, size=(N_SESSION_SONGS, 8))
    favorites = frozenset(song_ids[:16])
    main_vec = song_matrix[:16].mean(axis=0) + rng.normal(0.0, 0.02, size=8)
    far_vec = rng.normal(0.0, 1.0, size=8)
    users = {
        "u_main": User("u_main", favorite_song_ids=favorites),
        "u_other": User("u_other", favorite_song_ids=frozenset(song_ids[16:32])),
        "u_novec": User("u_novec", favorite_song_ids=frozenset(song_ids[8:24])),
        "u_poor": User("u_poor", favorite_song_ids=frozenset(song_ids[:5])),
    }
    catalog = Catalog(songs=songs, artists=artists, users=users)

    space = EmbeddingSpace(
        user_ids=["u_main", "u_other", "u_poor"],
        song_ids=song_ids,
        user_matrix=np.vstack([main_vec, far_vec, far_vec * 0.5]),
        song_matrix=song_matrix,
        config=TrainingConfig(dimension=8),
    )
    index = build_index(np.array(song_ids), song_matrix, IndexConfig(n_cells=4, seed=1))

    table = MoodScoreTable(model_version="vtest")
    for i, song_id in enumerate(song_ids):
        for m, mood in enumerate(Mood):
            table.set(song_id, mood, ((i + m) % 10) / 10.0)

    popularity = {song_id: float(i) for i, song_id in enumerate(song_ids)}
    fallback = FallbackPool()
    for mood in Mood:
        fallback.set_pool(mood, build_fallback_pool(mood, table, popularity, size=20))

    return SessionDeps(
        catalog=catalog,
        space=space,
        index=index,
        score_table=table,
        fallback=fallback,
        config=config or SessionConfig(candidate_k=48, min_candidates=5, queue_batch=10),
    )


@pytest.fixture
def session_deps() -> SessionDeps:
    return make_session_deps()


@pytest.fixture(scope="session")
def two_block_world():
    return make_two_block_world()


def run_pipeline(data_dir, snapshot_dir, seed=11, users=40, songs=1200, artists=60):
    """Drive the real CLI through a full build into snapshot_dir."""
    from moodradio import cli

    steps = [
        ["generate-world", "--out-dir", str(data_dir), "--users", str(users),
         "--songs", str(songs), "--artists", str(artists), "--seed", str(seed)],
        ["ingest", "--snapshot-dir", str(snapshot_dir),
         "--catalog", str(data_dir / "catalog.jsonl"),
         "--interactions", str(data_dir / "interactions.csv"),
         "--labels", str(data_dir / "labels.csv"), "--seed", str(seed)],
        ["train-embeddings", "--snapshot-dir", str(snapshot_dir),
         "--dimension", "16", "--epochs", "4", "--seed", str(seed)],
        ["train-moods", "--snapshot-dir", str(snapshot_dir),
         "--trees", "20", "--max-depth", "8", "--seed", str(seed)],
        ["score-catalog", "--snapshot-dir", str(snapshot_dir)],
        ["build-index", "--snapshot-dir", str(snapshot_dir),
         "--cells", "16", "--seed", str(seed)],
        ["build-fallback", "--snapshot-dir", str(snapshot_dir)],
    ]
    for argv in steps:
        code = cli.main(argv)
        assert code == 0, f"pipeline step failed: {argv}"
    return snapshot_dir


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    return run_pipeline(root / "data", root / "snap")
