"""Joint user/song embedding space trained from implicit feedback.

The trainer is weighted implicit-feedback matrix factorization solved by
alternating least squares: every observed (user, song) pair carries preference
1 with confidence ``1 + alpha * weight``; unobserved pairs carry preference 0
with confidence 1. Each half-epoch solves the exact per-row normal equations,
so the full objective is non-increasing across epochs by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import Catalog, InteractionEvent
from .snapshots import load_snapshot, save_snapshot

logger = logging.getLogger(__name__)

SNAPSHOT_KIND = "embedding_space"


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    dimension: int = 64
    epochs: int = 15
    regularization: float = 0.01
    confidence_alpha: float = 40.0
    seed: int = 0

    def validate(self) -> None:
        if self.dimension < 1:
            raise TrainingError(f"dimension must be >= 1, got {self.dimension}")
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.regularization < 0:
            raise TrainingError(f"regularization must be >= 0, got {self.regularization}")

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "epochs": self.epochs,
            "regularization": self.regularization,
            "confidence_alpha": self.confidence_alpha,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(
            dimension=int(d["dimension"]),
            epochs=int(d["epochs"]),
            regularization=float(d["regularization"]),
            confidence_alpha=float(d["confidence_alpha"]),
            seed=int(d["seed"]),
        )


class EmbeddingSpace:
    """Immutable trained embeddings for the users/songs seen in training."""

    def __init__(
        self,
        user_ids: list[str],
        song_ids: list[str],
        user_matrix: np.ndarray,
        song_matrix: np.ndarray,
        config: TrainingConfig,
        objective_history: list[float] | None = None,
    ):
        self.user_ids = list(user_ids)
        self.song_ids = list(song_ids)
        self.user_matrix = np.asarray(user_matrix, dtype=np.float64)
        self.song_matrix = np.asarray(song_matrix, dtype=np.float64)
        self.config = config
        self.seed = config.seed
        self.objective_history = list(objective_history or [])
        self._user_index = {u: i for i, u in enumerate(self.user_ids)}
        self._song_index = {s: i for i, s in enumerate(self.song_ids)}

    @property
    def dimension(self) -> int:
        return self.config.dimension

    def has_user(self, user_id: str) -> bool:
        return user_id in self._user_index

    def has_song(self, song_id: str) -> bool:
        return song_id in self._song_index

    def user_vector(self, user_id: str) -> np.ndarray:
        try:
            return self.user_matrix[self._user_index[user_id]]
        except KeyError:
            raise KeyError(f"unknown user id {user_id!r}") from None

    def song_vector(self, song_id: str) -> np.ndarray:
        try:
            return self.song_matrix[self._song_index[song_id]]
        except KeyError:
            raise KeyError(f"unknown song id {song_id!r}") from None

    @property
    def user_vectors(self) -> dict[str, np.ndarray]:
        return {u: self.user_matrix[i] for u, i in self._user_index.items()}

    @property
    def song_vectors(self) -> dict[str, np.ndarray]:
        return {s: self.song_matrix[i] for s, i in self._song_index.items()}


def affinity(space: EmbeddingSpace, user_id: str, song_id: str) -> float:
    """Inner product of the user's and song's vectors."""
    return float(space.user_vector(user_id) @ space.song_vector(song_id))


@dataclass
class _Observations:
    """Aggregated interactions in index form, both orientations."""

    user_ids: list[str]
    song_ids: list[str]
    # parallel arrays over observed pairs
    u_idx: np.ndarray
    s_idx: np.ndarray
    confidence: np.ndarray
    # per-row slices after sorting by user / by song
    by_user: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    by_song: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def _aggregate(events: list[InteractionEvent], alpha: float) -> _Observations:
    weights: dict[tuple[str, str], float] = {}
    for ev in events:
        key = (ev.user_id, ev.song_id)
        weights[key] = weights.get(key, 0.0) + ev.weight

    user_ids = sorted({u for u, _ in weights})
    song_ids = sorted({s for _, s in weights})
    uindex = {u: i for i, u in enumerate(user_ids)}
    sindex = {s: i for i, s in enumerate(song_ids)}

    pairs = sorted(weights.items())
    u_idx = np.array([uindex[u] for (u, _), _ in pairs], dtype=np.int64)
    s_idx = np.array([sindex[s] for (_, s), _ in pairs], dtype=np.int64)
    conf = np.array([1.0 + alpha * w for _, w in pairs], dtype=np.float64)

    obs = _Observations(user_ids, song_ids, u_idx, s_idx, conf)
    order_u = np.argsort(u_idx, kind="stable")
    order_s = np.argsort(s_idx, kind="stable")
    obs.by_user = _slice_rows(u_idx[order_u], s_idx[order_u], conf[order_u], len(user_ids))
    obs.by_song = _slice_rows(s_idx[order_s], u_idx[order_s], conf[order_s], len(song_ids))
    return obs


def _slice_rows(
    row_idx: np.ndarray, col_idx: np.ndarray, conf: np.ndarray, n_rows: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    bounds = np.searchsorted(row_idx, np.arange(n_rows + 1))
    return [
        (col_idx[bounds[r] : bounds[r + 1]], conf[bounds[r] : bounds[r + 1]])
        for r in range(n_rows)
    ]


def _solve_side(
    this: np.ndarray,
    other: np.ndarray,
    rows: list[tuple[np.ndarray, np.ndarray]],
    reg: float,
) -> None:
    """Exact least-squares update of every row of `this`, in place."""
    dim = other.shape[1]
    gram = other.T @ other + reg * np.eye(dim)
    for r, (cols, conf) in enumerate(rows):
        m = other[cols]
        a = gram + (m.T * (conf - 1.0)) @ m
        b = m.T @ conf
        this[r] = np.linalg.solve(a, b)


def training_objective(
    user_matrix: np.ndarray,
    song_matrix: np.ndarray,
    u_idx: np.ndarray,
    s_idx: np.ndarray,
    confidence: np.ndarray,
    reg: float,
    chunk: int = 65536,
) -> float:
    """Full weighted objective over all (user, song) pairs.

    Uses the decomposition sum_all s^2 + sum_obs [c(1-s)^2 - s^2] + reg terms,
    where the all-pairs term reduces to a Gram-matrix trace.
    """
    gram = song_matrix.T @ song_matrix
    total = float(np.sum((user_matrix @ gram) * user_matrix))
    for start in range(0, len(u_idx), chunk):
        sl = slice(start, start + chunk)
        s = np.einsum("ij,ij->i", user_matrix[u_idx[sl]], song_matrix[s_idx[sl]])
        c = confidence[sl]
        total += float(np.sum(c * (1.0 - s) ** 2 - s**2))
    total += reg * (float(np.sum(user_matrix**2)) + float(np.sum(song_matrix**2)))
    return total


def train_embeddings(
    events: list[InteractionEvent],
    catalog: Catalog,
    config: TrainingConfig | None = None,
) -> EmbeddingSpace:
    """Train user and song vectors; deterministic for a fixed config seed."""
    config = config or TrainingConfig()
    config.validate()
    if not events:
        raise TrainingError("cannot train on an empty event list")
    for ev in events:
        if ev.user_id not in catalog.users:
            raise TrainingError(f"event references unknown user {ev.user_id!r}")
        if ev.song_id not in catalog.songs:
            raise TrainingError(f"event references unknown song {ev.song_id!r}")

    obs = _aggregate(events, config.confidence_alpha)
    n_users, n_songs = len(obs.user_ids), len(obs.song_ids)
    dim = config.dimension
    if dim > n_songs:
        logger.warning("dimension %d exceeds distinct song count %d", dim, n_songs)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    bound = 0.5 / np.sqrt(dim)
    user_matrix = rng.uniform(-bound, bound, size=(n_users, dim))
    song_matrix = rng.uniform(-bound, bound, size=(n_songs, dim))

    history: list[float] = []
    for epoch in range(config.epochs):
        _solve_side(user_matrix, song_matrix, obs.by_user, config.regularization)
        _solve_side(song_matrix, user_matrix, obs.by_song, config.regularization)
        objective = training_objective(
            user_matrix, song_matrix, obs.u_idx, obs.s_idx, obs.confidence,
            config.regularization,
        )
        history.append(objective)
        logger.debug("epoch %d objective %.6f", epoch, objective)

    if not (np.isfinite(user_matrix).all() and np.isfinite(song_matrix).all()):
        raise TrainingError("training produced non-finite vectors")
    return EmbeddingSpace(
        obs.user_ids, obs.song_ids, user_matrix, song_matrix, config, history
    )


def save_space(path: str | Path, space: EmbeddingSpace, model_version: str | None = None) -> None:
    save_snapshot(
        path,
        SNAPSHOT_KIND,
        payload={
            "config": space.config.to_dict(),
            "user_ids": space.user_ids,
            "song_ids": space.song_ids,
            "objective_history": space.objective_history,
        },
        arrays={"user_matrix": space.user_matrix, "song_matrix": space.song_matrix},
        model_version=model_version,
    )


def load_space(path: str | Path) -> tuple[EmbeddingSpace, str | None]:
    payload, arrays, model_version = load_snapshot(path, expected_kind=SNAPSHOT_KIND)
    space = EmbeddingSpace(
        user_ids=payload["user_ids"],
        song_ids=payload["song_ids"],
        user_matrix=arrays["user_matrix"],
        song_matrix=arrays["song_matrix"],
        config=TrainingConfig.from_dict(payload["config"]),
        objective_history=[float(x) for x in payload["objective_history"]],
    )
    return space, model_version
