"""Per-mood binary random forests over audio-embedding vectors.

Trees are grown on Gini impurity with per-node feature subsampling and
bootstrap resampling. A leaf stores the positive fraction of its training
samples; a forest's score is the mean over trees of the reached leaf's
fraction, always in [0, 1].

Determinism: tree t of a forest seeded with s draws its randomness from
``PCG64(SeedSequence([s, t]))``; bootstrap indices are drawn first, then node
feature subsets in depth-first (left before right) build order. Split ties are
broken toward the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import AUDIO_EMBEDDING_DIM, Catalog, Mood, MoodLabel
from .snapshots import load_snapshot, save_snapshot

logger = logging.getLogger(__name__)

SNAPSHOT_KIND = "forest_set"
LEAF = -1


class ForestError(Exception):
    pass


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    feature_subsample: int = 16  # ceil(sqrt(256))
    bootstrap: bool = True

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ForestError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ForestError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ForestError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.feature_subsample < 1:
            raise ForestError(f"feature_subsample must be >= 1, got {self.feature_subsample}")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "feature_subsample": self.feature_subsample,
            "bootstrap": self.bootstrap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        return cls(
            n_trees=int(d["n_trees"]),
            max_depth=int(d["max_depth"]),
            min_leaf=int(d["min_leaf"]),
            feature_subsample=int(d["feature_subsample"]),
            bootstrap=bool(d["bootstrap"]),
        )


@dataclass
class DecisionTree:
    """Array-of-nodes tree. ``feature[i] == -1`` marks a leaf; internal nodes
    route ``x[feature] <= threshold`` to ``left``, otherwise ``right``."""

    feature: np.ndarray  # int32, -1 for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32, -1 for leaves
    right: np.ndarray  # int32
    value: np.ndarray  # float64, leaf positive fraction
    count: np.ndarray  # int32, training samples reaching the node
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, x_matrix: np.ndarray) -> np.ndarray:
        """Leaf positive fraction for every row of x_matrix."""
        idx = np.zeros(x_matrix.shape[0], dtype=np.int32)
        while True:
            feats = self.feature[idx]
            internal = feats >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            nodes = idx[rows]
            go_left = x_matrix[rows, self.feature[nodes]] <= self.threshold[nodes]
            idx[rows] = np.where(go_left, self.left[nodes], self.right[nodes])
        return self.value[idx]


@dataclass
class TrainingSummary:
    n_positive: int
    n_negative: int
    oob_estimate: float | None = None


@dataclass
class RandomForest:
    mood: Mood
    trees: list[DecisionTree]
    config: ForestConfig
    seed: int
    n_features: int
    training_summary: TrainingSummary

    @property
    def n_trees(self) -> int:
        return len(self.trees)


class _TreeBuilder:
    """Grows one tree; arrays are appended in depth-first build order."""

    def __init__(self, x: np.ndarray, y: np.ndarray, config: ForestConfig, rng: np.random.Generator):
        self.x = x
        self.y = y.astype(np.float64)
        self.config = config
        self.rng = rng
        self.n_features = x.shape[1]
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.count: list[int] = []

    def build(self) -> DecisionTree:
        self._grow(np.arange(len(self.y)), depth=0)
        return DecisionTree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            value=np.array(self.value, dtype=np.float64),
            count=np.array(self.count, dtype=np.int32),
            max_depth=self.config.max_depth,
        )

    def _add_node(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(0.0)
        self.count.append(0)
        return len(self.feature) - 1

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        node = self._add_node()
        y = self.y[idx]
        n = len(idx)
        n_pos = float(y.sum())
        self.value[node] = n_pos / n
        self.count[node] = n

        if (
            depth >= self.config.max_depth
            or n < 2 * self.config.min_leaf
            or n_pos == 0.0
            or n_pos == float(n)
        ):
            return node

        split = self._best_split(idx, y, n_pos)
        if split is None:
            return node
        feat, thr, left_idx, right_idx = split
        self.feature[node] = int(feat)
        self.threshold[node] = float(thr)
        self.left[node] = self._grow(left_idx, depth + 1)
        self.right[node] = self._grow(right_idx, depth + 1)
        return node

    def _best_split(
        self, idx: np.ndarray, y: np.ndarray, n_pos: float
    ) -> tuple[int, float, np.ndarray, np.ndarray] | None:
        n = len(idx)
        k = min(self.config.feature_subsample, self.n_features)
        feats = np.sort(self.rng.choice(self.n_features, size=k, replace=False))

        xs = self.x[np.ix_(idx, feats)]
        order = np.argsort(xs, axis=0, kind="stable")
        xs_sorted = np.take_along_axis(xs, order, axis=0)
        y_sorted = y[order]

        pos_cum = np.cumsum(y_sorted, axis=0)
        left_n = np.arange(1, n, dtype=np.float64)[:, None]
        right_n = n - left_n
        left_pos = pos_cum[:-1]
        right_pos = n_pos - left_pos

        # weighted Gini of the two children (factor 2/n dropped: constant per node)
        score = (
            left_pos * (left_n - left_pos) / left_n
            + right_pos * (right_n - right_pos) / right_n
        )
        min_leaf = self.config.min_leaf
        invalid = (xs_sorted[:-1] == xs_sorted[1:]) | (left_n < min_leaf) | (right_n < min_leaf)
        score = np.where(invalid, np.inf, score)

        # feature-major argmin: lowest feature index wins ties, then lowest
        # threshold (positions are sorted ascending within a column)
        flat = np.ascontiguousarray(score.T).ravel()
        best = int(np.argmin(flat))
        best_score = flat[best]
        if not np.isfinite(best_score):
            return None
        parent_score = n_pos * (n - n_pos) / n
        if not (best_score < parent_score):
            return None

        col = best // (n - 1)
        pos = best % (n - 1)
        thr = 0.5 * (xs_sorted[pos, col] + xs_sorted[pos + 1, col])
        left_idx = idx[order[: pos + 1, col]]
        right_idx = idx[order[pos + 1 :, col]]
        return int(feats[col]), float(thr), left_idx, right_idx


def train_forest(
    embeddings: np.ndarray,
    labels: np.ndarray,
    mood: Mood,
    config: ForestConfig | None = None,
    seed: int = 0,
) -> RandomForest:
    """Train one mood's forest on (embedding, binary label) rows."""
    config = config or ForestConfig()
    config.validate()
    x = np.ascontiguousarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise ForestError("embeddings must be a 2-d array matching labels in length")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos + n_neg != len(y):
        raise ForestError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ForestError(
            f"single-class training set for {mood.value}: "
            f"{n_pos} positive, {n_neg} negative"
        )

    trees: list[DecisionTree] = []
    n = len(y)
    for t in range(config.n_trees):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, t])))
        if config.bootstrap:
            sample = rng.integers(0, n, size=n)
            xt, yt = x[sample], y[sample]
        else:
            xt, yt = x, y
        if yt.sum() == 0 or yt.sum() == len(yt):
            # degenerate bootstrap draw: keep a single-leaf tree
            trees.append(_TreeBuilder(xt[:1], yt[:1], config, rng).build())
            trees[-1].value[0] = float(yt.sum()) / len(yt)
            trees[-1].count[0] = len(yt)
            continue
        trees.append(_TreeBuilder(xt, yt, config, rng).build())

    logger.info("trained %s forest: %d trees on %d samples", mood.value, len(trees), n)
    return RandomForest(
        mood=mood,
        trees=trees,
        config=config,
        seed=seed,
        n_features=x.shape[1],
        training_summary=TrainingSummary(n_positive=n_pos, n_negative=n_neg),
    )


def score_batch(forest: RandomForest, embeddings: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != forest.n_features:
        raise ForestError(
            f"embedding dimension {x.shape[1] if x.ndim == 2 else x.shape} does not match "
            f"forest ({forest.n_features})"
        )
    leaf_values = np.empty((forest.n_trees, x.shape[0]), dtype=np.float64)
    for t, tree in enumerate(forest.trees):
        leaf_values[t] = tree.apply(x)
    return leaf_values.mean(axis=0)


def score(forest: RandomForest, embedding: np.ndarray) -> float:
    """Mood score in [0, 1] for one embedding."""
    e = np.asarray(embedding, dtype=np.float64)
    if e.shape != (forest.n_features,):
        raise ForestError(
            f"embedding dimension {e.shape} does not match forest ({forest.n_features},)"
        )
    return float(score_batch(forest, e[None, :])[0])


class MoodScoreTable:
    """(song_id, mood) -> score in [0, 1], plus the producing model version."""

    def __init__(self, model_version: str = ""):
        self.model_version = model_version
        self._by_mood: dict[Mood, dict[str, float]] = {m: {} for m in Mood}

    def set(self, song_id: str, mood: Mood, value: float) -> None:
        if not (0.0 <= value <= 1.0):
            raise ForestError(f"score {value} outside [0, 1] for ({song_id}, {mood.value})")
        self._by_mood[mood][song_id] = value

    def get(self, song_id: str, mood: Mood) -> float | None:
        return self._by_mood[mood].get(song_id)

    def songs_for(self, mood: Mood) -> dict[str, float]:
        return self._by_mood[mood]

    def __len__(self) -> int:
        return sum(len(d) for d in self._by_mood.values())

    def export_csv(self, path: str | Path) -> None:
        """Hand-off format: ``song_id,mood,score`` with 6 decimal places."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# model_version={self.model_version}\n")
            writer = csv.writer(fh)
            writer.writerow(["song_id", "mood", "score"])
            song_ids = sorted({s for d in self._by_mood.values() for s in d})
            for song_id in song_ids:
                for mood in Mood:
                    value = self._by_mood[mood].get(song_id)
                    if value is not None:
                        writer.writerow([song_id, mood.value, f"{value:.6f}"])

    @classmethod
    def load_csv(cls, path: str | Path) -> "MoodScoreTable":
        path = Path(path)
        if not path.exists():
            raise ForestError(f"score table not found: {path}")
        table = cls()
        with open(path, "r", encoding="utf-8", newline="") as fh:
            first = fh.readline().strip()
            if first.startswith("# model_version="):
                table.model_version = first.split("=", 1)[1]
            else:
                fh.seek(0)
            reader = csv.reader(fh)
            for row in reader:
                if not row or row == ["song_id", "mood", "score"]:
                    continue
                song_id, mood_s, score_s = row
                table.set(song_id, Mood.from_name(mood_s), float(score_s))
        return table


def score_catalog(
    forests: dict[Mood, RandomForest],
    catalog: Catalog,
    model_version: str = "",
) -> tuple[MoodScoreTable, list[str]]:
    """Score every embedded song for all six moods.

    Returns the table plus the ids of songs skipped for lacking embeddings.
    """
    missing = [m.value for m in Mood if m not in forests]
    if missing:
        raise ForestError(f"missing forest for mood(s): {', '.join(missing)}")

    song_ids = sorted(catalog.songs)
    embedded = [s for s in song_ids if catalog.songs[s].audio_embedding is not None]
    skipped = [s for s in song_ids if catalog.songs[s].audio_embedding is None]
    table = MoodScoreTable(model_version=model_version)
    if embedded:
        x = np.array([catalog.songs[s].audio_embedding for s in embedded], dtype=np.float64)
        for mood in Mood:
            values = score_batch(forests[mood], x)
            for song_id, value in zip(embedded, values):
                table.set(song_id, mood, float(value))
    if skipped:
        logger.info("skipped %d songs without embeddings", len(skipped))
    return table, skipped


@dataclass
class EvalMetrics:
    auc: float
    accuracy_at_half: float
    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int


def _rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average of 1-based ranks
        i = j + 1
    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(forest: RandomForest, embeddings: np.ndarray, labels: np.ndarray) -> EvalMetrics:
    """Holdout AUC (rank statistic) and accuracy at threshold 0.5."""
    y = np.asarray(labels)
    if len(y) == 0:
        raise ForestError("empty holdout")
    if np.all(y == 1) or np.all(y == 0):
        raise ForestError("single-class holdout: AUC is undefined")
    scores = score_batch(forest, np.asarray(embeddings, dtype=np.float64))
    predicted = scores >= 0.5
    tp = int(np.sum(predicted & (y == 1)))
    fp = int(np.sum(predicted & (y == 0)))
    tn = int(np.sum(~predicted & (y == 0)))
    fn = int(np.sum(~predicted & (y == 1)))
    return EvalMetrics(
        auc=_rank_auc(scores, y),
        accuracy_at_half=(tp + tn) / len(y),
        true_positive=tp,
        false_positive=fp,
        true_negative=tn,
        false_negative=fn,
    )


def split_holdout(
    labels: list[MoodLabel], seed: int, fraction: float = 0.2
) -> tuple[list[MoodLabel], list[MoodLabel]]:
    """Deterministic (train, holdout) split, stable across runs and processes.

    Membership hangs on a hash of (song_id, mood, seed) alone, so any caller
    with the same seed reconstructs the identical split without shared state.
    """
    if not (0.0 <= fraction < 1.0):
        raise ForestError(f"holdout fraction must be in [0, 1), got {fraction}")
    cut = int(fraction * 2**32)
    train: list[MoodLabel] = []
    holdout: list[MoodLabel] = []
    for lab in labels:
        digest = hashlib.sha256(f"{lab.song_id}|{lab.mood.value}|{seed}".encode()).digest()
        bucket = int.from_bytes(digest[:4], "big")
        (holdout if bucket < cut else train).append(lab)
    return train, holdout


def labels_to_matrix(
    catalog: Catalog, labels: list[MoodLabel], mood: Mood
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Assemble (embeddings, labels, song_ids) for one mood's labeled songs.

    Songs without an audio embedding are dropped; they cannot be scored.
    """
    rows: list[tuple[str, int]] = []
    for lab in labels:
        if lab.mood is not mood:
            continue
        song = catalog.songs.get(lab.song_id)
        if song is None or song.audio_embedding is None:
            continue
        rows.append((lab.song_id, lab.label))
    rows.sort()
    if not rows:
        return np.zeros((0, AUDIO_EMBEDDING_DIM)), np.zeros(0, dtype=np.int64), []
    song_ids = [s for s, _ in rows]
    x = np.array([catalog.songs[s].audio_embedding for s in song_ids], dtype=np.float64)
    y = np.array([l for _, l in rows], dtype=np.int64)
    return x, y, song_ids


def save_forests(
    path: str | Path, forests: dict[Mood, RandomForest], model_version: str | None = None
) -> None:
    """One snapshot holding all trained forests, concatenated per mood."""
    payload: dict = {"moods": {}}
    arrays: dict[str, np.ndarray] = {}
    for mood, forest in forests.items():
        mid = mood.id
        payload["moods"][mid] = {
            "config": forest.config.to_dict(),
            "seed": forest.seed,
            "n_features": forest.n_features,
            "n_trees": forest.n_trees,
            "tree_sizes": [t.n_nodes for t in forest.trees],
            "summary": {
                "n_positive": forest.training_summary.n_positive,
                "n_negative": forest.training_summary.n_negative,
                "oob_estimate": forest.training_summary.oob_estimate,
            },
        }
        arrays[f"{mid}_feature"] = np.concatenate([t.feature for t in forest.trees])
        arrays[f"{mid}_threshold"] = np.concatenate([t.threshold for t in forest.trees])
        arrays[f"{mid}_left"] = np.concatenate([t.left for t in forest.trees])
        arrays[f"{mid}_right"] = np.concatenate([t.right for t in forest.trees])
        arrays[f"{mid}_value"] = np.concatenate([t.value for t in forest.trees])
        arrays[f"{mid}_count"] = np.concatenate([t.count for t in forest.trees])
    save_snapshot(path, SNAPSHOT_KIND, payload, arrays, model_version=model_version)


def load_forests(path: str | Path) -> tuple[dict[Mood, RandomForest], str | None]:
    payload, arrays, model_version = load_snapshot(path, expected_kind=SNAPSHOT_KIND)
    forests: dict[Mood, RandomForest] = {}
    for mid, meta in payload["moods"].items():
        mood = Mood.from_id(mid)
        sizes = meta["tree_sizes"]
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        config = ForestConfig.from_dict(meta["config"])
        trees = []
        for t in range(meta["n_trees"]):
            sl = slice(int(bounds[t]), int(bounds[t + 1]))
            trees.append(
                DecisionTree(
                    feature=arrays[f"{mid}_feature"][sl],
                    threshold=arrays[f"{mid}_threshold"][sl],
                    left=arrays[f"{mid}_left"][sl],
                    right=arrays[f"{mid}_right"][sl],
                    value=arrays[f"{mid}_value"][sl],
                    count=arrays[f"{mid}_count"][sl],
                    max_depth=config.max_depth,
                )
            )
        summary = meta["summary"]
        forests[mood] = RandomForest(
            mood=mood,
            trees=trees,
            config=config,
            seed=int(meta["seed"]),
            n_features=int(meta["n_features"]),
            training_summary=TrainingSummary(
                n_positive=int(summary["n_positive"]),
                n_negative=int(summary["n_negative"]),
                oob_estimate=summary["oob_estimate"],
            ),
        )
    return forests, model_version


__all__ = [
    "AUDIO_EMBEDDING_DIM",
    "DecisionTree",
    "EvalMetrics",
    "ForestConfig",
    "ForestError",
    "MoodScoreTable",
    "RandomForest",
    "TrainingSummary",
    "evaluate",
    "labels_to_matrix",
    "load_forests",
    "save_forests",
    "score",
    "score_batch",
    "score_catalog",
    "split_holdout",
    "train_forest",
]
