"""Approximate nearest-neighbor retrieval over song vectors.

Inverted-file layout: a k-means coarse quantizer partitions the vectors into
cells; a query ranks cells by L2 distance to their centroids, scans the
``n_probe`` nearest posting lists, and returns the top-k by inner product.
Probing all cells is exactly equivalent to the brute-force scan, which is kept
alongside as the test oracle.

Ordering contract for all result lists: descending similarity, ties broken by
ascending song id.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .snapshots import load_snapshot, save_snapshot

logger = logging.getLogger(__name__)

SNAPSHOT_KIND = "ann_index"
KMEANS_ITERATIONS = 20

NeighborList = list[tuple[str, float]]


class AnnError(Exception):
    pass


@dataclass(frozen=True)
class IndexConfig:
    n_cells: int | None = None  # None -> ceil(sqrt(N))
    n_probe: int | None = None  # None -> min(n_cells, 8)
    seed: int = 0

    def resolve(self, n_items: int) -> tuple[int, int]:
        n_cells = self.n_cells if self.n_cells is not None else math.ceil(math.sqrt(n_items))
        n_cells = max(1, min(n_cells, n_items))
        n_probe = self.n_probe if self.n_probe is not None else min(n_cells, 8)
        n_probe = max(1, min(n_probe, n_cells))
        return n_cells, n_probe


def _rank_by_similarity(ids: np.ndarray, sims: np.ndarray, k: int) -> NeighborList:
    order = np.lexsort((ids, -sims))[:k]
    return [(str(ids[i]), float(sims[i])) for i in order]


def exact_topk(
    item_ids: list[str] | np.ndarray, vectors: np.ndarray, query: np.ndarray, k: int
) -> NeighborList:
    """Exhaustive inner-product scan; the oracle the IVF path is tested against."""
    if k < 1:
        raise AnnError(f"k must be >= 1, got {k}")
    vectors = np.asarray(vectors, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (vectors.shape[1],):
        raise AnnError(
            f"query dimension {query.shape} does not match vectors ({vectors.shape[1]},)"
        )
    ids = np.asarray(item_ids)
    sims = vectors @ query
    return _rank_by_similarity(ids, sims, k)


class AnnIndex:
    """Immutable inverted-file index; safe for concurrent queries."""

    def __init__(
        self,
        item_ids: list[str],
        vectors: np.ndarray,
        centroids: np.ndarray,
        assignments: np.ndarray,
        config: IndexConfig,
        n_cells: int,
        n_probe: int,
    ):
        self.item_ids = np.asarray(item_ids)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.centroids = np.asarray(centroids, dtype=np.float64)
        self.assignments = np.asarray(assignments, dtype=np.int32)
        self.config = config
        self.n_cells = n_cells
        self.n_probe = n_probe
        self.postings = [
            np.flatnonzero(self.assignments == c).astype(np.int64) for c in range(n_cells)
        ]
        self._centroid_sqnorms = np.sum(self.centroids**2, axis=1)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.item_ids)


def _kmeans(vectors: np.ndarray, n_cells: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations with seeded distinct-point init and largest-cell splitting
    for empty cells. Returns (centroids, final assignments)."""
    n = vectors.shape[0]
    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = vectors[np.sort(rng.choice(n, size=n_cells, replace=False))].copy()

    for _ in range(KMEANS_ITERATIONS):
        assign = _assign(vectors, centroids)
        counts = np.bincount(assign, minlength=n_cells)
        for empty in np.flatnonzero(counts == 0):
            largest = int(np.argmax(counts))
            members = np.flatnonzero(assign == largest)
            dists = np.sum((vectors[members] - centroids[largest]) ** 2, axis=1)
            moved = members[int(np.argmax(dists))]
            assign[moved] = empty
            centroids[empty] = vectors[moved]
            counts[largest] -= 1
            counts[empty] += 1
        for c in range(n_cells):
            members = np.flatnonzero(assign == c)
            if len(members):
                centroids[c] = vectors[members].mean(axis=0)

    final_assign = _assign(vectors, centroids)
    return centroids, final_assign


def _assign(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin of ||x-c||^2 = ||c||^2 - 2 x.c (+ ||x||^2, constant per row)
    scores = np.sum(centroids**2, axis=1)[None, :] - 2.0 * (vectors @ centroids.T)
    return np.argmin(scores, axis=1).astype(np.int32)


def build_index(
    item_ids: list[str], vectors: np.ndarray, config: IndexConfig | None = None
) -> AnnIndex:
    config = config or IndexConfig()
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise AnnError("cannot build an index from an empty vector set")
    if len(item_ids) != vectors.shape[0]:
        raise AnnError(
            f"{len(item_ids)} ids for {vectors.shape[0]} vectors"
        )
    n_cells, n_probe = config.resolve(vectors.shape[0])
    centroids, assignments = _kmeans(vectors, n_cells, config.seed)
    logger.info(
        "built index: %d vectors, %d cells (probe default %d)",
        vectors.shape[0], n_cells, n_probe,
    )
    return AnnIndex(list(item_ids), vectors, centroids, assignments, config, n_cells, n_probe)


def query(
    index: AnnIndex, query_vector: np.ndarray, k: int, n_probe: int | None = None
) -> NeighborList:
    """Top-k by inner product among the n_probe cells nearest to the query."""
    if k < 1:
        raise AnnError(f"k must be >= 1, got {k}")
    q = np.asarray(query_vector, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise AnnError(
            f"query dimension {q.shape} does not match index ({index.dimension},)"
        )
    n_probe = index.n_probe if n_probe is None else n_probe
    if n_probe < 1:
        raise AnnError(f"n_probe must be >= 1, got {n_probe}")
    n_probe = min(n_probe, index.n_cells)

    cell_scores = index._centroid_sqnorms - 2.0 * (index.centroids @ q)
    probe_order = np.lexsort((np.arange(index.n_cells), cell_scores))[:n_probe]
    candidate_lists = [index.postings[c] for c in probe_order]
    candidates = (
        np.concatenate(candidate_lists) if candidate_lists else np.empty(0, dtype=np.int64)
    )
    if len(candidates) == 0:
        return []
    sims = index.vectors[candidates] @ q
    return _rank_by_similarity(index.item_ids[candidates], sims, k)


def recall_at_k(
    index: AnnIndex, queries: np.ndarray, k: int, n_probe: int | None = None
) -> float:
    """Mean over queries of |approximate top-k ∩ exact top-k| / k."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[0] == 0:
        raise AnnError("empty query set")
    total = 0.0
    for q in queries:
        approx = {sid for sid, _ in query(index, q, k, n_probe)}
        exact = {sid for sid, _ in exact_topk(index.item_ids, index.vectors, q, k)}
        total += len(approx & exact) / k
    return total / queries.shape[0]


def save_index(path: str | Path, index: AnnIndex, model_version: str | None = None) -> None:
    save_snapshot(
        path,
        SNAPSHOT_KIND,
        payload={
            "item_ids": [str(s) for s in index.item_ids],
            "config": {
                "n_cells": index.config.n_cells,
                "n_probe": index.config.n_probe,
                "seed": index.config.seed,
            },
            "n_cells": index.n_cells,
            "n_probe": index.n_probe,
        },
        arrays={
            "vectors": index.vectors,
            "centroids": index.centroids,
            "assignments": index.assignments,
        },
        model_version=model_version,
    )


def load_index(path: str | Path) -> tuple[AnnIndex, str | None]:
    payload, arrays, model_version = load_snapshot(path, expected_kind=SNAPSHOT_KIND)
    cfg = payload["config"]
    index = AnnIndex(
        item_ids=payload["item_ids"],
        vectors=arrays["vectors"],
        centroids=arrays["centroids"],
        assignments=arrays["assignments"],
        config=IndexConfig(
            n_cells=cfg["n_cells"], n_probe=cfg["n_probe"], seed=int(cfg["seed"])
        ),
        n_cells=int(payload["n_cells"]),
        n_probe=int(payload["n_probe"]),
    )
    return index, model_version
