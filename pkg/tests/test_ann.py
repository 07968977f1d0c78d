import numpy as np
import pytest

from moodradio.ann import (
    AnnError,
    IndexConfig,
    build_index,
    exact_topk,
    load_index,
    query,
    recall_at_k,
    save_index,
)


def brute_force_topk(item_ids, vectors, q, k):
    """Independent oracle: plain double loop, no numpy ranking tricks."""
    sims = []
    for i in range(len(item_ids)):
        s = 0.0
        for j in range(vectors.shape[1]):
            s += float(vectors[i, j]) * float(q[j])
        sims.append((-s, str(item_ids[i])))
    sims.sort()
    return [(item_id, -neg) for neg, item_id in sims[:k]]


def make_items(n=300, dim=8, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    ids = np.array([f"s{i:04d}" for i in range(n)])
    vectors = rng.normal(size=(n, dim))
    return ids, vectors


class TestExactTopK:
    def test_matches_brute_force(self):
        ids, vectors = make_items(80, 6, seed=3)
        rng = np.random.Generator(np.random.PCG64(4))
        for _ in range(5):
            q = rng.normal(size=6)
            got = exact_topk(ids, vectors, q, k=7)
            want = brute_force_topk(ids, vectors, q, k=7)
            assert [g[0] for g in got] == [w[0] for w in want]
            for (_, gs), (_, ws) in zip(got, want):
                assert gs == pytest.approx(ws, rel=1e-12)

    def test_similarity_ties_break_by_ascending_id(self):
        ids = np.array(["z", "m", "a"])
        vectors = np.ones((3, 4))  # all identical similarity
        got = exact_topk(ids, vectors, np.ones(4), k=3)
        assert [g[0] for g in got] == ["a", "m", "z"]

    def test_k_larger_than_corpus(self):
        ids, vectors = make_items(5, 3, seed=1)
        assert len(exact_topk(ids, vectors, np.ones(3), k=50)) == 5


class TestBuildIndex:
    def test_default_cells_is_sqrt(self):
        ids, vectors = make_items(100, 4)
        index = build_index(ids, vectors, IndexConfig(seed=0))
        assert index.n_cells == 10

    def test_every_item_assigned_no_empty_cells(self):
        ids, vectors = make_items(200, 5, seed=2)
        index = build_index(ids, vectors, IndexConfig(n_cells=12, seed=0))
        assert sorted(np.concatenate(index.postings).tolist()) == list(range(200))
        assert all(len(p) > 0 for p in index.postings)

    def test_more_cells_than_items_clamped(self):
        ids, vectors = make_items(10, 4)
        index = build_index(ids, vectors, IndexConfig(n_cells=11, seed=0))
        assert index.n_cells == 10

    def test_build_deterministic(self):
        ids, vectors = make_items(150, 6, seed=5)
        a = build_index(ids, vectors, IndexConfig(n_cells=9, seed=4))
        b = build_index(ids, vectors, IndexConfig(n_cells=9, seed=4))
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.assignments, b.assignments)


class TestQuery:
    def test_full_probe_equals_exact(self):
        ids, vectors = make_items(250, 8, seed=6)
        index = build_index(ids, vectors, IndexConfig(n_cells=14, seed=0))
        rng = np.random.Generator(np.random.PCG64(7))
        for _ in range(10):
            q = rng.normal(size=8)
            approx = query(index, q, k=20, n_probe=index.n_cells)
            exact = exact_topk(ids, vectors, q, k=20)
            assert approx == exact

    def test_self_query_finds_itself_first(self):
        # unit vectors so the inner product is maximized by the item itself
        ids, vectors = make_items(300, 8, seed=8)
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        index = build_index(ids, vectors, IndexConfig(n_cells=17, seed=0))
        for i in (0, 57, 299):
            got = query(index, vectors[i], k=1, n_probe=index.n_cells)
            assert got[0][0] == ids[i]

    def test_recall_weakly_increases_with_probes(self):
        ids, vectors = make_items(500, 8, seed=9)
        index = build_index(ids, vectors, IndexConfig(n_cells=22, seed=0))
        rng = np.random.Generator(np.random.PCG64(10))
        queries = rng.normal(size=(20, 8))
        recalls = [recall_at_k(index, queries, k=10, n_probe=p) for p in (1, 4, 10, 22)]
        assert all(b >= a for a, b in zip(recalls, recalls[1:]))
        assert recalls[-1] == 1.0

    def test_results_sorted_descending_with_id_tiebreak(self):
        ids = np.array(["s3", "s1", "s2", "s0"])
        vectors = np.array([[1.0, 0.0], [1.0, 0.0], [0.5, 0.0], [2.0, 0.0]])
        index = build_index(ids, vectors, IndexConfig(n_cells=2, seed=0))
        got = query(index, np.array([1.0, 0.0]), k=4, n_probe=2)
        assert [g[0] for g in got] == ["s0", "s1", "s3", "s2"]

    def test_dimension_mismatch_rejected(self):
        ids, vectors = make_items(50, 4)
        index = build_index(ids, vectors, IndexConfig(seed=0))
        with pytest.raises(AnnError):
            query(index, np.ones(5), k=3)


class TestRecall:
    def test_hand_computed_recall(self):
        # two tight clusters; probing one cell of two finds exactly the local half
        vectors = np.vstack([
            np.full((5, 2), 10.0) + np.arange(5)[:, None] * 0.01,
            np.full((5, 2), -10.0) - np.arange(5)[:, None] * 0.01,
        ])
        ids = np.array([f"s{i}" for i in range(10)])
        index = build_index(ids, vectors, IndexConfig(n_cells=2, seed=0))
        # k=10 wants everything, but one probe sees only 5 of 10
        r = recall_at_k(index, np.array([[10.0, 10.0]]), k=10, n_probe=1)
        assert r == pytest.approx(0.5)
        assert recall_at_k(index, np.array([[10.0, 10.0]]), k=10, n_probe=2) == 1.0


class TestPersistence:
    def test_round_trip_preserves_queries(self, tmp_path):
        ids, vectors = make_items(220, 6, seed=11)
        index = build_index(ids, vectors, IndexConfig(n_cells=13, seed=1))
        save_index(tmp_path / "i.snap", index, model_version="v9")
        loaded, version = load_index(tmp_path / "i.snap")
        assert version == "v9"
        rng = np.random.Generator(np.random.PCG64(12))
        for _ in range(5):
            q = rng.normal(size=6)
            assert query(loaded, q, k=15) == query(index, q, k=15)
