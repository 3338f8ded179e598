import numpy as np
import numpy.testing as npt
import pytest

from tgcmc import graph
from tgcmc.graph import SequenceMode


def edges_of(*triples):
    return np.array(triples, dtype=np.int64).reshape(-1, 3)


class TestChunkEdges:
    def test_exact_division(self):
        edges = np.arange(300).reshape(100, 3)
        chunks = graph.chunk_edges(edges, 10)
        assert [c.shape[0] for c in chunks] == [10] * 10

    def test_uneven_division(self):
        edges = np.arange(103 * 3).reshape(103, 3)
        chunks = graph.chunk_edges(edges, 10)
        assert [c.shape[0] for c in chunks] == [11, 11, 11, 10, 10, 10, 10, 10, 10, 10]

    def test_too_few_edges(self):
        with pytest.raises(ValueError):
            graph.chunk_edges(np.arange(27).reshape(9, 3), 10)

    def test_chunks_are_contiguous_and_complete(self):
        rng = np.random.default_rng(0)
        for n, t in [(17, 4), (40, 7), (100, 9)]:
            edges = rng.integers(0, 5, size=(n, 3))
            chunks = graph.chunk_edges(edges, t)
            npt.assert_array_equal(np.concatenate(chunks), edges)
            sizes = [c.shape[0] for c in chunks]
            assert max(sizes) - min(sizes) <= 1
            assert sorted(sizes, reverse=True) == sizes  # larger chunks first


class TestBuildSequence:
    def test_incremental_prefix_union(self):
        chunks = [edges_of((0, 0, 0)), edges_of((1, 1, 1)), edges_of((2, 2, 2))]
        seq = graph.build_sequence(chunks, SequenceMode.INCREMENTAL)
        assert [s.shape[0] for s in seq.steps] == [1, 2, 3]
        npt.assert_array_equal(seq.steps[1], np.concatenate(chunks[:2]))
        npt.assert_array_equal(seq.final_step, np.concatenate(chunks))

    def test_disjoint_keeps_chunks(self):
        chunks = [edges_of((0, 0, 0)), edges_of((1, 1, 1))]
        seq = graph.build_sequence(chunks, SequenceMode.DISJOINT)
        assert seq.t == 2
        npt.assert_array_equal(seq.steps[0], chunks[0])
        npt.assert_array_equal(seq.steps[1], chunks[1])

    def test_static_single_step(self):
        chunk = edges_of((0, 0, 0), (1, 1, 1))
        seq = graph.build_sequence([chunk], SequenceMode.STATIC)
        assert seq.t == 1
        npt.assert_array_equal(seq.final_step, chunk)

    def test_static_rejects_multiple_chunks(self):
        with pytest.raises(ValueError):
            graph.build_sequence([edges_of((0, 0, 0)), edges_of((1, 1, 1))],
                                 SequenceMode.STATIC)

    def test_chunk_sizes_always_sum_to_total(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            n = int(rng.integers(5, 60))
            t = int(rng.integers(1, n + 1))
            edges = rng.integers(0, 5, size=(n, 3))
            seq = graph.sequence_from_dataset(edges, SequenceMode.DISJOINT, t)
            assert sum(graph.step_edge_counts(seq)) == n


class TestBuildAdjacency:
    def test_single_edge_left_constant(self):
        adj = graph.build_adjacency(edges_of((0, 0, 4)), 1, 1, 5, "left")
        assert adj.norm_constant(0, 0) == 1.0

    def test_d_regular_schemes_coincide(self):
        # 2-regular bipartite: both left and symmetric constants equal 2
        edges = edges_of((0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0))
        left = graph.build_adjacency(edges, 2, 2, 1, "left")
        sym = graph.build_adjacency(edges, 2, 2, 1, "symmetric")
        for u, i in [(0, 0), (0, 1), (1, 0), (1, 1)]:
            assert left.norm_constant(u, i) == sym.norm_constant(u, i) == 2.0

    def test_symmetric_mixed_degrees(self):
        # user 0 rated two items at two levels (deg 2); item 1 has deg 1
        edges = edges_of((0, 0, 4), (0, 1, 2))
        adj = graph.build_adjacency(edges, 1, 2, 5, "symmetric")
        brute_user_deg = sum(1 for e in edges if e[0] == 0)
        brute_item_deg = sum(1 for e in edges if e[1] == 1)
        expected = np.sqrt(brute_user_deg * brute_item_deg)
        npt.assert_allclose(adj.norm_constant(0, 1), expected)
        npt.assert_allclose(adj.norm_constant(0, 1), np.sqrt(2.0))

    def test_duplicate_edge_rejected(self):
        with pytest.raises(ValueError):
            graph.build_adjacency(edges_of((0, 0, 1), (0, 0, 3)), 1, 1, 5, "left")

    def test_neighbor_lists_mirror_edges(self):
        edges = edges_of((0, 1, 2), (1, 0, 2), (0, 0, 4))
        adj = graph.build_adjacency(edges, 2, 2, 5, "left")
        npt.assert_array_equal(sorted(adj.user_neighbors(2, 0)), [1])
        npt.assert_array_equal(sorted(adj.item_neighbors(2, 1)), [0])
        npt.assert_array_equal(sorted(adj.user_neighbors(4, 0)), [0])
        assert adj.user_neighbors(0, 0).size == 0

    def test_involution_rebuilds_edges(self):
        rng = np.random.default_rng(2)
        n_u, n_v = 6, 7
        pairs = rng.permutation(n_u * n_v)[:20]
        edges = np.stack([pairs // n_v, pairs % n_v,
                          rng.integers(0, 5, size=20)], axis=1)
        adj = graph.build_adjacency(edges, n_u, n_v, 5, "symmetric")
        assert adj.rebuild_edge_set() == {(int(a), int(b), int(c)) for a, b, c in edges}

    def test_degrees_counted_across_levels(self):
        edges = edges_of((0, 0, 0), (0, 1, 4))
        adj = graph.build_adjacency(edges, 1, 2, 5, "left")
        assert adj.user_degree[0] == 2.0

    def test_out_of_range_indices(self):
        with pytest.raises(IndexError):
            graph.build_adjacency(edges_of((5, 0, 0)), 2, 2, 5, "left")

    def test_all_constants_positive(self):
        rng = np.random.default_rng(3)
        pairs = rng.permutation(30)[:12]
        edges = np.stack([pairs // 6, pairs % 6, rng.integers(0, 5, 12)], axis=1)
        adj = graph.build_adjacency(edges, 5, 6, 5, "symmetric")
        for u, i, _ in edges:
            assert adj.norm_constant(int(u), int(i)) > 0


def test_incremental_final_adjacency_equals_static():
    rng = np.random.default_rng(4)
    pairs = rng.permutation(12 * 9)[:40]
    edges = np.stack([pairs // 9, pairs % 9, rng.integers(0, 5, 40)], axis=1)

    inc = graph.sequence_from_dataset(edges, SequenceMode.INCREMENTAL, 5)
    static = graph.sequence_from_dataset(edges, SequenceMode.STATIC, 1)
    adj_inc = graph.build_adjacency(inc.final_step, 12, 9, 5, "left")
    adj_static = graph.build_adjacency(static.final_step, 12, 9, 5, "left")

    npt.assert_array_equal(np.sort(adj_inc.edges, axis=0), np.sort(adj_static.edges, axis=0))
    npt.assert_array_equal(adj_inc.user_degree, adj_static.user_degree)
    npt.assert_array_equal(adj_inc.item_degree, adj_static.item_degree)
    for r in range(5):
        a, b = adj_inc.user_aggregators[r], adj_static.user_aggregators[r]
        assert (a._fwd != b._fwd).nnz == 0


def test_disjoint_steps_partition_edges():
    rng = np.random.default_rng(5)
    pairs = rng.permutation(20 * 20)[:83]
    edges = np.stack([pairs // 20, pairs % 20, rng.integers(0, 5, 83)], axis=1)
    seq = graph.sequence_from_dataset(edges, SequenceMode.DISJOINT, 10)
    sizes = graph.step_edge_counts(seq)
    assert sum(sizes) == 83
    assert max(sizes) - min(sizes) <= 1
    seen = {tuple(e) for s in seq.steps for e in s}
    assert seen == {tuple(e) for e in edges}
