import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph
from correctsmooth.errors import ValidationError
from correctsmooth.graph import (OperatorKind, build_graph, dense_operator,
                                 make_operator, read_edge_list, spmm,
                                 write_edge_list)

SQRT_HALF = 0.7071067811865475  # 1/sqrt(2), path-graph symmetric weight


def test_build_graph_canonicalizes_duplicates_and_directions():
    edges = np.array([[0, 1], [1, 0], [0, 1], [2, 1], [2, 2]])
    g = build_graph(edges, 3)
    assert g.num_edges == 2  # {0,1} and {1,2}; self loop dropped
    assert list(g.degrees) == [1, 2, 1]
    assert list(g.neighbors(1)) == [0, 2]


def test_build_graph_rejects_out_of_range_ids():
    with pytest.raises(ValidationError, match="3"):
        build_graph(np.array([[0, 3]]), 3)
    with pytest.raises(ValidationError, match="-1"):
        build_graph(np.array([[-1, 0]]), 3)


def test_empty_graph_and_isolated_nodes():
    g = build_graph(np.empty((0, 2), dtype=np.int64), 4)
    assert g.num_edges == 0
    assert g.component_count() == 4
    op = make_operator(g, OperatorKind.SYM_NORM)
    out = spmm(op, np.ones((4, 2)))
    assert np.all(out == 0.0)  # degree-0 rows produce exact zeros


def test_path3_operator_entries(path3):
    """Frozen values for the 0-1-2 path: deg = (1, 2, 1)."""
    sym = dense_operator(make_operator(path3, OperatorKind.SYM_NORM))
    assert sym[0, 1] == pytest.approx(SQRT_HALF, abs=1e-15)
    assert sym[1, 0] == pytest.approx(SQRT_HALF, abs=1e-15)
    assert sym[0, 2] == 0.0
    row = dense_operator(make_operator(path3, OperatorKind.ROW_STOCH))
    assert np.allclose(row[1], [0.5, 0.0, 0.5])
    assert np.allclose(row[0], [0.0, 1.0, 0.0])


def test_sym_norm_matches_dense_formula(rng):
    """D^{-1/2} A D^{-1/2}, built densely, is the oracle."""
    for _ in range(20):
        g = random_graph(rng, n_max=40)
        A = g.adjacency().toarray()
        deg = A.sum(axis=1)
        scale = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
        want = scale[:, None] * A * scale[None, :]
        got = dense_operator(make_operator(g, OperatorKind.SYM_NORM))
        assert np.allclose(got, want, atol=1e-12)


def test_row_stoch_rows_sum_to_one(rng):
    for _ in range(10):
        g = random_graph(rng, n_max=40)
        P = dense_operator(make_operator(g, OperatorKind.ROW_STOCH))
        sums = P.sum(axis=1)
        connected = np.asarray(g.degrees) > 0
        assert np.allclose(sums[connected], 1.0, atol=1e-12)
        assert np.all(sums[~connected] == 0.0)


def test_spmm_matches_dense_multiply(rng):
    for _ in range(10):
        g = random_graph(rng, n_max=30)
        for kind in OperatorKind:
            op = make_operator(g, kind)
            M = rng.standard_normal((g.n, 3))
            assert np.allclose(spmm(op, M), dense_operator(op) @ M, atol=1e-12)


def test_spmm_rejects_wrong_row_count(path3):
    op = make_operator(path3, OperatorKind.SYM_NORM)
    with pytest.raises(ValidationError):
        spmm(op, np.zeros((4, 2)))


def test_edge_list_file_round_trip(tmp_path, rng):
    g = random_graph(rng, n_min=5, n_max=20)
    path = tmp_path / "edges.txt"
    write_edge_list(g, path)
    edges, n_min = read_edge_list(path)
    g2 = build_graph(edges, g.n)
    assert g2.content_hash() == g.content_hash()
    assert n_min <= g.n


def test_read_edge_list_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 1\n# fine\n2\n")
    with pytest.raises(ValidationError, match="3"):
        read_edge_list(path)
    path.write_text("0 1\n1 x\n")
    with pytest.raises(ValidationError, match="2"):
        read_edge_list(path)


def test_content_hash_is_order_insensitive():
    a = build_graph(np.array([[0, 1], [1, 2], [2, 3]]), 4)
    b = build_graph(np.array([[2, 3], [2, 1], [1, 0]]), 4)
    c = build_graph(np.array([[0, 1], [1, 2], [0, 3]]), 4)
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != c.content_hash()


def test_component_count(two_triangles, k3):
    assert two_triangles.component_count() == 2
    assert k3.component_count() == 1


def test_edge_array_lists_each_edge_once(rng):
    g = random_graph(rng, n_max=30)
    arr = g.edge_array()
    assert arr.shape == (g.num_edges, 2)
    assert np.all(arr[:, 0] < arr[:, 1])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 19), st.integers(0, 19)), max_size=80),
       st.integers(20, 25))
def test_csr_invariants_hold_for_arbitrary_edge_lists(pairs, n):
    g = build_graph(np.array(pairs, dtype=np.int64).reshape(-1, 2), n)
    offs, cols = np.asarray(g.row_offsets), np.asarray(g.col_indices)
    assert offs[0] == 0 and offs[-1] == cols.size
    assert np.all(np.diff(offs) >= 0)
    for u in range(n):
        nbrs = cols[offs[u]:offs[u + 1]]
        assert np.all(np.diff(nbrs) > 0)       # sorted, no duplicates
        assert u not in nbrs                   # no self loops
        for v in nbrs:                         # symmetry
            assert u in cols[offs[v]:offs[v + 1]]
    assert np.all(np.asarray(g.degrees) == np.diff(offs))
