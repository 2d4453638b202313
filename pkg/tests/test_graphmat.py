import networkx as nx
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from robust_sbm.errors import ConfigError, OracleTooLarge
from robust_sbm.graphmat import (
    SparseGraph,
    SymMatrix,
    bethe_hessian,
    lift_vector,
    m_matrix,
    m_operator,
    m_row_bound,
    nb_matrix,
    nb_power,
    nb_power_apply,
    nb_power_oracle,
    read_edgelist,
    truncate,
    write_edgelist,
)
from robust_sbm.model import Assignment


def from_nx(G) -> SparseGraph:
    G = nx.convert_node_labels_to_integers(G)
    return SparseGraph.from_edges(G.number_of_nodes(), G.edges())


def gnp(n, p, seed):
    return from_nx(nx.gnp_random_graph(n, p, seed=seed))


K3 = from_nx(nx.complete_graph(3))
P3 = from_nx(nx.path_graph(3))
STAR10 = from_nx(nx.star_graph(10))


def arc_transfer_walks(g: SparseGraph, ell: int) -> np.ndarray:
    """Nonbacktracking walk counts from powers of the dense arc operator (independent route)."""
    n = g.n
    if ell == 0:
        return np.eye(n)
    arcs = [(u, v) for u, v in g.edges.tolist()] + [(v, u) for u, v in g.edges.tolist()]
    idx = {a: i for i, a in enumerate(arcs)}
    m2 = len(arcs)
    Bd = np.zeros((m2, m2))
    for (u, v), i in idx.items():
        for (x, y), j in idx.items():
            if x == v and y != u:
                Bd[i, j] = 1
    P = np.linalg.matrix_power(Bd, ell - 1) if m2 else np.zeros((0, 0))
    S = np.zeros((n, m2))
    T = np.zeros((m2, n))
    for (u, v), i in idx.items():
        S[u, i] = 1
        T[i, v] = 1
    return S @ P @ T if m2 else np.zeros((n, n))


# ---------------------------------------------------------------- SparseGraph


def test_graph_basic():
    g = SparseGraph.from_edges(4, [(2, 1), (0, 3)])
    assert g.edges.tolist() == [[0, 3], [1, 2]]
    assert g.degrees.tolist() == [1, 1, 1, 1]
    assert g.has_edge(1, 2) and g.has_edge(2, 1) and not g.has_edge(0, 1)


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 5)]])
def test_graph_rejects(edges):
    with pytest.raises(ConfigError):
        SparseGraph.from_edges(3, edges)


def test_graph_lenient_drops_loops_and_duplicates():
    g = SparseGraph.from_edges(3, [(0, 0), (0, 1), (1, 0)], strict=False)
    assert g.edges.tolist() == [[0, 1]]


def test_adjacency_matches_networkx():
    G = nx.gnp_random_graph(40, 0.1, seed=3)
    g = from_nx(G)
    np.testing.assert_array_equal(g.adjacency().toarray(), nx.to_numpy_array(G, nodelist=range(40)))


def test_edgelist_round_trip(tmp_path):
    g = gnp(30, 0.2, 1)
    write_edgelist(g, tmp_path / "g.txt")
    assert read_edgelist(tmp_path / "g.txt") == g
    lines = (tmp_path / "g.txt").read_text().splitlines()
    assert lines[0] == f"30 {g.m}"


@pytest.mark.parametrize("text", ["", "3\n", "3 2\n0 1\n", "3 1\n0 1 2\n", "3 1\n1 1\n"])
def test_edgelist_rejects(tmp_path, text):
    (tmp_path / "g.txt").write_text(text)
    with pytest.raises(ConfigError):
        read_edgelist(tmp_path / "g.txt")


# ---------------------------------------------------------------- truncation


def test_truncate_star():
    tr = truncate(STAR10, 5)
    assert tr.graph_B.m == 0
    assert tr.Dbar[0] == 0
    assert np.all(tr.Dbar[1:] == 1)
    assert tr.truncated.tolist() == [0]


def test_truncate_identity_when_bounded():
    g = gnp(50, 0.05, 2)
    B = int(g.degrees.max())
    tr = truncate(g, B)
    assert tr.graph_B == g
    np.testing.assert_array_equal(tr.Dbar, g.degrees)
    assert tr.affected.size == 0


def test_truncate_path():
    tr = truncate(P3, 1)
    assert tr.graph_B.m == 0
    assert tr.Dbar.tolist() == [1, 0, 1]


def test_truncate_post_mode():
    tr = truncate(STAR10, 5, dbar_mode="post")
    assert np.all(tr.Dbar == 0)


def test_truncate_affected_ball():
    # a pendant hub on a long path: only the hub is truncated, the ball has radius 2*ell + 1
    G = nx.path_graph(12)
    G.add_edges_from((0, v) for v in range(12, 16))
    tr = truncate(from_nx(G), 3, ell=1)
    assert tr.truncated.tolist() == [0]
    assert set(tr.affected.tolist()) == {0, 1, 2, 3} | set(range(12, 16))
    tr0 = truncate(from_nx(nx.star_graph(4)), 3, ell=0)
    assert set(tr0.affected.tolist()) == set(range(5))


def test_truncate_rejects():
    with pytest.raises(ConfigError):
        truncate(K3, 0)
    with pytest.raises(ConfigError):
        truncate(K3, 2, dbar_mode="mid")


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 40), st.floats(0.02, 0.4), st.integers(1, 8), st.integers(0, 10**6))
def test_truncate_properties(n, p, B, s):
    g = gnp(n, p, s)
    tr = truncate(g, B)
    assert tr.graph_B.degrees.max(initial=0) <= B
    assert np.array_equal(tr.Dbar == 0, (g.degrees > B) | (g.degrees == 0))
    # graph idempotence
    assert truncate(tr.graph_B, B).graph_B == tr.graph_B
    # exactly the edges with both ends of degree <= B
    keep = {(u, v) for u, v in g.edges.tolist() if g.degrees[u] <= B and g.degrees[v] <= B}
    assert tr.graph_B.edge_set() == keep


# ---------------------------------------------------------------- Bethe Hessian


def test_bethe_k3_t1_is_laplacian():
    H = bethe_hessian(K3, 1.0).to_dense()
    np.testing.assert_allclose(H, nx.laplacian_matrix(nx.complete_graph(3)).toarray())
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [0, 3, 3], atol=1e-12)


def test_bethe_t0_is_identity():
    np.testing.assert_array_equal(bethe_hessian(gnp(20, 0.3, 0), 0.0).to_dense(), np.eye(20))


def test_bethe_k3_half():
    H = bethe_hessian(K3, 0.5).to_dense()
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [0.25, 1.75, 1.75], atol=1e-12)


def test_bethe_truncated_uses_dbar():
    tr = truncate(STAR10, 5)
    H = bethe_hessian(tr, 0.5, mode="truncated").to_dense()
    # center: Dbar 0 -> 1 - t^2; leaves: Dbar 1 -> 1; no edges survive
    assert H[0, 0] == pytest.approx(0.75)
    np.testing.assert_allclose(np.diag(H)[1:], 1.0)
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0


def test_bethe_dense_formula():
    g = gnp(30, 0.2, 4)
    A = g.adjacency().toarray()
    D = np.diag(A.sum(1))
    t = -0.37
    np.testing.assert_allclose(bethe_hessian(g, t).to_dense(), (D - np.eye(30)) * t * t - A * t + np.eye(30))


# ---------------------------------------------------------------- nonbacktracking operator


def test_nb_k3_determinant():
    Bm = nb_matrix(K3).to_dense()
    assert Bm.shape == (6, 6)
    for t in (0.1, 0.5, -0.7):
        assert np.linalg.det(np.eye(6) - t * Bm) == pytest.approx((1 - t**3) ** 2, abs=1e-12)


def test_nb_path_is_nilpotent():
    Bm = nb_matrix(P3).to_dense()
    assert np.all(Bm.sum(axis=1) <= 1)
    assert not np.linalg.matrix_power(Bm, Bm.shape[0]).any()
    assert np.linalg.det(np.eye(4) - 0.6 * Bm) == pytest.approx(1.0)


def test_nb_single_edge():
    Bm = nb_matrix(SparseGraph.from_edges(2, [(0, 1)])).to_dense()
    np.testing.assert_array_equal(Bm, np.zeros((2, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 25), st.floats(0.05, 0.5), st.integers(0, 10**6))
def test_nb_definition(n, p, s):
    g = gnp(n, p, s)
    nb = nb_matrix(g)
    Bm = nb.to_dense()
    for e in range(nb.size):
        u, v = nb.tail[e], nb.head[e]
        expected = [f for f in range(nb.size) if nb.tail[f] == v and nb.head[f] != u]
        assert np.flatnonzero(Bm[e]).tolist() == sorted(expected)
        assert Bm[e].sum() == max(g.degrees[v] - 1, 0)


# ---------------------------------------------------------------- nonbacktracking powers


def test_nb_power_path():
    np.testing.assert_array_equal(nb_power(P3, 2).to_dense(), [[0, 0, 1], [0, 0, 0], [1, 0, 0]])


def test_nb_power_low_orders():
    g = gnp(20, 0.2, 7)
    np.testing.assert_array_equal(nb_power(g, 0).to_dense(), np.eye(20))
    np.testing.assert_array_equal(nb_power(g, 1).to_dense(), g.adjacency().toarray())


def test_nb_power_triangle():
    W = nb_power(K3, 3).to_dense()
    np.testing.assert_array_equal(np.diag(W), [2, 2, 2])
    np.testing.assert_array_equal(W, nb_power_oracle(K3, 3).to_dense())


def test_oracle_cycle():
    C4 = from_nx(nx.cycle_graph(4))
    W = nb_power_oracle(C4, 4).to_dense()
    np.testing.assert_array_equal(np.diag(W), [2, 2, 2, 2])
    np.testing.assert_array_equal(nb_power_oracle(C4, 1).to_dense(), C4.adjacency().toarray())


def test_oracle_guard():
    with pytest.raises(OracleTooLarge):
        nb_power_oracle(gnp(60, 0.05, 0), 2)
    with pytest.raises(OracleTooLarge):
        nb_power_oracle(K3, 7)


def test_nb_power_matches_oracle_100_graphs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 31))
        g = gnp(n, float(rng.uniform(0.05, 0.5)), int(rng.integers(10**6)))
        ell = int(rng.integers(0, 5))
        np.testing.assert_array_equal(nb_power(g, ell).to_dense(), nb_power_oracle(g, ell).to_dense())


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 18), st.floats(0.05, 0.6), st.integers(0, 6), st.integers(0, 10**6))
def test_nb_power_matches_arc_transfer(n, p, ell, s):
    g = gnp(n, p, s)
    np.testing.assert_allclose(nb_power(g, ell).to_dense(), arc_transfer_walks(g, ell), atol=1e-9)


def test_nb_power_dense_switch():
    # a dense-ish graph fills in and exercises the dense branch of the recurrence
    g = gnp(60, 0.3, 5)
    P = nb_power(g, 4)
    assert P.is_dense
    np.testing.assert_allclose(P.to_dense(), arc_transfer_walks(g, 4))


def test_nb_power_apply_matches_explicit():
    g = gnp(80, 0.06, 9)
    A = g.adjacency()
    X = np.random.default_rng(0).standard_normal((80, 3))
    for ell in range(0, 7):
        ref = nb_power(g, ell).to_dense() @ X
        np.testing.assert_allclose(nb_power_apply(A, g.degrees.astype(float), X, ell), ref, atol=1e-8)
        np.testing.assert_allclose(nb_power_apply(A, g.degrees.astype(float), X[:, 0], ell), ref[:, 0], atol=1e-8)


def test_nb_power_exactly_symmetric():
    P = nb_power(gnp(50, 0.1, 1), 5)
    assert P.is_exactly_symmetric()


# ---------------------------------------------------------------- M matrix


def test_m_matrix_ell0_is_hbar():
    tr = truncate(gnp(30, 0.15, 2), 4)
    np.testing.assert_allclose(m_matrix(tr, 0, 0.4).to_dense(), bethe_hessian(tr, 0.4, mode="truncated").to_dense())


def test_m_matrix_empty_graph():
    # Dbar = 0 everywhere, so Hbar = I + t^2 (0 - I) = (1 - t^2) I
    tr = truncate(SparseGraph.from_edges(5, []), 3)
    np.testing.assert_allclose(m_matrix(tr, 0, 0.4).to_dense(), (1 - 0.16) * np.eye(5))
    np.testing.assert_array_equal(m_matrix(tr, 2, 0.4).to_dense(), np.zeros((5, 5)))


def test_m_matrix_matches_dense_product():
    g = gnp(40, 0.12, 3)
    tr = truncate(g, 5)
    Al = arc_transfer_walks(tr.graph_B, 3)
    H = (np.eye(40) - 0.45 * tr.graph_B.adjacency().toarray() + 0.45**2 * np.diag(tr.Dbar - 1))
    np.testing.assert_allclose(m_matrix(tr, 3, 0.45).to_dense(), Al @ H @ Al, atol=1e-9)


def test_m_operator_matches_explicit():
    g = gnp(120, 0.04, 8)
    tr = truncate(g, 5, ell=3)
    Mx = m_matrix(tr, 3, -0.3)
    op = m_operator(tr, 3, -0.3)
    np.testing.assert_allclose(op.to_dense(), Mx.to_dense(), atol=1e-8)
    z = op.zero_rows_cols([3, 7])
    ref = Mx.zero_rows_cols([3, 7]).to_dense()
    np.testing.assert_allclose(z.to_dense(), ref, atol=1e-8)
    assert not ref[3].any() and not ref[:, 7].any()


def test_m_row_bound_random_graphs():
    rng = np.random.default_rng(5)
    for _ in range(50):
        g = gnp(int(rng.integers(10, 60)), float(rng.uniform(0.05, 0.3)), int(rng.integers(10**6)))
        tr = truncate(g, 5)
        t = float(rng.uniform(-1.5, 1.5))
        M = m_matrix(tr, 1, t)
        assert M.row_l1.max(initial=0) <= 5**5 * max(1, t * t, abs(t))
        assert M.meta["row_l1_bound"] == m_row_bound(5, 1, t)


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 40), st.floats(0.05, 0.5), st.integers(2, 6), st.integers(0, 3), st.floats(-1.2, 1.2),
       st.integers(0, 10**6))
def test_m_row_bound_property(n, p, B, ell, t, s):
    M = m_matrix(truncate(gnp(n, p, s), B), ell, t)
    assert M.is_exactly_symmetric()
    assert M.row_l1.max(initial=0) <= m_row_bound(B, ell, t) * (1 + 1e-12)


def test_row_bound_needs_b_at_least_two():
    # one edge, B = 1: A Hbar A swaps the rows of Hbar, whose l1 norm is 1 + |t| > 1^5 * max(1, t^2, |t|)
    tr = truncate(SparseGraph.from_edges(2, [(0, 1)]), 1)
    M = m_matrix(tr, 1, 0.5)
    assert M.row_l1.max() > m_row_bound(1, 1, 0.5)


# ---------------------------------------------------------------- SymMatrix and lifts


def test_symmatrix_row_l1_and_zeroing():
    X = np.array([[1.0, -2, 0], [-2, 3, 4], [0, 4, -5]])
    for store in (X, sp.csr_matrix(X)):
        S = SymMatrix(store)
        np.testing.assert_allclose(S.row_l1, [3, 9, 9])
        Z = S.zero_rows_cols(1)
        np.testing.assert_array_equal(Z.to_dense(), [[1, 0, 0], [0, 0, 0], [0, 0, -5]])
        np.testing.assert_allclose(Z.row_l1, [1, 0, 5])


def test_lift_vector():
    lab = Assignment(np.array([0, 1, 1, 2, 0]), 3)
    np.testing.assert_array_equal(lift_vector(np.eye(3)[1], lab), lab.indicator(1))
    np.testing.assert_array_equal(lift_vector(np.ones(3), lab), np.ones(5))
    f, h = np.array([1.0, -2, 3]), np.array([0.5, 4, -1])
    assert lift_vector(f, lab) @ lift_vector(h, lab) == pytest.approx(np.sum(lab.sizes() * f * h))


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_lift_quadratic_form_tracks_polynomial(ell):
    """At short walk lengths the quadratic form of a true community lift is about n p(lambda_2)."""
    from robust_sbm.harness import seed_streams
    from robust_sbm.model import analyze_transition, eval_p, sample_sbm, symmetric_model

    model = symmetric_model(2, 0.6, 4.0)
    psi = analyze_transition(model).Psi[:, 0]
    n, t = 5000, 0.45
    qs = []
    for s in range(5):
        g, lab = sample_sbm(model, n, seed_streams(s)["sample"])
        x = lift_vector(psi, lab)
        qs.append(x @ m_operator(truncate(g, 10**6, ell), ell, t).matvec(x) / n)
    p = eval_p(0.6, 4.0, ell, t)
    assert p / 3 <= np.mean(qs) <= 3 * p
