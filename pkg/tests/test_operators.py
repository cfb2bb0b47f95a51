import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from signgnn.graph import Graph, GraphError, check_canonical
from signgnn.operators import (OperatorKind, OperatorSpec, build_operator, directed_normalized,
                               gcn_normalized, norm_laplacian, ppr_diffuse, ppr_matrix_dense,
                               row_normalized, sign_specs, sym_normalized, triangle_counts,
                               triangle_operator)

from conftest import (brute_force_triangles, complete_graph, dense_gcn, dense_sym_norm, path_graph,
                      random_graph, star_graph)

ISOLATED = Graph.from_dense([[0.0]])


def connected_random_graph(n, p, seed):
    g = random_graph(n, p, seed)
    w = g.adjacency.toarray()
    w[np.arange(n - 1), np.arange(1, n)] = 1  # a spanning path keeps it connected
    w[np.arange(1, n), np.arange(n - 1)] = 1
    return Graph.from_dense(w)


class TestGcnNormalized:
    def test_isolated(self):
        np.testing.assert_array_equal(gcn_normalized(ISOLATED).toarray(), [[1.0]])

    def test_p2(self):
        np.testing.assert_allclose(gcn_normalized(path_graph(2)).toarray(), np.full((2, 2), 0.5),
                                   atol=1e-15)

    def test_k3(self):
        np.testing.assert_allclose(gcn_normalized(complete_graph(3)).toarray(), np.full((3, 3), 1 / 3),
                                   atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_spectral_radius_at_most_one(self, seed):
        g = random_graph(80, 0.08, seed, weighted=True)
        a = gcn_normalized(g).toarray()
        np.testing.assert_allclose(a, dense_gcn(g.adjacency.toarray()), atol=1e-14)
        assert np.max(np.abs(np.linalg.eigvalsh(a))) <= 1 + 1e-12

    def test_rejects_directed(self):
        with pytest.raises(GraphError):
            gcn_normalized(Graph.from_dense([[0, 1], [0, 0]], directed=True))


class TestSymNormalized:
    def test_p2(self):
        np.testing.assert_array_equal(sym_normalized(path_graph(2)).toarray(), [[0, 1], [1, 0]])

    def test_isolated(self):
        np.testing.assert_array_equal(sym_normalized(ISOLATED).toarray(), [[0]])

    def test_star(self):
        a = sym_normalized(star_graph(3)).toarray()
        np.testing.assert_allclose(a[0, 1:], 1 / np.sqrt(3), rtol=1e-15)
        np.testing.assert_allclose(a[1:, 0], 1 / np.sqrt(3), rtol=1e-15)
        assert (a != a.T).sum() == 0


class TestRowNormalized:
    def test_examples(self):
        np.testing.assert_array_equal(row_normalized(sp.csr_matrix([[2.0, 2], [0, 0]])).toarray(),
                                      [[0.5, 0.5], [0, 0]])
        np.testing.assert_array_equal(row_normalized(sp.csr_matrix([[1.0, 3], [4, 0]])).toarray(),
                                      [[0.25, 0.75], [1, 0]])

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            row_normalized(sp.csr_matrix([[1.0, -1], [0, 1]]))

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 30), density=st.floats(0, 1), seed=st.integers(0, 2**31))
    def test_idempotent_and_stochastic(self, n, density, seed):
        m = sp.random(n, n, density=density, random_state=seed, format="csr")
        r = row_normalized(m)
        sums = np.asarray(r.sum(axis=1)).ravel()
        nonzero = np.diff(r.indptr) > 0
        assert np.all(np.abs(sums[nonzero] - 1) <= 1e-12)
        assert np.all(sums[~nonzero] == 0)
        assert np.max(np.abs((row_normalized(r) - r).toarray()), initial=0) <= 1e-12
        check_canonical(r)


class TestLaplacian:
    def test_examples(self):
        np.testing.assert_array_equal(norm_laplacian(ISOLATED).toarray(), [[1]])
        np.testing.assert_array_equal(norm_laplacian(path_graph(2)).toarray(), [[1, -1], [-1, 1]])
        ev = np.linalg.eigvalsh(norm_laplacian(complete_graph(3)).toarray())
        assert ev.min() >= -1e-12 and ev.max() <= 2 + 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_spectrum_and_null_vector(self, seed):
        g = connected_random_graph(60 + 20 * seed, 0.05, seed)
        lap = norm_laplacian(g).toarray()
        ev, vec = np.linalg.eigh(lap)
        assert ev[0] >= -1e-8 and ev[-1] <= 2 + 1e-8
        assert abs(ev[0]) <= 1e-8
        null = np.sqrt(g.adjacency.toarray().sum(axis=1))
        null /= np.linalg.norm(null)
        assert abs(abs(vec[:, 0] @ null) - 1) <= 1e-8
        np.testing.assert_allclose(lap @ null, 0, atol=1e-8)


class TestPpr:
    def test_alpha_one_is_identity(self, rng):
        x = rng.standard_normal((4, 3))
        out = ppr_diffuse(path_graph(4), x, alpha=1.0, iterations=7)
        assert out.tobytes() == x.tobytes()

    def test_isolated_node_converges_to_alpha_x(self):
        g = Graph.from_edges([0], [1], num_nodes=3)  # node 2 isolated
        x = np.array([[1.0], [2.0], [3.0]])
        out = ppr_diffuse(g, x, alpha=0.2, iterations=200)
        assert abs(out[2, 0] - 0.2 * 3.0) <= 1e-12

    def test_p2_converged(self):
        out = ppr_diffuse(path_graph(2), np.eye(2), alpha=0.5, iterations=60)
        np.testing.assert_allclose(out, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-6)

    def test_dense_p2_and_alpha_one(self):
        np.testing.assert_allclose(ppr_matrix_dense(path_graph(2), 0.5), [[2 / 3, 1 / 3], [1 / 3, 2 / 3]],
                                   atol=1e-14)
        np.testing.assert_allclose(ppr_matrix_dense(random_graph(10, 0.3, 1), 1.0), np.eye(10))

    def test_dense_limit(self):
        with pytest.raises(GraphError, match="dense limit"):
            ppr_matrix_dense(path_graph(5), 0.1, dense_limit=4)

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.6])
    def test_neumann_remainder_bound(self, alpha):
        g = random_graph(40, 0.15, seed=3)
        exact = alpha * np.linalg.inv(np.eye(40) - (1 - alpha) * dense_sym_norm(g.adjacency.toarray()))
        for k in (1, 2, 5, 10, 20):
            err = np.max(np.abs(ppr_diffuse(g, np.eye(40), alpha, k) - exact))
            assert err <= (1 - alpha) ** (k + 1) / alpha + 1e-12

    def test_geometric_decay(self):
        alpha = 0.1
        g = random_graph(60, 0.1, seed=8)
        x = np.random.default_rng(0).standard_normal((60, 3))
        exact = ppr_matrix_dense(g, alpha) @ x
        errs = [np.linalg.norm(ppr_diffuse(g, x, alpha, k) - exact) for k in range(1, 40)]
        for prev, cur in zip(errs, errs[1:]):
            assert cur <= (1 - alpha) * prev * (1 + 1e-9) + 1e-13

    def test_row_normalize_flag(self):
        g = random_graph(30, 0.2, seed=5)
        p = ppr_diffuse(g, np.eye(30), 0.2, 40, row_normalize=True)
        sums = p.sum(axis=1)
        assert np.all(np.abs(sums[sums > 0] - 1) <= 1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="num_nodes"):
            ppr_diffuse(path_graph(3), np.ones((4, 1)), 0.5)


class TestTriangles:
    def test_k3(self):
        t = triangle_operator(complete_graph(3)).toarray()
        np.testing.assert_array_equal(t, 0.5 * (1 - np.eye(3)))

    def test_p3_zero(self):
        assert triangle_operator(path_graph(3)).nnz == 0

    def test_k4(self):
        t = triangle_operator(complete_graph(4)).toarray()
        np.testing.assert_allclose(t, (1 - np.eye(4)) / 3, rtol=1e-15)
        np.testing.assert_array_equal(triangle_counts(complete_graph(4)).toarray(), 2 * (1 - np.eye(4)))

    def test_self_loops_and_weights_ignored(self):
        w = 3.0 * (1 - np.eye(3))
        w[0, 0] = 2.0
        np.testing.assert_array_equal(triangle_counts(Graph.from_dense(w)).toarray(), 1 - np.eye(3))

    @settings(max_examples=15, deadline=None)
    @given(n=st.integers(3, 30), p=st.floats(0.05, 0.6), seed=st.integers(0, 10_000))
    def test_counts_match_brute_force(self, n, p, seed):
        g = random_graph(n, p, seed, weighted=True)
        counts = triangle_counts(g)
        np.testing.assert_array_equal(counts.toarray(), brute_force_triangles(g.adjacency.toarray()))
        assert (counts != counts.T).nnz == 0


class TestDirected:
    G = Graph.from_dense([[0, 1], [0, 0]], directed=True)

    def test_out_and_in(self):
        np.testing.assert_array_equal(directed_normalized(self.G).toarray(), [[0, 1], [0, 0]])
        np.testing.assert_array_equal(directed_normalized(self.G, transpose=True).toarray(), [[0, 0], [1, 0]])

    def test_weighted_row(self):
        g = Graph.from_edges([0, 0], [1, 2], [1.0, 3.0], num_nodes=3, directed=True)
        np.testing.assert_array_equal(directed_normalized(g).toarray()[0], [0, 0.25, 0.75])

    def test_rejects_undirected(self):
        with pytest.raises(GraphError):
            directed_normalized(path_graph(2))


class TestBuildOperator:
    def test_gcn_squared_on_k3(self):
        op = build_operator(OperatorSpec(OperatorKind.SIMPLE_GCN_ADJ, power=2), complete_graph(3))
        a = dense_gcn(np.ones((3, 3)) - np.eye(3))
        np.testing.assert_allclose(op(np.eye(3)), a @ a, atol=1e-15)
        np.testing.assert_allclose(op(np.eye(3)), np.full((3, 3), 1 / 3), atol=1e-15)

    def test_triangle_on_p3(self, rng):
        op = build_operator(OperatorSpec(OperatorKind.TRIANGLE), path_graph(3))
        np.testing.assert_array_equal(op(rng.standard_normal((3, 2))), np.zeros((3, 2)))

    @pytest.mark.parametrize("power", [1, 3])
    def test_ppr_alpha_one_identity(self, rng, power):
        x = rng.standard_normal((5, 2))
        op = build_operator(OperatorSpec(OperatorKind.PPR, power, alpha=1.0, iterations=4), path_graph(5))
        assert op(x).tobytes() == x.tobytes()

    def test_ppr_power_is_repeated_diffusion(self, rng):
        g = random_graph(25, 0.2, 4)
        x = rng.standard_normal((25, 3))
        op = build_operator(OperatorSpec(OperatorKind.PPR, 2, alpha=0.3, iterations=80), g)
        p = ppr_matrix_dense(g, 0.3)
        np.testing.assert_allclose(op(x), p @ p @ x, atol=1e-10)

    def test_kind_graph_mismatch(self):
        directed = Graph.from_dense([[0, 1], [0, 0]], directed=True)
        with pytest.raises(GraphError, match="triangle operator requires undirected graph"):
            build_operator(OperatorSpec(OperatorKind.TRIANGLE), directed)
        with pytest.raises(GraphError, match="requires directed"):
            build_operator(OperatorSpec(OperatorKind.DIRECTED_OUT), path_graph(2))


class TestOperatorSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            OperatorSpec(OperatorKind.SIMPLE_GCN_ADJ, power=0)
        with pytest.raises(ValueError):
            OperatorSpec(OperatorKind.PPR, alpha=0.0)
        with pytest.raises(ValueError):
            OperatorSpec(OperatorKind.PPR, iterations=0)

    def test_dict_roundtrip(self):
        for spec in sign_specs(2, 2, 1, alpha=0.01, iterations=30):
            assert OperatorSpec.from_dict(spec.to_dict()) == spec

    def test_sign_specs_counts(self):
        specs = sign_specs(3, 2, 1)
        assert len(specs) == 6
        assert [s.power for s in specs] == [1, 2, 3, 1, 2, 1]
