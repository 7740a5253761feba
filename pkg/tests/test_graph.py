import numpy as np
import pytest
import scipy.sparse as sp

from robustgcn import (
    Graph,
    GraphValidationError,
    PowerIterationError,
    build_normalized_adjacency,
    spectral_norm,
)
from conftest import random_connected_graph


def dense_normalized(A):
    deg = A.sum(axis=1)
    with np.errstate(divide="ignore"):
        dis = 1.0 / np.sqrt(deg)
    dis[~np.isfinite(dis)] = 0.0
    return np.diag(dis) @ A @ np.diag(dis)


class TestGraphValidation:
    def test_negative_weight_rejected(self):
        with pytest.raises(GraphValidationError):
            Graph(2, [(0, 1, -1.0)])

    def test_self_loop_rejected(self):
        with pytest.raises(GraphValidationError):
            Graph(2, [(0, 0, 1.0)])

    def test_asymmetric_adjacency_rejected(self):
        A = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(GraphValidationError):
            Graph.from_adjacency(A)

    def test_edge_listed_both_directions_not_doubled(self):
        g = Graph(2, [(0, 1, 1.0), (1, 0, 1.0)])
        assert g.adjacency[0, 1] == 1.0


class TestBuildNormalizedAdjacency:
    def test_two_node_path_unchanged(self, path2):
        S = build_normalized_adjacency(path2)
        np.testing.assert_allclose(
            S.matrix.toarray(), [[0.0, 1.0], [1.0, 0.0]]
        )

    def test_triangle_off_diagonal_half(self, triangle):
        S = build_normalized_adjacency(triangle).matrix.toarray()
        expected = 0.5 * (np.ones((3, 3)) - np.eye(3))
        np.testing.assert_allclose(S, expected)

    def test_matches_dense_oracle_random_10_nodes(self, rng):
        g = random_connected_graph(10, rng)
        S = build_normalized_adjacency(g).matrix.toarray()
        np.testing.assert_allclose(
            S, dense_normalized(g.adjacency.toarray()), atol=1e-12
        )

    def test_isolated_node_row_zero(self):
        g = Graph(3, [(0, 1, 1.0)])
        S = build_normalized_adjacency(g)
        assert S.has_isolated_nodes
        assert np.all(S.matrix.toarray()[2] == 0)
        assert np.all(S.matrix.toarray()[:, 2] == 0)

    def test_symmetric(self, rng):
        g = random_connected_graph(12, rng)
        S = build_normalized_adjacency(g).matrix
        assert abs(S - S.T).max() < 1e-12

    def test_permutation_equivariance(self, rng):
        g = random_connected_graph(8, rng)
        perm = rng.permutation(8)
        P = np.eye(8)[perm]
        A = g.adjacency.toarray()
        gp = Graph.from_adjacency(P @ A @ P.T)
        Sp = build_normalized_adjacency(gp).matrix.toarray()
        S = build_normalized_adjacency(g).matrix.toarray()
        np.testing.assert_allclose(Sp, P @ S @ P.T, atol=1e-12)

    def test_largest_eigenvalue_one_when_connected(self, rng):
        g = random_connected_graph(9, rng)
        S = build_normalized_adjacency(g).matrix.toarray()
        assert np.linalg.eigvalsh(S).max() == pytest.approx(1.0, abs=1e-10)

    def test_self_loop_renormalization_flag(self, path2):
        S = build_normalized_adjacency(path2, add_self_loops=True)
        np.testing.assert_allclose(
            S.matrix.toarray(), np.full((2, 2), 0.5)
        )


class TestSpectralNorm:
    def test_two_node_path(self, path2_op):
        # eigenvalues of S are +-1, so ||I - S||_2 = 2
        assert spectral_norm(path2_op.laplacian()) == pytest.approx(2.0, rel=1e-6)

    def test_single_isolated_node(self):
        g = Graph(1, [])
        op = build_normalized_adjacency(g)
        assert spectral_norm(op.laplacian()) == pytest.approx(1.0)

    def test_matches_dense_eigensolver_random_15_nodes(self, rng):
        g = random_connected_graph(15, rng)
        op = build_normalized_adjacency(g)
        L = op.laplacian().toarray()
        expected = np.abs(np.linalg.eigvalsh(L)).max()
        assert spectral_norm(op.laplacian()) == pytest.approx(expected, abs=1e-5)

    def test_always_at_most_two(self, rng):
        for seed in range(5):
            g = random_connected_graph(7, np.random.default_rng(seed))
            op = build_normalized_adjacency(g)
            assert spectral_norm(op.laplacian()) <= 2.0 + 1e-9

    def test_nonconvergence_carries_estimate(self, path2_op):
        with pytest.raises(PowerIterationError) as exc:
            spectral_norm(path2_op.laplacian(), tol=0.0, max_iter=3)
        assert exc.value.last_estimate > 0
