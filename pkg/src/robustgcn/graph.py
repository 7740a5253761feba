"""Graph storage, symmetric normalization and spectral utilities.

All solvers in this package work on the normalized operator
S = D^{-1/2} A D^{-1/2} of an undirected, non-negatively weighted graph
with empty diagonal. Isolated nodes get zero rows/columns in S
(D_ii^{-1/2} is defined as 0 for zero-degree nodes), so propagation
leaves them untouched instead of failing.
"""

import numpy as np
import scipy.sparse as sp


class GraphValidationError(ValueError):
    """Raised when an adjacency violates the Graph invariants."""


class PowerIterationError(RuntimeError):
    """Power iteration failed to converge; carries the last estimate."""

    def __init__(self, message, last_estimate):
        super().__init__(message)
        self.last_estimate = last_estimate


class Graph:
    """Undirected weighted graph with sparse CSR adjacency.

    Invariants enforced at construction: symmetric adjacency, zero
    diagonal, non-negative weights.
    """

    def __init__(self, n, edges):
        """Build from a node count and an iterable of (i, j, weight).

        Edges may list each undirected pair once or twice; both
        directions are stored.
        """
        rows, cols, vals = [], [], []
        for i, j, w in edges:
            rows.append(i)
            cols.append(j)
            vals.append(w)
            rows.append(j)
            cols.append(i)
            vals.append(w)
        # duplicates (pair listed in both directions) resolve by max,
        # not sum, so listing an edge once or twice is equivalent
        adj = _dedupe_max(n, rows, cols, vals)
        _validate_adjacency(adj)
        self.n = n
        self.adjacency = adj

    @classmethod
    def from_adjacency(cls, adj):
        """Wrap an existing (scipy sparse or dense) adjacency matrix."""
        adj = sp.csr_matrix(adj, dtype=float)
        _validate_adjacency(adj)
        g = cls.__new__(cls)
        g.n = adj.shape[0]
        g.adjacency = adj
        return g

    @property
    def degrees(self):
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def edge_list(self):
        """Return sorted (i, j, w) with i < j, one entry per edge."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (int(coo.row[k]), int(coo.col[k]), float(coo.data[k]))
            for k in order
        ]


def _dedupe_max(n, rows, cols, vals):
    """CSR from triplets, resolving duplicates by max (not sum)."""
    seen = {}
    for i, j, w in zip(rows, cols, vals):
        key = (i, j)
        if key not in seen or w > seen[key]:
            seen[key] = w
    if seen:
        r, c = zip(*seen.keys())
        v = list(seen.values())
    else:
        r, c, v = [], [], []
    return sp.csr_matrix(
        (np.asarray(v, dtype=float), (list(r), list(c))), shape=(n, n)
    )


def _validate_adjacency(adj):
    if adj.shape[0] != adj.shape[1]:
        raise GraphValidationError("adjacency must be square")
    if adj.nnz and adj.data.min() < 0:
        raise GraphValidationError("edge weights must be non-negative")
    if abs(adj.diagonal()).max(initial=0.0) != 0:
        raise GraphValidationError("self-loops are not allowed (A_ii must be 0)")
    asym = abs(adj - adj.T)
    if asym.nnz and asym.max() > 1e-12:
        raise GraphValidationError("adjacency must be symmetric")


class NormalizedOperator:
    """The symmetric operator S = D^{-1/2} A D^{-1/2} of a graph.

    Immutable after construction. ``has_isolated_nodes`` flags zero-degree
    nodes whose rows/columns of S are all-zero.
    """

    def __init__(self, matrix, has_isolated_nodes):
        self.matrix = sp.csr_matrix(matrix)
        self.n = self.matrix.shape[0]
        self.has_isolated_nodes = bool(has_isolated_nodes)
        self._m2_cache = {}

    def laplacian(self):
        """I - S as sparse CSR."""
        return (sp.eye(self.n, format="csr") - self.matrix).tocsr()


def build_normalized_adjacency(g, add_self_loops=False):
    """Compute S = D^{-1/2} A D^{-1/2} for a validated Graph.

    ``add_self_loops`` applies the renormalization trick (A+I before
    normalizing); off by default since the bare operator is the
    reference definition here.
    """
    adj = g.adjacency
    if add_self_loops:
        adj = (adj + sp.eye(g.n, format="csr")).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        d_inv_sqrt = 1.0 / np.sqrt(deg)
    d_inv_sqrt[~np.isfinite(d_inv_sqrt)] = 0.0
    D = sp.diags(d_inv_sqrt)
    S = (D @ adj @ D).tocsr()
    return NormalizedOperator(S, has_isolated_nodes=bool((deg == 0).any()))


def build_row_normalized(g):
    """D^{-1} A with the same zero-degree convention, used by diffusion."""
    deg = g.degrees
    with np.errstate(divide="ignore"):
        d_inv = 1.0 / deg
    d_inv[~np.isfinite(d_inv)] = 0.0
    return (sp.diags(d_inv) @ g.adjacency).tocsr()


def spectral_norm(mat, tol=1e-6, max_iter=10000, seed=0):
    """Largest absolute eigenvalue of a symmetric operator by power iteration.

    Converges to relative tolerance ``tol``; raises PowerIterationError
    (carrying the last estimate) after ``max_iter`` iterations.
    """
    mat = sp.csr_matrix(mat)
    n = mat.shape[0]
    if mat.nnz == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = mat @ v
        ray = float(v @ w)
        resid = np.linalg.norm(w - ray * v)
        est = abs(ray)
        # Rayleigh-quotient error is O(resid^2 / gap), well under tol here
        if resid <= tol * max(est, 1e-300):
            return est
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    raise PowerIterationError(
        f"power iteration did not converge within {max_iter} iterations",
        last_estimate=float(est),
    )
