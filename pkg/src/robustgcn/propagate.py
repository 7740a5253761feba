"""Propagation functions: baselines plus the three robust variants.

Every propagator maps (operator, features, parameters) to a propagated
feature matrix and is a pure function of its inputs. The robust ones are

  * ``robust_l1_fista``   -- l1 fitting term solved by FISTA,
  * ``mask_m1_iterate``   -- element-mask weighted fitting (truncated power
                             iteration),
  * ``mask_m2_iterate`` / ``mask_m2_exact`` -- node-mask weighted fitting
                             (truncated iteration, or the closed-form solve
                             with a cached factorization).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .graph import NormalizedOperator, spectral_norm


class PropagationError(RuntimeError):
    """Raised when a solver fails (NaN mid-iteration, singular system...)."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class FistaConfig:
    """Hyperparameters of the l1 solver.

    ``step_size_override`` replaces the default step 2 * alpha * ||I - S||_2.
    """

    alpha: float
    epsilon: float = 1e-4
    max_iterations: int = 1000
    step_size_override: float | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class MaskConfig:
    """Regularization weight and truncation length of the mask solvers."""

    alpha: float
    steps: int = 10

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class PropagationResult:
    Z: np.ndarray
    iterations_used: int
    final_objective: float
    converged: bool


def _as_matrix(S):
    if isinstance(S, NormalizedOperator):
        return S.matrix
    return sp.csr_matrix(S)


def _laplacian(S):
    if isinstance(S, NormalizedOperator):
        return S.laplacian()
    S = sp.csr_matrix(S)
    return (sp.eye(S.shape[0], format="csr") - S).tocsr()


def _check_dims(S, H):
    Smat = _as_matrix(S)
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != Smat.shape[0]:
        raise ValueError(
            f"feature matrix shape {H.shape} does not match operator of size "
            f"{Smat.shape[0]}"
        )
    return Smat, H


def gc_onestep(S, H):
    """One-step propagation S @ H."""
    Smat, H = _check_dims(S, H)
    return Smat @ H


def dcrnn_diffusion(g, H, T):
    """Truncated diffusion sum_{t=0}^{T-1} (D^{-1} A)^t H."""
    from .graph import build_row_normalized

    if T < 1:
        raise ValueError("T must be >= 1")
    P = build_row_normalized(g)
    H = np.asarray(H, dtype=float)
    if H.shape[0] != g.n:
        raise ValueError("feature matrix does not match graph size")
    out = H.copy()
    term = H
    for _ in range(T - 1):
        term = P @ term
        out += term
    return out


def gden_exact(S, H, gamma):
    """Closed-form smoothing (1 - gamma) (I - gamma S)^{-1} H."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    Smat, H = _check_dims(S, H)
    n = Smat.shape[0]
    A = (sp.eye(n, format="csc") - gamma * Smat).tocsc()
    solve = spla.factorized(A)
    Z = np.column_stack([solve(H[:, j]) for j in range(H.shape[1])])
    return (1.0 - gamma) * Z


def evaluate_objective(kind, S, H, Z, alpha, mask=None):
    """Objective value of a candidate Z for one of the four problems.

    kind: 'quadratic' | 'l1' | 'mask_m1' | 'mask_m2'. The smoothness term
    alpha * Tr(Z^T (I - S) Z) is shared; the fitting term differs.
    """
    L = _laplacian(S)
    H = np.asarray(H, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.shape != H.shape:
        raise ValueError("Z and H must have the same shape")
    smooth = alpha * float(np.sum(Z * (L @ Z)))
    R = Z - H
    if kind == "quadratic":
        fit = float(np.sum(R * R))
    elif kind == "l1":
        fit = float(np.abs(R).sum())
    elif kind == "mask_m1":
        if mask is None:
            raise ValueError("mask_m1 objective needs an element mask")
        M = np.asarray(mask, dtype=float)
        if M.shape != H.shape:
            raise ValueError("element mask shape mismatch")
        fit = float(np.sum(M * R * R))
    elif kind == "mask_m2":
        if mask is None:
            raise ValueError("mask_m2 objective needs a node mask")
        tau = np.asarray(mask, dtype=float).ravel()
        if tau.shape[0] != H.shape[0]:
            raise ValueError("node mask length mismatch")
        fit = float(np.sum((tau[:, None] * R) ** 2))
    else:
        raise ValueError(f"unknown objective kind {kind!r}")
    return fit + smooth


def prox_l1_step(U, H, lam):
    """Soft-threshold U toward the anchor H with threshold 1/lam.

    Elementwise exact solution of min_z |z - H_ij| + (lam/2)(z - U_ij)^2.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    U = np.asarray(U, dtype=float)
    H = np.asarray(H, dtype=float)
    if U.shape != H.shape:
        raise ValueError("U and H must have the same shape")
    D = U - H
    return H + np.sign(D) * np.maximum(np.abs(D) - 1.0 / lam, 0.0)


def fista_step_size(S, alpha):
    """Default FISTA step parameter 2 * alpha * ||I - S||_2."""
    return 2.0 * alpha * spectral_norm(_laplacian(S))


def _fista_forward(L, H, alpha, lam, epsilon, max_iterations, record_tape=False):
    """Core FISTA loop; optionally records the tape needed for reverse mode.

    Returns (Z, iterations, converged, tape) where tape is a list of
    (active_mask, momentum_coefficient) per executed iteration.
    """
    c = 2.0 * alpha / lam
    inv_lam = 1.0 / lam
    Y = H.copy()
    Z_prev = H.copy()
    t = 1.0
    tape = [] if record_tape else None
    iterations = 0
    converged = False
    Z = H.copy()
    for k in range(max_iterations):
        U = Y - c * (L @ Y)
        D = U - H
        active = np.abs(D) > inv_lam
        Z = np.where(active, U - np.sign(D) * inv_lam, H)
        if not np.isfinite(Z).all():
            raise PropagationError(
                f"NaN/Inf encountered at FISTA iteration {k}", iteration=k
            )
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        mu = (t - 1.0) / t_next
        Y_next = Z + mu * (Z - Z_prev)
        if record_tape:
            tape.append((active, mu))
        denom = np.abs(Y).sum()
        delta = np.abs(Y_next - Y).sum()
        iterations = k + 1
        Z_prev = Z
        Y = Y_next
        t = t_next
        if denom == 0.0 or delta / denom < epsilon:
            converged = True
            break
    return Z, iterations, converged, tape


def robust_l1_fista(S, H, cfg):
    """Minimize ||Z - H||_1 + alpha * Tr(Z^T (I - S) Z) by FISTA.

    Starts from Y = H with unit momentum; stops when the relative l1
    change of the extrapolation point drops below cfg.epsilon or after
    cfg.max_iterations steps.
    """
    Smat, H = _check_dims(S, H)
    lam = cfg.step_size_override
    if lam is None:
        lam = fista_step_size(S, cfg.alpha)
    if lam <= 0:
        raise PropagationError("step parameter must be positive")
    L = _laplacian(S)
    Z, iterations, converged, _ = _fista_forward(
        L, H, cfg.alpha, lam, cfg.epsilon, cfg.max_iterations
    )
    obj = evaluate_objective("l1", S, H, Z, cfg.alpha)
    return PropagationResult(Z, iterations, obj, converged)


def mask_m1_iterate(S, H, M, cfg):
    """Element-mask solver: T truncated steps of the power update.

    Observed entries blend gamma * (S Z) with (1 - gamma) * H where
    gamma = alpha / (1 + alpha); missing entries are driven by S alone.
    H must already be filled at masked positions (it doubles as Z^(0)).
    """
    Smat, H = _check_dims(S, H)
    M = np.asarray(M, dtype=float)
    if M.shape != H.shape:
        raise ValueError("element mask shape mismatch")
    gamma = cfg.alpha / (1.0 + cfg.alpha)
    Z = H.copy()
    for _ in range(cfg.steps):
        SZ = Smat @ Z
        Z = M * (gamma * SZ + (1.0 - gamma) * H) + (1.0 - M) * SZ
    obj = evaluate_objective("mask_m1", S, H, Z, cfg.alpha, mask=M)
    return PropagationResult(Z, cfg.steps, obj, True)


def _m2_diagonals(tau, alpha):
    tau = np.asarray(tau, dtype=float).ravel()
    if not np.isin(tau, (0.0, 1.0)).all():
        raise ValueError("node mask must be binary")
    k_diag = alpha / (alpha + tau)
    return tau, k_diag


def mask_m2_iterate(S, H, tau, cfg):
    """Node-mask solver: T truncated steps of Z <- K S Z + (1/alpha) K Gamma H.

    K = diag(alpha / (alpha + tau_i)). H must be pre-filled (Z^(0) = H).
    """
    Smat, H = _check_dims(S, H)
    tau, k_diag = _m2_diagonals(tau, cfg.alpha)
    if tau.shape[0] != Smat.shape[0]:
        raise ValueError("node mask length mismatch")
    bias = ((k_diag * tau / cfg.alpha)[:, None]) * H
    Z = H.copy()
    for _ in range(cfg.steps):
        Z = k_diag[:, None] * (Smat @ Z) + bias
    obj = evaluate_objective("mask_m2", S, H, Z, cfg.alpha, mask=tau)
    return PropagationResult(Z, cfg.steps, obj, True)


def _m2_solver(S, tau, alpha):
    """Cached factorization of (Gamma + alpha (I - S)) for a given mask."""
    tau = np.asarray(tau, dtype=float).ravel()
    cache = S._m2_cache if isinstance(S, NormalizedOperator) else None
    key = (tau.tobytes(), float(alpha))
    if cache is not None and key in cache:
        return cache[key]
    L = _laplacian(S)
    A = (sp.diags(tau) + alpha * L).tocsc()
    try:
        solve = spla.factorized(A)
        probe = solve(np.ones(A.shape[0]))
        if not np.isfinite(probe).all():
            raise RuntimeError("singular factorization")
    except RuntimeError:
        _raise_singular_m2(S, tau)
    if cache is not None:
        cache[key] = solve
    return solve


def _raise_singular_m2(S, tau):
    Smat = _as_matrix(S)
    n_comp, labels = connected_components(Smat, directed=False)
    for comp in range(n_comp):
        nodes = np.flatnonzero(labels == comp)
        if tau[nodes].max(initial=0.0) == 0.0:
            raise PropagationError(
                "singular node-mask system: connected component "
                f"{nodes.tolist()} has no observed node"
            )
    raise PropagationError("singular node-mask system")


def mask_m2_exact(S, H, tau, alpha):
    """Closed-form node-mask solution (Gamma + alpha (I - S))^{-1} Gamma H.

    The factorization depends only on (graph, tau, alpha) and is cached on
    the operator, so repeated calls with new features reuse it.
    """
    Smat, H = _check_dims(S, H)
    tau = np.asarray(tau, dtype=float).ravel()
    if tau.shape[0] != Smat.shape[0]:
        raise ValueError("node mask length mismatch")
    solve = _m2_solver(S, tau, alpha)
    rhs = tau[:, None] * H
    Z = np.column_stack([solve(rhs[:, j]) for j in range(H.shape[1])])
    if not np.isfinite(Z).all():
        _raise_singular_m2(S, tau)
    return Z
