"""Two-layer graph convolutional network with manual reverse-mode gradients.

Each layer is H' = sigma(P(H) @ W) where P is one of the propagators from
``propagate``; sigma is ReLU after the first layer and softmax after the
second. Gradients are computed by hand: linear propagators expose exact
vector-Jacobian products (transposed product / transposed solve), the
l1 FISTA propagator is differentiated by backpropagating through its
recorded iterations (the soft-threshold is piecewise linear).
"""

import copy
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import propagate
from .graph import NormalizedOperator


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch


def glorot_init(d_in, d_out, rng):
    """Uniform Glorot weights on [-b, b] with b = sqrt(6 / (d_in + d_out))."""
    if d_in < 1 or d_out < 1:
        raise ValueError("layer dimensions must be >= 1")
    bound = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_in, d_out))


# ---------------------------------------------------------------------------
# propagators as forward/vjp pairs


class OneStepProp:
    """P(H) = S H; vjp is S^T G (= S G, S symmetric)."""

    def __init__(self, S):
        self.S = S

    def apply(self, H):
        return propagate.gc_onestep(self.S, H), None

    def vjp(self, ctx, G):
        return self.S.matrix.T @ G


class DiffusionProp:
    """Truncated diffusion sum over (D^{-1} A)^t."""

    def __init__(self, g, T):
        from .graph import build_row_normalized

        self.P = build_row_normalized(g)
        self.T = T

    def apply(self, H):
        out = H.copy()
        term = H
        for _ in range(self.T - 1):
            term = self.P @ term
            out += term
        return out, None

    def vjp(self, ctx, G):
        Pt = self.P.T.tocsr()
        out = G.copy()
        term = G
        for _ in range(self.T - 1):
            term = Pt @ term
            out += term
        return out


class GdenProp:
    """(1 - gamma)(I - gamma S)^{-1} H with one cached factorization.

    The operator is symmetric, so the vjp is the same solve.
    """

    def __init__(self, S, gamma):
        if not 0 < gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        self.gamma = gamma
        n = S.matrix.shape[0]
        A = (sp.eye(n, format="csc") - gamma * S.matrix).tocsc()
        self._solve = spla.factorized(A)

    def _apply_inverse(self, X):
        return np.column_stack(
            [self._solve(X[:, j]) for j in range(X.shape[1])]
        )

    def apply(self, H):
        return (1.0 - self.gamma) * self._apply_inverse(H), None

    def vjp(self, ctx, G):
        return (1.0 - self.gamma) * self._apply_inverse(G)


class FistaProp:
    """l1-robust propagation; backward unrolls the executed iterations.

    With ``fixed_iterations`` set, the convergence check is skipped and
    exactly that many steps run, which keeps the mapping piecewise smooth
    for gradient checks.
    """

    def __init__(self, S, cfg, fixed_iterations=None):
        self.S = S
        self.cfg = cfg
        self.fixed_iterations = fixed_iterations
        self.lam = cfg.step_size_override
        if self.lam is None:
            self.lam = propagate.fista_step_size(S, cfg.alpha)
        self.L = S.laplacian()

    def apply(self, H, record_tape=True):
        eps = self.cfg.epsilon
        max_it = self.cfg.max_iterations
        if self.fixed_iterations is not None:
            eps = 0.0
            max_it = self.fixed_iterations
        Z, _, _, tape = propagate._fista_forward(
            self.L, H, self.cfg.alpha, self.lam, eps, max_it,
            record_tape=record_tape,
        )
        return Z, (tape, H)

    def vjp(self, ctx, G):
        tape, H = ctx
        c = 2.0 * self.cfg.alpha / self.lam
        K = len(tape)
        gH = np.zeros_like(H)
        # grads wrt Z_{k+1} and Y_{k+1}, walked backwards; Z_K is the output
        gZ = {K: G.copy()}
        gY = {}
        for k in range(K - 1, -1, -1):
            active, mu = tape[k]
            gZ_k1 = gZ.pop(k + 1, None)
            if gZ_k1 is None:
                gZ_k1 = np.zeros_like(H)
            gY_k1 = gY.pop(k + 1, None)
            if gY_k1 is not None:
                # Y_{k+1} = (1 + mu) Z_{k+1} - mu Z_k
                gZ_k1 += (1.0 + mu) * gY_k1
                gZ[k] = gZ.get(k, np.zeros_like(H)) - mu * gY_k1
            # Z_{k+1} = where(active, U_k - sign/lam, H)
            gU = np.where(active, gZ_k1, 0.0)
            gH += np.where(active, 0.0, gZ_k1)
            # U_k = Y_k - c L Y_k ; symmetric
            gY[k] = gU - c * (self.L @ gU)
        # Y_0 = H and Z_0 = H
        if 0 in gY:
            gH += gY[0]
        if 0 in gZ:
            gH += gZ[0]
        return gH


class MaskM1Prop:
    """Element-mask propagation, affine in H; vjp via the transposed iteration."""

    def __init__(self, S, M, cfg):
        self.S = S
        self.M = np.asarray(M, dtype=float)
        self.cfg = cfg

    def apply(self, H):
        res = propagate.mask_m1_iterate(self.S, H, self.M, self.cfg)
        return res.Z, None

    def vjp(self, ctx, G):
        # Z_{t+1} = (M*gamma + (1-M)) * (S Z_t) + M*(1-gamma)*H, Z_0 = H
        gamma = self.cfg.alpha / (1.0 + self.cfg.alpha)
        W = self.M * gamma + (1.0 - self.M)
        St = self.S.matrix.T.tocsr()
        gH = np.zeros_like(G)
        gZ = G.copy()
        for _ in range(self.cfg.steps):
            gH += self.M * (1.0 - gamma) * gZ
            gZ = St @ (W * gZ)
        gH += gZ  # Z_0 = H
        return gH


class MaskM2IterProp:
    """Node-mask truncated iteration, affine in H."""

    def __init__(self, S, tau, cfg):
        self.S = S
        self.tau = np.asarray(tau, dtype=float).ravel()
        self.cfg = cfg

    def apply(self, H):
        res = propagate.mask_m2_iterate(self.S, H, self.tau, self.cfg)
        return res.Z, None

    def vjp(self, ctx, G):
        alpha = self.cfg.alpha
        k_diag = alpha / (alpha + self.tau)
        bias_diag = self.tau / (alpha + self.tau)
        St = self.S.matrix.T.tocsr()
        gH = np.zeros_like(G)
        gZ = G.copy()
        for _ in range(self.cfg.steps):
            gH += bias_diag[:, None] * gZ
            gZ = St @ (k_diag[:, None] * gZ)
        gH += gZ
        return gH


class MaskM2ExactProp:
    """Closed-form node-mask propagation; vjp is Gamma times the same solve."""

    def __init__(self, S, tau, alpha):
        self.S = S
        self.tau = np.asarray(tau, dtype=float).ravel()
        self.alpha = alpha

    def apply(self, H):
        return propagate.mask_m2_exact(self.S, H, self.tau, self.alpha), None

    def vjp(self, ctx, G):
        solve = propagate._m2_solver(self.S, self.tau, self.alpha)
        X = np.column_stack([solve(G[:, j]) for j in range(G.shape[1])])
        return self.tau[:, None] * X


# ---------------------------------------------------------------------------
# model


@dataclass
class ModelParams:
    W1: np.ndarray
    W2: np.ndarray

    def copy(self):
        return ModelParams(self.W1.copy(), self.W2.copy())


@dataclass
class TrainConfig:
    max_epochs: int = 10000
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class AdamState:
    """Bias-corrected Adam over a ModelParams pair."""

    def __init__(self, params, learning_rate=0.005, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in vars(params).items()}
        self.v = {k: np.zeros_like(v) for k, v in vars(params).items()}

    def step(self, params, grads):
        self.step_count += 1
        t = self.step_count
        for k in ("W1", "W2"):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1**t)
            v_hat = self.v[k] / (1 - self.beta2**t)
            w = getattr(params, k)
            w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


def softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class Model:
    """Two-layer network: ReLU hidden layer, softmax output.

    prop1 runs on the (fixed) input features and is computed once per
    distinct H; prop2 runs on hidden activations, so its vjp carries
    gradients back into W1.
    """

    def __init__(self, prop1, prop2, d_in, n_classes, hidden=16,
                 weight_decay=5e-4, decay_layer1_only=False, seed=0):
        rng = np.random.default_rng(seed)
        self.prop1 = prop1
        self.prop2 = prop2
        self.weight_decay = weight_decay
        self.decay_layer1_only = decay_layer1_only
        self.params = ModelParams(
            glorot_init(d_in, hidden, rng),
            glorot_init(hidden, n_classes, rng),
        )
        self._p1_cache = {}

    def _propagated_input(self, H):
        key = id(H)
        if key not in self._p1_cache:
            self._p1_cache.clear()
            P1, _ = self.prop1.apply(H)
            self._p1_cache[key] = P1
        return self._p1_cache[key]

    def forward(self, H, params=None):
        """Return (row-stochastic class probabilities, cache for backward)."""
        params = params or self.params
        P1 = self._propagated_input(H)
        A1 = P1 @ params.W1
        H1 = np.maximum(A1, 0.0)
        P2, ctx2 = self.prop2.apply(H1)
        A2 = P2 @ params.W2
        probs = softmax_rows(A2)
        cache = (P1, A1, H1, P2, ctx2, probs)
        return probs, cache

    def _decay_loss(self, params):
        wd = self.weight_decay
        loss = 0.5 * wd * float(np.sum(params.W1 * params.W1))
        if not self.decay_layer1_only:
            loss += 0.5 * wd * float(np.sum(params.W2 * params.W2))
        return loss

    def loss(self, H, labels, mask, params=None):
        params = params or self.params
        probs, _ = self.forward(H, params)
        return self._data_loss(probs, labels, mask) + self._decay_loss(params)

    @staticmethod
    def _data_loss(probs, labels, mask):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise ValueError("empty label set")
        p = probs[idx, labels[idx]]
        return float(-np.log(np.clip(p, 1e-300, None)).mean())

    def loss_and_grad(self, H, labels, mask, params=None):
        params = params or self.params
        probs, cache = self.forward(H, params)
        P1, A1, H1, P2, ctx2, _ = cache
        idx = np.flatnonzero(mask)
        loss = self._data_loss(probs, labels, mask) + self._decay_loss(params)

        dA2 = np.zeros_like(probs)
        dA2[idx] = probs[idx]
        dA2[idx, labels[idx]] -= 1.0
        dA2 /= idx.size

        wd = self.weight_decay
        gW2 = P2.T @ dA2
        if not self.decay_layer1_only:
            gW2 += wd * params.W2
        dP2 = dA2 @ params.W2.T
        dH1 = self.prop2.vjp(ctx2, dP2)
        dA1 = dH1 * (A1 > 0)
        gW1 = P1.T @ dA1 + wd * params.W1
        return loss, {"W1": gW1, "W2": gW2}

    def predict(self, H, params=None):
        probs, _ = self.forward(H, params)
        return probs.argmax(axis=1)


def evaluate(model, H, labels, mask, params=None):
    """Fraction of argmax-correct predictions over a non-empty mask."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty evaluation mask")
    pred = model.predict(H, params)
    return float((pred[idx] == labels[idx]).mean())


def train(model, H, labels, train_mask, val_mask, cfg):
    """Full-batch Adam training with patience-based early stopping.

    Returns (best-validation params, history); history is one dict per
    epoch with train/val loss and validation accuracy.
    """
    opt = AdamState(model.params)
    best_val = np.inf
    best_params = model.params.copy()
    bad_epochs = 0
    history = []
    for epoch in range(cfg.max_epochs):
        loss, grads = model.loss_and_grad(H, labels, train_mask)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite training loss at epoch {epoch}", epoch=epoch
            )
        opt.step(model.params, grads)
        val_loss = model.loss(H, labels, val_mask)
        val_acc = evaluate(model, H, labels, val_mask)
        history.append(
            {
                "epoch": epoch,
                "train_loss": loss,
                "val_loss": val_loss,
                "val_acc": val_acc,
            }
        )
        if val_loss < best_val:
            best_val = val_loss
            best_params = model.params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
    return best_params, history


def export_history(history, path):
    """Write one structured record per epoch, line-delimited."""
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
