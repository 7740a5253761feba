"""Feature corruption and missing-value generation, plus filling strategies.

Three error regimes: value corruption (binary flip or random value),
element-missing (an n x d indicator mask M), and node-missing (a length-n
indicator tau). Exactly floor(level * total) positions are selected
without replacement, so counts are deterministic for every seed.
"""

from dataclasses import dataclass

import numpy as np

REGIMES = ("binary_flip", "random_value", "missing_elements", "missing_nodes")
FILL_STRATEGIES = ("ZF", "MF", "NMF")


@dataclass(frozen=True)
class CorruptionSpec:
    regime: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError("level must lie in [0, 1]")


def _select_flat(rng, total, count):
    return rng.choice(total, size=count, replace=False)


def corrupt_features(H, spec):
    """Overwrite floor(level * n * d) entries with noise; rest untouched.

    binary_flip writes a fair coin over {0, 1} (binary features);
    random_value writes uniform draws over each column's observed range.
    """
    if spec.regime not in ("binary_flip", "random_value"):
        raise ValueError(f"corrupt_features does not handle {spec.regime!r}")
    H = np.asarray(H, dtype=float)
    n, d = H.shape
    count = int(np.floor(spec.level * n * d))
    out = H.copy()
    if count == 0:
        return out
    rng = np.random.default_rng(spec.seed)
    flat = _select_flat(rng, n * d, count)
    rows, cols = np.unravel_index(flat, (n, d))
    if spec.regime == "binary_flip":
        if not np.isin(H, (0.0, 1.0)).all():
            raise ValueError("binary_flip requires binary-valued features")
        out[rows, cols] = rng.integers(0, 2, size=count).astype(float)
    else:
        lo = H.min(axis=0)
        hi = H.max(axis=0)
        out[rows, cols] = lo[cols] + rng.random(count) * (hi[cols] - lo[cols])
    return out


def make_missing(H, spec):
    """Null out entries (missing_elements) or whole rows (missing_nodes).

    Returns (H_with_nulls, mask): missing positions hold NaN so accidental
    use is loud; the mask is the n x d element mask M or the length-n node
    mask tau. The caller keeps the original H for evaluation.
    """
    if spec.regime not in ("missing_elements", "missing_nodes"):
        raise ValueError(f"make_missing does not handle {spec.regime!r}")
    H = np.asarray(H, dtype=float)
    n, d = H.shape
    rng = np.random.default_rng(spec.seed)
    out = H.copy()
    if spec.regime == "missing_elements":
        count = int(np.floor(spec.level * n * d))
        mask = np.ones((n, d), dtype=np.int8)
        if count:
            flat = _select_flat(rng, n * d, count)
            rows, cols = np.unravel_index(flat, (n, d))
            mask[rows, cols] = 0
            out[rows, cols] = np.nan
        return out, mask
    count = int(np.floor(spec.level * n))
    tau = np.ones(n, dtype=np.int8)
    if count:
        rows = _select_flat(rng, n, count)
        tau[rows] = 0
        out[rows, :] = np.nan
    return out, tau


def _element_mask(H, mask):
    mask = np.asarray(mask)
    if mask.ndim == 1:
        return np.repeat(mask[:, None], H.shape[1], axis=1).astype(float)
    if mask.shape != H.shape:
        raise ValueError("mask shape does not match features")
    return mask.astype(float)


def fill(H_with_nulls, mask, strategy, g=None):
    """Fill missing entries by zeros (ZF), the global known mean (MF), or
    the per-entry neighbor mean (NMF, falls back to MF when no neighbor
    has the entry observed). Known entries are never modified.
    """
    if strategy not in FILL_STRATEGIES:
        raise ValueError(f"unknown filling strategy {strategy!r}")
    H = np.asarray(H_with_nulls, dtype=float)
    M = _element_mask(H, mask)
    known = M > 0
    out = H.copy()
    if strategy == "ZF":
        out[~known] = 0.0
        return out
    if not known.any():
        raise ValueError("cannot mean-fill: all entries are missing")
    global_mean = H[known].mean()
    if strategy == "MF":
        out[~known] = global_mean
        return out
    if g is None:
        raise ValueError("NMF requires the graph")
    A = g.adjacency
    # neighbor-mean per column: sums and counts over observed neighbors
    known_vals = np.where(known, H, 0.0)
    sums = A @ known_vals
    counts = A @ known.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        nm = sums / counts
    nm = np.where(counts > 0, nm, global_mean)
    out[~known] = nm[~known]
    return out
