"""Robust graph convolution propagators with a two-layer GCN trainer and a
seeded corruption experiment harness."""

from .graph import (
    Graph,
    GraphValidationError,
    NormalizedOperator,
    PowerIterationError,
    build_normalized_adjacency,
    build_row_normalized,
    spectral_norm,
)
from .propagate import (
    FistaConfig,
    MaskConfig,
    PropagationError,
    PropagationResult,
    dcrnn_diffusion,
    evaluate_objective,
    gc_onestep,
    gden_exact,
    mask_m1_iterate,
    mask_m2_exact,
    mask_m2_iterate,
    prox_l1_step,
    robust_l1_fista,
)

__all__ = [
    "Graph",
    "GraphValidationError",
    "NormalizedOperator",
    "PowerIterationError",
    "build_normalized_adjacency",
    "build_row_normalized",
    "spectral_norm",
    "FistaConfig",
    "MaskConfig",
    "PropagationError",
    "PropagationResult",
    "dcrnn_diffusion",
    "evaluate_objective",
    "gc_onestep",
    "gden_exact",
    "mask_m1_iterate",
    "mask_m2_exact",
    "mask_m2_iterate",
    "prox_l1_step",
    "robust_l1_fista",
]

__version__ = "0.1.0"
