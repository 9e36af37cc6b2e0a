"""Balanced group average treatment effects: double machine learning,
automatic debiasing and matching-based reweighting."""

from ._core import (
    EstimationError,
    decompose,
    estimate,
    generate,
    normalize_truncate_weights,
    rebalance,
    run_cli,
    run_study,
    true_effect,
    weighted_variance_factor,
)

__all__ = [
    "EstimationError",
    "decompose",
    "estimate",
    "generate",
    "normalize_truncate_weights",
    "rebalance",
    "run_cli",
    "run_study",
    "true_effect",
    "weighted_variance_factor",
]
