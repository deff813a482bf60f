"""ECG CNN-VAE multi-label classifier (C++ core)."""

import json

from ._core import (
    CLASS_NAMES,
    EcgError,
    Model,
    apply_norm,
    fit_norm_stats,
    generate_synthetic,
    param_counts,
    roc_auc,
    run_all,
    weighted_bce,
)
from . import _core


def evaluate(probabilities, truth, threshold=0.5):
    """Evaluation report as a dict."""
    return json.loads(_core.evaluate(probabilities, truth, threshold))


def report_from_counts(counts):
    """Report dict from five (tn, fp, fn, tp) rows in class order."""
    return json.loads(_core.report_from_counts(counts))


__all__ = [
    "CLASS_NAMES",
    "EcgError",
    "Model",
    "apply_norm",
    "evaluate",
    "fit_norm_stats",
    "generate_synthetic",
    "param_counts",
    "report_from_counts",
    "roc_auc",
    "run_all",
    "weighted_bce",
]
