"""Vuong-type comparisons of structural equation models."""

import json

from ._core import (
    DataError,
    FittedModel,
    ModelSpec,
    NumericalError,
    ParseError,
    WeightedChiSq,
    __version__,
    bootstrap_ic_ci,
    casewise_loglik,
    endpoint_sd,
    fit,
    ic_difference_ci,
    implied_moments,
    omega_hat_squared,
    parse_model,
    simulate,
    w_eigenvalues,
)
from . import _core


def compare(fit_a, fit_b, alpha=0.05, ci_level=0.90, criterion="bic", nested=False, one_sided=False):
    """Sequential comparison of two fits; returns the report as a dict."""
    return json.loads(_core.compare_json(fit_a, fit_b, alpha, ci_level, criterion, nested, one_sided))


def run_simulation(study, reps, n_levels=(), d_levels=(), seed=1, boot_reps=0, threads=0):
    """Runs simulation study 1, 2 or 3 and returns one dict per condition."""
    return json.loads(
        _core.run_simulation_json(study, reps, list(n_levels), list(d_levels), seed, boot_reps, threads)
    )


__all__ = [
    "DataError",
    "FittedModel",
    "ModelSpec",
    "NumericalError",
    "ParseError",
    "WeightedChiSq",
    "bootstrap_ic_ci",
    "casewise_loglik",
    "compare",
    "endpoint_sd",
    "fit",
    "ic_difference_ci",
    "implied_moments",
    "omega_hat_squared",
    "parse_model",
    "run_simulation",
    "simulate",
    "w_eigenvalues",
]
