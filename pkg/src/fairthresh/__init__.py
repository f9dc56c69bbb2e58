"""Group-aware decision thresholds for fair binary classification.

Fit a density to the classifier logits of each (label, group) cell, then
choose one threshold per group by minimizing a least-squares blend of error
rate and fairness residuals with alternating Gauss-Newton updates.
"""

from .analysis import (BoundConstants, FrontierPoint, eod_intersection, estimate_bound_constants,
                       pareto_front, sweep_lambda, verify_gap_bound)
from .data import GroupedLogits, load_csv, save_csv
from .density import FittedDensity, KdeDensity, fit_kde, select_density
from .errors import FairThreshError
from .metrics import MetricReport, apply_thresholds, evaluate, evaluate_thresholds
from .objective import (Constraint, DensityBundle, ObjectiveSpec, ThresholdPair, fit_bundle, rates,
                        total_loss)
from .optimizer import OptimizeOptions, OptimResult, grid_oracle, optimize, optimize_unified
from .synth import MixtureConfig, generate, paper_config

__version__ = "0.1.0"

__all__ = [
    "BoundConstants", "Constraint", "DensityBundle", "FairThreshError", "FittedDensity",
    "FrontierPoint", "GroupedLogits", "KdeDensity", "MetricReport", "MixtureConfig",
    "ObjectiveSpec", "OptimResult", "OptimizeOptions", "ThresholdPair", "apply_thresholds",
    "eod_intersection", "estimate_bound_constants", "evaluate", "evaluate_thresholds", "fit_bundle",
    "fit_kde", "generate", "grid_oracle", "load_csv", "optimize", "optimize_unified", "paper_config",
    "pareto_front", "rates", "save_csv", "select_density", "sweep_lambda", "total_loss",
    "verify_gap_bound",
]
