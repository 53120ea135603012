"""Near-unit-root affine autoregressions.

Simulation of the affine count and positive families, the CIR scaling
limits, least-squares estimation with plug-in and random-weight bootstrap
inference, Monte Carlo studies, and an empirical pipeline for observed series.
"""

__version__ = "0.1.0"

from .affine import AffineSpec, Family, RegimeSpec, Trajectory, resolve_alpha, simulate
from .cir import CirParams, tabulate_ltu_limit
from .dataio import Dataset, apply_pipeline, load_csv, window_sensitivity
from .estimation import estimate, ols, poisson_qmle, wls
from .inference import bootstrap, bootstrap_ci, plugin_ci, pvalue_curve, test_alpha
from .montecarlo import ExperimentConfig, StudyReport

__all__ = [
    "AffineSpec", "Family", "RegimeSpec", "Trajectory", "resolve_alpha", "simulate",
    "CirParams", "tabulate_ltu_limit",
    "Dataset", "apply_pipeline", "load_csv", "window_sensitivity",
    "estimate", "ols", "poisson_qmle", "wls",
    "bootstrap", "bootstrap_ci", "plugin_ci", "pvalue_curve", "test_alpha",
    "ExperimentConfig", "StudyReport",
]
