"""Event-study synthetic difference-in-differences for balanced panels."""

__version__ = "0.1.0"

from .dgp import DGPSpec, TrueEffects, generate
from .errors import *  # noqa: F401,F403
from .estimators import (
    CohortEstimate,
    EstimateOptions,
    EstimationResult,
    EventEffect,
    att,
    estimate,
    placebo_effects,
    pre_gap,
    tau_cohort,
    tau_cohort_ell,
    tau_ell,
)
from .inference import VarianceResult, bootstrap_se, confidence_interval, placebo_se
from .panel import CohortStructure, PanelDataset, cohort_subpanel, derive_cohorts, load_panel
from .weights import (
    SolverOptions,
    WeightSet,
    fit_weights,
    regularization_zeta,
    simplex_regression,
    solve_time_weights,
    solve_unit_weights,
)
