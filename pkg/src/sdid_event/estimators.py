"""Cohort, dynamic, event-study and ATT point estimates.

For a cohort adopting at period ``a`` the building block is the gap between
the treated-cohort mean and the omega-weighted control mean at period ``t``.
Dynamic effects subtract the lambda-weighted pre-period gap from the gap at
``t = a - 1 + ell``; the cohort effect is their average over post periods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonOutOfRange, SDIDError
from .panel import CohortStructure, PanelDataset, cohort_subpanel, derive_cohorts
from .weights import SolverOptions, WeightSet, fit_weights

PLACEBO_CENTERING = "pre_gap"


@dataclass(frozen=True)
class EstimateOptions:
    solver: SolverOptions = field(default_factory=SolverOptions)
    uniform_weights: bool = False


@dataclass(frozen=True, eq=False)
class CohortEstimate:
    cohort: int
    n_treated: int
    tau: float
    dynamic: dict
    placebo: dict
    weights: WeightSet

    @property
    def horizon(self) -> int:
        return len(self.dynamic)


@dataclass(frozen=True)
class EventEffect:
    estimate: float
    n_treated: int


@dataclass(frozen=True, eq=False)
class EstimationResult:
    att: float
    event: dict
    placebo: dict
    cohorts: list
    structure: CohortStructure

    @property
    def converged(self) -> bool:
        return all(c.weights.converged for c in self.cohorts)

    def cohort(self, a: int) -> CohortEstimate:
        for c in self.cohorts:
            if c.cohort == a:
                return c
        raise KeyError(a)


def _gaps(subpanel: PanelDataset, weights: WeightSet) -> np.ndarray:
    """Treated mean minus synthetic control, for every period."""
    ctrl = subpanel.control_mask
    Y = subpanel.outcome
    return Y[~ctrl].mean(axis=0) - weights.omega @ Y[ctrl]


def pre_gap(subpanel: PanelDataset, weights: WeightSet) -> float:
    gaps = _gaps(subpanel, weights)
    return float(weights.lambda_ @ gaps[: weights.cohort - 1])


def tau_cohort_ell(subpanel: PanelDataset, weights: WeightSet, ell: int) -> float:
    a = weights.cohort
    t = a - 1 + ell
    if ell < 1 or t > subpanel.n_periods:
        raise HorizonOutOfRange(f"event time {ell} is outside 1..{subpanel.n_periods - a + 1} for cohort {a}")
    gaps = _gaps(subpanel, weights)
    return float(gaps[t - 1] - weights.lambda_ @ gaps[: a - 1])


def tau_cohort(subpanel: PanelDataset, weights: WeightSet) -> float:
    a = weights.cohort
    gaps = _gaps(subpanel, weights)
    return float(gaps[a - 1 :].mean() - weights.lambda_ @ gaps[: a - 1])


def placebo_effects(subpanel: PanelDataset, weights: WeightSet) -> dict:
    """Dynamic-effect contrast at pre-periods, keyed by ``ell = -(a-2) .. 0``.

    Centered on the same lambda-weighted pre-period gap, so their
    lambda-weighted mean is zero.
    """
    a = weights.cohort
    gaps = _gaps(subpanel, weights)
    base = weights.lambda_ @ gaps[: a - 1]
    return {t - a + 1: float(gaps[t - 1] - base) for t in range(a - 1, 0, -1)}


def tau_ell(cohort_estimates, structure: CohortStructure, ell: int) -> float:
    """Cohort-size weighted average of dynamic effects at event time ``ell``."""
    if not 1 <= ell <= structure.t_tr:
        raise HorizonOutOfRange(f"event time {ell} is outside 1..{structure.t_tr}")
    by_cohort = {c.cohort: c for c in cohort_estimates}
    n_ell = structure.n_tr_by_ell[ell]
    return sum(
        structure.n_tr_by_cohort[a] / n_ell * by_cohort[a].dynamic[ell]
        for a in structure.effective_cohorts[ell]
    )


def att(cohort_estimates, structure: CohortStructure) -> float:
    by_cohort = {c.cohort: c for c in cohort_estimates}
    return sum(
        structure.t_post_by_cohort[a] / structure.t_post * by_cohort[a].tau
        for a in structure.adoption_dates
    )


def _placebo_event(cohort_estimates) -> dict:
    out = {}
    depth = max(len(c.placebo) for c in cohort_estimates)
    for ell in range(0, -depth, -1):
        parts = [(c.n_treated, c.placebo[ell]) for c in cohort_estimates if ell in c.placebo]
        n = sum(k for k, _ in parts)
        out[ell] = EventEffect(sum(k / n * v for k, v in parts), n)
    return out


def estimate_cohort(
    panel: PanelDataset, structure: CohortStructure, a: int, options: EstimateOptions
) -> CohortEstimate:
    sub = cohort_subpanel(panel, structure, a)
    weights = fit_weights(sub, options.solver, uniform=options.uniform_weights)
    horizon = structure.horizon_by_cohort[a]
    return CohortEstimate(
        cohort=a,
        n_treated=structure.n_tr_by_cohort[a],
        tau=tau_cohort(sub, weights),
        dynamic={ell: tau_cohort_ell(sub, weights, ell) for ell in range(1, horizon + 1)},
        placebo=placebo_effects(sub, weights),
        weights=weights,
    )


def estimate(panel: PanelDataset, options: EstimateOptions | None = None) -> EstimationResult:
    """Estimate every cohort against the never-treated pool and aggregate."""
    options = options or EstimateOptions()
    structure = derive_cohorts(panel)
    cohorts = []
    for a in structure.adoption_dates:
        try:
            cohorts.append(estimate_cohort(panel, structure, a, options))
        except SDIDError as exc:
            exc.cohort = a
            exc.args = (f"cohort {panel.time_label(a)}: {exc}",) + exc.args[1:]
            raise
    event = {
        ell: EventEffect(tau_ell(cohorts, structure, ell), structure.n_tr_by_ell[ell])
        for ell in range(1, structure.t_tr + 1)
    }
    return EstimationResult(
        att=att(cohorts, structure),
        event=event,
        placebo=_placebo_event(cohorts),
        cohorts=cohorts,
        structure=structure,
    )
