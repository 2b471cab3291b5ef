"""Resampling standard errors and normal confidence intervals.

Replication ``b`` draws from its own Philox stream keyed by ``(seed, b)``,
so results do not depend on how replications are scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from statistics import NormalDist

import numpy as np

from .errors import DegeneratePanel, InsufficientControls, TooManyFailedDraws
from .estimators import EstimateOptions, EstimationResult, estimate
from .panel import PanelDataset, derive_cohorts

DEFAULT_REPS = 50
DEFAULT_LEVEL = 0.95
_MAX_ATTEMPTS_PER_REP = 100
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class VarianceResult:
    method: str
    reps: int
    seed: int
    se_att: float
    se_by_ell: dict = field(default_factory=dict)
    se_placebo: dict = field(default_factory=dict)
    ci_level: float = DEFAULT_LEVEL
    failed_reps: int = 0

    @classmethod
    def none(cls, level: float = DEFAULT_LEVEL) -> "VarianceResult":
        return cls("none", 0, 0, math.nan, {}, {}, level, 0)


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    """Independent counter-based stream for replication ``b``."""
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=(int(b),))
    return np.random.Generator(np.random.Philox(ss))


def confidence_interval(estimate: float, se: float, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    if se < 0:
        raise ValueError("standard error must be nonnegative")
    z = NormalDist().inv_cdf((1.0 + level) / 2.0)
    return estimate - z * se, estimate + z * se


def _summaries(result: EstimationResult):
    return (
        result.att,
        {ell: e.estimate for ell, e in result.event.items()},
        {ell: e.estimate for ell, e in result.placebo.items()},
    )


def _bootstrap_replicate(b: int, panel: PanelDataset, options: EstimateOptions, seed: int, max_attempts: int):
    rng = replicate_rng(seed, b)
    control = panel.control_mask
    N = panel.n_units
    failed = 0
    while True:
        idx = rng.integers(0, N, size=N)
        n_co = int(control[idx].sum())
        if 0 < n_co < N:
            break
        failed += 1
        if failed >= max_attempts:
            raise TooManyFailedDraws(
                f"replication {b}: {failed} draws without both treated and control units"
            )
    return _summaries(estimate(panel.take(np.sort(idx)), options)), failed


def _placebo_replicate(b: int, panel: PanelDataset, options: EstimateOptions, seed: int, sizes):
    rng = replicate_rng(seed, b)
    controls = np.flatnonzero(panel.control_mask)
    n_tr = sum(n for _, n in sizes)
    chosen = rng.permutation(controls.size)[:n_tr]
    Y = panel.outcome[controls]
    D = np.zeros_like(Y, dtype=np.int8)
    start = 0
    for a, n in sizes:
        D[chosen[start : start + n], a - 1 :] = 1
        start += n
    labels = [panel.unit_labels[i] for i in controls]
    placebo_panel = PanelDataset.from_arrays(labels, panel.time_labels, Y, D)
    return _summaries(estimate(placebo_panel, options)), 0


def _sd(values) -> float:
    vals = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if vals.size < 2:
        return math.nan
    return float(np.std(vals, ddof=1))


def _run(worker, reps: int, n_jobs: int):
    if n_jobs is None or n_jobs <= 1:
        return [worker(b) for b in range(reps)]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        # map preserves replication order regardless of completion order
        return list(pool.map(worker, range(reps), chunksize=max(1, reps // (4 * n_jobs))))


def _collect(method, outputs, reps, seed, level, full: EstimationResult) -> VarianceResult:
    atts = [o[0][0] for o in outputs]
    se_ell = {ell: _sd([o[0][1].get(ell) for o in outputs]) for ell in full.event}
    se_pl = {ell: _sd([o[0][2].get(ell) for o in outputs]) for ell in full.placebo}
    failed = sum(o[1] for o in outputs)
    return VarianceResult(method, reps, seed, _sd(atts), se_ell, se_pl, level, failed)


def bootstrap_se(
    panel: PanelDataset,
    options: EstimateOptions | None = None,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    level: float = DEFAULT_LEVEL,
    n_jobs: int = 1,
    result: EstimationResult | None = None,
) -> VarianceResult:
    """Unit-clustered bootstrap: resample N units with replacement and re-estimate.

    Draws lacking treated or control units are redrawn; ``failed_reps``
    counts those rejected draws. Event times absent from a replication (its
    earliest cohort was not drawn) are skipped for that replication.
    """
    if reps < 2:
        raise ValueError("need at least 2 replications")
    options = options or EstimateOptions()
    n_co = int(panel.control_mask.sum())
    if n_co in (0, panel.n_units):
        raise DegeneratePanel("bootstrap needs both treated and control units")
    full = result or estimate(panel, options)
    worker = partial(
        _bootstrap_replicate,
        panel=panel,
        options=options,
        seed=seed,
        max_attempts=_MAX_ATTEMPTS_PER_REP * reps,
    )
    outputs = _run(worker, reps, n_jobs)
    failed = sum(o[1] for o in outputs)
    if reps + failed > _MAX_ATTEMPTS_PER_REP * reps:
        raise TooManyFailedDraws(f"{failed} rejected draws for {reps} replications")
    return _collect("bootstrap", outputs, reps, seed, level, full)


def placebo_se(
    panel: PanelDataset,
    options: EstimateOptions | None = None,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    level: float = DEFAULT_LEVEL,
    n_jobs: int = 1,
    result: EstimationResult | None = None,
) -> VarianceResult:
    """Placebo variance: give randomly chosen controls the observed cohort
    structure and re-estimate on the control-only panel."""
    if reps < 2:
        raise ValueError("need at least 2 replications")
    options = options or EstimateOptions()
    structure = derive_cohorts(panel)
    if structure.n_controls <= structure.n_treated:
        raise InsufficientControls(
            f"placebo inference needs more controls ({structure.n_controls}) than treated units ({structure.n_treated})"
        )
    full = result or estimate(panel, options)
    sizes = tuple((a, structure.n_tr_by_cohort[a]) for a in structure.adoption_dates)
    worker = partial(_placebo_replicate, panel=panel, options=options, seed=seed, sizes=sizes)
    outputs = _run(worker, reps, n_jobs)
    return _collect("placebo", outputs, reps, seed, level, full)
