"""Seeded synthetic panels with staggered adoption and known effects.

Outcomes follow ``Y[i,t] = alpha[i] + beta[t] + gamma[i] * f[t] + delta(t - a_i + 1) * D[i,t] + eps[i,t]``
with normal draws for every random component. Units are ordered controls
first, then cohorts in increasing adoption period.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidSpec
from .panel import PanelDataset


@dataclass(frozen=True)
class DGPSpec:
    """Parameters of the synthetic panel.

    ``cohorts`` maps 1-based adoption period to cohort size. ``effects`` is
    either one sequence of dynamic effects shared by every cohort (entry
    ``ell - 1`` applies ``ell`` periods after adoption, missing entries are
    zero) or a mapping from adoption period to such a sequence.

    The interactive term is off unless ``factor_sd > 0`` or an explicit
    ``factor`` is given. ``loadings`` (one per unit, controls first) default
    to draws from ``N(1, loading_sd)``.
    """

    n_controls: int
    cohorts: Mapping[int, int]
    n_periods: int
    effects: Sequence[float] | Mapping[int, Sequence[float]] = ()
    unit_sd: float = 1.0
    time_sd: float = 1.0
    noise_sd: float = 1.0
    factor_sd: float = 0.0
    loading_sd: float = 0.5
    factor: Sequence[float] | None = None
    loadings: Sequence[float] | None = None
    seed: int = 0
    first_period: int = 1


@dataclass(frozen=True)
class TrueEffects:
    by_cohort: dict = field(default_factory=dict)
    event: dict = field(default_factory=dict)
    att: float = 0.0

    def to_dict(self) -> dict:
        return {
            "att": self.att,
            "event": {str(k): v for k, v in self.event.items()},
            "by_cohort": {str(a): list(v) for a, v in self.by_cohort.items()},
        }


def _check(spec: DGPSpec) -> None:
    T = spec.n_periods
    if spec.n_controls < 1:
        raise InvalidSpec("need at least one control unit")
    if not spec.cohorts:
        raise InvalidSpec("need at least one cohort")
    for a, size in spec.cohorts.items():
        if not 1 < a <= T:
            raise InvalidSpec(f"adoption period {a} must lie in 2..{T}")
        if size < 1:
            raise InvalidSpec(f"cohort {a} has size {size}")
    for name in ("unit_sd", "time_sd", "noise_sd", "factor_sd", "loading_sd"):
        if getattr(spec, name) < 0:
            raise InvalidSpec(f"{name} must be nonnegative")
    n = spec.n_controls + sum(spec.cohorts.values())
    if spec.loadings is not None and len(spec.loadings) != n:
        raise InvalidSpec(f"expected {n} loadings, got {len(spec.loadings)}")
    if spec.factor is not None and len(spec.factor) != T:
        raise InvalidSpec(f"expected {T} factor values, got {len(spec.factor)}")
    if isinstance(spec.effects, Mapping):
        extra = set(spec.effects) - set(spec.cohorts)
        if extra:
            raise InvalidSpec(f"effects given for unknown cohorts {sorted(extra)}")


def _effect_path(spec: DGPSpec, a: int) -> np.ndarray:
    horizon = spec.n_periods - a + 1
    raw = spec.effects.get(a, ()) if isinstance(spec.effects, Mapping) else spec.effects
    path = np.zeros(horizon)
    vals = np.asarray(list(raw), dtype=float)[:horizon]
    path[: vals.size] = vals
    return path


def true_effects(spec: DGPSpec) -> TrueEffects:
    """Dynamic effects per cohort, their cohort-size weighted event-time
    averages, and the implied ATT."""
    _check(spec)
    T = spec.n_periods
    cohorts = sorted(spec.cohorts)
    paths = {a: _effect_path(spec, a) for a in cohorts}
    t_tr = T - cohorts[0] + 1
    event = {}
    for ell in range(1, t_tr + 1):
        eff = [a for a in cohorts if a - 1 + ell <= T]
        n = sum(spec.cohorts[a] for a in eff)
        event[ell] = float(sum(spec.cohorts[a] / n * paths[a][ell - 1] for a in eff))
    t_post = sum(spec.cohorts[a] * (T - a + 1) for a in cohorts)
    att = float(sum(spec.cohorts[a] * paths[a].sum() for a in cohorts) / t_post)
    return TrueEffects({a: tuple(float(x) for x in paths[a]) for a in cohorts}, event, att)


def generate(spec: DGPSpec) -> tuple[PanelDataset, TrueEffects]:
    _check(spec)
    rng = np.random.default_rng(spec.seed)
    T = spec.n_periods
    cohorts = sorted(spec.cohorts)
    adoption = np.concatenate(
        [np.zeros(spec.n_controls, dtype=int)] + [np.full(spec.cohorts[a], a) for a in cohorts]
    )
    N = adoption.size
    # draw order is fixed so a seed always yields the same panel
    alpha = rng.normal(0.0, 1.0, N) * spec.unit_sd
    beta = rng.normal(0.0, 1.0, T) * spec.time_sd
    f_draw = rng.normal(0.0, 1.0, T) * spec.factor_sd
    g_draw = 1.0 + rng.normal(0.0, 1.0, N) * spec.loading_sd
    eps = rng.normal(0.0, 1.0, (N, T)) * spec.noise_sd
    factor = np.asarray(spec.factor, dtype=float) if spec.factor is not None else f_draw
    loadings = np.asarray(spec.loadings, dtype=float) if spec.loadings is not None else g_draw

    Y = alpha[:, None] + beta[None, :] + np.outer(loadings, factor) + eps
    t = np.arange(1, T + 1)
    D = (adoption[:, None] > 0) & (t[None, :] >= adoption[:, None])
    for a in cohorts:
        rows = adoption == a
        Y[rows, a - 1 :] += _effect_path(spec, a)[None, :]

    width = len(str(N))
    labels = [f"u{i + 1:0{width}d}" for i in range(N)]
    times = list(range(spec.first_period, spec.first_period + T))
    panel = PanelDataset.from_arrays(labels, times, Y, D.astype(np.int8))
    return panel, true_effects(spec)


def panel_to_csv(panel: PanelDataset, unit="unit", time="time", outcome="outcome", treatment="treatment") -> str:
    """Long-format CSV text; floats are written with ``repr`` so they round-trip exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([unit, time, outcome, treatment])
    for i, u in enumerate(panel.unit_labels):
        for j, t in enumerate(panel.time_labels):
            writer.writerow([u, t, repr(float(panel.outcome[i, j])), int(panel.treatment[i, j])])
    return buf.getvalue()
