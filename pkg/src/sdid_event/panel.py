"""Balanced panel ingestion, validation and cohort bookkeeping.

Periods are addressed internally by 1-based position ``t = 1..T``; time
labels are consecutive integers, so position ``t`` corresponds to label
``time_labels[0] + t - 1``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import BinaryIO, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateCell,
    MissingCell,
    NoControls,
    NonAbsorbingTreatment,
    NoTreated,
    ParseError,
    TimeGap,
    TreatedFromFirstPeriod,
    UnknownCohort,
)


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced N x T panel of outcomes and an absorbing binary treatment.

    Construction validates every structural invariant. Use
    :meth:`from_arrays` to also put units in canonical order (never-treated
    first, then treated units by adoption period, ties kept in input order).
    """

    unit_labels: tuple
    time_labels: tuple
    outcome: np.ndarray
    treatment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "unit_labels", tuple(str(u) for u in self.unit_labels))
        object.__setattr__(self, "time_labels", tuple(int(t) for t in self.time_labels))
        object.__setattr__(self, "outcome", _frozen(self.outcome, float))
        object.__setattr__(self, "treatment", _frozen(self.treatment, np.int8))
        _validate(self)

    @classmethod
    def from_arrays(cls, unit_labels, time_labels, outcome, treatment) -> "PanelDataset":
        outcome = np.asarray(outcome, dtype=float)
        treatment = np.asarray(treatment)
        order = canonical_unit_order(treatment)
        units = [unit_labels[i] for i in order]
        return cls(units, time_labels, outcome[order], treatment[order])

    @property
    def n_units(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_periods(self) -> int:
        return self.outcome.shape[1]

    @property
    def adoption(self) -> np.ndarray:
        """1-based adoption period per unit, 0 for never-treated units."""
        return adoption_periods(self.treatment)

    @property
    def control_mask(self) -> np.ndarray:
        return self.adoption == 0

    def time_label(self, t: int) -> int:
        """Calendar label of 1-based period position ``t``."""
        return self.time_labels[t - 1]

    def take(self, indices: Sequence[int]) -> "PanelDataset":
        """Panel built from the given unit rows; repeated rows become distinct units."""
        indices = [int(i) for i in indices]
        seen: dict[int, int] = {}
        labels = []
        for i in indices:
            k = seen.get(i, 0)
            seen[i] = k + 1
            labels.append(self.unit_labels[i] if k == 0 else f"{self.unit_labels[i]}#{k}")
        return PanelDataset.from_arrays(
            labels, self.time_labels, self.outcome[indices], self.treatment[indices]
        )


def adoption_periods(treatment: np.ndarray) -> np.ndarray:
    treated = np.asarray(treatment) == 1
    first = np.argmax(treated, axis=1) + 1
    return np.where(treated.any(axis=1), first, 0)


def canonical_unit_order(treatment) -> np.ndarray:
    adoption = adoption_periods(treatment)
    # never-treated sort first; stable sort keeps input order within ties
    key = np.where(adoption == 0, 0, adoption)
    return np.argsort(key, kind="stable")


def _validate(panel: PanelDataset) -> None:
    Y, D = panel.outcome, panel.treatment
    N = len(panel.unit_labels)
    T = len(panel.time_labels)
    if Y.shape != (N, T) or D.shape != (N, T):
        raise ValueError(f"outcome and treatment must both be {N}x{T}")
    if len(set(panel.unit_labels)) != N:
        raise DuplicateCell("duplicate unit labels")
    times = panel.time_labels
    if any(b - a != 1 for a, b in zip(times, times[1:])):
        raise TimeGap(f"time labels must be consecutive integers, got {list(times)}")
    if not np.all(np.isfinite(Y)):
        raise ParseError("outcome contains non-finite values")
    if not np.all((D == 0) | (D == 1)):
        raise ParseError("treatment must be 0/1")
    for i, unit in enumerate(panel.unit_labels):
        row = D[i]
        if row.any():
            first = int(np.argmax(row))
            if not row[first:].all():
                raise NonAbsorbingTreatment(unit)
            if first == 0:
                raise TreatedFromFirstPeriod(unit)
    ever = D.any(axis=1)
    if ever.all():
        raise NoControls("panel has no never-treated units")
    if not ever.any():
        raise NoTreated("panel has no treated units")


def _parse_time(text: str, row: int) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"time value {text!r} is not an integer", row) from None
    if not value.is_integer():
        raise ParseError(f"time value {text!r} is not an integer", row)
    return int(value)


def _parse_outcome(text: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"outcome value {text!r} is not a number", row) from None
    if not math.isfinite(value):
        raise ParseError(f"outcome value {text!r} is not finite", row)
    return value


def _parse_treatment(text: str, row: int) -> int:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"treatment value {text!r} is not 0/1", row) from None
    if value not in (0.0, 1.0):
        raise ParseError(f"treatment value {text!r} is not 0/1", row)
    return int(value)


def load_panel(
    source: BinaryIO | str,
    unit: str = "unit",
    time: str = "time",
    outcome: str = "outcome",
    treatment: str = "treatment",
) -> PanelDataset:
    """Read a long-format CSV (one row per unit-period) into a validated panel.

    ``source`` is a binary stream or a filesystem path. Row numbers in
    :class:`ParseError` count the header as row 1.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            return load_panel(fh, unit, time, outcome, treatment)

    text = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
    try:
        return _read_long_csv(text, unit, time, outcome, treatment)
    finally:
        text.detach()


def _read_long_csv(text, unit, time, outcome, treatment) -> PanelDataset:
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    except (csv.Error, UnicodeDecodeError) as exc:
        raise ParseError(str(exc), 1) from None
    header = [h.strip() for h in header]
    cols = {}
    for role, name in (("unit", unit), ("time", time), ("outcome", outcome), ("treatment", treatment)):
        if name not in header:
            raise ParseError(f"column {name!r} ({role}) not found in header", 1)
        cols[role] = header.index(name)
    width = max(cols.values()) + 1

    cells: dict[tuple[str, int], tuple[float, int]] = {}
    unit_order: dict[str, None] = {}
    rownum = 1
    try:
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) < width:
                raise ParseError(f"expected at least {width} fields, got {len(rec)}", rownum)
            u = rec[cols["unit"]].strip()
            if not u:
                raise ParseError("empty unit identifier", rownum)
            t = _parse_time(rec[cols["time"]].strip(), rownum)
            y = _parse_outcome(rec[cols["outcome"]].strip(), rownum)
            d = _parse_treatment(rec[cols["treatment"]].strip(), rownum)
            if (u, t) in cells:
                raise DuplicateCell(f"duplicate observation for unit {u!r} at time {t}", rownum)
            cells[(u, t)] = (y, d)
            unit_order.setdefault(u, None)
    except (csv.Error, UnicodeDecodeError) as exc:
        raise ParseError(str(exc), rownum + 1) from None

    if not cells:
        raise ParseError("no data rows", 2)
    units = list(unit_order)
    times = sorted({t for _, t in cells})
    if times[-1] - times[0] + 1 != len(times):
        raise TimeGap(f"time periods are not consecutive: {times}")

    Y = np.empty((len(units), len(times)))
    D = np.empty((len(units), len(times)), dtype=np.int8)
    for i, u in enumerate(units):
        for j, t in enumerate(times):
            try:
                Y[i, j], D[i, j] = cells[(u, t)]
            except KeyError:
                raise MissingCell(u, t) from None
    return PanelDataset.from_arrays(units, times, Y, D)


@dataclass(frozen=True)
class CohortStructure:
    """Adoption cohorts and the counts derived from them.

    Cohorts and event times are 1-based period positions. ``horizon_by_cohort``
    is the number of periods from adoption to the end of the panel, and
    ``effective_cohorts[ell]`` lists the cohorts observed ``ell`` periods after
    adoption (``ell = 1`` is the adoption period itself).
    """

    n_periods: int
    adoption_dates: tuple
    members: Mapping[int, tuple]
    control_indices: tuple
    n_tr_by_cohort: Mapping[int, int] = field(init=False)
    horizon_by_cohort: Mapping[int, int] = field(init=False)
    t_post_by_cohort: Mapping[int, int] = field(init=False)
    t_post: int = field(init=False)
    t_tr: int = field(init=False)
    effective_cohorts: Mapping[int, tuple] = field(init=False)
    n_tr_by_ell: Mapping[int, int] = field(init=False)

    def __post_init__(self):
        T = self.n_periods
        A = self.adoption_dates
        n_tr = {a: len(self.members[a]) for a in A}
        horizon = {a: T - a + 1 for a in A}
        t_post_a = {a: n_tr[a] * horizon[a] for a in A}
        t_tr = max(horizon.values())
        eff = {ell: tuple(a for a in A if a - 1 + ell <= T) for ell in range(1, t_tr + 1)}
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("n_tr_by_cohort", n_tr)
        set_("horizon_by_cohort", horizon)
        set_("t_post_by_cohort", t_post_a)
        set_("t_post", sum(t_post_a.values()))
        set_("t_tr", t_tr)
        set_("effective_cohorts", eff)
        set_("n_tr_by_ell", {ell: sum(n_tr[a] for a in cs) for ell, cs in eff.items()})

    @property
    def n_controls(self) -> int:
        return len(self.control_indices)

    @property
    def n_treated(self) -> int:
        return sum(self.n_tr_by_cohort.values())

    def cohort_of(self, unit_index: int) -> int:
        for a in self.adoption_dates:
            if unit_index in self.members[a]:
                return a
        return 0


def derive_cohorts(panel: PanelDataset) -> CohortStructure:
    adoption = panel.adoption
    dates = tuple(sorted(int(a) for a in set(adoption.tolist()) if a > 0))
    members = {a: tuple(int(i) for i in np.flatnonzero(adoption == a)) for a in dates}
    controls = tuple(int(i) for i in np.flatnonzero(adoption == 0))
    return CohortStructure(panel.n_periods, dates, members, controls)


def cohort_subpanel(panel: PanelDataset, cohorts: CohortStructure, a: int) -> PanelDataset:
    """Never-treated units plus the members of cohort ``a``, over all periods."""
    if a not in cohorts.members:
        raise UnknownCohort(f"{a} is not an adoption period of this panel")
    rows = list(cohorts.control_indices) + list(cohorts.members[a])
    if rows == list(range(panel.n_units)):
        return panel
    return PanelDataset(
        [panel.unit_labels[i] for i in rows],
        panel.time_labels,
        panel.outcome[rows],
        panel.treatment[rows],
    )
