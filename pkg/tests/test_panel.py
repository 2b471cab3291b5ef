import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_panel, random_staggered_panel
from sdid_event.dgp import panel_to_csv
from sdid_event.errors import (
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
from sdid_event.panel import cohort_subpanel, derive_cohorts, load_panel


def csv_bytes(rows, header="id,t,y,d"):
    text = header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n"
    return io.BytesIO(text.encode())


def load(rows, **kw):
    return load_panel(csv_bytes(rows, **kw), unit="id", time="t", outcome="y", treatment="d")


MINIMAL = [("A", 1, 1.0, 0), ("A", 2, 2.0, 0), ("B", 1, 1.5, 0), ("B", 2, 4.0, 1)]


class TestLoadPanel:
    def test_minimal_valid_panel(self):
        panel = load(MINIMAL)
        assert panel.unit_labels == ("A", "B")
        assert panel.time_labels == (1, 2)
        np.testing.assert_array_equal(panel.outcome, [[1.0, 2.0], [1.5, 4.0]])
        assert derive_cohorts(panel).n_controls == 1

    def test_controls_placed_first(self):
        rows = [("T", 1, 0, 0), ("T", 2, 1, 1), ("C", 1, 0, 0), ("C", 2, 0, 0)]
        assert load(rows).unit_labels == ("C", "T")

    def test_treated_ordered_by_adoption_then_input_order(self):
        rows = []
        for unit, a in [("late", 3), ("early2", 2), ("ctrl", 0), ("early1", 2)]:
            for t in (1, 2, 3):
                rows.append((unit, t, 0.0, int(a > 0 and t >= a)))
        assert load(rows).unit_labels == ("ctrl", "early2", "early1", "late")

    def test_non_absorbing(self):
        rows = [("A", 1, 0, 0), ("A", 2, 0, 0), ("B", 1, 0, 1), ("B", 2, 0, 0)]
        with pytest.raises(NonAbsorbingTreatment) as exc:
            load(rows)
        assert exc.value.unit == "B"

    def test_missing_cell(self):
        with pytest.raises(MissingCell) as exc:
            load([r for r in MINIMAL if r[:2] != ("A", 2)])
        assert (exc.value.unit, exc.value.time) == ("A", 2)

    def test_treated_from_first_period(self):
        rows = [("A", 1, 0, 0), ("A", 2, 0, 0), ("B", 1, 0, 1), ("B", 2, 0, 1)]
        with pytest.raises(TreatedFromFirstPeriod):
            load(rows)

    def test_no_controls(self):
        rows = [("A", 1, 0, 0), ("A", 2, 0, 1), ("B", 1, 0, 0), ("B", 2, 0, 1)]
        with pytest.raises(NoControls):
            load(rows)

    def test_no_treated(self):
        rows = [("A", 1, 0, 0), ("A", 2, 0, 0)]
        with pytest.raises(NoTreated):
            load(rows)

    @pytest.mark.parametrize(
        "bad, row",
        [(("B", 2, "abc", 1), 5), (("B", 2, 4.0, 2), 5), (("B", "x", 4.0, 1), 5), (("B", 2, "nan", 1), 5)],
    )
    def test_parse_error_reports_row(self, bad, row):
        with pytest.raises(ParseError) as exc:
            load(MINIMAL[:3] + [bad])
        assert exc.value.row == row
        assert f"row {row}" in str(exc.value)

    def test_short_row(self):
        with pytest.raises(ParseError) as exc:
            load_panel(io.BytesIO(b"id,t,y,d\nA,1,2\n"), "id", "t", "y", "d")
        assert exc.value.row == 2

    def test_missing_column(self):
        with pytest.raises(ParseError, match="'d'"):
            load(MINIMAL, header="id,t,y,treat")

    def test_duplicate_cell(self):
        with pytest.raises(DuplicateCell):
            load(MINIMAL + [("A", 1, 1.0, 0)])

    def test_time_gap_rejected(self):
        rows = [(u, t, 0.0, int(u == "B" and t == 3)) for u in "AB" for t in (1, 3)]
        with pytest.raises(TimeGap):
            load(rows)

    def test_float_formatted_integers_accepted(self):
        rows = [(u, f"{t}.0", y, f"{d}.0") for u, t, y, d in MINIMAL]
        assert load(rows).time_labels == (1, 2)

    def test_stream_left_open(self):
        stream = csv_bytes(MINIMAL)
        load_panel(stream, "id", "t", "y", "d")
        assert not stream.closed

    def test_roundtrip_through_csv(self):
        panel = random_staggered_panel(3)
        again = load_panel(io.BytesIO(panel_to_csv(panel).encode()))
        assert again.unit_labels == panel.unit_labels
        np.testing.assert_array_equal(again.outcome, panel.outcome)
        np.testing.assert_array_equal(again.treatment, panel.treatment)


class TestDeriveCohorts:
    def test_two_cohorts(self):
        panel = make_panel(np.zeros((4, 3)), [0, 2, 2, 3])
        s = derive_cohorts(panel)
        assert s.adoption_dates == (2, 3)
        assert s.t_post == 5
        assert s.t_tr == 2
        assert s.effective_cohorts[1] == (2, 3)
        assert s.n_tr_by_ell[1] == 3
        assert s.effective_cohorts[2] == (2,)
        assert s.n_tr_by_ell[2] == 2

    def test_single_cohort(self):
        T, a, n_tr = 7, 4, 3
        s = derive_cohorts(make_panel(np.zeros((5, T)), [0, 0, a, a, a]))
        assert s.t_post == n_tr * (T - a + 1)

    def test_all_adopt_last_period(self):
        s = derive_cohorts(make_panel(np.zeros((3, 4)), [0, 4, 4]))
        assert s.horizon_by_cohort[4] == 1
        assert s.t_tr == 1
        assert 2 not in s.effective_cohorts

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_bookkeeping_invariants(self, seed):
        panel = random_staggered_panel(seed)
        s = derive_cohorts(panel)
        # brute-force count of treated cells
        assert s.t_post == int(panel.treatment.sum())
        treated = sorted(i for a in s.adoption_dates for i in s.members[a])
        assert treated == sorted(set(range(panel.n_units)) - set(s.control_indices))
        assert s.effective_cohorts[1] == s.adoption_dates
        for ell in range(1, s.t_tr + 1):
            assert s.n_tr_by_ell[ell] == sum(s.n_tr_by_cohort[a] for a in s.effective_cohorts[ell])
            for a in s.adoption_dates:
                assert (a in s.effective_cohorts[ell]) == (a - 1 + ell <= panel.n_periods)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.randoms(use_true_random=False))
    def test_invariant_to_row_order(self, seed, rnd):
        panel = random_staggered_panel(seed)
        lines = panel_to_csv(panel).splitlines()
        body = lines[1:]
        rnd.shuffle(body)
        shuffled = load_panel(io.BytesIO(("\n".join([lines[0]] + body) + "\n").encode()))

        def by_label(p):
            s = derive_cohorts(p)
            return {a: {p.unit_labels[i] for i in s.members[a]} for a in s.adoption_dates}, {
                p.unit_labels[i] for i in s.control_indices
            }

        assert by_label(shuffled) == by_label(panel)
        assert derive_cohorts(shuffled).t_post == derive_cohorts(panel).t_post


class TestCohortSubpanel:
    def test_excludes_other_cohorts(self):
        panel = make_panel(np.arange(15.0).reshape(5, 3), [0, 0, 2, 2, 3])
        s = derive_cohorts(panel)
        sub = cohort_subpanel(panel, s, 2)
        assert sub.unit_labels == ("u0", "u1", "u2", "u3")
        assert sub.n_periods == 3

    def test_single_cohort_identity(self, p1):
        assert cohort_subpanel(p1, derive_cohorts(p1), 3) is p1

    def test_unknown_cohort(self, p1):
        with pytest.raises(UnknownCohort):
            cohort_subpanel(p1, derive_cohorts(p1), 2)


def test_take_relabels_duplicates(p1):
    boot = p1.take([0, 0, 2])
    assert boot.unit_labels == ("c1", "c1#1", "t")
    np.testing.assert_array_equal(boot.outcome[1], p1.outcome[0])
