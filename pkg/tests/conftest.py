import numpy as np
import pytest

from sdid_event.dgp import DGPSpec, generate
from sdid_event.panel import PanelDataset

_CRITERIA = []


def pytest_configure(config):
    config.acceptance_lines = _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
        _CRITERIA.append(line)
        print(line)
        assert ok, line

    return record


def make_panel(Y, adoption, times=None, labels=None):
    """Panel from an outcome matrix and 1-based adoption periods (0 = never)."""
    Y = np.asarray(Y, dtype=float)
    N, T = Y.shape
    t = np.arange(1, T + 1)
    adoption = np.asarray(adoption)
    D = ((adoption[:, None] > 0) & (t[None, :] >= adoption[:, None])).astype(int)
    labels = labels or [f"u{i}" for i in range(N)]
    times = times or list(range(1, T + 1))
    return PanelDataset.from_arrays(labels, times, Y, D)


@pytest.fixture
def p1():
    """Two controls, one treated unit adopting at period 3."""
    Y = [[1, 2, 3, 4], [3, 3, 3, 3], [2, 3, 4, 10]]
    return make_panel(Y, [0, 0, 3], labels=["c1", "c2", "t"])


def random_staggered_spec(seed, max_units=30, max_periods=12, max_cohorts=4):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(3, max_periods + 1))
    n_cohorts = int(rng.integers(1, min(max_cohorts, T - 1) + 1))
    dates = sorted(rng.choice(np.arange(2, T + 1), size=n_cohorts, replace=False).tolist())
    n_treated_max = max_units - 1
    sizes = {}
    for a in dates:
        sizes[int(a)] = int(rng.integers(1, max(2, n_treated_max // (2 * n_cohorts)) + 1))
    n_controls = int(rng.integers(1, max_units - sum(sizes.values()) + 1))
    return DGPSpec(
        n_controls=n_controls,
        cohorts=sizes,
        n_periods=T,
        effects=rng.normal(0, 2, T).tolist(),
        noise_sd=float(rng.uniform(0, 2)),
        factor_sd=float(rng.choice([0.0, 1.0])),
        seed=seed,
    )


def random_staggered_panel(seed, **kw):
    return generate(random_staggered_spec(seed, **kw))[0]
