"""Unit and time weights for one adoption cohort.

Both weight problems share one core: a ridge-penalised least-squares fit
with a free intercept and weights restricted to the unit simplex. The core
is solved by Frank-Wolfe with away steps and exact line search, followed by
an equality-constrained solve on the active support whenever that lowers the
objective.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProblem, MaxIterationsWarning
from .panel import PanelDataset

TIME_RIDGE_FACTOR = 1e-6
_POLISH_EVERY = 25


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    max_iter: int = 10_000


@dataclass(frozen=True)
class SolverDiagnostics:
    objective: float
    iterations: int
    gap: float
    converged: bool
    method: str = "frank-wolfe"


@dataclass(frozen=True)
class WeightDiagnostics:
    unit: SolverDiagnostics
    time: SolverDiagnostics
    zeta_degenerate: bool = False

    @property
    def converged(self) -> bool:
        return self.unit.converged and self.time.converged


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Fitted weights for cohort ``cohort`` (a 1-based adoption period).

    ``omega`` follows the order of never-treated units in the subpanel;
    ``lambda_`` covers pre-periods ``1..cohort-1``.
    """

    cohort: int
    omega: np.ndarray
    omega_intercept: float
    lambda_: np.ndarray
    lambda_intercept: float
    zeta: float
    zeta_time: float
    diagnostics: WeightDiagnostics

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged


def _objective(A, b, ridge, w):
    r = A @ w - b
    return float(r @ r + ridge * (w @ w))


def _affine_optimum(A, b, root, support):
    k = support.size
    w0 = np.full(k, 1.0 / k)
    if k == 1:
        return w0
    AS = A[:, support]
    # orthonormal basis of {z : sum(z) == 0}
    basis = np.linalg.qr(np.eye(k) - 1.0 / k, mode="reduced")[0][:, : k - 1]
    lhs = np.vstack([AS @ basis, root * basis])
    rhs = np.concatenate([b - AS @ w0, -root * w0])
    z = np.linalg.lstsq(lhs, rhs, rcond=1e-14)[0]
    return w0 + basis @ z


def _polish(A, b, ridge, w):
    """Active-set refinement on the support of ``w``.

    Moves from ``w`` towards the minimizer over the affine hull of its
    support, dropping the first coordinate that would turn negative, until
    that minimizer is feasible. Solved as an augmented least-squares problem
    so tiny ridge terms stay resolvable. Returns None on numerical failure.
    """
    root = math.sqrt(ridge)
    x = w.copy()
    support = np.flatnonzero(x > 0)
    while support.size:
        sol = _affine_optimum(A, b, root, support)
        if not np.all(np.isfinite(sol)):
            return None
        cur = x[support]
        neg = sol < 0
        if not neg.any():
            out = np.zeros_like(w)
            out[support] = sol
            return out / out.sum()
        ratios = cur[neg] / (cur[neg] - sol[neg])
        step = float(ratios.min())
        x[support] = cur + step * (sol - cur)
        blocking = support[neg][ratios <= step]
        x[blocking] = 0.0
        np.maximum(x, 0.0, out=x)
        support = np.flatnonzero(x > 0)
    return None


def simplex_regression(targets, features, ridge: float = 0.0, options: SolverOptions | None = None):
    """Fit ``targets ~ intercept + features @ weights`` with simplex weights.

    Minimizes ``||intercept + features @ w - targets||^2 + ridge * ||w||^2``
    over ``w >= 0, sum(w) == 1`` and a free intercept. The intercept is
    profiled out by centering, and the problem is rescaled by the root mean
    square of the centered data so ``options.tolerance`` bounds the duality
    gap independently of the outcome units.

    Returns ``(weights, intercept, SolverDiagnostics)``. If the iteration cap
    is reached the best iterate is returned with ``converged=False`` and a
    :class:`MaxIterationsWarning` is issued.
    """
    options = options or SolverOptions()
    y = np.asarray(targets, dtype=float)
    F = np.asarray(features, dtype=float)
    if F.ndim != 2 or F.shape[0] != y.shape[0]:
        raise ValueError(f"features must be (rows, k) matching targets; got {F.shape} and {y.shape}")
    m, k = F.shape
    if m == 0 or k == 0:
        raise DegenerateProblem(f"empty weight problem ({m} rows, {k} weights)")
    if ridge < 0 or not math.isfinite(ridge):
        raise ValueError("ridge must be a nonnegative finite number")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in weight problem")

    Fc = F - F.mean(axis=0)
    yc = y - y.mean()
    scale = math.sqrt((np.sum(Fc * Fc) + np.sum(yc * yc)) / (m * (k + 1)))
    if scale == 0.0 or not math.isfinite(scale):
        scale = 1.0
    A = Fc / scale
    b = yc / scale
    rs = ridge / scale**2
    G = A.T @ A + rs * np.eye(k)
    q = A.T @ b

    w = np.full(k, 1.0 / k)
    it = 0
    gap = 0.0
    if k > 1:
        Gw = G @ w
        obj = _objective(A, b, rs, w)
        while True:
            g = 2.0 * (Gw - q)
            gw = float(g @ w)
            s = int(np.argmin(g))
            gap = gw - float(g[s])
            if gap < options.tolerance or it >= options.max_iter:
                break
            it += 1
            active = np.flatnonzero(w > 0)
            v = int(active[np.argmax(g[active])])
            if gap >= float(g[v]) - gw or w[v] >= 1.0:
                d = -w.copy()
                d[s] += 1.0
                Gd = G[:, s] - Gw
                step_max = 1.0
                away = False
            else:
                d = w.copy()
                d[v] -= 1.0
                Gd = Gw - G[:, v]
                step_max = w[v] / (1.0 - w[v])
                away = True
            curvature = float(d @ Gd)
            slope = float(g @ d)
            step = step_max if curvature <= 0 else min(step_max, -slope / (2.0 * curvature))
            w = w + step * d
            if away and step == step_max:
                w[v] = 0.0
            np.maximum(w, 0.0, out=w)
            w /= w.sum()
            Gw = G @ w
            obj = _objective(A, b, rs, w)

            if it % _POLISH_EVERY == 0 or gap < 10 * options.tolerance:
                cand = _polish(A, b, rs, w)
                if cand is not None:
                    cand_obj = _objective(A, b, rs, cand)
                    if cand_obj <= obj + 1e-15 * (1.0 + abs(obj)):
                        w, obj = cand, cand_obj
                        Gw = G @ w

        # final polish makes the result independent of the iterate path
        cand = _polish(A, b, rs, w)
        if cand is not None and _objective(A, b, rs, cand) <= obj + 1e-15 * (1.0 + abs(obj)):
            g = 2.0 * (G @ cand - q)
            cand_gap = float(g @ cand - g.min())
            if cand_gap < options.tolerance or cand_gap <= gap:
                w, gap = cand, cand_gap

    converged = gap < options.tolerance
    if not converged:
        warnings.warn(
            f"simplex solver stopped after {it} iterations with duality gap {gap:.3g}",
            MaxIterationsWarning,
            stacklevel=2,
        )
    resid = F @ w - y
    intercept = -float(resid.mean())
    fit = resid + intercept
    objective = float(fit @ fit + ridge * (w @ w))
    return w, intercept, SolverDiagnostics(objective, it, max(gap, 0.0) * scale**2, converged)


def _cohort_of(subpanel: PanelDataset) -> int:
    dates = set(subpanel.adoption.tolist()) - {0}
    if len(dates) != 1:
        raise ValueError(f"subpanel must contain exactly one cohort, found {sorted(dates)}")
    return dates.pop()


def _split(subpanel: PanelDataset):
    a = _cohort_of(subpanel)
    if a < 2:
        raise DegenerateProblem("cohort has no pre-treatment period")
    ctrl = subpanel.control_mask
    Y = subpanel.outcome
    return a, Y[ctrl], Y[~ctrl].mean(axis=0)


def solve_unit_weights(subpanel: PanelDataset, zeta: float, options: SolverOptions | None = None):
    """Weights over never-treated units matching the treated pre-period path.

    Ridge strength is ``zeta**2 * (a - 1)``.
    """
    a, Yc, treated_mean = _split(subpanel)
    pre = a - 1
    return simplex_regression(treated_mean[:pre], Yc[:, :pre].T, zeta**2 * pre, options)


def solve_time_weights(subpanel: PanelDataset, zeta_time: float, options: SolverOptions | None = None):
    """Weights over pre-periods matching each control's post-period mean."""
    a, Yc, _ = _split(subpanel)
    pre = a - 1
    targets = Yc[:, pre:].mean(axis=1)
    return simplex_regression(targets, Yc[:, :pre], zeta_time**2 * Yc.shape[0], options)


def noise_scale(subpanel: PanelDataset) -> tuple[float, int]:
    """Population std. dev. of control first differences among pre-periods.

    Returns ``(sigma, count)``; ``sigma`` is 0 when fewer than two
    differences are available.
    """
    a = _cohort_of(subpanel)
    Yc = subpanel.outcome[subpanel.control_mask, : a - 1]
    diffs = np.diff(Yc, axis=1).ravel()
    if diffs.size < 2:
        return 0.0, int(diffs.size)
    return float(np.std(diffs)), int(diffs.size)


def regularization_zeta(subpanel: PanelDataset) -> float:
    a = _cohort_of(subpanel)
    n_tr = int((~subpanel.control_mask).sum())
    horizon = subpanel.n_periods - a + 1
    sigma, _ = noise_scale(subpanel)
    return (n_tr * horizon) ** 0.25 * sigma


def _uniform(targets, features, ridge):
    F = np.asarray(features, dtype=float)
    w = np.full(F.shape[1], 1.0 / F.shape[1])
    resid = F @ w - np.asarray(targets, dtype=float)
    intercept = -float(resid.mean())
    fit = resid + intercept
    diag = SolverDiagnostics(float(fit @ fit + ridge * (w @ w)), 0, 0.0, True, "uniform")
    return w, intercept, diag


def fit_weights(
    subpanel: PanelDataset,
    options: SolverOptions | None = None,
    uniform: bool = False,
) -> WeightSet:
    """Regularization plus both weight problems for a single-cohort subpanel.

    With ``uniform=True`` the solver is bypassed and both weight vectors are
    flat, which turns the estimator into plain difference-in-differences.
    """
    a, Yc, treated_mean = _split(subpanel)
    pre = a - 1
    sigma, n_diffs = noise_scale(subpanel)
    zeta = regularization_zeta(subpanel)
    zeta_time = TIME_RIDGE_FACTOR * sigma
    if uniform:
        omega, w0, unit_diag = _uniform(treated_mean[:pre], Yc[:, :pre].T, zeta**2 * pre)
        lam, l0, time_diag = _uniform(Yc[:, pre:].mean(axis=1), Yc[:, :pre], zeta_time**2 * Yc.shape[0])
    else:
        omega, w0, unit_diag = solve_unit_weights(subpanel, zeta, options)
        lam, l0, time_diag = solve_time_weights(subpanel, zeta_time, options)
    omega.setflags(write=False)
    lam.setflags(write=False)
    return WeightSet(
        cohort=a,
        omega=omega,
        omega_intercept=w0,
        lambda_=lam,
        lambda_intercept=l0,
        zeta=zeta,
        zeta_time=zeta_time,
        diagnostics=WeightDiagnostics(unit_diag, time_diag, zeta_degenerate=n_diffs < 2),
    )
