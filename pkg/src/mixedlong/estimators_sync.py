"""Estimators of the synchronous coefficients that never touch ``Z``.

``fit_naive`` is pooled least squares on ``(1, X)``; ``fit_plm`` profiles out a
nonparametric intercept with the local-linear annihilator; ``fit_centering``
subtracts pooled Nadaraya-Watson means from ``Y`` and ``X``. All covariances are
subject-clustered sandwiches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError, FitReport, LongitudinalDataset
from .kernels import KernelSpec, _as_spec, apply_annihilator, nw_means, smooth_at
from .linalg import weighted_lstsq


@dataclass(frozen=True)
class ResidualSet:
    """Pooled residuals with the subject position of each observation."""

    group: np.ndarray
    times: np.ndarray
    values: np.ndarray

    def for_subject(self, i):
        sel = self.group == i
        return self.times[sel], self.values[sel]


def default_bandwidth(n, power=-0.6):
    return float(n) ** power


def _pooled(d: LongitudinalDataset):
    ps = d.pooled_sync
    if ps.t.size == 0:
        raise DataError("dataset has no synchronous observations")
    return ps


def _ols_report(method, names, design, y, groups, n_groups, **extra):
    fit = weighted_lstsq(design, y, names=list(names))
    cov = fit.sandwich(design, None, groups, n_groups)
    ee = design.T @ fit.residual
    return FitReport(
        method, names, fit.coef, cov, n_obs=int(y.size),
        diagnostics={"ee_norm": float(np.linalg.norm(ee)), "cond": fit.cond, **extra},
    ), fit


def fit_naive(d: LongitudinalDataset) -> FitReport:
    """Pooled OLS of ``Y`` on ``(1, X)``, ignoring ``Z`` entirely."""
    ps = _pooled(d)
    design = np.column_stack([np.ones(ps.t.size), ps.x])
    report, _ = _ols_report("naive", ("alpha",) + d.x_names, design, ps.y, ps.group, d.n)
    return report


def fit_pooled_full(d: LongitudinalDataset) -> FitReport:
    """Pooled OLS of ``Y`` on ``(1, X, Z)`` when ``Z`` is observed on the response grid.

    Only possible in simulation; every subject must have identical sync and
    async time grids.
    """
    for s in d.subjects:
        if s.n_sync != s.n_async or not np.array_equal(s.sync_times, s.async_times):
            raise DataError(f"subject {s.id}: Z is not observed on the response grid")
    ps = _pooled(d)
    pa = d.pooled_async
    design = np.column_stack([np.ones(ps.t.size), ps.x, pa.z])
    report, _ = _ols_report(
        "full", ("alpha",) + d.x_names + d.z_names, design, ps.y, ps.group, d.n
    )
    return report


def fit_plm(d: LongitudinalDataset, k, on_degenerate="error"):
    """Partial linear model fit with a local-linear nonparametric intercept.

    Returns ``(report, residuals)``. The residuals are the rows of
    ``(I - S)(Y - X beta)``; no intercept is reported because constants are
    annihilated.
    """
    k = _as_spec(k)
    ps = _pooled(d)
    ax = apply_annihilator(ps.t, k, ps.x, on_degenerate)
    ay = apply_annihilator(ps.t, k, ps.y, on_degenerate)
    fit = weighted_lstsq(ax, ay, names=list(d.x_names),
                         reference_norms=np.linalg.norm(ps.x, axis=0))
    cov = fit.sandwich(ax, None, ps.group, d.n)
    report = FitReport(
        "plm", d.x_names, fit.coef, cov, bandwidths={"h": k.h}, n_obs=int(ps.t.size),
        diagnostics={"ee_norm": float(np.linalg.norm(ax.T @ fit.residual)), "cond": fit.cond},
    )
    return report, ResidualSet(ps.group, ps.t, fit.residual)


def plm_intercept_curve(d: LongitudinalDataset, k, beta, grid=None, on_degenerate="error"):
    """Fitted nonparametric intercept ``a0(t)`` of the partial linear model.

    Evaluated on ``grid`` (default 101 equispaced points on [0, 1]). Grid points
    whose kernel window is empty or degenerate come back as NaN.
    """
    k = _as_spec(k)
    ps = _pooled(d)
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=float)
    partial = ps.y - ps.x @ np.asarray(beta, dtype=float)
    out = np.full(grid.size, np.nan)
    for i, g in enumerate(grid):
        try:
            out[i] = smooth_at(ps.t, partial, [g], k, on_degenerate)[0]
        except Exception:  # noqa: BLE001 - gap in support, leave NaN
            continue
    return grid, out


def centered_values(d: LongitudinalDataset, k):
    """``(Y - m_Y(t), X - m_X(t))`` at every pooled observation."""
    ps = _pooled(d)
    both = np.column_stack([ps.y, ps.x])
    means = nw_means(ps.t, both, ps.t, _as_spec(k))
    centered = both - means
    return centered[:, 0], centered[:, 1:]


def fit_centering(d: LongitudinalDataset, k):
    """Least squares on kernel-centred ``Y`` and ``X``.

    Each observation belongs to its own Nadaraya-Watson window. Returns
    ``(report, residuals)`` with residuals ``Y_hat - X_hat' beta``.
    """
    k = _as_spec(k)
    ps = _pooled(d)
    yc, xc = centered_values(d, k)
    fit = weighted_lstsq(xc, yc, names=list(d.x_names),
                         reference_norms=np.linalg.norm(ps.x, axis=0))
    cov = fit.sandwich(xc, None, ps.group, d.n)
    report = FitReport(
        "centering", d.x_names, fit.coef, cov, bandwidths={"h": k.h}, n_obs=int(ps.t.size),
        diagnostics={"ee_norm": float(np.linalg.norm(xc.T @ fit.residual) / d.n),
                     "cond": fit.cond},
    )
    return report, ResidualSet(ps.group, ps.t, fit.residual)


def centering_equation(d: LongitudinalDataset, k, beta):
    """``U(beta) = n^{-1} sum_i sum_j X_hat (Y_hat - X_hat' beta)``."""
    yc, xc = centered_values(d, k)
    return xc.T @ (yc - xc @ np.asarray(beta, dtype=float)) / d.n


@dataclass(frozen=True)
class ScreenRow:
    mode: str
    response: str
    covariate: str
    slope: float
    se: float
    pvalue: float
    n_pairs: int


def align_sync_onto_async(d: LongitudinalDataset):
    """Carry each subject's latest ``X`` forward onto its async times.

    Returns ``(x_aligned, z, group, dropped)`` for the async observations that
    have a synchronous visit at or before them.
    """
    from .estimators_async import last_observed

    ps, pa = d.pooled_sync, d.pooled_async
    src = last_observed(ps.group, ps.t, pa.group, pa.s)
    keep = src >= 0
    return ps.x[src[keep]], pa.z[keep], pa.group[keep], int((~keep).sum())


def screen_correlation(d: LongitudinalDataset, mode="separate"):
    """Regress each asynchronous covariate on the synchronous ones.

    ``separate`` fits one simple regression per (Z, X) pair, ``joint`` one
    multiple regression per Z component. P-values are two-sided normal tests
    with subject-clustered standard errors.
    """
    if mode not in ("separate", "joint"):
        raise ValueError(f"mode must be 'separate' or 'joint', got {mode!r}")
    x, z, group, _ = align_sync_onto_async(d)
    if z.shape[0] == 0:
        raise DataError("no asynchronous observation has a synchronous visit at or before it")
    rows = []
    one = np.ones(z.shape[0])
    for c, zname in enumerate(d.z_names):
        specs = ([[j] for j in range(d.p)] if mode == "separate" else [list(range(d.p))])
        for cols in specs:
            names = ("alpha",) + tuple(d.x_names[j] for j in cols)
            design = np.column_stack([one, x[:, cols]])
            report, _ = _ols_report("screen", names, design, z[:, c], group, d.n)
            for j, nm in enumerate(names[1:], start=1):
                rows.append(ScreenRow(mode, zname, nm, float(report.estimate[j]),
                                      float(report.se[j]), float(report.pvalues[j]),
                                      int(z.shape[0])))
    return rows


__all__ = [
    "KernelSpec", "ResidualSet", "ScreenRow", "align_sync_onto_async", "centered_values",
    "centering_equation", "default_bandwidth", "fit_centering", "fit_naive", "fit_plm",
    "fit_pooled_full", "plm_intercept_curve", "screen_correlation",
]
