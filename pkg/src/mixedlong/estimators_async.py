"""Estimators that use the asynchronous covariate ``Z``.

Kernel methods weight every within-subject pair of a response time ``t`` and a
covariate time ``s`` by ``K_h(t - s)``. Pairs are enumerated with a sliding
window over the sorted async times of each subject, so only pairs inside the
kernel support are ever materialised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError, FitReport, LongitudinalDataset, NumericalError
from .estimators_sync import ResidualSet, default_bandwidth, fit_centering, fit_plm
from .kernels import _as_spec, scaled_kernel
from .linalg import weighted_lstsq


@dataclass(frozen=True)
class Pairs:
    """Within-subject (sync, async) pairs with ``|t - s| < h``.

    ``sync_index`` and ``async_index`` point into the dataset's pooled arrays.
    """

    group: np.ndarray
    sync_index: np.ndarray
    async_index: np.ndarray
    gap: np.ndarray
    h: float

    @property
    def weight(self):
        return scaled_kernel(self.gap, self.h)

    def __len__(self):
        return self.gap.size

    def within(self, h):
        """Restrict to a smaller bandwidth."""
        if h > self.h:
            raise ValueError(f"cannot widen pairs from h={self.h} to h={h}")
        keep = np.abs(self.gap) < h
        return Pairs(self.group[keep], self.sync_index[keep], self.async_index[keep],
                     self.gap[keep], h)


def _composite(group, t, stride):
    return group * stride + t


def enumerate_pairs(d: LongitudinalDataset, h) -> Pairs:
    """All within-subject pairs ``(j, k)`` with ``|t_ij - s_ik| < h``."""
    h = float(h)
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h!r}")
    ps, pa = d.pooled_sync, d.pooled_async
    empty = np.empty(0, dtype=int)
    if ps.t.size == 0 or pa.s.size == 0:
        return Pairs(empty, empty, empty, np.empty(0), h)
    lo_t = min(ps.t.min(), pa.s.min())
    hi_t = max(ps.t.max(), pa.s.max())
    stride = (hi_t - lo_t) + 2.0 * h + 1.0
    # Subjects occupy disjoint key ranges; keys are sorted because pooled
    # arrays are subject-ordered and time-sorted within subject.
    skey = _composite(ps.group, ps.t - lo_t, stride)
    akey = _composite(pa.group, pa.s - lo_t, stride)
    margin = 64 * np.finfo(float).eps * (abs(akey[-1]) + abs(skey[-1]) + 1.0)
    lo = np.searchsorted(akey, skey - h - margin, side="left")
    hi = np.searchsorted(akey, skey + h + margin, side="right")
    counts = hi - lo
    total = int(counts.sum())
    j = np.repeat(np.arange(ps.t.size), counts)
    starts = np.cumsum(counts) - counts
    k = np.arange(total) - np.repeat(starts, counts) + np.repeat(lo, counts)
    gap = ps.t[j] - pa.s[k]
    keep = (ps.group[j] == pa.group[k]) & (np.abs(gap) < h)
    return Pairs(ps.group[j[keep]], j[keep], k[keep], gap[keep], h)


def last_observed(src_group, src_t, dst_group, dst_t):
    """Index of the latest source observation at or before each destination.

    Both inputs are subject-ordered and time-sorted within subject. Returns -1
    where a destination has no source observation at or before it within the
    same subject.
    """
    ns, nd = src_t.size, dst_t.size
    if nd == 0:
        return np.empty(0, dtype=int)
    if ns == 0:
        return np.full(nd, -1)
    # Merge events ordered by (subject, time, source-before-destination on ties).
    grp = np.concatenate([src_group, dst_group])
    tt = np.concatenate([src_t, dst_t])
    kind = np.concatenate([np.zeros(ns, dtype=int), np.ones(nd, dtype=int)])
    order = np.lexsort((kind, tt, grp))
    is_src = kind[order] == 0
    pos = np.where(is_src, np.arange(order.size), -1)
    last = np.maximum.accumulate(pos)
    out = np.full(order.size, -1)
    valid = last >= 0
    out[valid] = order[last[valid]]
    res = np.empty(nd, dtype=int)
    dst_pos = ~is_src
    res[order[dst_pos] - ns] = out[dst_pos]
    # Reject carries across a subject boundary.
    ok = res >= 0
    ok[ok] = src_group[res[ok]] == dst_group[ok]
    res[~ok] = -1
    return res


@dataclass(frozen=True)
class LvcfAlignment:
    """Synchronous observations with ``Z`` carried forward from the latest async time."""

    group: np.ndarray
    sync_index: np.ndarray
    async_index: np.ndarray
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    dropped: int


def lvcf_align(d: LongitudinalDataset) -> LvcfAlignment:
    """Attach to each response time the ``Z`` observed at the latest ``s <= t``.

    Observations with no earlier async time are dropped and counted.
    """
    ps, pa = d.pooled_sync, d.pooled_async
    src = last_observed(pa.group, pa.s, ps.group, ps.t)
    keep = src >= 0
    j = np.flatnonzero(keep)
    k = src[keep]
    return LvcfAlignment(ps.group[j], j, k, ps.t[j], ps.y[j], ps.x[j],
                         pa.z[k].reshape(-1, d.q), int((~keep).sum()))


def _place(p, q, step1_cov, step2_cov):
    # Layout (alpha, beta, gamma); beta from step 1, (alpha, gamma) from step 2.
    k = 1 + p + q
    cov = np.zeros((k, k))
    s2 = np.r_[0, np.arange(1 + p, k)]
    cov[np.ix_(s2, s2)] = step2_cov
    cov[1:1 + p, 1:1 + p] = step1_cov
    return cov


def kernel_regression(pairs: Pairs, response, design, n_groups, names):
    """Weighted least squares over pairs; returns (coef, sandwich cov, lstsq result)."""
    if len(pairs) == 0:
        raise NumericalError(
            f"no (t, s) pairs within h={pairs.h:.6g}: bandwidth too small for asynchrony gap"
        )
    w = pairs.weight
    if not np.any(w > 0):
        raise NumericalError(
            f"zero kernel mass over all pairs at h={pairs.h:.6g}: "
            "bandwidth too small for asynchrony gap"
        )
    fit = weighted_lstsq(design, response, w, names=list(names))
    cov = fit.sandwich(design, w, pairs.group, n_groups)
    return fit.coef, cov, fit


def step2_design(d: LongitudinalDataset, pairs: Pairs):
    z = d.pooled_async.z[pairs.async_index]
    return np.column_stack([np.ones(len(pairs)), z])


def fit_step2(d: LongitudinalDataset, beta, k, pairs: Pairs | None = None):
    """Kernel-weighted regression of ``Y - X' beta`` on ``(1, Z(s))`` over pairs.

    Returns ``(coef, cov, fit, pairs)`` with ``coef = (alpha, gamma)``.
    """
    k = _as_spec(k)
    pairs = enumerate_pairs(d, k.h) if pairs is None else pairs.within(k.h)
    ps = d.pooled_sync
    omega = ps.y - ps.x @ np.asarray(beta, dtype=float)
    design = step2_design(d, pairs)
    coef, cov, fit = kernel_regression(
        pairs, omega[pairs.sync_index], design, d.n, ("alpha",) + d.z_names
    )
    return coef, cov, fit, pairs


def fit_step1(d: LongitudinalDataset, step1, h1):
    if step1 == "centering":
        return fit_centering(d, h1)
    if step1 == "plm":
        return fit_plm(d, h1)
    raise ValueError(f"step1 must be 'centering' or 'plm', got {step1!r}")


def fit_two_step(d: LongitudinalDataset, step1="centering", h1=None, h2=None) -> FitReport:
    """Two-step estimator: synchronous fit for ``beta``, kernel pairs for ``(alpha, gamma)``.

    ``h1`` defaults to ``n^-0.6``. The covariance of ``beta`` comes from
    step 1 and that of ``(alpha, gamma)`` from the step-2 sandwich treating
    ``beta`` as known; cross-step covariances are reported as zero.
    """
    if h2 is None:
        raise ValueError("step-2 bandwidth h2 is required")
    h1 = _as_spec(default_bandwidth(d.n) if h1 is None else h1)
    h2 = _as_spec(h2)
    rep1, _ = fit_step1(d, step1, h1)
    coef2, cov2, fit2, pairs = fit_step2(d, rep1.estimate, h2)
    p, q = d.p, d.q
    est = np.r_[coef2[0], rep1.estimate, coef2[1:]]
    design = step2_design(d, pairs)
    return FitReport(
        f"{step1}+ks", ("alpha",) + d.x_names + d.z_names, est,
        _place(p, q, rep1.cov, cov2),
        bandwidths={"h1": h1.h, "h2": h2.h}, n_obs=rep1.n_obs, n_pairs=len(pairs),
        diagnostics={
            "ee_norm": float(np.linalg.norm(design.T @ (pairs.weight * fit2.residual)) / d.n),
            "step1_ee_norm": rep1.diagnostics["ee_norm"],
            "cond": fit2.cond,
        },
    )


def simultaneous_design(d: LongitudinalDataset, pairs: Pairs):
    ps, pa = d.pooled_sync, d.pooled_async
    return np.column_stack([
        np.ones(len(pairs)), ps.x[pairs.sync_index], pa.z[pairs.async_index]
    ])


def fit_simultaneous(d: LongitudinalDataset, k, pairs: Pairs | None = None) -> FitReport:
    """Kernel-weighted least squares of ``Y(t)`` on ``(1, X(t), Z(s))`` over all pairs."""
    k = _as_spec(k)
    pairs = enumerate_pairs(d, k.h) if pairs is None else pairs.within(k.h)
    design = simultaneous_design(d, pairs)
    y = d.pooled_sync.y[pairs.sync_index]
    names = ("alpha",) + d.x_names + d.z_names
    coef, cov, fit = kernel_regression(pairs, y, design, d.n, names)
    return FitReport(
        "ks", names, coef, cov, bandwidths={"h": k.h},
        n_obs=int(np.unique(pairs.sync_index).size), n_pairs=len(pairs),
        diagnostics={
            "ee_norm": float(np.linalg.norm(design.T @ (pairs.weight * fit.residual)) / d.n),
            "cond": fit.cond,
        },
    )


def _require_alignment(a: LvcfAlignment):
    if a.t.size == 0:
        raise DataError("LVCF alignment is empty: no response time has an earlier Z")


def fit_lvcf(d: LongitudinalDataset) -> FitReport:
    """Pooled OLS of ``Y`` on ``(1, X, Z carried forward)``."""
    a = lvcf_align(d)
    _require_alignment(a)
    design = np.column_stack([np.ones(a.t.size), a.x, a.z])
    names = ("alpha",) + d.x_names + d.z_names
    fit = weighted_lstsq(design, a.y, names=list(names))
    return FitReport(
        "lvcf", names, fit.coef, fit.sandwich(design, None, a.group, d.n),
        n_obs=int(a.t.size),
        diagnostics={"dropped": a.dropped, "cond": fit.cond,
                     "ee_norm": float(np.linalg.norm(design.T @ fit.residual))},
    )


def fit_centering_lvcf(d: LongitudinalDataset, h1=None) -> FitReport:
    """Centering for ``beta``, then OLS of the residual ``Y - X' beta`` on ``(1, Z carried)``."""
    h1 = _as_spec(default_bandwidth(d.n) if h1 is None else h1)
    rep1, _ = fit_centering(d, h1)
    a = lvcf_align(d)
    _require_alignment(a)
    omega = a.y - a.x @ rep1.estimate
    design = np.column_stack([np.ones(a.t.size), a.z])
    fit = weighted_lstsq(design, omega, names=["alpha", *d.z_names])
    cov2 = fit.sandwich(design, None, a.group, d.n)
    est = np.r_[fit.coef[0], rep1.estimate, fit.coef[1:]]
    return FitReport(
        "centering+lvcf", ("alpha",) + d.x_names + d.z_names, est,
        _place(d.p, d.q, rep1.cov, cov2), bandwidths={"h1": h1.h}, n_obs=int(a.t.size),
        diagnostics={"dropped": a.dropped, "cond": fit.cond,
                     "ee_norm": float(np.linalg.norm(design.T @ fit.residual))},
    )


__all__ = [
    "LvcfAlignment", "Pairs", "ResidualSet", "enumerate_pairs", "fit_centering_lvcf",
    "fit_lvcf", "fit_simultaneous", "fit_step2", "fit_two_step", "kernel_regression",
    "last_observed", "lvcf_align",
]
