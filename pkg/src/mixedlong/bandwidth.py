"""Bandwidth grids, bandwidth rules and kernel-smoothed K-fold cross-validation.

Prediction error on a held-out fold cannot be computed observation by
observation because ``Y(t)`` and ``Z(s)`` are never observed together. Instead
every held-out (t, s) pair contributes its squared prediction error weighted by
``K_h(t - s)``, normalised by the total held-out kernel mass.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import LongitudinalDataset, MixedLongError, NumericalError
from .estimators_async import (
    enumerate_pairs,
    fit_simultaneous,
    fit_step1,
    fit_step2,
    simultaneous_design,
    step2_design,
)
from .estimators_sync import default_bandwidth


class BandwidthError(MixedLongError, ValueError):
    pass


@dataclass(frozen=True)
class BandwidthGrid:
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            raise BandwidthError("bandwidth grid is empty")
        if np.any(np.diff(v) <= 0):
            raise BandwidthError("bandwidth grid must be strictly increasing")
        if v[0] <= 0 or v[-1] > 1:
            raise BandwidthError(f"bandwidths must lie in (0, 1], got [{v[0]:.4g}, {v[-1]:.4g}]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _check_exps(lo_exp, hi_exp, size):
    if not lo_exp < hi_exp:
        raise BandwidthError(f"need lo_exp < hi_exp, got {lo_exp} and {hi_exp}")
    if hi_exp > 0:
        raise BandwidthError(f"exponents must be <= 0, got hi_exp={hi_exp}")
    if size < 2:
        raise BandwidthError("grid size must be at least 2")


def power_grid(n, lo_exp=-0.8, hi_exp=-0.6, size=21) -> BandwidthGrid:
    """Geometric grid from ``n**lo_exp`` to ``n**hi_exp`` inclusive."""
    _check_exps(lo_exp, hi_exp, size)
    vals = np.geomspace(float(n) ** lo_exp, float(n) ** hi_exp, int(size))
    return BandwidthGrid(vals, f"power n={n} exps=({lo_exp}, {hi_exp})")


def pooled_time_quartiles(d: LongitudinalDataset):
    ps, pa = d.pooled_sync, d.pooled_async
    times = np.concatenate([ps.t, pa.s])
    if times.size == 0:
        raise BandwidthError("dataset has no observation times")
    q1, q3 = np.percentile(times, [25, 75], method="linear")
    return float(q1), float(q3)


def quartile_scaled_grid(d: LongitudinalDataset, lo_exp=-0.7, hi_exp=-0.6, size=21) -> BandwidthGrid:
    """Grid from ``2 (Q3 - Q1) n**lo_exp`` to ``2 (Q3 - Q1) n**hi_exp``.

    ``Q1`` and ``Q3`` are linear-interpolation quartiles of all sync and async
    times pooled over subjects; ``n`` is the number of subjects.
    """
    _check_exps(lo_exp, hi_exp, size)
    q1, q3 = pooled_time_quartiles(d)
    iqr = q3 - q1
    if iqr <= 0:
        raise BandwidthError("pooled observation times have zero interquartile range")
    n = float(d.n)
    vals = np.geomspace(2 * iqr * n ** lo_exp, 2 * iqr * n ** hi_exp, int(size))
    return BandwidthGrid(vals, f"quartile IQR={iqr:.6g} n={d.n} exps=({lo_exp}, {hi_exp})")


@dataclass
class CvCurve:
    grid: np.ndarray
    fold_errors: np.ndarray      # (grid, folds); NaN where flagged
    flags: np.ndarray            # (grid, folds) bool
    method: str
    folds: list = field(default_factory=list)
    reasons: dict = field(default_factory=dict)

    @property
    def average(self):
        out = np.full(self.grid.size, np.nan)
        for g in range(self.grid.size):
            ok = ~self.flags[g]
            if ok.any():
                out[g] = self.fold_errors[g, ok].mean()
        return out

    @property
    def eligible(self):
        return ~self.flags.any(axis=1)

    @property
    def selected_index(self):
        avg = np.where(self.eligible, self.average, np.inf)
        if not np.isfinite(avg).any():
            raise NumericalError("every bandwidth in the grid has a failed fold")
        # argmin returns the first minimum, i.e. the smaller h on ties.
        return int(np.argmin(avg))

    @property
    def selected(self):
        return float(self.grid[self.selected_index])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = self.fold_errors.shape[1]
        w.writerow(["h", "avg_pe"] + [f"fold{j + 1}" for j in range(k)] + ["flag"])
        avg = self.average
        try:
            sel = self.selected_index
        except NumericalError:
            sel = -1
        for g, h in enumerate(self.grid):
            flag = "selected" if g == sel else ("excluded" if not self.eligible[g] else "")
            w.writerow([repr(float(h)), _num(avg[g])]
                       + [_num(e) for e in self.fold_errors[g]] + [flag])
        return buf.getvalue()


def _num(x):
    return "" if not np.isfinite(x) else repr(float(x))


def fold_assignment(d: LongitudinalDataset, folds, seed):
    """Partition subject positions into ``folds`` groups.

    Subjects are put in canonical order (sorted by id) and then permuted with a
    generator seeded by ``seed``, so the partition does not depend on input
    order.
    """
    if folds < 2:
        raise BandwidthError("need at least 2 folds")
    if folds > d.n:
        raise BandwidthError(f"{folds} folds for {d.n} subjects")
    ids = [s.id for s in d.subjects]
    canonical = np.array(sorted(range(d.n), key=lambda i: ids[i]))
    perm = np.random.default_rng(seed).permutation(d.n)
    return [np.sort(canonical[part]) for part in np.array_split(perm, folds)]


def _held_out_error(test: LongitudinalDataset, pairs, theta, method, beta=None):
    if len(pairs) == 0:
        raise NumericalError("held-out fold has no pairs within the kernel support")
    w = pairs.weight
    mass = w.sum()
    if mass <= 0:
        raise NumericalError("held-out fold has zero kernel mass")
    y = test.pooled_sync.y[pairs.sync_index]
    if method == "twostep":
        x = test.pooled_sync.x[pairs.sync_index]
        pred = x @ beta + step2_design(test, pairs) @ theta
    else:
        pred = simultaneous_design(test, pairs) @ theta
    return float(np.sum(w * (y - pred) ** 2) / mass)


def cv_bandwidth(d: LongitudinalDataset, grid, method="twostep", folds=5, seed=0,
                 step1="centering", h1_power=-0.6) -> CvCurve:
    """Kernel-smoothed K-fold cross-validation over ``grid``.

    ``method="twostep"`` fits step 1 once per fold with ``h1 = n_train**h1_power``
    and varies only the step-2 bandwidth; ``method="simultaneous"`` refits the
    joint kernel estimator at every grid point. The candidate ``h`` is also the
    bandwidth of the held-out error kernel.
    """
    if method not in ("twostep", "simultaneous"):
        raise ValueError(f"method must be 'twostep' or 'simultaneous', got {method!r}")
    if not isinstance(grid, BandwidthGrid):
        grid = BandwidthGrid(grid)
    h = grid.values
    parts = fold_assignment(d, folds, seed)
    errors = np.full((h.size, folds), np.nan)
    flags = np.zeros((h.size, folds), dtype=bool)
    reasons = {}
    everyone = np.arange(d.n)
    hmax = float(h[-1])
    for f, test_idx in enumerate(parts):
        train = d.subset(np.setdiff1d(everyone, test_idx))
        test = d.subset(test_idx)
        train_pairs = enumerate_pairs(train, hmax)
        test_pairs = enumerate_pairs(test, hmax)
        beta = None
        if method == "twostep":
            try:
                beta = fit_step1(train, step1, default_bandwidth(train.n, h1_power))[0].estimate
            except MixedLongError as exc:
                flags[:, f] = True
                reasons.update({(g, f): str(exc) for g in range(h.size)})
                continue
        for g, hg in enumerate(h):
            try:
                if method == "twostep":
                    theta = fit_step2(train, beta, hg, train_pairs)[0]
                else:
                    theta = fit_simultaneous(train, hg, train_pairs).estimate
                errors[g, f] = _held_out_error(test, test_pairs.within(hg), theta, method, beta)
            except MixedLongError as exc:
                flags[g, f] = True
                reasons[(g, f)] = str(exc)
    return CvCurve(h.copy(), errors, flags, method, parts, reasons)


@dataclass(frozen=True)
class BandwidthRule:
    """How to pick a bandwidth for one estimator.

    ``kind`` is ``fixed`` (use ``value``), ``power`` (``n**power``), ``cv``
    (cross-validate over a power grid) or ``quartile`` (cross-validate over a
    quartile-scaled grid).
    """

    kind: str = "power"
    value: float | None = None
    power: float = -0.6
    lo_exp: float = -0.8
    hi_exp: float = -0.6
    size: int = 21
    folds: int = 5

    def __post_init__(self):
        if self.kind not in ("fixed", "power", "cv", "quartile"):
            raise BandwidthError(f"unknown bandwidth rule {self.kind!r}")
        if self.kind == "fixed" and not (self.value and self.value > 0):
            raise BandwidthError("fixed bandwidth rule needs a positive value")

    def grid(self, d: LongitudinalDataset) -> BandwidthGrid:
        if self.kind == "quartile":
            return quartile_scaled_grid(d, self.lo_exp, self.hi_exp, self.size)
        return power_grid(d.n, self.lo_exp, self.hi_exp, self.size)

    def resolve(self, d: LongitudinalDataset, method="twostep", seed=0, step1="centering"):
        """Return ``(h, curve)``; ``curve`` is None unless the rule cross-validates."""
        if self.kind == "fixed":
            return float(self.value), None
        if self.kind == "power":
            return default_bandwidth(d.n, self.power), None
        curve = cv_bandwidth(d, self.grid(d), method, self.folds, seed, step1)
        return curve.selected, curve
