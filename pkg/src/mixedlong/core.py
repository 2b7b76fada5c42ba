"""Data model for longitudinal data with synchronous and asynchronous covariates.

A subject carries two time grids: the response grid, on which ``Y`` and the
synchronous covariates ``X`` are measured, and a separate grid for the
asynchronous covariates ``Z``. The grids need not share any time point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import norm


class MixedLongError(Exception):
    """Base class for errors raised by this package."""


class DataError(MixedLongError):
    """Malformed or inconsistent input data."""


class NumericalError(MixedLongError):
    """An estimator could not be computed from the data at hand."""


class SingularDesignError(NumericalError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class EmptyWindowError(NumericalError):
    def __init__(self, t0, h, what="kernel window"):
        super().__init__(f"empty {what} at t0={t0:.6g} with h={h:.6g}")
        self.t0 = t0
        self.h = h


class DegenerateSmootherError(NumericalError):
    def __init__(self, t0, h):
        super().__init__(
            f"degenerate smoother row at t={t0:.6g} with h={h:.6g} "
            "(bandwidth too small at an isolated time)"
        )
        self.t0 = t0
        self.h = h


def _frozen(a, ndim):
    a = np.array(a, dtype=float)
    if ndim == 2 and a.ndim == 1:
        a = a.reshape(-1, 1) if a.size else a.reshape(0, 0)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    """One subject's response grid and asynchronous covariate grid.

    ``sync_covariates`` has one row per ``sync_times`` entry and
    ``async_covariates`` one row per ``async_times`` entry.
    """

    id: str
    sync_times: np.ndarray
    responses: np.ndarray
    sync_covariates: np.ndarray
    async_times: np.ndarray
    async_covariates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        for name, nd in (("sync_times", 1), ("responses", 1), ("async_times", 1)):
            object.__setattr__(self, name, _frozen(getattr(self, name), nd).ravel())
        for name in ("sync_covariates", "async_covariates"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 2))

    @property
    def n_sync(self):
        return self.sync_times.size

    @property
    def n_async(self):
        return self.async_times.size

    def equals(self, other: SubjectRecord) -> bool:
        return self.id == other.id and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            and getattr(self, f).shape == getattr(other, f).shape
            for f in ("sync_times", "responses", "sync_covariates",
                      "async_times", "async_covariates")
        )


@dataclass(frozen=True)
class TimeMap:
    """Affine map ``(t - offset) / scale`` applied to raw times at ingestion."""

    offset: float = 0.0
    scale: float = 1.0

    def apply(self, t):
        return (np.asarray(t, dtype=float) - self.offset) / self.scale

    def invert(self, u):
        return np.asarray(u, dtype=float) * self.scale + self.offset

    @property
    def is_identity(self):
        return self.offset == 0.0 and self.scale == 1.0


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    subjects: tuple
    p: int
    q: int
    x_names: tuple = ()
    z_names: tuple = ()
    time_map: TimeMap = field(default_factory=TimeMap)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x{j + 1}" for j in range(self.p)))
        if not self.z_names:
            object.__setattr__(self, "z_names", tuple(f"z{j + 1}" for j in range(self.q)))

    @property
    def n(self):
        return len(self.subjects)

    @property
    def m(self):
        return int(sum(s.n_sync for s in self.subjects))

    def subset(self, indices) -> LongitudinalDataset:
        return LongitudinalDataset(
            tuple(self.subjects[i] for i in indices), self.p, self.q,
            self.x_names, self.z_names, self.time_map,
        )

    def equals(self, other: LongitudinalDataset) -> bool:
        return (
            self.p == other.p and self.q == other.q and self.n == other.n
            and all(a.equals(b) for a, b in zip(self.subjects, other.subjects))
        )

    # Pooled views. Subjects are concatenated in input order, observations in
    # time order within subject; ``*_group`` holds the subject position.
    @cached_property
    def pooled_sync(self) -> PooledSync:
        subs = [s for s in self.subjects]
        counts = np.array([s.n_sync for s in subs], dtype=int)
        group = np.repeat(np.arange(len(subs)), counts)
        if counts.sum() == 0:
            return PooledSync(group, np.empty(0), np.empty(0), np.empty((0, self.p)))
        t = np.concatenate([s.sync_times for s in subs])
        y = np.concatenate([s.responses for s in subs])
        x = np.vstack([s.sync_covariates.reshape(s.n_sync, self.p) for s in subs])
        return PooledSync(group, t, y, x)

    @cached_property
    def pooled_async(self) -> PooledAsync:
        subs = [s for s in self.subjects]
        counts = np.array([s.n_async for s in subs], dtype=int)
        group = np.repeat(np.arange(len(subs)), counts)
        if counts.sum() == 0:
            return PooledAsync(group, np.empty(0), np.empty((0, self.q)))
        s_ = np.concatenate([s.async_times for s in subs])
        z = np.vstack([s.async_covariates.reshape(s.n_async, self.q) for s in subs])
        return PooledAsync(group, s_, z)


@dataclass(frozen=True)
class PooledSync:
    group: np.ndarray
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class PooledAsync:
    group: np.ndarray
    s: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class Violation:
    subject: str | None
    field: str
    message: str

    def __str__(self):
        where = f"subject {self.subject}" if self.subject is not None else "dataset"
        return f"{where}: {self.field}: {self.message}"


def validate_dataset(d: LongitudinalDataset) -> list[Violation]:
    """Return every invariant violation found in ``d``; an empty list means valid."""
    out = []
    if d.n < 1:
        out.append(Violation(None, "subjects", "dataset has no subjects"))
    seen = set()
    for s in d.subjects:
        if s.id in seen:
            out.append(Violation(s.id, "id", "duplicate subject id"))
        seen.add(s.id)
        for tname, vname, vals, width in (
            ("sync_times", "sync_covariates", s.sync_covariates, d.p),
            ("async_times", "async_covariates", s.async_covariates, d.q),
        ):
            t = getattr(s, tname)
            if t.size and not np.all(np.isfinite(t)):
                out.append(Violation(s.id, tname, "non-finite time"))
            elif t.size:
                dt = np.diff(t)
                if np.any(dt == 0):
                    out.append(Violation(s.id, tname, "duplicate times"))
                if np.any(dt < 0):
                    out.append(Violation(s.id, tname, "times not increasing"))
                if t.min() < 0 or t.max() > 1:
                    out.append(Violation(s.id, tname, "times outside [0, 1]"))
            if vals.size == 0 and t.size == 0:
                continue
            if vals.ndim != 2 or vals.shape[1] != width:
                got = vals.shape[1] if vals.ndim == 2 else vals.ndim
                out.append(Violation(
                    s.id, vname, f"dimension mismatch: {got} columns, dataset expects {width}"
                ))
            elif vals.shape[0] != t.size:
                out.append(Violation(
                    s.id, vname, f"{vals.shape[0]} rows for {t.size} times"
                ))
            elif not np.all(np.isfinite(vals)):
                out.append(Violation(s.id, vname, "non-finite entry"))
        if s.responses.size != s.sync_times.size:
            out.append(Violation(
                s.id, "responses", f"{s.responses.size} responses for {s.sync_times.size} times"
            ))
        elif not np.all(np.isfinite(s.responses)):
            out.append(Violation(s.id, "responses", "non-finite entry"))
    if d.n and d.m < d.p + 2:
        out.append(Violation(
            None, "subjects", f"only {d.m} synchronous observations; need at least p + 2 = {d.p + 2}"
        ))
    return out


def require_valid(d: LongitudinalDataset) -> LongitudinalDataset:
    problems = validate_dataset(d)
    if problems:
        more = f" (+{len(problems) - 1} more)" if len(problems) > 1 else ""
        raise DataError(f"invalid dataset: {problems[0]}{more}")
    return d


@dataclass
class FitReport:
    """Estimates, sandwich covariance and normal-theory intervals for one fit.

    ``names`` gives the coefficient layout; when an intercept is estimated it
    comes first and is named ``alpha``.
    """

    method: str
    names: tuple
    estimate: np.ndarray
    cov: np.ndarray
    bandwidths: dict = field(default_factory=dict)
    n_obs: int = 0
    n_pairs: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.estimate = np.asarray(self.estimate, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def ci(self):
        half = 1.96 * self.se
        return np.column_stack([self.estimate - half, self.estimate + half])

    @property
    def pvalues(self):
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, self.estimate / se, np.inf)
        return 2.0 * norm.sf(np.abs(z))

    def __getitem__(self, name):
        return self.estimate[self.names.index(name)]

    def se_of(self, name):
        return self.se[self.names.index(name)]

    def rows(self):
        ci = self.ci
        return [
            (nm, self.estimate[j], self.se[j], ci[j, 0], ci[j, 1], self.pvalues[j])
            for j, nm in enumerate(self.names)
        ]


def block_diag_cov(*blocks):
    k = sum(b.shape[0] for b in blocks)
    out = np.zeros((k, k))
    i = 0
    for b in blocks:
        j = i + b.shape[0]
        out[i:j, i:j] = b
        i = j
    return out
