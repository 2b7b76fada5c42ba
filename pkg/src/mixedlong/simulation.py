"""Gaussian-process data generation and Monte Carlo summaries.

Each subject draws its response times and, in asynchronous mode, a separate
set of covariate times. The latent ``Z`` process is sampled once on the union
of both grids so that the value entering ``Y(t)`` and the recorded ``Z(s)``
come from a single joint draw.

Replication ``r`` of a study seeded with ``base_seed`` uses the generator
``default_rng(SeedSequence([base_seed, r]))``; replications are therefore
independent of execution order.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .core import LongitudinalDataset, MixedLongError, SubjectRecord

MEAN_FUNCTIONS = {
    "sqrt_t": lambda t: np.sqrt(t),
    "linear_0.5": lambda t: 0.5 + t,
    "quad_0.5": lambda t: 0.5 + t ** 2,
    "sqrt_0.5": lambda t: 0.5 + np.sqrt(t),
    "sine2pi": lambda t: 2.0 * np.sin(2.0 * np.pi * t),
    "const_2": lambda t: np.full_like(t, 2.0),
    "zero": lambda t: np.zeros_like(t),
}

COVARIANCES = {
    "exp_abs": lambda d: np.exp(-d),
    "exp2_abs": lambda d: np.power(2.0, -d),
}

MAX_OBS = 50


@dataclass(frozen=True)
class ProcessSpec:
    """Mean and covariance of a scalar Gaussian process on [0, 1].

    ``mean`` is a key of ``MEAN_FUNCTIONS`` or a ``(times, values)`` table that
    is linearly interpolated.
    """

    mean: object = "zero"
    cov: str = "exp_abs"

    def mean_at(self, t):
        t = np.asarray(t, dtype=float)
        if isinstance(self.mean, str):
            try:
                return MEAN_FUNCTIONS[self.mean](t)
            except KeyError:
                raise ValueError(f"unknown mean function {self.mean!r}") from None
        tt, vv = self.mean
        return np.interp(t, tt, vv)

    def cov_matrix(self, t):
        t = np.asarray(t, dtype=float)
        return COVARIANCES[self.cov](np.abs(t[:, None] - t[None, :]))


def sample_gp(times, spec: ProcessSpec, rng):
    """One draw of the process at ``times`` via a Cholesky factor of its covariance."""
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        return np.empty(0)
    c = spec.cov_matrix(t)
    try:
        low = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        try:
            low = np.linalg.cholesky(c + 1e-10 * np.eye(t.size))
        except np.linalg.LinAlgError as exc:
            raise MixedLongError(f"covariance factorization failed: {exc}") from None
    return spec.mean_at(t) + low @ rng.standard_normal(t.size)


@dataclass(frozen=True)
class SimulationScenario:
    n: int = 100
    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = -1.0
    x: ProcessSpec = ProcessSpec("sqrt_t", "exp_abs")
    z: ProcessSpec = ProcessSpec("linear_0.5", "exp_abs")
    eps: ProcessSpec = ProcessSpec("zero", "exp2_abs")
    correlation: str = "independent"     # or "dependent" (uncorrelated but dependent)
    obs_mean: float = 5.0
    asynchronous: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("scenario needs n >= 2")
        if not self.obs_mean > 0:
            raise ValueError("Poisson mean must be positive")
        if self.correlation not in ("independent", "dependent"):
            raise ValueError(f"unknown correlation mode {self.correlation!r}")

    @property
    def truth(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


def table1_scenario(z_mean="linear_0.5", n=400, correlation="independent"):
    return SimulationScenario(n=n, z=ProcessSpec(z_mean, "exp_abs"), correlation=correlation)


def table2_scenario(z_mean="const_2", n=400):
    return SimulationScenario(n=n, z=ProcessSpec(z_mean, "exp_abs"), asynchronous=True)


def _count(rng, mean):
    return 1 + min(int(rng.poisson(mean)), MAX_OBS - 1)


def gen_subject(s: SimulationScenario, rng, sid="s1"):
    """Draw one subject. Returns ``(record, latent_z)``.

    ``latent_z`` is the value of ``Z`` at each response time, i.e. the value
    used inside ``Y``.
    """
    t = np.sort(rng.uniform(size=_count(rng, s.obs_mean)))
    if s.asynchronous:
        a = np.sort(rng.uniform(size=_count(rng, s.obs_mean)))
    else:
        a = t
    union = np.union1d(t, a)
    it = np.searchsorted(union, t)
    ia = np.searchsorted(union, a)
    if s.correlation == "independent":
        x = sample_gp(t, s.x, rng)
        z = sample_gp(union, s.z, rng)
        eps = sample_gp(t, s.eps, rng)
    else:
        # One shared process drives X, Z and the error; X and Z contribute
        # only their mean functions, so Cov(X, Z) = E(omega) Var(nu) = 0.
        nu = sample_gp(union, ProcessSpec("zero", s.z.cov), rng)
        omega, tau = rng.standard_normal(2)
        z = s.z.mean_at(union) + nu
        x = s.x.mean_at(t) + omega * nu[it]
        eps = tau * nu[it]
    y = s.alpha + s.beta * x + s.gamma * z[it] + eps
    rec = SubjectRecord(sid, t, y, x.reshape(-1, 1), a, z[ia].reshape(-1, 1))
    return rec, z[it]


@dataclass(frozen=True)
class SimulatedDataset:
    observed: LongitudinalDataset
    latent_z: tuple          # per subject, Z at the response times

    def full_information(self) -> LongitudinalDataset:
        """The same draw with ``Z`` recorded at the response times."""
        subs = [
            SubjectRecord(r.id, r.sync_times, r.responses, r.sync_covariates,
                          r.sync_times, z.reshape(-1, 1))
            for r, z in zip(self.observed.subjects, self.latent_z)
        ]
        return LongitudinalDataset(tuple(subs), 1, 1)


def gen_dataset(s: SimulationScenario, rng) -> SimulatedDataset:
    width = len(str(s.n))
    recs, lat = [], []
    for i in range(s.n):
        rec, z = gen_subject(s, rng, f"s{i + 1:0{width}d}")
        recs.append(rec)
        lat.append(z)
    return SimulatedDataset(LongitudinalDataset(tuple(recs), 1, 1), tuple(lat))


def replication_rng(base_seed, r):
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(r)]))


@dataclass
class MonteCarloSummary:
    method: str
    params: tuple
    truth: np.ndarray
    estimates: np.ndarray        # (successes, params)
    ses: np.ndarray
    reps: int
    failures: Counter = field(default_factory=Counter)

    @property
    def n_success(self):
        return self.estimates.shape[0]

    @property
    def bias(self):
        return self.estimates.mean(axis=0) - self.truth if self.n_success else _nan(self)

    @property
    def sd(self):
        if self.n_success < 2:
            return _nan(self)
        return self.estimates.std(axis=0, ddof=1)

    @property
    def se(self):
        return self.ses.mean(axis=0) if self.n_success else _nan(self)

    @property
    def cp(self):
        if not self.n_success:
            return _nan(self)
        return (np.abs(self.estimates - self.truth) <= 1.96 * self.ses).mean(axis=0)

    def row(self, param):
        j = self.params.index(param)
        return {"bias": self.bias[j], "sd": self.sd[j], "se": self.se[j], "cp": self.cp[j]}


def _nan(s):
    return np.full(len(s.params), np.nan)


def summarize(estimates, ses, truth, method="", params=None, reps=None, failures=None):
    """Bias, SD (divisor reps - 1), mean SE and 95% normal coverage."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    se = np.atleast_2d(np.asarray(ses, dtype=float))
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if params is None:
        params = tuple(f"theta{j + 1}" for j in range(truth.size))
    return MonteCarloSummary(method, tuple(params), truth, est, se,
                             est.shape[0] if reps is None else reps,
                             Counter() if failures is None else failures)


@dataclass(frozen=True)
class MCEstimator:
    """An estimator to run inside a Monte Carlo study.

    ``method`` is one of ``naive``, ``plm``, ``centering``, ``twostep``
    (centering + kernel step), ``ks`` (simultaneous), ``lvcf``,
    ``centering-lvcf`` or ``full``. ``rule`` sets the bandwidth of the
    smoothing step: the synchronous bandwidth for ``plm``/``centering``, the
    step-2 bandwidth for ``twostep`` and the joint bandwidth for ``ks``.
    ``params`` restricts which of alpha/beta/gamma are summarised.
    """

    label: str
    method: str
    rule: object = None
    params: tuple = ()
    h1_power: float = -0.6
    step1: str = "centering"


DEFAULT_PARAMS = {
    "naive": ("beta",), "plm": ("beta",), "centering": ("beta",),
    "twostep": ("alpha", "beta", "gamma"), "ks": ("alpha", "beta", "gamma"),
    "lvcf": ("alpha", "beta", "gamma"), "centering-lvcf": ("alpha", "beta", "gamma"),
    "full": ("alpha", "beta", "gamma"),
}

_NAME_OF = {"alpha": "alpha", "beta": "x1", "gamma": "z1"}


def _bandwidth(est: MCEstimator, d, method, seed):
    from .bandwidth import BandwidthRule

    rule = est.rule or BandwidthRule("cv" if est.method in ("twostep", "ks") else "power")
    return rule.resolve(d, method, seed, est.step1)[0]


def run_estimator(est: MCEstimator, sim: SimulatedDataset, seed=0):
    """Fit ``est`` on one simulated dataset; returns a FitReport."""
    from . import estimators_async as ea
    from . import estimators_sync as es

    d = sim.observed
    m = est.method
    if m == "naive":
        return es.fit_naive(d)
    if m == "full":
        return es.fit_pooled_full(sim.full_information())
    if m == "lvcf":
        return ea.fit_lvcf(d)
    h1 = es.default_bandwidth(d.n, est.h1_power)
    if m == "centering-lvcf":
        return ea.fit_centering_lvcf(d, h1)
    if m in ("plm", "centering"):
        h = _bandwidth(est, d, None, seed)
        return (es.fit_plm if m == "plm" else es.fit_centering)(d, h)[0]
    if m == "twostep":
        h2 = _bandwidth(est, d, "twostep", seed)
        return ea.fit_two_step(d, est.step1, h1, h2)
    if m == "ks":
        h = _bandwidth(est, d, "simultaneous", seed)
        return ea.fit_simultaneous(d, h)
    raise ValueError(f"unknown method {m!r}")


def _one_replication(s, estimators, base_seed, r):
    rng = replication_rng(base_seed, r)
    sim = gen_dataset(s, rng)
    cv_seed = int(rng.integers(2 ** 31))
    out = []
    for est in estimators:
        params = est.params or DEFAULT_PARAMS[est.method]
        try:
            rep = run_estimator(est, sim, cv_seed)
            idx = [rep.names.index(_NAME_OF[p]) for p in params]
            out.append((rep.estimate[idx], rep.se[idx], None))
        except MixedLongError as exc:
            out.append((None, None, f"{type(exc).__name__}: {exc}"))
    return out


def run_mc(s: SimulationScenario, estimators, reps, base_seed=0, progress=None):
    """Run ``reps`` replications of scenario ``s`` and summarise each estimator.

    Estimator failures are recorded per replication and never abort the study.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    estimators = list(estimators)
    rows = [[] for _ in estimators]
    for r in range(reps):
        res = _one_replication(s, estimators, base_seed, r)
        for e, item in enumerate(res):
            rows[e].append(item)
        if progress is not None:
            progress(r + 1, reps)
    summaries = {}
    for est, items in zip(estimators, rows):
        params = est.params or DEFAULT_PARAMS[est.method]
        ok = [(a, b) for a, b, err in items if err is None]
        fails = Counter(err.split(":")[0] for _, _, err in items if err is not None)
        k = len(params)
        est_m = np.array([a for a, _ in ok]).reshape(-1, k)
        se_m = np.array([b for _, b in ok]).reshape(-1, k)
        truth = np.array([s.truth[p] for p in params])
        summaries[est.label] = summarize(est_m, se_m, truth, est.label, params, reps, fails)
    return summaries


SUMMARY_HEADER = ["method", "param", "bias", "sd", "se", "cp", "reps", "failures"]


def summaries_to_csv(summaries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for label, smry in summaries.items():
        for j, p in enumerate(smry.params):
            w.writerow([label, p] + [
                "" if not np.isfinite(v) else f"{v:.6g}"
                for v in (smry.bias[j], smry.sd[j], smry.se[j], smry.cp[j])
            ] + [smry.reps, sum(smry.failures.values())])
    return buf.getvalue()


def with_n(s: SimulationScenario, n) -> SimulationScenario:
    return replace(s, n=n)
