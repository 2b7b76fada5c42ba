"""Command-line interface: ``mixedlong <command> [options]``.

Commands are ``simulate``, ``fit``, ``cv``, ``mc`` and ``screen``. Options may
also come from a ``--config`` file of ``key = value`` lines; flags given on
the command line win. Exit codes: 0 ok, 2 usage, 3 data, 4 numerical.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import fields

import numpy as np

from . import estimators_async as ea
from . import estimators_sync as es
from .bandwidth import BandwidthError, BandwidthRule, cv_bandwidth, power_grid, quartile_scaled_grid
from .core import DataError, MixedLongError, NumericalError, require_valid
from .example import load_example
from .io import RunConfig, UsageError, atomic_write, load_config, read_dataset, standardize, sync_csv, async_csv
from .simulation import (
    MCEstimator,
    gen_dataset,
    replication_rng,
    run_mc,
    summaries_to_csv,
    table1_scenario,
    table2_scenario,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
COMMANDS = ("simulate", "fit", "cv", "mc", "screen")
METHODS = ("naive", "plm", "centering", "twostep", "ks", "lvcf", "centering-lvcf", "full")
KERNEL_METHODS = ("twostep", "ks")
SYNC_METHODS = ("plm", "centering")
DEFAULT_ESTIMATORS = {"table1": "naive,plm,centering", "table2": "lvcf,centering-lvcf,twostep,ks"}


def _g6(x):
    return f"{float(x):.6g}"


# ---------------------------------------------------------------- helpers


def _scenario(cfg: RunConfig):
    if cfg.scenario == "table1":
        return table1_scenario(cfg.z_mean, cfg.n, cfg.correlation)
    if cfg.scenario == "table2":
        return table2_scenario(cfg.z_mean, cfg.n)
    raise UsageError(f"unknown scenario {cfg.scenario!r}; use table1 or table2")


def _rule(cfg: RunConfig, method):
    """Bandwidth rule for ``method`` under ``cfg.bandwidth``.

    ``auto`` means ``n**h_power`` for the synchronous smoothers and power-grid
    cross-validation for the kernel methods.
    """
    kind = cfg.bandwidth
    if kind not in ("auto", "fixed", "power", "cv", "quartile"):
        raise UsageError(f"unknown bandwidth rule {kind!r}")
    if kind == "auto":
        kind = "cv" if method in KERNEL_METHODS else "power"
    if kind in ("cv", "quartile") and method not in KERNEL_METHODS:
        raise UsageError(f"cross-validated bandwidths apply to twostep and ks, not {method}")
    return BandwidthRule(kind, cfg.h or None, cfg.h_power, cfg.lo_exp, cfg.hi_exp,
                         cfg.grid_size, cfg.folds)


def _load(cfg: RunConfig):
    if cfg.example:
        d = load_example(cfg.rescale)
    elif cfg.sync and cfg.async_:
        d = read_dataset(cfg.sync, cfg.async_, cfg.rescale)
    else:
        raise UsageError("give --sync and --async input files, or --example")
    require_valid(d)
    if cfg.standardize:
        d = standardize(d, [c.strip() for c in cfg.standardize.split(",") if c.strip()])
    return d


def _emit(cfg: RunConfig, text, out):
    if cfg.out:
        atomic_write({cfg.out: text})
    else:
        out.write(text)


def _csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def fit_dataset(d, cfg: RunConfig):
    """Run ``cfg.method`` on ``d``; returns the FitReport."""
    m = cfg.method
    if m not in METHODS:
        raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if m == "naive":
        return es.fit_naive(d)
    if m == "full":
        return es.fit_pooled_full(d)
    if m == "lvcf":
        return ea.fit_lvcf(d)
    h1 = es.default_bandwidth(d.n, cfg.h1_power)
    if m == "centering-lvcf":
        return ea.fit_centering_lvcf(d, h1)
    if m in SYNC_METHODS:
        h, _ = _rule(cfg, m).resolve(d)
        return (es.fit_plm if m == "plm" else es.fit_centering)(d, h)[0]
    if m == "twostep":
        h2, _ = _rule(cfg, m).resolve(d, "twostep", cfg.seed, cfg.step1)
        return ea.fit_two_step(d, cfg.step1, h1, h2)
    h, _ = _rule(cfg, m).resolve(d, "simultaneous", cfg.seed)
    return ea.fit_simultaneous(d, h)


def report_csv(report) -> str:
    rows = [["param", "estimate", "se", "ci_lo", "ci_hi", "p"]]
    for name, est, se, lo, hi, p in report.rows():
        rows.append([name, _g6(est), _g6(se), _g6(lo), _g6(hi), _g6(p)])
    return _csv(rows)


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg, out, err):
    if not (cfg.sync and cfg.async_):
        raise UsageError("simulate needs --sync and --async output paths")
    sim = gen_dataset(_scenario(cfg), replication_rng(cfg.seed, 0))
    atomic_write({cfg.sync: sync_csv(sim.observed), cfg.async_: async_csv(sim.observed)})
    err.write(f"wrote {sim.observed.n} subjects to {cfg.sync} and {cfg.async_}\n")


def cmd_fit(cfg, out, err):
    d = _load(cfg)
    report = fit_dataset(d, cfg)
    _emit(cfg, report_csv(report), out)
    bw = " ".join(f"{k}={_g6(v)}" for k, v in report.bandwidths.items())
    tm = d.time_map
    err.write(f"# method={report.method} n={d.n} n_obs={report.n_obs} n_pairs={report.n_pairs}"
              f" {bw} time_map=(t-{tm.offset!r})/{tm.scale!r}\n".replace("  ", " "))


def cmd_cv(cfg, out, err):
    d = _load(cfg)
    if cfg.method not in KERNEL_METHODS:
        raise UsageError("cv needs --method twostep or --method ks")
    if cfg.bandwidth == "quartile":
        grid = quartile_scaled_grid(d, cfg.lo_exp, cfg.hi_exp, cfg.grid_size)
    elif cfg.bandwidth in ("auto", "cv", "power"):
        grid = power_grid(d.n, cfg.lo_exp, cfg.hi_exp, cfg.grid_size)
    else:
        raise UsageError(f"cv cannot use bandwidth rule {cfg.bandwidth!r}")
    method = "twostep" if cfg.method == "twostep" else "simultaneous"
    curve = cv_bandwidth(d, grid, method, cfg.folds, cfg.seed, cfg.step1, cfg.h1_power)
    h = curve.selected
    _emit(cfg, curve.to_csv(), out)
    err.write(f"selected h={h!r} (grid {grid.provenance})\n")


def cmd_mc(cfg, out, err):
    scen = _scenario(cfg)
    names = cfg.estimators or DEFAULT_ESTIMATORS[cfg.scenario]
    ests = []
    for m in (x.strip() for x in names.split(",")):
        if m not in METHODS:
            raise UsageError(f"unknown estimator {m!r}")
        rule = _rule(cfg, m) if m in SYNC_METHODS + KERNEL_METHODS else None
        ests.append(MCEstimator(m, m, rule, h1_power=cfg.h1_power, step1=cfg.step1))
    if cfg.reps < 1:
        raise UsageError("reps must be positive")
    summaries = run_mc(scen, ests, cfg.reps, cfg.seed)
    _emit(cfg, summaries_to_csv(summaries), out)


def cmd_screen(cfg, out, err):
    d = _load(cfg)
    modes = ("separate", "joint") if cfg.screen_mode == "both" else (cfg.screen_mode,)
    rows = [["mode", "response", "covariate", "slope", "se", "p", "n_pairs"]]
    for mode in modes:
        if mode not in ("separate", "joint"):
            raise UsageError(f"screen mode must be separate, joint or both, got {mode!r}")
        for r in es.screen_correlation(d, mode):
            rows.append([r.mode, r.response, r.covariate, _g6(r.slope), _g6(r.se),
                         _g6(r.pvalue), r.n_pairs])
    _emit(cfg, _csv(rows), out)


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv, "mc": cmd_mc,
            "screen": cmd_screen}


def run_command(cfg: RunConfig, out=None, err=None) -> int:
    """Execute ``cfg.command``; returns the exit status."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        if cfg.command not in HANDLERS:
            raise UsageError(f"unknown command {cfg.command!r}; choose from {', '.join(COMMANDS)}")
        HANDLERS[cfg.command](cfg, out, err)
        return EXIT_OK
    except (UsageError, BandwidthError) as exc:
        code, msg = EXIT_USAGE, exc
    except DataError as exc:
        code, msg = EXIT_DATA, exc
    except (NumericalError, MixedLongError, np.linalg.LinAlgError) as exc:
        code, msg = EXIT_NUMERICAL, exc
    except ValueError as exc:
        code, msg = EXIT_USAGE, exc
    err.write(f"error: {' '.join(str(msg).split())}\n")
    return code


# ---------------------------------------------------------------- argparse


def build_parser():
    p = argparse.ArgumentParser(prog="mixedlong", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        flag = "--" + f.name.rstrip("_").replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=f.name, action="store_const", const=True, default=None)
        else:
            typ = {"int": int, "float": float}.get(f.type, str)
            p.add_argument(flag, dest=f.name, type=typ, default=None,
                           metavar=f.name.rstrip("_").upper(),
                           help=f"default: {f.default!r}")
    return p


def config_from_args(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else RunConfig()
    given = {f.name.rstrip("_"): getattr(args, f.name) for f in fields(RunConfig)
             if f.name != "command" and getattr(args, f.name) is not None}
    cfg.update(given, "command line")
    if args.command:
        cfg.command = args.command
    return cfg


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    return run_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
