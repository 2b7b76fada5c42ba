"""CSV ingestion and export for long-format data, plus the run-config grammar.

Synchronous file: ``id,time,y,<x columns...>``; asynchronous file:
``id,time,<z columns...>``. One row per visit. Floats are written with
``repr`` so that write -> read -> write is byte-identical.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core import DataError, LongitudinalDataset, MixedLongError, SubjectRecord, TimeMap


class UsageError(MixedLongError):
    """Bad command-line or configuration input."""


def _read_rows(path, fixed):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 ({exc})") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0][:len(fixed)]] != fixed:
        raise DataError(f"{path}: missing header; expected columns starting with {','.join(fixed)}")
    header = [c.strip() for c in rows[0]]
    out = OrderedDict()
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {r}: expected {len(header)} fields, got {len(row)}")
        sid = row[0].strip()
        vals = []
        for col, cell in zip(header[1:], row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {col}: malformed number {cell!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: row {r}, column {col}: non-finite value {cell!r}")
            vals.append(v)
        out.setdefault(sid, []).append((r, vals))
    return header, out


def _group(path, rows_by_id):
    grouped = OrderedDict()
    for sid, rows in rows_by_id.items():
        rows = sorted(rows, key=lambda rv: rv[1][0])
        times = [v[0] for _, v in rows]
        for (r, _), a, b in zip(rows[1:], times, times[1:]):
            if a == b:
                raise DataError(f"{path}: row {r}: duplicate (id, time) = ({sid}, {b!r})")
        grouped[sid] = np.array([v for _, v in rows], dtype=float)
    return grouped


@dataclass(frozen=True)
class ParsedTable:
    """One parsed long-format file: covariate names and per-subject row blocks.

    Each block is a time-sorted array whose first column is time.
    """

    path: str
    names: tuple
    blocks: OrderedDict


def parse_sync_csv(path) -> ParsedTable:
    """Parse ``id,time,y,<x...>``; returned blocks have columns ``time, y, x...``."""
    header, rows = _read_rows(path, ["id", "time", "y"])
    return ParsedTable(str(path), tuple(header[3:]), _group(path, rows))


def parse_async_csv(path) -> ParsedTable:
    """Parse ``id,time,<z...>``; returned blocks have columns ``time, z...``."""
    header, rows = _read_rows(path, ["id", "time"])
    return ParsedTable(str(path), tuple(header[2:]), _group(path, rows))


def merge_tables(sync: ParsedTable, asyn: ParsedTable, rescale="auto") -> LongitudinalDataset:
    """Combine the two parsed files into one dataset.

    ``rescale`` maps times to [0, 1] by ``(t - min) / (max - min)`` over the
    union of both files: ``always`` applies it, ``never`` skips it and
    ``auto`` applies it only when some time falls outside [0, 1]. The map is
    kept on the dataset as ``time_map``. Subjects missing from one file get an
    empty grid there; subject order is sync-file order, then async-only ids.
    """
    if rescale not in ("auto", "always", "never"):
        raise UsageError(f"rescale must be auto, always or never, got {rescale!r}")
    p, q = len(sync.names), len(asyn.names)
    blocks = list(sync.blocks.values()) + list(asyn.blocks.values())
    all_t = np.concatenate([b[:, 0] for b in blocks]) if blocks else np.empty(0)
    tmap = TimeMap()
    if all_t.size and rescale != "never":
        lo, hi = float(all_t.min()), float(all_t.max())
        if rescale == "always" or lo < 0 or hi > 1:
            if hi <= lo:
                raise DataError("all observation times are identical; cannot rescale")
            tmap = TimeMap(lo, hi - lo)

    def _t(a):
        return a if tmap.is_identity else tmap.apply(a)

    ids = list(sync.blocks) + [i for i in asyn.blocks if i not in sync.blocks]
    subs = []
    for sid in ids:
        s = sync.blocks.get(sid, np.empty((0, 2 + p)))
        a = asyn.blocks.get(sid, np.empty((0, 1 + q)))
        subs.append(SubjectRecord(sid, _t(s[:, 0]), s[:, 1], s[:, 2:].reshape(-1, p),
                                  _t(a[:, 0]), a[:, 1:].reshape(-1, q)))
    return LongitudinalDataset(tuple(subs), p, q, sync.names, asyn.names, tmap)


def read_dataset(sync_path, async_path, rescale="auto") -> LongitudinalDataset:
    return merge_tables(parse_sync_csv(sync_path), parse_async_csv(async_path), rescale)


def _fmt(v):
    return repr(float(v))


def sync_csv(d: LongitudinalDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "time", "y", *d.x_names])
    for s in d.subjects:
        for j in range(s.n_sync):
            w.writerow([s.id, _fmt(s.sync_times[j]), _fmt(s.responses[j])]
                       + [_fmt(v) for v in s.sync_covariates[j]])
    return buf.getvalue()


def async_csv(d: LongitudinalDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "time", *d.z_names])
    for s in d.subjects:
        for k in range(s.n_async):
            w.writerow([s.id, _fmt(s.async_times[k])] + [_fmt(v) for v in s.async_covariates[k]])
    return buf.getvalue()


def atomic_write(files):
    """Write ``{path: text}``; either every file appears or none does."""
    staged = []
    try:
        for path, text in files.items():
            path = Path(path)
            if path.parent and not path.parent.exists():
                raise DataError(f"{path.parent}: no such directory")
            fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)


def write_dataset(d: LongitudinalDataset, sync_path, async_path):
    atomic_write({sync_path: sync_csv(d), async_path: async_csv(d)})


def standardize(d: LongitudinalDataset, columns) -> LongitudinalDataset:
    """Z-score the named columns (``y`` or any x/z name) over pooled observations."""
    columns = list(columns)
    unknown = [c for c in columns if c != "y" and c not in d.x_names and c not in d.z_names]
    if unknown:
        raise UsageError(f"cannot standardize unknown columns {unknown}")
    ps, pa = d.pooled_sync, d.pooled_async

    def _z(v):
        sd = v.std()
        if sd == 0:
            raise DataError("cannot standardize a constant column")
        return lambda a: (a - v.mean()) / sd

    fy = _z(ps.y) if "y" in columns else None
    fx = {j: _z(ps.x[:, j]) for j, nm in enumerate(d.x_names) if nm in columns}
    fz = {j: _z(pa.z[:, j]) for j, nm in enumerate(d.z_names) if nm in columns}
    subs = []
    for s in d.subjects:
        y = fy(s.responses) if fy else s.responses
        x = np.array(s.sync_covariates.reshape(s.n_sync, d.p))
        for j, f in fx.items():
            x[:, j] = f(x[:, j])
        z = np.array(s.async_covariates.reshape(s.n_async, d.q))
        for j, f in fz.items():
            z[:, j] = f(z[:, j])
        subs.append(SubjectRecord(s.id, s.sync_times, y, x, s.async_times, z))
    return LongitudinalDataset(tuple(subs), d.p, d.q, d.x_names, d.z_names, d.time_map)


# ---------------------------------------------------------------- config


@dataclass
class RunConfig:
    command: str = ""
    sync: str = ""
    async_: str = ""
    out: str = ""
    example: bool = False
    method: str = "twostep"
    step1: str = "centering"
    bandwidth: str = "auto"         # auto | fixed | power | cv | quartile
    h: float = 0.0
    h_power: float = -0.6
    h1_power: float = -0.6
    lo_exp: float = -0.8
    hi_exp: float = -0.6
    grid_size: int = 21
    folds: int = 5
    seed: int = 0
    reps: int = 100
    n: int = 100
    scenario: str = "table1"        # table1 | table2
    z_mean: str = "linear_0.5"
    correlation: str = "independent"
    estimators: str = ""
    screen_mode: str = "both"
    standardize: str = ""
    rescale: str = "auto"

    @classmethod
    def keys(cls):
        return {f.name.rstrip("_"): f for f in fields(cls)}

    def update(self, mapping, origin="config"):
        known = self.keys()
        for key, raw in mapping.items():
            k = key.strip().replace("-", "_").rstrip("_")
            if k not in known:
                raise UsageError(f"{origin}: unknown key {key!r}")
            f = known[k]
            setattr(self, f.name, _coerce(f, raw, origin, key))
        return self


def _coerce(f, raw, origin, key):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if f.type in ("bool", bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if f.type in ("int", int):
            return int(raw)
        if f.type in ("float", float):
            return float(raw)
    except ValueError:
        raise UsageError(f"{origin}: bad value {raw!r} for {key}") from None
    return raw


def parse_config(text, origin="config"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{origin}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    return RunConfig().update(parse_config(text, str(path)), str(path))
