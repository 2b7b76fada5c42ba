import csv
import io

import numpy as np
import pytest

from mixedlong.cli import build_parser, config_from_args, main, run_command
from mixedlong.core import DataError, validate_dataset
from mixedlong.example import N_SUBJECTS, load_example, make_example_dataset
from mixedlong.io import (
    RunConfig,
    UsageError,
    async_csv,
    parse_async_csv,
    parse_config,
    parse_sync_csv,
    read_dataset,
    standardize,
    sync_csv,
    write_dataset,
)
from mixedlong.simulation import gen_dataset, replication_rng, table2_scenario


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_files(tmp_path):
    s = _write(tmp_path / "s.csv", "id,time,y,x1\ns1,0.2,1.0,3.0\ns1,0.6,2.0,4.0\n")
    a = _write(tmp_path / "a.csv", "id,time,z1\ns1,0.4,5.0\n")
    d = read_dataset(s, a)
    assert d.n == 1 and d.subjects[0].n_sync == 2 and d.subjects[0].n_async == 1
    assert parse_sync_csv(s).names == ("x1",) and parse_async_csv(a).names == ("z1",)


def test_round_trip_is_byte_identical(tmp_path):
    d = gen_dataset(table2_scenario("sine2pi", 30), replication_rng(0, 0)).observed
    write_dataset(d, tmp_path / "s.csv", tmp_path / "a.csv")
    back = read_dataset(tmp_path / "s.csv", tmp_path / "a.csv")
    assert back.equals(d)
    assert sync_csv(back) == (tmp_path / "s.csv").read_text()
    assert async_csv(back) == (tmp_path / "a.csv").read_text()


def test_malformed_number_reports_row_and_column(tmp_path):
    s = _write(tmp_path / "s.csv", "id,time,y,x1\ns1,0.2,abc,1.0\n")
    a = _write(tmp_path / "a.csv", "id,time,z1\ns1,0.4,5.0\n")
    with pytest.raises(DataError, match="row 2, column y"):
        read_dataset(s, a)


def test_duplicate_time_and_missing_header(tmp_path):
    a = _write(tmp_path / "a.csv", "id,time,z1\ns1,0.4,5.0\n")
    dup = _write(tmp_path / "d.csv", "id,time,y,x1\ns1,0.2,1,1\ns1,0.2,2,2\n")
    with pytest.raises(DataError, match="duplicate"):
        read_dataset(dup, a)
    nohead = _write(tmp_path / "n.csv", "s1,0.2,1,1\n")
    with pytest.raises(DataError, match="header"):
        read_dataset(nohead, a)


def test_one_sided_subjects_get_empty_grids(tmp_path):
    s = _write(tmp_path / "s.csv", "id,time,y,x1\nA,0.6,1,1\nA,0.2,2,2\n")
    a = _write(tmp_path / "a.csv", "id,time,z1\nB,0.4,5.0\n")
    d = read_dataset(s, a)
    assert [x.id for x in d.subjects] == ["A", "B"]
    assert d.subjects[0].sync_times.tolist() == [0.2, 0.6]
    assert d.subjects[0].n_async == 0 and d.subjects[1].n_sync == 0


def test_rescaling_is_recorded(tmp_path):
    s = _write(tmp_path / "s.csv", "id,time,y,x1\nA,1,1,1\nA,3,2,2\n")
    a = _write(tmp_path / "a.csv", "id,time,z1\nA,5,5.0\n")
    d = read_dataset(s, a)
    assert d.time_map.offset == 1.0 and d.time_map.scale == 4.0
    assert d.subjects[0].sync_times.tolist() == [0.0, 0.5]
    assert np.allclose(d.time_map.invert(d.subjects[0].async_times), [5.0])
    assert read_dataset(s, a, "never").time_map.is_identity
    with pytest.raises(UsageError):
        read_dataset(s, a, "sometimes")


def test_standardize():
    d = load_example()
    z = standardize(d, ["y", "age", "fa"])
    assert abs(z.pooled_sync.y.mean()) < 1e-12 and abs(z.pooled_sync.y.std() - 1) < 1e-12
    assert abs(z.pooled_async.z[:, 0].std() - 1) < 1e-12
    assert np.array_equal(z.pooled_sync.x[:, 1], d.pooled_sync.x[:, 1])
    with pytest.raises(UsageError):
        standardize(d, ["nope"])


def test_example_dataset_shape_and_reproducibility():
    d = load_example()
    assert d.n == N_SUBJECTS and validate_dataset(d) == []
    m = [s.n_sync for s in d.subjects]
    l_ = [s.n_async for s in d.subjects]
    assert min(m) == 1 and max(m) == 7 and min(l_) == 1 and max(l_) == 8
    fresh = make_example_dataset()
    assert np.allclose(d.time_map.invert(d.pooled_sync.t), fresh.pooled_sync.t)
    assert np.array_equal(d.pooled_sync.y, fresh.pooled_sync.y)


def test_config_grammar_and_overrides(tmp_path):
    text = "# experiment\ncommand = mc\nreps = 7   # short\n\nn=50\nexample = yes\n"
    assert parse_config(text) == {"command": "mc", "reps": "7", "n": "50", "example": "yes"}
    cfg = RunConfig().update(parse_config(text))
    assert cfg.reps == 7 and cfg.n == 50 and cfg.example is True
    with pytest.raises(UsageError, match="unknown key"):
        RunConfig().update({"bogus": "1"})
    with pytest.raises(UsageError):
        RunConfig().update({"reps": "many"})
    with pytest.raises(UsageError):
        parse_config("just words")
    path = _write(tmp_path / "c.cfg", text)
    cfg = config_from_args(["--config", str(path), "--reps", "3", "fit"])
    assert cfg.command == "fit" and cfg.reps == 3 and cfg.n == 50


def test_every_config_key_has_a_flag():
    flags = {a.dest for a in build_parser()._actions}
    assert set(f for f in RunConfig.__dataclass_fields__ if f != "command") <= flags


def _run(**kw):
    cfg = RunConfig().update(kw)
    out, err = io.StringIO(), io.StringIO()
    code = run_command(cfg, out, err)
    return code, out.getvalue(), err.getvalue()


def test_fit_naive_on_example():
    code, out, _ = _run(command="fit", method="naive", example=True)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["param", "estimate", "se", "ci_lo", "ci_hi", "p"]
    assert len(rows) - 1 == load_example().p + 1
    assert all(len(c) <= 12 for r in rows[1:] for c in r[1:])


def test_cv_on_simulated_dataset(tmp_path):
    s, a = tmp_path / "s.csv", tmp_path / "a.csv"
    assert _run(command="simulate", scenario="table2", z_mean="sine2pi", n=100, seed=4,
                sync=str(s), async_=str(a))[0] == 0
    code, out, err = _run(command="cv", method="twostep", sync=str(s), async_=str(a),
                          grid_size=9, seed=1)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 10
    assert sum(r[-1] == "selected" for r in rows) == 1 and "selected h=" in err


def test_exit_codes(tmp_path):
    assert _run(command="fit", method="bogus", example=True)[0] == 2
    assert _run(command="explode")[0] == 2
    bad = _write(tmp_path / "s.csv", "id,time,y,x1\ns1,0.2,abc,1.0\n")
    code, _, err = _run(command="fit", sync=str(bad), async_=str(bad))
    assert code == 3 and err.count("\n") == 1 and "row 2, column y" in err
    code, _, err = _run(command="fit", method="plm", bandwidth="fixed", h=1e-4, example=True)
    assert code == 4 and err.startswith("error: ")
    assert main(["fit", "--bandwidth", "cv", "--method", "plm", "--example"]) == 2


def test_failures_leave_no_partial_artifacts(tmp_path):
    out = tmp_path / "report.csv"
    code, _, _ = _run(command="fit", method="plm", bandwidth="fixed", h=1e-4, example=True,
                      out=str(out))
    assert code == 4 and not out.exists()
    s = tmp_path / "s.csv"
    code, _, _ = _run(command="simulate", n=10, sync=str(s),
                      async_=str(tmp_path / "missing" / "a.csv"))
    assert code != 0 and not s.exists()
    assert list(tmp_path.iterdir()) == []


def test_artifacts_are_deterministic_and_reparseable(tmp_path):
    paths = []
    for k in range(2):
        s, a, m = (tmp_path / f"{nm}{k}.csv" for nm in ("s", "a", "m"))
        assert _run(command="simulate", scenario="table2", n=20, seed=8,
                    sync=str(s), async_=str(a))[0] == 0
        assert _run(command="mc", scenario="table1", n=30, reps=3, seed=8, out=str(m))[0] == 0
        paths.append((s, a, m))
    for x, y in zip(*paths):
        assert x.read_bytes() == y.read_bytes()
    s, a, m = paths[0]
    d = read_dataset(s, a)
    assert d.n == 20
    rows = list(csv.DictReader(m.open()))
    assert [r["method"] for r in rows] == ["naive", "plm", "centering"]


def test_screen_command():
    code, out, _ = _run(command="screen", example=True)
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0][:3] == ["mode", "response", "covariate"]
    assert len(rows) == 1 + 2 * 6
