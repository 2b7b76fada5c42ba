import numpy as np
import pytest

from mixedlong.core import (
    DataError,
    FitReport,
    LongitudinalDataset,
    SubjectRecord,
    require_valid,
    validate_dataset,
)
from oracles import random_dataset


def _subject(sid, t, p=1, s=None, q=1):
    t = np.asarray(t, dtype=float)
    s = t if s is None else np.asarray(s, dtype=float)
    return SubjectRecord(sid, t, np.arange(t.size, dtype=float), np.ones((t.size, p)),
                         s, np.ones((s.size, q)))


def test_well_formed_dataset_is_valid():
    d = LongitudinalDataset((_subject("a", [0.1, 0.5]), _subject("b", [0.2, 0.3, 0.9])), 1, 1)
    assert validate_dataset(d) == []
    assert d.n == 2 and d.m == 5


def test_times_not_increasing():
    d = LongitudinalDataset((_subject("a", [0.3, 0.2]), _subject("b", [0.1, 0.4])), 1, 1)
    msgs = [(v.subject, v.field, v.message) for v in validate_dataset(d)]
    assert ("a", "sync_times", "times not increasing") in msgs


def test_dimension_mismatch():
    d = LongitudinalDataset((_subject("a", [0.1, 0.2], p=2), _subject("b", [0.1, 0.4], p=3)), 2, 1)
    bad = [v for v in validate_dataset(d) if "dimension mismatch" in v.message]
    assert [v.subject for v in bad] == ["b"]


def test_other_violations():
    d = LongitudinalDataset((_subject("a", [0.1, 0.1]), _subject("a", [0.2, 1.5])), 1, 1)
    msgs = {v.message for v in validate_dataset(d)}
    assert {"duplicate times", "times outside [0, 1]", "duplicate subject id"} <= msgs
    tiny = LongitudinalDataset((_subject("a", [0.1, 0.2]),), 1, 1)
    assert any("p + 2" in v.message for v in validate_dataset(tiny))
    with pytest.raises(DataError):
        require_valid(tiny)


def test_empty_grids_are_allowed():
    empty = SubjectRecord("e", [], [], np.empty((0, 1)), [], np.empty((0, 1)))
    d = LongitudinalDataset((_subject("a", [0.1, 0.2, 0.3]), empty), 1, 1)
    assert validate_dataset(d) == []
    assert d.pooled_sync.t.size == 3


def test_validation_is_pure():
    d = random_dataset(np.random.default_rng(0), n=4)
    snapshot = [s.sync_times.copy() for s in d.subjects]
    assert validate_dataset(d) == validate_dataset(d)
    assert all(np.array_equal(a, s.sync_times) for a, s in zip(snapshot, d.subjects))
    with pytest.raises(ValueError):
        d.subjects[0].sync_times[0] = 5.0


def test_fit_report_intervals():
    r = FitReport("x", ("alpha", "b"), [1.0, -2.0], np.diag([0.25, 0.0]))
    assert r.se.tolist() == [0.5, 0.0]
    assert np.allclose(r.ci[0], [1 - 0.98, 1 + 0.98])
    assert r.pvalues[1] == 0.0
    assert r.pvalues[0] == pytest.approx(0.0455, abs=1e-4)
    assert r["b"] == -2.0 and r.se_of("alpha") == 0.5


def test_pooled_arrays_follow_subject_order():
    d = random_dataset(np.random.default_rng(5), n=3)
    ps = d.pooled_sync
    assert np.array_equal(ps.group, np.repeat(np.arange(3), [s.n_sync for s in d.subjects]))
    assert np.array_equal(ps.t, np.concatenate([s.sync_times for s in d.subjects]))
