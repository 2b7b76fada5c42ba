import numpy as np
import pytest

from mixedlong.bandwidth import (
    BandwidthError,
    BandwidthGrid,
    BandwidthRule,
    CvCurve,
    cv_bandwidth,
    fold_assignment,
    power_grid,
    quartile_scaled_grid,
)
from mixedlong.core import LongitudinalDataset, NumericalError, SubjectRecord
from mixedlong.simulation import gen_dataset, replication_rng, table2_scenario
from oracles import random_dataset


def test_power_grid_examples():
    g = power_grid(100, -0.8, -0.6, 2)
    assert g.values[0] == pytest.approx(0.02512, abs=5e-6)
    assert g.values[1] == pytest.approx(0.06310, abs=5e-6)
    g5 = power_grid(100, -0.8, -0.6, 5)
    assert len(g5) == 5 and np.all(np.diff(g5.values) > 0)
    with pytest.raises(BandwidthError):
        power_grid(100, -0.7, -0.7, 5)


def test_grid_invariants():
    with pytest.raises(BandwidthError):
        BandwidthGrid([])
    with pytest.raises(BandwidthError):
        BandwidthGrid([0.2, 0.1])
    with pytest.raises(BandwidthError):
        BandwidthGrid([0.5, 1.5])


def _times_dataset(sync, asyn, n_total):
    subs = [SubjectRecord("s000", sync, np.zeros(len(sync)), np.zeros((len(sync), 1)),
                          asyn, np.zeros((len(asyn), 1)))]
    subs += [SubjectRecord(f"s{i:03d}", [], [], np.empty((0, 1)), [], np.empty((0, 1)))
             for i in range(1, n_total)]
    return LongitudinalDataset(tuple(subs), 1, 1)


def test_quartile_grid_oracle():
    d = _times_dataset([0.1, 0.2, 0.3, 0.4, 0.5], [0.6, 0.7, 0.8, 0.9, 1.0], 256)
    # Linear-interpolation quartiles of ten equispaced points: rank 2.25 and 6.75.
    q1 = 0.3 + 0.25 * 0.1
    q3 = 0.7 + 0.75 * 0.1
    g = quartile_scaled_grid(d, -0.7, -0.6, 3)
    assert g.values[0] == pytest.approx(2 * (q3 - q1) * 256 ** -0.7, rel=1e-12)
    assert g.values[-1] == pytest.approx(2 * (q3 - q1) * 256 ** -0.6, rel=1e-12)
    assert q1 == pytest.approx(0.325) and q3 == pytest.approx(0.775)


def test_quartile_grid_errors_and_uniform_limit():
    with pytest.raises(BandwidthError):
        quartile_scaled_grid(_times_dataset([0.5], [0.5], 3))
    t = np.linspace(0, 1, 20_001)
    d = _times_dataset(t[::2], t[1::2], 100)
    g = quartile_scaled_grid(d, -0.7, -0.6, 2)
    assert g.values[0] == pytest.approx(100 ** -0.7, rel=1e-3)
    assert g.values[1] == pytest.approx(100 ** -0.6, rel=1e-3)


def test_fold_assignment_is_a_balanced_partition_independent_of_order():
    d = random_dataset(np.random.default_rng(0), n=23)
    parts = fold_assignment(d, 5, seed=3)
    flat = np.sort(np.concatenate(parts))
    assert flat.tolist() == list(range(23))
    sizes = [p.size for p in parts]
    assert max(sizes) - min(sizes) <= 1
    rev = LongitudinalDataset(tuple(reversed(d.subjects)), 1, 1)
    ids = [[d.subjects[i].id for i in p] for p in parts]
    ids_rev = [[rev.subjects[i].id for i in p] for p in fold_assignment(rev, 5, seed=3)]
    assert [sorted(a) for a in ids] == [sorted(b) for b in ids_rev]


@pytest.fixture(scope="module")
def sim100():
    return gen_dataset(table2_scenario("sine2pi", 100), replication_rng(5, 0)).observed


@pytest.mark.parametrize("method", ["twostep", "simultaneous"])
def test_cv_curve_construction_and_determinism(sim100, method):
    grid = power_grid(100, -0.8, -0.6, 7)
    c1 = cv_bandwidth(sim100, grid, method, folds=5, seed=1)
    c2 = cv_bandwidth(sim100, grid, method, folds=5, seed=1)
    assert c1.grid.size == 7
    assert np.array_equal(c1.fold_errors, c2.fold_errors, equal_nan=True)
    assert c1.to_csv() == c2.to_csv()
    avg = c1.average
    assert avg[c1.selected_index] == np.min(avg[c1.eligible])
    ok = ~c1.flags
    for g in range(7):
        assert avg[g] == pytest.approx(c1.fold_errors[g, ok[g]].mean(), abs=1e-12)
    lines = c1.to_csv().splitlines()
    assert lines[0] == "h,avg_pe,fold1,fold2,fold3,fold4,fold5,flag"
    assert len(lines) == 8 and sum(line.endswith(",selected") for line in lines) == 1


def test_cv_invariant_to_subject_order(sim100):
    grid = power_grid(100, -0.8, -0.6, 4)
    rev = LongitudinalDataset(tuple(reversed(sim100.subjects)), 1, 1)
    a = cv_bandwidth(sim100, grid, "twostep", seed=2).average
    b = cv_bandwidth(rev, grid, "twostep", seed=2).average
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


def test_flagged_cells_are_excluded_and_ties_go_to_smaller_h():
    grid = np.array([0.1, 0.2, 0.3])
    errs = np.array([[1.0, 1.0], [0.5, 0.5], [0.5, 0.5]])
    flags = np.zeros((3, 2), bool)
    c = CvCurve(grid, errs, flags, "twostep")
    assert c.selected == 0.2
    flags[1, 0] = True
    errs[1, 0] = np.nan
    c = CvCurve(grid, errs, flags, "twostep")
    assert c.selected == 0.3
    assert "excluded" in c.to_csv().splitlines()[2]
    with pytest.raises(NumericalError):
        CvCurve(grid, errs, np.ones((3, 2), bool), "twostep").selected_index


def test_cv_flags_tiny_bandwidths_instead_of_failing(sim100):
    c = cv_bandwidth(sim100, [1e-6, 0.05, 0.1], "twostep", seed=0)
    assert c.flags[0].all() and not c.eligible[0]
    assert c.selected in (0.05, 0.1)


def test_rules():
    d = random_dataset(np.random.default_rng(1), n=50, lo=3)
    assert BandwidthRule("fixed", 0.2).resolve(d)[0] == 0.2
    assert BandwidthRule("power", power=-0.7).resolve(d)[0] == pytest.approx(50 ** -0.7)
    with pytest.raises(BandwidthError):
        BandwidthRule("fixed")
    with pytest.raises(BandwidthError):
        BandwidthRule("magic")


def test_cv_selects_interior_bandwidths_in_most_replications():
    scen = table2_scenario("sine2pi", 100)
    grid = power_grid(100, -0.8, -0.6, 21)
    interior = 0
    for r in range(100):
        d = gen_dataset(scen, replication_rng(77, r)).observed
        i = cv_bandwidth(d, grid, "twostep", seed=r).selected_index
        interior += 0 < i < 20
    assert interior >= 50
