import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedlong.core import DegenerateSmootherError, EmptyWindowError
from mixedlong.kernels import (
    KernelSpec,
    apply_annihilator,
    kernel_eval,
    local_linear_weights,
    nw_mean,
    nw_means,
    scaled_kernel,
    smooth_at,
)
from oracles import dense_smoother, distinct_times, nw_oracle


def test_kernel_eval_examples():
    assert kernel_eval(0.0) == 0.75
    assert kernel_eval(1.5) == 0.0
    assert kernel_eval(-0.5) == pytest.approx(0.5625, abs=1e-15)
    assert kernel_eval(1.0) == 0.0


def test_scaled_kernel_examples():
    assert scaled_kernel(0.0, 0.5) == pytest.approx(1.5, abs=1e-15)
    assert scaled_kernel(0.25, 0.5) == pytest.approx(1.125, abs=1e-15)
    assert scaled_kernel(0.6, 0.5) == 0.0


@pytest.mark.parametrize("h", [0.0, -1.0])
def test_scaled_kernel_rejects_nonpositive_h(h):
    with pytest.raises(ValueError):
        scaled_kernel(0.1, h)
    with pytest.raises(ValueError):
        KernelSpec(h)


def test_kernel_integrates_to_one_and_is_symmetric():
    u = np.linspace(-1, 1, 10_001)
    assert abs(np.trapezoid(kernel_eval(u), u) - 1.0) <= 1e-6
    v = np.random.default_rng(0).uniform(-2, 2, 500)
    assert np.array_equal(kernel_eval(v), kernel_eval(-v))


def test_nw_mean_examples():
    assert nw_mean([0.1, 0.2, 0.7], [3.0, 3.0, 3.0], 0.3, 0.5) == pytest.approx(3.0)
    assert nw_mean([0.4, 0.6], [0.0, 2.0], 0.5, 0.3) == pytest.approx(1.0)
    assert nw_mean([0.1, 0.2], [1.0, 3.0], 0.15, 0.2) == pytest.approx(2.0, abs=1e-14)


def test_nw_mean_empty_window_reports_point_and_bandwidth():
    with pytest.raises(EmptyWindowError) as exc:
        nw_mean([0.1, 0.2], [1.0, 3.0], 0.9, 0.1)
    assert exc.value.t0 == 0.9 and exc.value.h == 0.1


def test_nw_means_match_oracle():
    rng = np.random.default_rng(1)
    t = rng.uniform(0, 1, 60)
    v = rng.normal(size=(60, 2))
    targets = rng.uniform(0.1, 0.9, 15)
    got = nw_means(t, v, targets, 0.3)
    want = np.array([nw_oracle(t, v, g, 0.3) for g in targets])
    assert np.max(np.abs(got - want)) <= 1e-12


def test_single_point_row():
    # A lone time has zero local-linear mass: error by default, s = 1 on request.
    with pytest.raises(DegenerateSmootherError):
        local_linear_weights([0.4], 0, 0.1)
    row = local_linear_weights([0.4], 0, 0.1, on_degenerate="local_constant")
    assert row.weights.tolist() == [1.0]


def test_row_matches_dense_oracle():
    times = np.array([0.0, 0.1, 0.2])
    row = local_linear_weights(times, 2, 0.15)
    dense = dense_smoother(times, 0.15)[2]
    full = np.zeros(3)
    full[row.neighbors] = row.weights
    assert np.max(np.abs(full - dense)) <= 1e-12
    assert abs(row.weights.sum() - 1) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 40), st.floats(0.1, 0.6), st.integers(0, 10_000))
def test_rows_sum_to_one(m, h, seed):
    t = distinct_times(np.random.default_rng(seed), m)
    for i in range(m):
        try:
            row = local_linear_weights(t, i, h)
        except DegenerateSmootherError:
            continue
        assert abs(row.weights.sum() - 1) <= 1e-12
        assert np.all(np.abs(t[row.neighbors] - t[i]) < h)


def test_annihilator_examples():
    rng = np.random.default_rng(2)
    t = np.sort(rng.uniform(0, 1, 20))
    const = np.full((20, 1), 3.7)
    assert np.max(np.abs(apply_annihilator(t, 0.2, const))) <= 1e-10
    col = rng.normal(size=20)
    twin = apply_annihilator(t, 0.2, np.column_stack([col, col]))
    assert np.array_equal(twin[:, 0], twin[:, 1])
    m = rng.normal(size=(20, 2))
    dense = (np.eye(20) - dense_smoother(t, 0.2)) @ m
    assert np.max(np.abs(apply_annihilator(t, 0.2, m) - dense)) <= 1e-10


def test_annihilator_matches_dense_oracle_on_random_instances():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = int(rng.integers(5, 200))
        t = rng.uniform(0, 1, m)           # unsorted input on purpose
        h = float(rng.uniform(0.15, 0.5))
        cols = rng.normal(size=(m, 2))
        dense = (np.eye(m) - dense_smoother(t, h)) @ cols
        assert np.max(np.abs(apply_annihilator(t, h, cols) - dense)) <= 1e-10


def test_smoother_reproduces_lines():
    t = np.linspace(0, 1, 50)
    line = 2.0 - 3.0 * t
    assert np.max(np.abs(smooth_at(t, line, t, 0.2) - line)) <= 1e-10
