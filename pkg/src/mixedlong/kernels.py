"""Epanechnikov kernel, Nadaraya-Watson means and the local-linear annihilator.

Window computations sort the pooled times once and locate each target's kernel
support by binary search, so the cost is linear in the number of (target,
neighbour) pairs inside the support rather than quadratic in the sample size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DegenerateSmootherError, EmptyWindowError

# Upper bound on target-rows x window-width cells held in memory at once.
_CHUNK_CELLS = 2_000_000


def kernel_eval(u):
    """Epanechnikov kernel ``0.75 (1 - u^2)`` on ``|u| <= 1``, zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return out if out.ndim else float(out)


def scaled_kernel(u, h):
    """``K(u / h) / h``."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h!r}")
    return kernel_eval(np.asarray(u, dtype=float) / h) / h


@dataclass(frozen=True)
class KernelSpec:
    h: float
    family: str = "epanechnikov"

    def __post_init__(self):
        if self.family != "epanechnikov":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"bandwidth must be positive, got {self.h!r}")

    def __call__(self, u):
        return scaled_kernel(u, self.h)


def _as_spec(k):
    return k if isinstance(k, KernelSpec) else KernelSpec(float(k))


def _windows(sorted_times, targets, h):
    # Slightly widened bounds; exact support is enforced by the kernel value.
    pad = h * (1.0 + 1e-12)
    lo = np.searchsorted(sorted_times, targets - pad, side="left")
    hi = np.searchsorted(sorted_times, targets + pad, side="right")
    return lo, hi


def _chunks(lo, hi):
    width = np.maximum(hi - lo, 1)
    rows = max(1, _CHUNK_CELLS // int(width.max(initial=1)))
    for a in range(0, lo.size, rows):
        b = min(a + rows, lo.size)
        yield a, b, int(width[a:b].max())


def _gather(sorted_times, targets, lo, hi, width, h):
    idx = lo[:, None] + np.arange(width)[None, :]
    inside = idx < hi[:, None]
    idx = np.where(inside, idx, lo[:, None])
    idx = np.minimum(idx, sorted_times.size - 1)
    d = targets[:, None] - sorted_times[idx]
    kh = np.where(inside, scaled_kernel(d, h), 0.0)
    return idx, d, kh


def nw_means(sample_times, sample_values, targets, k):
    """Nadaraya-Watson means of ``sample_values`` at each of ``targets``.

    All samples are pooled with equal weight per observation. Raises
    :class:`EmptyWindowError` for the first target with no kernel mass.
    """
    k = _as_spec(k)
    h = k.h
    t = np.asarray(sample_times, dtype=float)
    v = np.asarray(sample_values, dtype=float)
    squeeze = v.ndim == 1
    v = v.reshape(t.size, -1)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    order = np.argsort(t, kind="stable")
    ts, vs = t[order], v[order]
    lo, hi = _windows(ts, targets, h)
    out = np.empty((targets.size, v.shape[1]))
    for a, b, w in _chunks(lo, hi):
        idx, _, kh = _gather(ts, targets[a:b], lo[a:b], hi[a:b], w, h)
        mass = kh.sum(axis=1)
        empty = np.flatnonzero(mass <= 0)
        if empty.size:
            raise EmptyWindowError(float(targets[a + empty[0]]), h)
        out[a:b] = np.einsum("rw,rwk->rk", kh, vs[idx]) / mass[:, None]
    return out[:, 0] if squeeze else out


def nw_mean(sample_times, sample_values, t0, k):
    """Nadaraya-Watson mean at a single point ``t0``."""
    out = nw_means(sample_times, sample_values, [t0], k)
    return out[0]


@dataclass(frozen=True)
class SmootherRow:
    """Row ``i`` of the local-linear smoother matrix.

    ``neighbors`` are positions in the caller's time vector with nonzero kernel
    weight; ``raw`` are the unnormalised weights and ``weights`` the
    normalised ones (summing to one).
    """

    index: int
    neighbors: np.ndarray
    raw: np.ndarray
    weights: np.ndarray


def _ll_weights(ts, targets, lo, hi, width, h, on_degenerate):
    idx, d, kh = _gather(ts, targets, lo, hi, width, h)
    q1 = (kh * d).sum(axis=1)
    q2 = (kh * d * d).sum(axis=1)
    w = kh * (q2[:, None] - d * q1[:, None])
    total = w.sum(axis=1)
    bad = total <= 0
    if np.any(bad):
        if on_degenerate == "error":
            raise DegenerateSmootherError(float(targets[np.flatnonzero(bad)[0]]), h)
        # All support points tie with the target: the local intercept is the
        # kernel-weighted mean.
        w[bad] = kh[bad]
        total[bad] = kh[bad].sum(axis=1)
    return idx, kh, w, w / total[:, None]


def local_linear_weights(times, i, k, on_degenerate="error"):
    """Row ``i`` of the local-linear smoother ``S`` over ``times``.

    ``w_ij = K_h(T_i - T_j) {q_i2 - (T_i - T_j) q_i1}`` with
    ``q_il = sum_j K_h(T_i - T_j) (T_i - T_j)^l``, including the self term, and
    ``s_ij = w_ij / sum_j w_ij``.

    ``on_degenerate="local_constant"`` replaces a row whose weights sum to zero
    (every point in the window ties with ``T_i``, e.g. an isolated time) by
    the kernel-weighted mean instead of raising.
    """
    k = _as_spec(k)
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        raise ValueError("times must be nonempty")
    order = np.argsort(t, kind="stable")
    ts = t[order]
    target = t[i:i + 1]
    lo, hi = _windows(ts, target, k.h)
    idx, kh, w, s = _ll_weights(
        ts, target, lo, hi, int(max(hi[0] - lo[0], 1)), k.h, on_degenerate
    )
    keep = kh[0] > 0
    # Drop zero-kernel entries and duplicated padding; map back to caller order.
    pos, first = np.unique(idx[0][keep], return_index=True)
    raw = w[0][keep][first]
    norm = s[0][keep][first]
    nb = order[pos]
    srt = np.argsort(nb)
    return SmootherRow(int(i), nb[srt], raw[srt], norm[srt])


def smooth_at(times, values, targets, k, on_degenerate="error"):
    """Apply local-linear smoother rows centred at ``targets`` to ``values``.

    With ``targets`` equal to ``times`` this is ``S @ values``.
    """
    k = _as_spec(k)
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    squeeze = v.ndim == 1
    v = v.reshape(t.size, -1)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    order = np.argsort(t, kind="stable")
    ts, vs = t[order], v[order]
    lo, hi = _windows(ts, targets, k.h)
    out = np.empty((targets.size, v.shape[1]))
    for a, b, w in _chunks(lo, hi):
        idx, _, _, s = _ll_weights(ts, targets[a:b], lo[a:b], hi[a:b], w, k.h, on_degenerate)
        out[a:b] = np.einsum("rw,rwk->rk", s, vs[idx])
    return out[:, 0] if squeeze else out


def apply_annihilator(times, k, columns, on_degenerate="error"):
    """Return ``(I - S) @ columns`` without forming ``S``."""
    c = np.asarray(columns, dtype=float)
    return c - smooth_at(times, c, times, k, on_degenerate)
