"""Guarded weighted least squares and cluster-robust sandwich covariance.

Every estimator in the package reduces to solving ``A' W A theta = A' W y`` for
some design ``A`` (possibly smoothed, centred or pair-expanded), nonnegative
weights ``W`` and clusters given by subject. Solves go through a QR factor of
``sqrt(W) A``; the normal-equations matrix is never inverted directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .core import SingularDesignError

COND_LIMIT = 1e12
# Column annihilated relative to its pre-transform norm (centring, I - S).
ANNIHILATED = 1e-10


@dataclass
class LstsqResult:
    coef: np.ndarray
    bread: np.ndarray      # (A' W A)^{-1}
    residual: np.ndarray   # y - A coef, one per row
    cond: float

    def sandwich(self, design, weights, groups, n_groups=None):
        """Cluster-robust ``bread @ sum_g s_g s_g' @ bread``.

        ``s_g`` is the sum over rows of cluster ``g`` of ``w * a * e``.
        """
        meat = cluster_meat(design, weights, self.residual, groups, n_groups)
        cov = self.bread @ meat @ self.bread
        return 0.5 * (cov + cov.T)


def cluster_meat(design, weights, residual, groups, n_groups=None):
    contrib = design * (residual if weights is None else weights * residual)[:, None]
    if n_groups is None:
        n_groups = int(groups.max()) + 1 if groups.size else 0
    scores = np.zeros((n_groups, design.shape[1]))
    np.add.at(scores, groups, contrib)
    return scores.T @ scores


def _offending(vt_row, names):
    loads = np.abs(vt_row)
    idx = np.flatnonzero(loads > 0.1 * loads.max())
    return [names[i] for i in idx] if names is not None else [int(i) for i in idx]


def weighted_lstsq(design, y, weights=None, names=None, reference_norms=None):
    """Solve weighted least squares with a condition-number guard.

    Raises :class:`SingularDesignError` if the weighted design has condition
    number above ``COND_LIMIT`` or if some column has been annihilated, i.e.
    its norm is below ``ANNIHILATED`` times ``reference_norms`` (the column
    norms before centring or smoothing).
    """
    A = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = A.shape
    if n < k:
        raise SingularDesignError(f"{n} rows for {k} coefficients", names or ())
    if reference_norms is not None:
        norms = np.linalg.norm(A, axis=0)
        dead = norms <= ANNIHILATED * np.asarray(reference_norms)
        if np.any(dead):
            cols = [names[i] if names else int(i) for i in np.flatnonzero(dead)]
            raise SingularDesignError(f"columns annihilated: {cols}", cols)
    if weights is None:
        Aw, yw = A, y
    else:
        if np.any(weights < 0):
            raise ValueError("negative weights")
        sw = np.sqrt(weights)
        Aw, yw = A * sw[:, None], y * sw
    Q, R = sla.qr(Aw, mode="economic")
    _, sv, vt = sla.svd(R)
    cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
    if not np.isfinite(cond) or cond > COND_LIMIT:
        cols = _offending(vt[-1], names)
        raise SingularDesignError(
            f"design is singular or ill-conditioned (cond={cond:.3g}); columns {cols}", cols
        )
    coef = sla.solve_triangular(R, Q.T @ yw)
    Rinv = sla.solve_triangular(R, np.eye(k))
    bread = Rinv @ Rinv.T
    return LstsqResult(coef, 0.5 * (bread + bread.T), y - A @ coef, cond)
