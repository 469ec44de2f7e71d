"""Weighted least-squares local models.

Both fits work on centered coordinates: the intercept (plane offset or
affine translation) is unregularized, so its optimum is always the weighted
mean residual and only the linear part needs a solve. The batched ``*_batch``
functions fit one model per row of ``(T, k)`` neighbor arrays; the scalar
wrappers take ``(Seed, distance)`` lists.

Weights are ``exp(-alpha * dist)`` rescaled so the nearest neighbor of each
target weighs 1. The rescaling keeps the ridge term comparable across
neighborhoods at very different geodesic distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NoSeedsError

# relative eigenvalue threshold below which a scatter matrix is rank deficient
RANK_TOL = 1e-12


@dataclass(frozen=True)
class PlaneModel:
    """Disparity plane ``d(x, y) = a*x + b*y + c`` over pixel coordinates."""

    a: float
    b: float
    c: float

    def __call__(self, x, y):
        return self.a * np.asarray(x) + self.b * np.asarray(y) + self.c


@dataclass(frozen=True)
class AffineMotionModel:
    """3D motion ``P' = A @ P + t``."""

    A: np.ndarray
    t: np.ndarray

    def apply(self, p):
        return np.asarray(p) @ self.A.T + self.t


def neighbor_weights(dist: np.ndarray, present: np.ndarray, alpha: float) -> np.ndarray:
    dist = np.where(present, dist, np.inf)
    nearest = np.min(dist, axis=-1, keepdims=True)
    nearest = np.where(np.isfinite(nearest), nearest, 0.0)
    with np.errstate(invalid="ignore"):
        w = np.exp(-alpha * (dist - nearest))
    return np.where(present, w, 0.0)


def _weighted_mean(values, w, wsum):
    return np.einsum("tk,tk...->t...", w, values) / wsum.reshape((-1,) + (1,) * (values.ndim - 2))


def _rank(scatter: np.ndarray) -> np.ndarray:
    """Numerical rank of a batch of symmetric PSD matrices."""
    ev = np.linalg.eigvalsh(scatter)
    top = ev[..., -1:]
    return np.sum(ev > RANK_TOL * np.where(top > 0, top, np.inf), axis=-1)


def fit_plane_batch(x, y, d, dist, present, alpha: float, ridge: float):
    """Fit one disparity plane per row.

    Args:
        x, y: (T, k) neighbor pixel coordinates.
        d: (T, k) neighbor values.
        dist: (T, k) geodesic distances.
        present: (T, k) mask of usable neighbors.

    Returns:
        (T, 3) array of ``(a, b, c)``. Rows with fewer than 3 neighbors or
        collinear neighbors get ``a = b = 0`` and ``c`` the weighted mean.
    """
    present = np.asarray(present, dtype=bool)
    if np.any(present.sum(axis=1) == 0):
        raise NoSeedsError("plane fit needs at least one neighbor")
    w = neighbor_weights(dist, present, alpha)
    wsum = w.sum(axis=1)
    xy = np.stack([x, y], axis=-1).astype(np.float64)
    d = np.where(present, d, 0.0).astype(np.float64)
    xy_mean = _weighted_mean(xy, w, wsum)
    d_mean = _weighted_mean(d, w, wsum)
    xyc = np.where(present[..., None], xy - xy_mean[:, None, :], 0.0)
    dc = np.where(present, d - d_mean[:, None], 0.0)

    scatter = np.einsum("tk,tki,tkj->tij", w, xyc, xyc)
    rhs = np.einsum("tk,tki,tk->ti", w, xyc, dc)
    ok = (present.sum(axis=1) >= 3) & (_rank(scatter) == 2)

    ab = np.zeros((len(w), 2))
    if np.any(ok):
        lhs = scatter[ok] + ridge * np.eye(2)
        ab[ok] = np.linalg.solve(lhs, rhs[ok][..., None])[..., 0]
    c = d_mean - np.einsum("ti,ti->t", ab, xy_mean)
    return np.column_stack([ab, c])


def fit_affine_batch(p0, p1, dist, present, alpha: float, ridge: float):
    """Fit one affine 3D motion per row.

    Args:
        p0, p1: (T, k, 3) neighbor points at t and t+1.
        dist: (T, k) geodesic distances.
        present: (T, k) mask of usable neighbors.

    Returns:
        ``(A, t)`` of shapes (T, 3, 3) and (T, 3). The linear part minimizes
        the weighted residual plus ``ridge * ||A - I||^2``. Rows with fewer
        than 4 neighbors, collinear points, or coplanar points without ridge
        get ``A = I`` and ``t`` the weighted mean displacement.
    """
    present = np.asarray(present, dtype=bool)
    if np.any(present.sum(axis=1) == 0):
        raise NoSeedsError("affine fit needs at least one neighbor")
    w = neighbor_weights(dist, present, alpha)
    wsum = w.sum(axis=1)
    p0 = np.where(present[..., None], p0, 0.0).astype(np.float64)
    p1 = np.where(present[..., None], p1, 0.0).astype(np.float64)
    m0 = _weighted_mean(p0, w, wsum)
    m1 = _weighted_mean(p1, w, wsum)
    c0 = np.where(present[..., None], p0 - m0[:, None, :], 0.0)
    c1 = np.where(present[..., None], p1 - m1[:, None, :], 0.0)

    scatter = np.einsum("tk,tki,tkj->tij", w, c0, c0)
    cross = np.einsum("tk,tki,tkj->tij", w, c1, c0)
    rank = _rank(scatter)
    ok = (present.sum(axis=1) >= 4) & (rank >= (2 if ridge > 0 else 3))

    eye = np.eye(3)
    A = np.broadcast_to(eye, (len(w), 3, 3)).copy()
    if np.any(ok):
        # A (S + rI) = C + rI  =>  (S + rI) A^T = (C + rI)^T
        lhs = scatter[ok] + ridge * eye
        rhs = np.swapaxes(cross[ok] + ridge * eye, -1, -2)
        A[ok] = np.swapaxes(np.linalg.solve(lhs, rhs), -1, -2)
    t = m1 - np.einsum("tij,tj->ti", A, m0)
    return A, t
