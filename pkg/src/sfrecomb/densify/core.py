"""Sparse-to-dense interpolation of a SceneFlowImage.

Seeds are pixels with all four channels valid. Every other pixel is a
target: it gets its k geodesically nearest seeds, a local disparity plane
and/or a local affine 3D motion fitted to them, and the variant decides which
channels those models overwrite.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..edgecost import EdgeCostMap
from ..errors import ConfigError, NoSeedsError, NumericalError, ShapeError
from ..geometry import CameraRig, pixel_to_point, point_to_pixel
from ..recombination import D_NEXT, D_T, U, V, SceneFlowImage
from .geodesic import knn_exact, knn_targets
from .kitti import kitti_fill
from .models import AffineMotionModel, PlaneModel, fit_affine_batch, fit_plane_batch, neighbor_weights

VARIANTS = ("kitti", "full", "motion", "disp_affine", "disp_plane")


@dataclass(frozen=True)
class DensifyParams:
    k_geo: int = 25
    alpha: float = 2.0
    step_cost: float = 0.01
    ridge: float = 1e-6
    variant: str = "full"
    exact_geodesic: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if int(self.k_geo) != self.k_geo or self.k_geo < 4:
            raise ConfigError("k_geo must be an integer >= 4")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if not self.step_cost > 0:
            raise ConfigError("step_cost must be positive")
        if not self.ridge >= 0:
            raise ConfigError("ridge must be nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Seed:
    x: int
    y: int
    u: float
    v: float
    d_t: float
    d_next: float

    def points(self, rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
        """3D position at t and at t+1."""
        p0 = pixel_to_point(self.x, self.y, self.d_t, rig).as_array()
        p1 = pixel_to_point(self.x + self.u, self.y + self.v, self.d_next, rig).as_array()
        return p0, p1


def collect_seeds(sfi: SceneFlowImage) -> list[Seed]:
    """All complete pixels in raster order."""
    ys, xs = np.nonzero(sfi.complete)
    vals = sfi.values[ys, xs]
    return [Seed(int(x), int(y), *map(float, (r[U], r[V], r[D_T], r[D_NEXT]))) for x, y, r in zip(xs, ys, vals)]


def geodesic_neighbors(seeds, cost: EdgeCostMap, target, k: int, step_cost: float = 0.01):
    """Up to k seeds nearest to ``target = (x, y)`` in geodesic distance.

    Exact single-source search; returns ``[(Seed, distance), ...]`` sorted by
    distance, ties broken by seed ``(y, x)``.
    """
    seeds = list(seeds)
    if not seeds:
        raise NoSeedsError("no seeds to search")
    h, w = cost.shape
    by_index = {}
    mask = np.zeros((h, w), bool)
    for s in seeds:
        mask[s.y, s.x] = True
        by_index[s.y * w + s.x] = s
    tx, ty = target
    if not (0 <= tx < w and 0 <= ty < h):
        raise ShapeError(f"target {target} outside the {w}x{h} cost map")
    labels, dists = knn_exact(cost.cost, mask, np.array([ty * w + tx]), k, step_cost)
    return [(by_index[int(i)], float(d)) for i, d in zip(labels[0], dists[0]) if i >= 0]


def _neighbor_arrays(neighbors):
    if not neighbors:
        raise NoSeedsError("empty neighbor list")
    seeds, dist = zip(*neighbors)
    cols = {f: np.array([[getattr(s, f) for s in seeds]], dtype=np.float64) for f in ("x", "y", "u", "v", "d_t", "d_next")}
    return cols, np.array([dist], dtype=np.float64)


def fit_plane(neighbors, params: DensifyParams = DensifyParams(), value: str = "d_t") -> PlaneModel:
    """Weighted plane through the neighbors' ``value`` channel over pixel coordinates."""
    cols, dist = _neighbor_arrays(neighbors)
    present = np.ones_like(dist, bool)
    a, b, c = fit_plane_batch(cols["x"], cols["y"], cols[value], dist, present, params.alpha, params.ridge)[0]
    return PlaneModel(float(a), float(b), float(c))


def fit_affine3d(neighbors, rig: CameraRig, params: DensifyParams = DensifyParams()) -> AffineMotionModel:
    cols, dist = _neighbor_arrays(neighbors)
    p0 = pixel_to_point(cols["x"], cols["y"], cols["d_t"], rig).as_array()
    p1 = pixel_to_point(cols["x"] + cols["u"], cols["y"] + cols["v"], cols["d_next"], rig).as_array()
    A, t = fit_affine_batch(p0, p1, dist, np.ones_like(dist, bool), params.alpha, params.ridge)
    return AffineMotionModel(A[0], t[0])


def _kitti_variant(sfi: SceneFlowImage) -> SceneFlowImage:
    d_t = kitti_fill(sfi.disparity())
    flow = kitti_fill(sfi.flow())
    d_next = kitti_fill(sfi.warped())
    values = np.stack([d_t.values, flow.u, flow.v, d_next.values], axis=2)
    # valid input channels pass through bit-identically
    values = np.where(sfi.valid, sfi.values, values)
    return SceneFlowImage(values, np.ones_like(sfi.valid))


def _predict_motion(A, t, p0):
    p1 = np.einsum("tij,tj->ti", A, p0) + t
    return p1, p1[:, 2] > 0


def densify(sfi: SceneFlowImage, cost: EdgeCostMap | None, rig: CameraRig | None,
            params: DensifyParams = DensifyParams()) -> SceneFlowImage:
    """Return a fully dense copy of ``sfi`` filled according to ``params.variant``."""
    if params.variant == "kitti":
        return _kitti_variant(sfi)
    if cost is None or rig is None:
        raise ConfigError(f"variant {params.variant} needs an edge cost map and a camera rig")
    if cost.shape != sfi.shape:
        raise ShapeError(f"cost map {cost.shape} does not match image {sfi.shape}")

    seed_mask = sfi.complete
    if not seed_mask.any():
        raise NoSeedsError("no pixel has all four channels valid")
    h, w = sfi.shape
    flat_vals = sfi.values.reshape(-1, 4)
    flat_valid = sfi.valid.reshape(-1, 4)
    targets = np.flatnonzero(~seed_mask)
    if targets.size == 0:
        return sfi

    labels, dists = knn_targets(cost.cost, seed_mask, targets, params.k_geo, params.step_cost,
                                exact=params.exact_geodesic)
    present = labels >= 0
    nb = np.where(present, labels, labels[:, :1])
    nx = (nb % w).astype(np.float64)
    ny = (nb // w).astype(np.float64)
    nvals = flat_vals[nb]  # (T, k, 4)
    tx = (targets % w).astype(np.float64)
    ty = (targets // w).astype(np.float64)
    tvals = flat_vals[targets]
    tvalid = flat_valid[targets]

    variant = params.variant
    gap = ~tvalid[:, D_NEXT]
    flow_missing = ~(tvalid[:, U] & tvalid[:, V])
    fit = dict(alpha=params.alpha, ridge=params.ridge)

    def plane_at(rows, channel):
        coef = fit_plane_batch(nx[rows], ny[rows], nvals[rows, :, channel], dists[rows], present[rows], **fit)
        return coef[:, 0] * tx[rows] + coef[:, 1] * ty[rows] + coef[:, 2]

    out = tvals.copy()

    replace_dt = ~tvalid[:, D_T] | (gap if variant == "full" else False)
    if replace_dt.any():
        rows = np.flatnonzero(replace_dt)
        d = plane_at(rows, D_T)
        bad = ~(d > 0)
        if bad.any():
            # plane extrapolated through zero: fall back to the local weighted mean
            sub = rows[bad]
            d[bad] = _weighted_mean_rows(nvals[sub, :, D_T], dists[sub], present[sub], params.alpha)
        out[rows, D_T] = d

    if variant in ("full", "motion"):
        replace_flow = gap | flow_missing
    else:
        replace_flow = flow_missing
    replace_dn = gap

    if variant == "disp_plane":
        if replace_dn.any():
            rows = np.flatnonzero(replace_dn)
            d = plane_at(rows, D_NEXT)
            bad = ~(d > 0)
            if bad.any():
                d[bad] = _weighted_mean_rows(nvals[rows[bad], :, D_NEXT], dists[rows[bad]], present[rows[bad]], params.alpha)
            out[rows, D_NEXT] = d
        if replace_flow.any():
            rows = np.flatnonzero(replace_flow)
            out[rows, U] = plane_at(rows, U)
            out[rows, V] = plane_at(rows, V)
    else:
        rows = np.flatnonzero(replace_flow | replace_dn)
        if rows.size:
            p0n = pixel_to_point(nx[rows], ny[rows], nvals[rows, :, D_T], rig).as_array()
            p1n = pixel_to_point(nx[rows] + nvals[rows, :, U], ny[rows] + nvals[rows, :, V],
                                 nvals[rows, :, D_NEXT], rig).as_array()
            A, t = fit_affine_batch(p0n, p1n, dists[rows], present[rows], **fit)
            p0 = pixel_to_point(tx[rows], ty[rows], out[rows, D_T], rig).as_array()
            p1, ok = _predict_motion(A, t, p0)
            if not ok.all():
                # affine extrapolation crossed the camera plane: use pure translation
                shift = _weighted_mean_rows(p1n[~ok] - p0n[~ok], dists[rows[~ok]], present[rows[~ok]], params.alpha)
                p1[~ok] = p0[~ok] + shift
                if not (p1[:, 2] > 0).all():
                    raise NumericalError("interpolated motion moves a point behind the camera")
            x1, y1, d1 = point_to_pixel(p1.T, rig)
            rf = replace_flow[rows]
            rd = replace_dn[rows]
            out[rows[rf], U] = (x1 - tx[rows])[rf]
            out[rows[rf], V] = (y1 - ty[rows])[rf]
            out[rows[rd], D_NEXT] = d1[rd]

    values = flat_vals.copy()
    values[targets] = out
    result = SceneFlowImage(values.reshape(h, w, 4), np.ones((h, w, 4), bool))
    if not np.all(np.isfinite(result.values)):
        raise NumericalError("interpolation produced non-finite values")
    return result


def _weighted_mean_rows(values, dist, present, alpha):
    wts = neighbor_weights(dist, present, alpha)
    wsum = wts.sum(axis=1)
    return np.einsum("tk,tk...->t...", wts, values) / wsum.reshape((-1,) + (1,) * (values.ndim - 2))
