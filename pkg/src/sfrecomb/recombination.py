"""Sparse scene flow by warping the t+1 disparity map along the optical flow.

The warped map holds, at each reference pixel ``(x, y)``, the t+1 disparity
sampled at ``(x + u, y + v)`` with bilinear interpolation. A sample is invalid
if it leaves the image or touches an invalid pixel; those are the gaps the
densification stage fills.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .rasterio import DisparityMap, FlowMap

CHANNELS = ("d_t", "u", "v", "d_next")
D_T, U, V, D_NEXT = range(4)


@dataclass(frozen=True)
class SceneFlowImage:
    """Per-pixel (d_t, u, v, d_next) with independent per-channel validity."""

    values: np.ndarray  # (H, W, 4) float64
    valid: np.ndarray  # (H, W, 4) bool

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 3 or values.shape[2] != 4 or values.shape != valid.shape:
            raise ShapeError(f"scene flow image needs (H, W, 4) arrays, got {values.shape} / {valid.shape}")
        values = np.where(valid, values, 0.0)
        values.flags.writeable = False
        valid = valid.copy()
        valid.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]

    def channel(self, name: str) -> np.ndarray:
        return self.values[..., CHANNELS.index(name)]

    @property
    def complete(self) -> np.ndarray:
        """Pixels where all four channels are valid."""
        return self.valid.all(axis=2)

    @property
    def delta_d(self) -> tuple[np.ndarray, np.ndarray]:
        """Disparity change ``d_next - d_t`` and the mask where it is defined."""
        ok = self.valid[..., D_T] & self.valid[..., D_NEXT]
        return np.where(ok, self.values[..., D_NEXT] - self.values[..., D_T], 0.0), ok

    def disparity(self) -> DisparityMap:
        return DisparityMap(self.values[..., D_T], self.valid[..., D_T])

    def warped(self) -> DisparityMap:
        return DisparityMap(self.values[..., D_NEXT], self.valid[..., D_NEXT])

    def flow(self) -> FlowMap:
        return FlowMap(self.values[..., U:V + 1], self.valid[..., U] & self.valid[..., V])


def bilinear_support(x, y, width: int, height: int):
    """Integer corners and weights of the bilinear stencil at ``(x, y)``.

    Returns ``(x0, y0, x1, y1, fx, fy, inside)``. Along an axis where the
    sample sits exactly on the grid the second corner equals the first, so a
    zero-weight neighbor never affects validity and integer shifts reduce to
    plain lookups.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inside = (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)
    xs = np.where(inside, x, 0.0)
    ys = np.where(inside, y, 0.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    x1 = np.where(fx > 0, x0 + 1, x0)
    y1 = np.where(fy > 0, y0 + 1, y0)
    return x0, y0, x1, y1, fx, fy, inside


def bilinear_sample(disp: DisparityMap, x, y):
    """Sample ``disp`` at real-valued positions.

    Returns ``(values, valid)`` arrays broadcast to the shape of ``x``/``y``.
    A sample is invalid outside ``[0, W-1] x [0, H-1]`` or when any of the
    neighbors it blends is invalid.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    x0, y0, x1, y1, fx, fy, inside = bilinear_support(x, y, disp.width, disp.height)
    vals, ok = disp.values, disp.valid
    valid = inside & ok[y0, x0] & ok[y0, x1] & ok[y1, x0] & ok[y1, x1]
    top = (1 - fx) * vals[y0, x0] + fx * vals[y0, x1]
    bottom = (1 - fx) * vals[y1, x0] + fx * vals[y1, x1]
    out = (1 - fy) * top + fy * bottom
    return np.where(valid, out, 0.0), valid


def warp_disparity(d_next_frame: DisparityMap, flow: FlowMap) -> DisparityMap:
    if d_next_frame.shape != flow.shape:
        raise ShapeError(f"disparity {d_next_frame.shape} and flow {flow.shape} differ in size")
    h, w = flow.shape
    ys, xs = np.mgrid[0:h, 0:w]
    vals, ok = bilinear_sample(d_next_frame, xs + flow.u, ys + flow.v)
    return DisparityMap(vals, ok & flow.valid)


def combine(d_t: DisparityMap, flow: FlowMap, warped: DisparityMap) -> SceneFlowImage:
    if not (d_t.shape == flow.shape == warped.shape):
        raise ShapeError(f"input sizes differ: {d_t.shape}, {flow.shape}, {warped.shape}")
    values = np.stack([d_t.values, flow.u, flow.v, warped.values], axis=2)
    valid = np.stack([d_t.valid, flow.valid, flow.valid, warped.valid], axis=2)
    return SceneFlowImage(values, valid)


def recombine(d_t: DisparityMap, flow: FlowMap, d_next_frame: DisparityMap) -> SceneFlowImage:
    """Warp and combine in one step."""
    return combine(d_t, flow, warp_disparity(d_next_frame, flow))


def density(sfi: SceneFlowImage) -> float:
    return float(sfi.complete.mean()) if sfi.complete.size else 0.0
