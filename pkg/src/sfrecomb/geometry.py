"""Rectified stereo camera model.

Converts between the image-space scene flow representation (pixel, optical
flow, disparity at t, disparity at t+1) and the world-space one (3D position
at t plus 3D displacement). All functions broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class CameraRig:
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float  # meters

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy", "baseline"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"rig parameter {name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError("focal lengths must be positive")
        if self.baseline <= 0:
            raise DomainError("baseline must be positive")

    @property
    def fb(self) -> float:
        """Disparity-depth product ``fx * baseline``."""
        return self.fx * self.baseline

    @classmethod
    def from_mapping(cls, cfg) -> "CameraRig":
        return cls(*(float(cfg[k]) for k in ("fx", "fy", "cx", "cy", "baseline")))


class ScenePoint(NamedTuple):
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.X, self.Y, self.Z), axis=-1)


class SceneFlow3D(NamedTuple):
    position: ScenePoint
    displacement: tuple  # (dX, dY, dZ), meters


class ImageSceneFlow(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    d_t: np.ndarray
    d_next: np.ndarray


def _require_positive(d, what="disparity"):
    d = np.asarray(d, dtype=np.float64)
    if np.any(~(d > 0)):
        raise DomainError(f"{what} must be positive and finite")
    return d


def disparity_to_depth(d, rig: CameraRig):
    d = _require_positive(d)
    return rig.fb / d


def depth_to_disparity(z, rig: CameraRig):
    z = _require_positive(z, "depth")
    return rig.fb / z


def pixel_to_point(x, y, d, rig: CameraRig) -> ScenePoint:
    z = disparity_to_depth(d, rig)
    return ScenePoint((np.asarray(x) - rig.cx) * z / rig.fx, (np.asarray(y) - rig.cy) * z / rig.fy, z)


def point_to_pixel(p, rig: CameraRig):
    """Project a point (anything indexable as X, Y, Z) to ``(x, y, d)``."""
    X, Y, Z = p[0], p[1], _require_positive(p[2], "depth")
    return rig.fx * X / Z + rig.cx, rig.fy * Y / Z + rig.cy, rig.fb / Z


def image_to_world(x, y, u, v, d_t, d_next, rig: CameraRig) -> SceneFlow3D:
    p0 = pixel_to_point(x, y, d_t, rig)
    p1 = pixel_to_point(np.asarray(x) + u, np.asarray(y) + v, d_next, rig)
    return SceneFlow3D(p0, (p1.X - p0.X, p1.Y - p0.Y, p1.Z - p0.Z))


def world_to_image(sf: SceneFlow3D, rig: CameraRig) -> ImageSceneFlow:
    p0 = sf.position
    dX, dY, dZ = sf.displacement
    x, y, d_t = point_to_pixel(p0, rig)
    x1, y1, d_next = point_to_pixel((p0.X + dX, p0.Y + dY, p0.Z + dZ), rig)
    return ImageSceneFlow(x, y, x1 - x, y1 - y, d_t, d_next)
