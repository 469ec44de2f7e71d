"""Boundary cost maps that steer the geodesic neighborhoods."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .rasterio import GrayImage, _imread

EDGE_PERCENTILE = 95


@dataclass(frozen=True)
class EdgeCostMap:
    cost: np.ndarray  # (H, W) float64 in [0, 1]

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=np.float64)
        if cost.ndim != 2:
            raise ShapeError(f"edge cost must be 2-D, got {cost.shape}")
        if not np.all(np.isfinite(cost)) or cost.min(initial=0) < 0 or cost.max(initial=0) > 1:
            raise ValueError("edge costs must be finite and within [0, 1]")
        cost = cost.copy()
        cost.flags.writeable = False
        object.__setattr__(self, "cost", cost)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape

    @classmethod
    def zeros(cls, shape) -> "EdgeCostMap":
        return cls(np.zeros(shape))


def gradient_edge_cost(img: GrayImage) -> EdgeCostMap:
    """Gradient magnitude scaled by its 95th percentile and clipped to 1.

    Central differences inside the image, one-sided differences on the
    border. When fewer than 5% of pixels carry any gradient the percentile is
    zero and the maximum is used instead.
    """
    g = img.intensity
    if g.size == 0:
        raise ShapeError("empty image")
    if min(g.shape) < 2:
        raise ShapeError(f"image too small for gradients: {g.shape}")
    gy, gx = np.gradient(g)
    mag = np.hypot(gx, gy)
    scale = np.percentile(mag, EDGE_PERCENTILE)
    if scale <= 0:
        scale = mag.max()
    if scale <= 0:
        return EdgeCostMap.zeros(g.shape)
    return EdgeCostMap(np.minimum(1.0, mag / scale))


def load_edge_map(path) -> EdgeCostMap:
    img = _imread(path)
    if img.ndim != 2:
        raise FormatError(f"{path}: edge map must be single-channel")
    if img.dtype != np.uint8:
        raise FormatError(f"{path}: edge map must be 8-bit, got {img.dtype}")
    return EdgeCostMap(img.astype(np.float64) / 255.0)
