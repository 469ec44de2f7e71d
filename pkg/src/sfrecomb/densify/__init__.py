"""Edge-aware densification of sparse scene flow."""

from .core import (
    VARIANTS,
    DensifyParams,
    Seed,
    collect_seeds,
    densify,
    fit_affine3d,
    fit_plane,
    geodesic_neighbors,
)
from .geodesic import knn_all, knn_exact
from .kitti import kitti_fill
from .models import AffineMotionModel, PlaneModel

__all__ = [
    "VARIANTS",
    "AffineMotionModel",
    "DensifyParams",
    "PlaneModel",
    "Seed",
    "collect_seeds",
    "densify",
    "fit_affine3d",
    "fit_plane",
    "geodesic_neighbors",
    "kitti_fill",
    "knn_all",
    "knn_exact",
]
