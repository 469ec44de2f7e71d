"""Color renderings of flow and disparity, and velocity-colored point clouds."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import hsv_to_rgb

from .errors import NoDataError
from .geometry import CameraRig, pixel_to_point
from .rasterio import DisparityMap, FlowMap
from .recombination import D_NEXT, D_T, U, V, SceneFlowImage

AUTO = "auto"
DISPARITY_CMAP = "viridis"
GRAY = (128, 128, 128)


def flow_to_color(flow: FlowMap, max_mag=AUTO) -> np.ndarray:
    """HSV flow coding: hue is direction, saturation is relative magnitude.

    Returns an (H, W, 3) uint8 raster. Zero flow is white, invalid pixels
    are black. ``max_mag="auto"`` uses the 99th-percentile magnitude of the
    valid vectors.
    """
    u, v = flow.u, flow.v
    mag = np.hypot(u, v)
    if isinstance(max_mag, str):
        if max_mag != AUTO:
            raise ValueError(f"max_mag must be a number or {AUTO!r}")
        max_mag = float(np.percentile(mag[flow.valid], 99)) if flow.valid.any() else 0.0
    hue = np.mod(np.arctan2(v, u), 2 * np.pi) / (2 * np.pi)
    sat = np.minimum(1.0, mag / max_mag) if max_mag > 0 else np.zeros_like(mag)
    rgb = hsv_to_rgb(np.stack([hue, sat, np.ones_like(hue)], axis=-1))
    rgb = np.round(rgb * 255).astype(np.uint8)
    rgb[~flow.valid] = 0
    return rgb


def disparity_to_color(disp: DisparityMap, cmap: str = DISPARITY_CMAP) -> np.ndarray:
    if not disp.valid.any():
        raise NoDataError("disparity map has no valid pixel")
    vals = disp.values[disp.valid]
    lo, hi = vals.min(), vals.max()
    pos = (disp.values - lo) / (hi - lo) if hi > lo else np.zeros(disp.shape)
    rgb = colormaps[cmap](np.clip(pos, 0, 1))[..., :3]
    rgb = np.round(rgb * 255).astype(np.uint8)
    rgb[~disp.valid] = 0
    return rgb


def edges_to_gray(cost: np.ndarray) -> np.ndarray:
    return np.round(np.clip(cost, 0, 1) * 255).astype(np.uint8)


def velocity_colors(speed: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Green (slow) to red (fast), speeds normalized by their 99th percentile."""
    colors = np.tile(np.array(GRAY, np.uint8), (len(speed), 1))
    if known.any():
        scale = np.percentile(speed[known], 99)
        s = np.clip(speed[known] / scale, 0, 1) if scale > 0 else np.zeros(known.sum())
        colors[known] = np.round(np.column_stack([255 * s, 255 * (1 - s), np.zeros_like(s)])).astype(np.uint8)
    return colors


def pointcloud_arrays(sfi: SceneFlowImage, rig: CameraRig):
    """Points at t for pixels with valid d_t, plus their 3D speed.

    Returns ``(points, speed, known)``; ``known`` marks points whose motion
    channels are all valid.
    """
    ys, xs = np.nonzero(sfi.valid[..., D_T])
    vals = sfi.values[ys, xs]
    p0 = pixel_to_point(xs, ys, vals[:, D_T], rig).as_array()
    known = sfi.valid[ys, xs][:, [U, V, D_NEXT]].all(axis=1)
    speed = np.zeros(len(xs))
    if known.any():
        k = known
        p1 = pixel_to_point(xs[k] + vals[k, U], ys[k] + vals[k, V], vals[k, D_NEXT], rig).as_array()
        speed[k] = np.linalg.norm(p1 - p0[k], axis=1)
    return p0, speed, known


def export_pointcloud(sfi: SceneFlowImage, rig: CameraRig, path) -> int:
    """Write an ASCII PLY of the reference-time point cloud; returns the vertex count."""
    points, speed, known = pointcloud_arrays(sfi, rig)
    colors = velocity_colors(speed, known)
    header = "\n".join([
        "ply",
        "format ascii 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "w") as f:
        f.write(header + "\n")
        for (x, y, z), (r, g, b) in zip(points, colors):
            f.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
    os.replace(tmp, path)
    return len(points)


def read_ply(path):
    """Parse an ASCII PLY written by :func:`export_pointcloud`."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    end = lines.index("end_header")
    n = next(int(line.split()[2]) for line in lines[:end] if line.startswith("element vertex"))
    body = [line for line in lines[end + 1:] if line.strip()]
    if len(body) != n:
        raise ValueError(f"{path}: header declares {n} vertices, found {len(body)}")
    data = np.array([line.split() for line in body], dtype=np.float64).reshape(n, 6)
    return data[:, :3], data[:, 3:].astype(np.uint8)
