"""Row-wise gap filling in the manner of the KITTI devkit.

This is an approximation of the devkit's interpolation routine, used as the
model-free baseline. Per row, each invalid run bounded on both sides takes
the smaller bounding disparity (background wins) or, for flow, the bounding
vector nearer in x (left on ties). Runs touching the row border copy their
single bound. Rows without any valid pixel copy the nearest filled row,
preferring the upper one on ties.
"""

from __future__ import annotations

import numpy as np

from ..errors import NoSeedsError
from ..rasterio import DisparityMap, FlowMap


def _bounds(valid: np.ndarray):
    """Index of the nearest valid pixel at or left/right of each pixel, per row."""
    h, w = valid.shape
    cols = np.broadcast_to(np.arange(w), (h, w))
    left = np.maximum.accumulate(np.where(valid, cols, -1), axis=1)
    right = np.minimum.accumulate(np.where(valid, cols, w)[:, ::-1], axis=1)[:, ::-1]
    return left, right


def _fill_empty_rows(filled: np.ndarray, row_ok: np.ndarray) -> np.ndarray:
    h = len(row_ok)
    rows = np.arange(h)
    up = np.maximum.accumulate(np.where(row_ok, rows, -1))
    down = np.minimum.accumulate(np.where(row_ok, rows, h)[::-1])[::-1]
    up_dist = np.where(up >= 0, rows - up, np.iinfo(np.int64).max)
    down_dist = np.where(down < h, down - rows, np.iinfo(np.int64).max)
    src = np.where(up_dist <= down_dist, up, down)
    return filled[src]


def _fill_rows(values: np.ndarray, valid: np.ndarray, pick_smaller: bool) -> np.ndarray:
    """values: (H, W, C). Returns the filled (H, W, C) array."""
    h, w = valid.shape
    left, right = _bounds(valid)
    rows = np.arange(h)[:, None]
    has_l = left >= 0
    has_r = right < w
    lv = values[rows, np.clip(left, 0, w - 1)]
    rv = values[rows, np.clip(right, 0, w - 1)]
    both = has_l & has_r
    if pick_smaller:
        take_left = lv[..., 0] <= rv[..., 0]
    else:
        cols = np.arange(w)[None, :]
        take_left = (cols - left) <= (right - cols)
    take_left = np.where(both, take_left, has_l)
    filled = np.where(take_left[..., None], lv, rv)
    filled = np.where(valid[..., None], values, filled)

    row_ok = valid.any(axis=1)
    if not row_ok.all():
        filled = _fill_empty_rows(filled, row_ok)
    return filled


def kitti_fill(m):
    """Fill every invalid pixel of a DisparityMap or FlowMap."""
    if isinstance(m, DisparityMap):
        if not m.valid.any():
            raise NoSeedsError("disparity map has no valid pixel")
        out = _fill_rows(m.values[..., None], m.valid, pick_smaller=True)[..., 0]
        return DisparityMap(out, np.ones(m.shape, bool))
    if isinstance(m, FlowMap):
        if not m.valid.any():
            raise NoSeedsError("flow map has no valid pixel")
        out = _fill_rows(m.uv, m.valid, pick_smaller=False)
        return FlowMap(out, np.ones(m.shape, bool))
    raise TypeError(f"cannot fill {type(m).__name__}")
