"""PNG raster I/O in the KITTI devkit conventions.

Disparity: single-channel uint16, ``d = s / 256``, ``s == 0`` is invalid.
Flow: three-channel uint16, ``u = (s1 - 2**15) / 64``, ``v`` likewise from
the second channel, third channel nonzero for valid pixels.

Arrays are row-major with the origin at the top-left pixel; ``x`` indexes
columns and ``y`` rows. Invalid pixels always hold 0 in ``values`` so that
decoded maps never contain NaN.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import DecodeError, FormatError, RangeError, ShapeError

DISP_SCALE = 256.0
FLOW_SCALE = 64.0
FLOW_OFFSET = 2**15
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class DisparityMap:
    values: np.ndarray  # (H, W) float64, pixels
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ShapeError(f"disparity values {values.shape} vs mask {valid.shape}")
        values = np.where(valid, values, 0.0)
        values.flags.writeable = False
        valid = valid.copy()
        valid.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "DisparityMap":
        """Build from a float array where NaN or nonpositive entries mean invalid."""
        values = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(values) & (values > 0)
        return cls(np.where(valid, values, 0.0), valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FlowMap:
    uv: np.ndarray  # (H, W, 2) float64, pixels
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        uv = np.asarray(self.uv, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if uv.ndim != 3 or uv.shape[2] != 2 or uv.shape[:2] != valid.shape:
            raise ShapeError(f"flow values {uv.shape} vs mask {valid.shape}")
        uv = np.where(valid[..., None], uv, 0.0)
        uv.flags.writeable = False
        valid = valid.copy()
        valid.flags.writeable = False
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "valid", valid)

    @property
    def u(self) -> np.ndarray:
        return self.uv[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.uv[..., 1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True)
class GrayImage:
    intensity: np.ndarray  # (H, W) float64 in [0, 1]

    def __post_init__(self):
        img = np.asarray(self.intensity, dtype=np.float64)
        if img.ndim != 2:
            raise ShapeError(f"gray image must be 2-D, got {img.shape}")
        img = img.copy()
        img.flags.writeable = False
        object.__setattr__(self, "intensity", img)

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape


def _imread(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"{path}: no such file")
    raw = np.fromfile(str(path), dtype=np.uint8)
    img = cv2.imdecode(raw, cv2.IMREAD_UNCHANGED) if raw.size else None
    if img is None:
        raise DecodeError(f"{path}: not a decodable image")
    return img


def _imwrite(path, img: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok, buf = cv2.imencode(".png", img)
    if not ok:
        raise OSError(f"{path}: PNG encoding failed")
    tmp = path.with_name(path.name + ".part")
    buf.tofile(str(tmp))
    os.replace(tmp, path)


def decode_disparity(stored: np.ndarray) -> DisparityMap:
    stored = np.asarray(stored)
    if stored.dtype != np.uint16:
        raise FormatError(f"disparity must be 16-bit, got {stored.dtype}")
    valid = stored > 0
    return DisparityMap(stored.astype(np.float64) / DISP_SCALE, valid)


def encode_disparity(disp: DisparityMap) -> np.ndarray:
    vals = disp.values[disp.valid]
    if vals.size and not (np.all(np.isfinite(vals)) and vals.max() < 256.0):
        raise RangeError("valid disparities must be finite and < 256 to encode")
    # never let a positive disparity collapse onto the invalid code 0
    s = np.clip(np.round(disp.values * DISP_SCALE), 1, 65535)
    return np.where(disp.valid, s, 0).astype(np.uint16)


def read_disparity(path) -> DisparityMap:
    img = _imread(path)
    if img.ndim != 2:
        raise FormatError(f"{path}: disparity PNG must be single-channel")
    if img.dtype != np.uint16:
        raise FormatError(f"{path}: disparity PNG must be 16-bit, got {img.dtype}")
    return decode_disparity(img)


def write_disparity(disp: DisparityMap, path) -> None:
    _imwrite(path, encode_disparity(disp))


def decode_flow(stored: np.ndarray) -> FlowMap:
    """Decode a (H, W, 3) uint16 array in (u, v, valid) channel order."""
    stored = np.asarray(stored)
    if stored.dtype != np.uint16 or stored.ndim != 3 or stored.shape[2] != 3:
        raise FormatError(f"flow must be 3-channel 16-bit, got {stored.dtype} {stored.shape}")
    valid = stored[..., 2] > 0
    uv = (stored[..., :2].astype(np.float64) - FLOW_OFFSET) / FLOW_SCALE
    return FlowMap(uv, valid)


def encode_flow(flow: FlowMap) -> np.ndarray:
    s = np.round(flow.uv * FLOW_SCALE + FLOW_OFFSET)
    vals = s[flow.valid]
    if vals.size and (vals.min() < 0 or vals.max() > 65535 or not np.all(np.isfinite(vals))):
        raise RangeError("flow component outside the encodable range (-512, 512)")
    out = np.zeros(flow.valid.shape + (3,), dtype=np.uint16)
    out[..., :2] = np.where(flow.valid[..., None], s, FLOW_OFFSET).astype(np.uint16)
    out[..., 2] = flow.valid
    return out


def read_flow(path) -> FlowMap:
    img = _imread(path)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"{path}: flow PNG must have 3 channels")
    if img.dtype != np.uint16:
        raise FormatError(f"{path}: flow PNG must be 16-bit, got {img.dtype}")
    # OpenCV stores channels as BGR
    return decode_flow(img[..., ::-1])


def write_flow(flow: FlowMap, path) -> None:
    _imwrite(path, np.ascontiguousarray(encode_flow(flow)[..., ::-1]))


def read_gray(path) -> GrayImage:
    img = _imread(path)
    if img.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit image, got {img.dtype}")
    img = img.astype(np.float64)
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[..., :3]
        if img.shape[2] != 3:
            raise FormatError(f"{path}: unsupported channel count {img.shape[2]}")
        b, g, r = img[..., 0], img[..., 1], img[..., 2]
        img = LUMA[0] * r + LUMA[1] * g + LUMA[2] * b
    return GrayImage(img / 255.0)


def write_gray(img: GrayImage, path) -> None:
    _imwrite(path, np.round(np.clip(img.intensity, 0, 1) * 255).astype(np.uint8))


def read_mask(path) -> np.ndarray:
    """Read an 8-bit mask PNG; nonzero pixels are True."""
    img = _imread(path)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise FormatError(f"{path}: mask PNG must be single-channel 8-bit")
    return img > 0


def write_mask(mask: np.ndarray, path) -> None:
    _imwrite(path, np.where(mask, 255, 0).astype(np.uint8))


def write_rgb(rgb: np.ndarray, path) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    _imwrite(path, np.ascontiguousarray(rgb[..., ::-1]))


def read_rgb(path) -> np.ndarray:
    img = _imread(path)
    if img.ndim != 3 or img.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit color PNG")
    return np.ascontiguousarray(img[..., 2::-1])
