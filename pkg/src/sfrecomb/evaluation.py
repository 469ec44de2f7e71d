"""KITTI scene flow outlier metrics (D1, D2, Fl, SF) and density."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import DensityError, NoDataError, ShapeError
from .recombination import D_NEXT, D_T, U, V, SceneFlowImage

ABS_THRESHOLD = 3.0
REL_THRESHOLD = 0.05
METRICS = ("d1", "d2", "fl", "sf")


@dataclass(frozen=True)
class GroundTruth:
    sfi: SceneFlowImage
    mask: np.ndarray  # (H, W) bool, pixels with valid GT

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.sfi.shape:
            raise ShapeError(f"GT mask {mask.shape} vs GT image {self.sfi.shape}")
        mask = mask & self.sfi.complete
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_sfi(cls, sfi: SceneFlowImage, mask=None) -> "GroundTruth":
        return cls(sfi, sfi.complete if mask is None else mask)


@dataclass(frozen=True)
class EvalReport:
    """Outlier fractions in [0, 1].

    ``d1``..``sf`` use the mode's denominator (estimated-and-masked pixels in
    sparse mode). The ``*_all`` fields always divide the same outlier counts
    by every masked pixel, so both readings of a sparse result are at hand.
    """

    d1: float
    d2: float
    fl: float
    sf: float
    density: float
    evaluated_pixels: int
    d1_all: float = 0.0
    d2_all: float = 0.0
    fl_all: float = 0.0
    sf_all: float = 0.0
    masked_pixels: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_keyvalue(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            lines.append(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        rows = [("D1", self.d1, self.d1_all), ("D2", self.d2, self.d2_all),
                ("Fl", self.fl, self.fl_all), ("SF", self.sf, self.sf_all)]
        out = [f"{'metric':<8}{'outliers %':>12}{'of masked %':>14}"]
        out += [f"{name:<8}{100 * a:>12.2f}{100 * b:>14.2f}" for name, a, b in rows]
        out.append(f"{'density':<8}{100 * self.density:>12.2f}")
        out.append(f"{'pixels':<8}{self.evaluated_pixels:>12d}{self.masked_pixels:>14d}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_keyvalue(cls, text: str) -> "EvalReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        ints = {"evaluated_pixels", "masked_pixels"}
        return cls(**{f.name: (int(kv[f.name]) if f.name in ints else float(kv[f.name]))
                      for f in fields(cls) if f.name in kv})


def pixel_outlier(err, gt_mag, abs_thresh: float = ABS_THRESHOLD, rel_thresh: float = REL_THRESHOLD):
    """KITTI criterion: error above both the absolute and the relative threshold."""
    err = np.asarray(err)
    return (err > abs_thresh) & (err > rel_thresh * np.asarray(gt_mag))


def outlier_maps(est: SceneFlowImage, gt: GroundTruth, abs_thresh=ABS_THRESHOLD, rel_thresh=REL_THRESHOLD):
    """Per-pixel D1, D2, Fl outlier masks (meaningful where both sides are valid)."""
    e, g = est.values, gt.sfi.values
    d1 = pixel_outlier(np.abs(e[..., D_T] - g[..., D_T]), np.abs(g[..., D_T]), abs_thresh, rel_thresh)
    d2 = pixel_outlier(np.abs(e[..., D_NEXT] - g[..., D_NEXT]), np.abs(g[..., D_NEXT]), abs_thresh, rel_thresh)
    fl_err = np.hypot(e[..., U] - g[..., U], e[..., V] - g[..., V])
    fl = pixel_outlier(fl_err, np.hypot(g[..., U], g[..., V]), abs_thresh, rel_thresh)
    return d1, d2, fl


def _frac(num: int, den: int) -> float:
    return num / den if den else 0.0


def evaluate(est: SceneFlowImage, gt: GroundTruth, mode: str = "sparse",
             abs_thresh: float = ABS_THRESHOLD, rel_thresh: float = REL_THRESHOLD) -> EvalReport:
    if est.shape != gt.sfi.shape:
        raise ShapeError(f"estimate {est.shape} vs ground truth {gt.sfi.shape}")
    if mode not in ("sparse", "dense"):
        raise ValueError(f"mode must be 'sparse' or 'dense', got {mode!r}")
    mask = gt.mask
    n_mask = int(mask.sum())
    if mode == "dense" and not est.complete.all():
        raise DensityError("dense evaluation needs a fully dense estimate")

    d1, d2, fl = outlier_maps(est, gt, abs_thresh, rel_thresh)
    # one denominator for every metric: masked pixels with a complete estimate
    ok = mask & est.complete
    n_ok = int(ok.sum())
    n_d1 = int((d1 & ok).sum())
    n_d2 = int((d2 & ok).sum())
    n_fl = int((fl & ok).sum())
    n_sf = int(((d1 | d2 | fl) & ok).sum())
    return EvalReport(
        d1=_frac(n_d1, n_ok),
        d2=_frac(n_d2, n_ok),
        fl=_frac(n_fl, n_ok),
        sf=_frac(n_sf, n_ok),
        density=_frac(n_ok, n_mask),
        evaluated_pixels=n_ok,
        d1_all=_frac(n_d1, n_mask),
        d2_all=_frac(n_d2, n_mask),
        fl_all=_frac(n_fl, n_mask),
        sf_all=_frac(n_sf, n_mask),
        masked_pixels=n_mask,
    )


def aggregate(reports, weights=None) -> EvalReport:
    """Pixel-count weighted mean of several reports.

    ``weights`` defaults to each report's ``evaluated_pixels``.
    """
    reports = list(reports)
    if not reports:
        raise NoDataError("nothing to aggregate")
    if weights is None:
        weights = [r.evaluated_pixels for r in reports]
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(reports),) or np.any(w < 0):
        raise ValueError("need one nonnegative weight per report")
    if w.sum() == 0:
        raise NoDataError("all aggregation weights are zero")
    wn = w / w.sum()
    avg = {}
    for f in fields(EvalReport):
        vals = [getattr(r, f.name) for r in reports]
        if f.name in ("evaluated_pixels", "masked_pixels"):
            avg[f.name] = int(sum(v for v, wi in zip(vals, w) if wi > 0))
        else:
            avg[f.name] = float(np.dot(wn, vals))
    return EvalReport(**avg)
