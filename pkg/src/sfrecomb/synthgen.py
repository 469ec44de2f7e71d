"""Synthetic piecewise-planar rigid scenes with closed-form ground truth.

Each region is a polygon in the reference image carrying a disparity plane
``d = a*x + b*y + c`` and a rigid motion ``P' = R @ P + t``. Disparity is
affine in pixel coordinates for any 3D plane, so the second frame is rendered
exactly: every region's moved polygon is projected and its moved plane
evaluated at pixel centers, nearest surface winning.

Scene description files are flat ``key = value`` text with one
``[region]`` block per region::

    width = 64
    height = 48
    fx = 100
    fy = 100
    cx = 32
    cy = 24
    baseline = 0.5
    rho = 0.1
    seed = 7

    [region]
    polygon = -0.5 -0.5, 63.5 -0.5, 63.5 47.5, -0.5 47.5
    plane = 0.01 0.0 20
    rotvec = 0 0 0.02
    translation = 0.05 0 0

``rotation`` (nine row-major numbers) may replace ``rotvec`` (axis times
angle in radians).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .edgecost import EdgeCostMap
from .errors import DomainError, SpecError
from .geometry import CameraRig, pixel_to_point, point_to_pixel
from .rasterio import DisparityMap, FlowMap, GrayImage
from .recombination import SceneFlowImage, bilinear_support


@dataclass(frozen=True)
class Region:
    polygon: np.ndarray  # (n, 2) pixel coordinates (x, y)
    plane: tuple  # (a, b, c)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def disparity(self, x, y):
        a, b, c = self.plane
        return a * np.asarray(x) + b * np.asarray(y) + c


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    rig: CameraRig
    regions: tuple
    rho: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SynthBundle:
    d_t: DisparityMap
    flow: FlowMap
    d_next_frame: DisparityMap  # disparity of frame t+1 in its own pixel grid
    gt: SceneFlowImage
    occlusion: np.ndarray  # flow target out of bounds or covered by another surface
    edges: EdgeCostMap
    image: GrayImage
    labels: np.ndarray  # region index per reference pixel
    labels_next: np.ndarray  # visible region per frame-2 pixel, -1 where empty


def rotation_from_rotvec(rotvec) -> np.ndarray:
    """Rodrigues' formula."""
    r = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(r)
    if theta == 0:
        return np.eye(3)
    k = r / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * K @ K


def points_in_polygon(px, py, polygon) -> np.ndarray:
    """Even-odd test at points ``(px, py)``.

    Edges are evaluated with their endpoints in a canonical order, so two
    polygons sharing an edge classify a point lying on it identically and
    exactly one of them claims it.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    poly = np.asarray(polygon, dtype=np.float64)
    inside = np.zeros(np.broadcast(px, py).shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        (x0, y0), (x1, y1) = poly[i - 1], poly[i]
        if y0 == y1:
            continue
        if (y0, x0) > (y1, x1):
            x0, y0, x1, y1 = x1, y1, x0, y0
        crosses = (y0 > py) != (y1 > py)
        x_at = x0 + (x1 - x0) * (py - y0) / (y1 - y0)
        inside ^= crosses & (px < x_at)
    return inside


def _plane_normal(region: Region, rig: CameraRig):
    """3D plane ``n . P = h`` of a region's disparity plane."""
    a, b, c = region.plane
    return np.array([a * rig.fx, b * rig.fy, a * rig.cx + b * rig.cy + c]), rig.fb


def _validate(spec: SceneSpec):
    if spec.width < 2 or spec.height < 2:
        raise SpecError("image must be at least 2x2")
    if not spec.regions:
        raise SpecError("scene needs at least one region")
    if not 0 <= spec.rho < 1:
        raise SpecError(f"rho must lie in [0, 1), got {spec.rho}")
    for i, r in enumerate(spec.regions):
        R = np.asarray(r.rotation, dtype=np.float64)
        if np.asarray(r.polygon).shape[0] < 3:
            raise SpecError(f"region {i}: polygon needs 3 or more vertices")
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise SpecError(f"region {i}: rotation is not a proper rotation matrix")
        if np.asarray(r.translation).shape != (3,):
            raise SpecError(f"region {i}: translation must be a 3-vector")


def region_labels(spec: SceneSpec) -> np.ndarray:
    ys, xs = np.mgrid[0:spec.height, 0:spec.width]
    count = np.zeros((spec.height, spec.width), int)
    labels = np.full((spec.height, spec.width), -1)
    for i, r in enumerate(spec.regions):
        inside = points_in_polygon(xs, ys, r.polygon)
        count += inside
        labels[inside] = i
    if np.any(count != 1):
        raise SpecError(f"regions do not partition the image ({int((count == 0).sum())} uncovered, "
                        f"{int((count > 1).sum())} multiply covered pixels)")
    return labels


def _texture(labels, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = labels.max() + 1
    base = rng.uniform(0.2, 0.8, n)
    freq = rng.uniform(0.05, 0.3, (n, 2))
    phase = rng.uniform(0, 2 * np.pi, n)
    ys, xs = np.indices(labels.shape)
    pattern = np.sin(2 * np.pi * (freq[labels, 0] * xs + freq[labels, 1] * ys) + phase[labels])
    return np.clip(base[labels] + 0.15 * pattern, 0, 1)


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbor in a different region."""
    edge = np.zeros(labels.shape, bool)
    dy = labels[1:] != labels[:-1]
    dx = labels[:, 1:] != labels[:, :-1]
    edge[1:] |= dy
    edge[:-1] |= dy
    edge[:, 1:] |= dx
    edge[:, :-1] |= dx
    return edge


def render(spec: SceneSpec) -> SynthBundle:
    _validate(spec)
    rig = spec.rig
    h, w = spec.height, spec.width
    labels = region_labels(spec)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    d_t = np.zeros((h, w))
    moved = np.zeros((h, w, 3))
    for i, r in enumerate(spec.regions):
        m = labels == i
        d = r.disparity(xs[m], ys[m])
        if np.any(~(d > 0)):
            raise SpecError(f"region {i}: disparity plane is not positive over the region")
        d_t[m] = d
        p = pixel_to_point(xs[m], ys[m], d, rig).as_array()
        moved[m] = p @ np.asarray(r.rotation).T + r.translation
    if np.any(~(moved[..., 2] > 0)):
        raise SpecError("a motion moves part of the scene behind the camera")
    x1, y1, d_next = point_to_pixel(np.moveaxis(moved, -1, 0), rig)
    u, v = x1 - xs, y1 - ys

    # frame t+1: project every moved region, nearest surface wins
    disp_buf = np.zeros((h, w))
    labels_next = np.full((h, w), -1)
    ray = np.stack([(xs - rig.cx) / rig.fx, (ys - rig.cy) / rig.fy, np.ones_like(xs)], axis=-1)
    for i, r in enumerate(spec.regions):
        R = np.asarray(r.rotation)
        poly = np.asarray(r.polygon, dtype=np.float64)
        vd = r.disparity(poly[:, 0], poly[:, 1])
        if np.any(~(vd > 0)):
            raise SpecError(f"region {i}: disparity plane is not positive at the polygon vertices")
        vp = pixel_to_point(poly[:, 0], poly[:, 1], vd, rig).as_array() @ R.T + r.translation
        if np.any(~(vp[:, 2] > 0)):
            raise SpecError(f"region {i}: motion moves a polygon vertex behind the camera")
        vx, vy, _ = point_to_pixel(vp.T, rig)
        n, hh = _plane_normal(r, rig)
        n1 = R @ n
        h1 = hh + n1 @ r.translation
        disp = rig.fb * (ray @ n1) / h1
        cover = points_in_polygon(xs, ys, np.column_stack([vx, vy])) & (disp > 0)
        win = cover & (disp > disp_buf)
        disp_buf[win] = disp[win]
        labels_next[win] = i
    d_next_frame = DisparityMap(disp_buf, labels_next >= 0)

    x0, y0, xb, yb, _, _, inside = bilinear_support(x1, y1, w, h)
    visible = inside.copy()
    for cy, cx in ((y0, x0), (y0, xb), (yb, x0), (yb, xb)):
        visible &= labels_next[cy, cx] == labels
    occlusion = ~visible

    gt = SceneFlowImage(np.stack([d_t, u, v, d_next], axis=2), np.ones((h, w, 4), bool))
    return SynthBundle(
        d_t=DisparityMap(d_t, np.ones((h, w), bool)),
        flow=FlowMap(np.stack([u, v], axis=2), np.ones((h, w), bool)),
        d_next_frame=d_next_frame,
        gt=gt,
        occlusion=occlusion,
        edges=EdgeCostMap(boundary_mask(labels).astype(np.float64)),
        image=GrayImage(_texture(labels, spec.seed)),
        labels=labels,
        labels_next=labels_next,
    )


def sparsify(bundle: SynthBundle, rho: float, seed: int) -> SynthBundle:
    """Invalidate ``round(rho * n_valid)`` random valid pixels of the t+1 disparity."""
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    valid = bundle.d_next_frame.valid
    idx = np.flatnonzero(valid)
    n_drop = int(round(rho * idx.size))
    if n_drop == 0:
        return bundle
    rng = np.random.default_rng(seed)
    drop = rng.choice(idx, size=n_drop, replace=False)
    keep = valid.copy().ravel()
    keep[drop] = False
    keep = keep.reshape(valid.shape)
    return dataclasses.replace(bundle, d_next_frame=DisparityMap(bundle.d_next_frame.values, keep))


def _floats(text: str, n=None, key=""):
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise SpecError(f"{key}: not a list of numbers: {text!r}") from exc
    if n is not None and len(vals) != n:
        raise SpecError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _region_from(block: dict) -> Region:
    for key in ("polygon", "plane"):
        if key not in block:
            raise SpecError(f"region block lacks {key!r}")
    pts = [p for p in block["polygon"].split(",") if p.strip()]
    polygon = np.array([_floats(p, 2, "polygon") for p in pts])
    plane = tuple(_floats(block["plane"], 3, "plane"))
    if "rotation" in block and "rotvec" in block:
        raise SpecError("give either rotation or rotvec, not both")
    if "rotation" in block:
        rot = np.array(_floats(block["rotation"], 9, "rotation")).reshape(3, 3)
    else:
        rot = rotation_from_rotvec(_floats(block.get("rotvec", "0 0 0"), 3, "rotvec"))
    trans = np.array(_floats(block.get("translation", "0 0 0"), 3, "translation"))
    unknown = set(block) - {"polygon", "plane", "rotation", "rotvec", "translation"}
    if unknown:
        raise SpecError(f"unknown region keys: {', '.join(sorted(unknown))}")
    return Region(polygon, plane, rot, trans)


def parse_scene_spec(text: str) -> SceneSpec:
    head: dict = {}
    blocks: list = []
    current = head
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[region]":
            current = {}
            blocks.append(current)
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in current:
            raise SpecError(f"line {lineno}: duplicate key {key!r}")
        current[key] = val
    try:
        rig = CameraRig.from_mapping(head)
        width, height = int(head["width"]), int(head["height"])
        rho = float(head.get("rho", 0.0))
        seed = int(head.get("seed", 0))
    except KeyError as exc:
        raise SpecError(f"missing key {exc.args[0]!r}") from exc
    except (ValueError, DomainError) as exc:
        raise SpecError(str(exc)) from exc
    return SceneSpec(width, height, rig, tuple(_region_from(b) for b in blocks), rho, seed)


def format_scene_spec(spec: SceneSpec) -> str:
    def nums(a):
        return " ".join(repr(float(x)) for x in np.ravel(a))

    rig = spec.rig
    lines = [f"width = {spec.width}", f"height = {spec.height}"]
    lines += [f"{k} = {getattr(rig, k)!r}" for k in ("fx", "fy", "cx", "cy", "baseline")]
    lines += [f"rho = {spec.rho!r}", f"seed = {spec.seed}"]
    for r in spec.regions:
        poly = ", ".join(nums(p) for p in np.asarray(r.polygon))
        lines += ["", "[region]", f"polygon = {poly}", f"plane = {nums(r.plane)}",
                  f"rotation = {nums(r.rotation)}", f"translation = {nums(r.translation)}"]
    return "\n".join(lines) + "\n"


def random_scene_spec(rng: np.random.Generator, width: int = 64, height: int = 48, n_regions: int | None = None,
                      rig: CameraRig | None = None, max_angle: float = 0.03, max_shift: float = 0.1) -> SceneSpec:
    """Random slanted-strip partition with random planes and small rigid motions."""
    rig = rig or CameraRig(100.0, 100.0, width / 2, height / 2, 0.5)
    n = int(rng.integers(1, 5)) if n_regions is None else n_regions
    lo, hi = -0.5, width - 0.5
    top = np.concatenate([[lo], np.sort(rng.uniform(lo + 2, hi - 2, n - 1)), [hi]])
    bottom = np.concatenate([[lo], np.sort(rng.uniform(lo + 2, hi - 2, n - 1)), [hi]])
    y0, y1 = -0.5, height - 0.5
    regions = []
    for i in range(n):
        poly = np.array([[top[i], y0], [top[i + 1], y0], [bottom[i + 1], y1], [bottom[i], y1]])
        c = rng.uniform(15, 40)
        a, b = rng.uniform(-0.1, 0.1, 2) * 64 / max(width, height)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        rot = rotation_from_rotvec(axis * rng.uniform(0, max_angle))
        regions.append(Region(poly, (a, b, c), rot, rng.uniform(-max_shift, max_shift, 3)))
    return SceneSpec(width, height, rig, tuple(regions), 0.0, int(rng.integers(0, 2**31)))
