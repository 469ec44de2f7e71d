"""Exit criteria, one test each; a PASS/FAIL/SKIP line per criterion is
printed in the terminal summary."""

import dataclasses
import os
import time
from pathlib import Path

import numpy as np
import pytest

from sfrecomb import cli
from sfrecomb.densify import DensifyParams, Seed, densify, fit_affine3d, fit_plane, knn_all, knn_exact
from sfrecomb.edgecost import EdgeCostMap
from sfrecomb.evaluation import GroundTruth, evaluate
from sfrecomb.geometry import pixel_to_point, point_to_pixel
from sfrecomb.rasterio import DisparityMap, FlowMap, read_disparity, read_flow, write_disparity, write_flow
from sfrecomb.recombination import D_NEXT, D_T, U, V, SceneFlowImage, bilinear_sample, density, warp_disparity
from sfrecomb.synthgen import format_scene_spec, random_scene_spec, render, rotation_from_rotvec

from scenes import gapped_scene, rig_for, single_plane_spec, two_plane_spec

MODEL_VARIANTS = ("full", "motion", "disp_affine", "disp_plane")
ALL_VARIANTS = ("kitti",) + MODEL_VARIANTS


@pytest.mark.acceptance(1)
def test_raster_roundtrips(acceptance, tmp_path):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    bad = 0
    for i in range(500):
        h, w = rng.integers(1, 24, size=2)
        valid = rng.random((h, w)) < 0.7
        disp = DisparityMap(rng.integers(1, 65536, size=(h, w)) / 256.0, valid)
        write_disparity(disp, tmp_path / "d.png")
        back = read_disparity(tmp_path / "d.png")
        bad += not (np.array_equal(back.valid, disp.valid) and np.array_equal(back.values, disp.values))

        valid = rng.random((h, w)) < 0.7
        uv = (rng.integers(0, 65536, size=(h, w, 2)) - 32768) / 64.0
        flow = FlowMap(uv, valid)
        write_flow(flow, tmp_path / "f.png")
        back = read_flow(tmp_path / "f.png")
        bad += not (np.array_equal(back.valid, flow.valid) and np.array_equal(back.uv, flow.uv))
    elapsed = time.perf_counter() - t0
    acceptance.check(bad == 0 and elapsed < 10,
                     f"1000 maps, {bad} mismatches, {elapsed:.2f} s (limit 10 s)")


@pytest.mark.acceptance(2)
def test_warp_identity_and_ramp(acceptance):
    rng = np.random.default_rng(2)
    h = w = 64
    t0 = time.perf_counter()
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    d1 = DisparityMap(rng.uniform(1, 100, (h, w)), rng.random((h, w)) < 0.8)
    out = warp_disparity(d1, FlowMap(np.zeros((h, w, 2)), np.ones((h, w), bool)))
    identity = np.array_equal(out.valid, d1.valid) and np.array_equal(out.values[d1.valid], d1.values[d1.valid])

    ramp_err = 0.0
    ramp_ok = True
    ramp = DisparityMap(1.0 + 0.5 * xs + 0.25 * ys, np.ones((h, w), bool))
    for du, dv in ((2, 0), (-3, 1), (0, -5), (7, 4)):
        uv = np.broadcast_to(np.array([du, dv], float), (h, w, 2))
        out = warp_disparity(ramp, FlowMap(uv, np.ones((h, w), bool)))
        inside = (xs + du >= 0) & (xs + du <= w - 1) & (ys + dv >= 0) & (ys + dv <= h - 1)
        ramp_ok &= np.array_equal(out.valid, inside)
        ramp_err = max(ramp_err, np.abs(out.values[inside] - ramp.values[inside] - 0.5 * du - 0.25 * dv).max())

    a, b, c = rng.uniform(-2, 2, 3)
    field = DisparityMap(a * xs + b * ys + c + 300, np.ones((h, w), bool))
    sx = rng.uniform(0, w - 1, 5000)
    sy = rng.uniform(0, h - 1, 5000)
    vals, valid = bilinear_sample(field, sx, sy)
    affine_err = np.abs(vals - (a * sx + b * sy + c + 300)).max()
    elapsed = time.perf_counter() - t0
    ok = identity and ramp_ok and ramp_err == 0 and valid.all() and affine_err <= 1e-9 and elapsed < 1
    acceptance.check(ok, f"identity={identity}, ramp error {ramp_err:g}, affine error {affine_err:.2e}, "
                         f"{elapsed:.2f} s (limit 1 s)")


@pytest.mark.acceptance(3)
def test_oracle_self_consistency(acceptance):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        spec = random_scene_spec(rng, n_regions=int(rng.integers(1, 5)))
        b = render(spec)
        warped = warp_disparity(b.d_next_frame, b.flow)
        vis = ~b.occlusion
        if not warped.valid[vis].all():
            worst = np.inf
            break
        worst = max(worst, np.abs(warped.values[vis] - b.gt.values[..., D_NEXT][vis]).max(initial=0.0))
    elapsed = time.perf_counter() - t0
    acceptance.check(worst <= 1e-6 and elapsed < 30,
                     f"20 scenes, worst d_next error {worst:.2e} px (tol 1e-6), {elapsed:.2f} s (limit 30 s)")


def _plane_seeds(rng, n, a, b, c):
    while True:
        xy = rng.integers(0, 50, size=(n, 2))
        if n >= 3 and np.linalg.matrix_rank(np.column_stack([xy, np.ones(n)])) == 3:
            break
    return [(Seed(int(x), int(y), 0.0, 0.0, a * x + b * y + c, 1.0), float(rng.uniform(0, 1))) for x, y in xy]


def _motion_seeds(rng, rig, n, R, t):
    need = min(n - 1, 3)
    while True:
        xy = rng.integers(0, 64, size=(n, 2))
        d = rng.uniform(10, 40, n)
        p0 = pixel_to_point(xy[:, 0], xy[:, 1], d, rig).as_array()
        centered = p0 - p0.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-6) == need:
            break
    x1, y1, d1 = point_to_pixel((p0 @ R.T + t).T, rig)
    return [(Seed(int(x), int(y), float(xn - x), float(yn - y), float(dt), float(dn)), float(rng.uniform(0, 1)))
            for (x, y), dt, xn, yn, dn in zip(xy, d, x1, y1, d1)]


def _min_spread(points, neighbors, alpha):
    """Smallest eigenvalue of the fit's weighted, centered scatter matrix."""
    dist = np.array([d for _, d in neighbors])
    w = np.exp(-alpha * (dist - dist.min()))
    c = points - (w[:, None] * points).sum(axis=0) / w.sum()
    return np.linalg.eigvalsh(np.einsum("n,ni,nj->ij", w, c, c))[0]


@pytest.mark.acceptance(4)
def test_exact_model_recovery(acceptance):
    # ridge = 0 must be exact on every nondegenerate set; the default ridge
    # (1e-6) biases by about ridge / spread, so it is held to the same
    # tolerance only where the spread is at least 100 px^2 (planes, whose c
    # term inherits the slope bias times the centroid offset) or 0.01 m^2
    # (motions)
    rng = np.random.default_rng(4)
    rig = rig_for(64, 64)
    params = DensifyParams()
    exact = DensifyParams(ridge=0.0)
    t0 = time.perf_counter()
    plane_err = plane_err_default = 0.0
    n_plane = n_motion = 0
    for _ in range(200):
        a, b, c = rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(20, 80)
        nb = _plane_seeds(rng, int(rng.integers(3, 30)), a, b, c)
        m = fit_plane(nb, exact)
        plane_err = max(plane_err, abs(m.a - a), abs(m.b - b), abs(m.c - c))
        if _min_spread(np.array([[s.x, s.y] for s, _ in nb], float), nb, params.alpha) >= 100.0:
            n_plane += 1
            m = fit_plane(nb, params)
            plane_err_default = max(plane_err_default, abs(m.a - a), abs(m.b - b), abs(m.c - c))

    motion_err = motion_err_default = 0.0
    for _ in range(200):
        axis = rng.normal(size=3)
        R = rotation_from_rotvec(axis / np.linalg.norm(axis) * rng.uniform(0, 0.3))
        t = rng.uniform(-0.5, 0.5, 3)
        nb = _motion_seeds(rng, rig, int(rng.integers(4, 30)), R, t)
        m = fit_affine3d(nb, rig, exact)
        motion_err = max(motion_err, np.abs(m.A - R).max(), np.abs(m.t - t).max())
        if _min_spread(np.array([s.points(rig)[0] for s, _ in nb]), nb, params.alpha) >= 0.01:
            n_motion += 1
            m = fit_affine3d(nb, rig, params)
            motion_err_default = max(motion_err_default, np.abs(m.A - R).max(), np.abs(m.t - t).max())

    # degenerate neighborhoods fall back to the documented models
    two = [(Seed(1, 1, 0, 0, 5.0, 1.0), 0.0), (Seed(4, 2, 0, 0, 7.0, 1.0), 0.0)]
    collinear = [(Seed(i, 2 * i, 0, 0, float(i), 1.0), 0.0) for i in range(6)]
    p2, pc = fit_plane(two, params), fit_plane(collinear, params)
    plane_fb = (p2.a, p2.b) == (0, 0) and abs(p2.c - 6.0) < 1e-12 and (pc.a, pc.b) == (0, 0) and abs(pc.c - 2.5) < 1e-12
    three = [(s, 0.0) for s, _ in _motion_seeds(rng, rig, 3, np.eye(3), np.array([0.1, 0.0, 0.0]))]
    m3 = fit_affine3d(three, rig, params)
    motion_fb = np.array_equal(m3.A, np.eye(3)) and np.allclose(m3.t, [0.1, 0, 0], atol=1e-9)
    elapsed = time.perf_counter() - t0
    ok = (max(plane_err, plane_err_default) <= 1e-6 and max(motion_err, motion_err_default) <= 1e-5
          and plane_fb and motion_fb and elapsed < 5)
    acceptance.check(ok, f"plane error {plane_err:.1e} / {plane_err_default:.1e} at ridge 0 / 1e-6 ({n_plane} sets) (tol 1e-6), "
                         f"motion error {motion_err:.1e} / {motion_err_default:.1e} ({n_motion} sets) (tol 1e-5), "
                         f"fallbacks plane={plane_fb} motion={motion_fb}, {elapsed:.2f} s (limit 5 s)")


@pytest.mark.acceptance(5)
def test_densification_exactness(acceptance):
    spec = single_plane_spec(128, 128)
    bundle, sfi = gapped_scene(spec, 0.3, seed=5)
    gt = GroundTruth.from_sfi(bundle.gt)
    edges = EdgeCostMap(bundle.edges.cost)
    gap = ~sfi.valid[..., D_NEXT]
    t0 = time.perf_counter()
    notes, ok = [], True
    for variant in ALL_VARIANTS:
        dense = densify(sfi, edges, spec.rig, DensifyParams(variant=variant))
        dens = density(dense)
        ok &= dens == 1.0
        if variant != "kitti":
            err = np.abs(dense.values - bundle.gt.values)[gap][:, [U, V, D_NEXT]].max()
            rep = evaluate(dense, gt, "dense")
            ok &= err <= 1e-3 and rep.d2 == rep.fl == rep.sf == 0
            notes.append(f"{variant} err {err:.1e}")
        else:
            notes.append(f"kitti density {dens:g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    acceptance.check(ok, f"{'; '.join(notes)}; {elapsed:.1f} s (limit 60 s)")


@pytest.mark.acceptance(6)
def test_edge_aware_separation(acceptance):
    spec = two_plane_spec(64, 48)
    bundle, sfi = gapped_scene(spec, 0.3, seed=6)
    gt = GroundTruth.from_sfi(bundle.gt)
    edges = EdgeCostMap(bundle.edges.cost)
    gap = ~sfi.valid[..., D_NEXT]
    near_boundary = np.zeros_like(gap)
    cols = np.flatnonzero(bundle.edges.cost.any(axis=0))
    near_boundary[:, max(cols.min() - 3, 0):cols.max() + 4] = True
    t0 = time.perf_counter()
    notes, ok = [], True
    for variant in ALL_VARIANTS:
        dense = densify(sfi, edges, spec.rig, DensifyParams(variant=variant))
        from sfrecomb.evaluation import outlier_maps

        _, d2, _ = outlier_maps(dense, gt)
        n_gap = int((d2 & gap).sum())
        if variant == "kitti":
            n_adj = int((d2 & gap & near_boundary).sum())
            ok &= n_adj >= 1
            notes.append(f"kitti {n_adj} D2 outliers at the boundary")
        else:
            ok &= n_gap == 0
            notes.append(f"{variant} {n_gap}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    acceptance.check(ok, f"gap D2 outliers: {'; '.join(notes)}; {elapsed:.1f} s (limit 60 s)")


def _brute_force(est, gt_vals, mask):
    h, w = mask.shape
    n = {"d1": 0, "d2": 0, "fl": 0, "sf": 0, "ok": 0, "mask": 0}

    def out(err, mag):
        return err > 3.0 and err > 0.05 * mag

    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            n["mask"] += 1
            if not est.valid[y, x].all():
                continue
            n["ok"] += 1
            e, g = est.values[y, x], gt_vals[y, x]
            o1 = out(abs(e[0] - g[0]), abs(g[0]))
            o2 = out(abs(e[3] - g[3]), abs(g[3]))
            of = out(np.hypot(e[1] - g[1], e[2] - g[2]), np.hypot(g[1], g[2]))
            n["d1"] += o1
            n["d2"] += o2
            n["fl"] += of
            n["sf"] += o1 or o2 or of
    return n


@pytest.mark.acceptance(7)
def test_metric_oracle(acceptance):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    mismatches = dominance = 0
    for _ in range(200):
        h, w = rng.integers(1, 17, size=2)
        gt_vals = np.stack([rng.uniform(1, 80, (h, w)), rng.normal(0, 20, (h, w)),
                            rng.normal(0, 20, (h, w)), rng.uniform(1, 80, (h, w))], axis=2)
        noise = rng.normal(0, 4, (h, w, 4)) * (rng.random((h, w, 4)) < 0.5)
        est = SceneFlowImage(gt_vals + noise, rng.random((h, w, 4)) < 0.9)
        mask = rng.random((h, w)) < 0.8
        gt = GroundTruth(SceneFlowImage(gt_vals, np.ones((h, w, 4), bool)), mask)
        rep = evaluate(est, gt, "sparse")
        ref = _brute_force(est, gt_vals, mask)
        counts = [round(getattr(rep, m) * rep.evaluated_pixels) for m in ("d1", "d2", "fl", "sf")]
        mismatches += not (counts == [ref[m] for m in ("d1", "d2", "fl", "sf")]
                           and rep.evaluated_pixels == ref["ok"] and rep.masked_pixels == ref["mask"])
        dominance += not rep.sf >= max(rep.d1, rep.d2, rep.fl)
    elapsed = time.perf_counter() - t0
    acceptance.check(mismatches == 0 and dominance == 0 and elapsed < 10,
                     f"200 instances, {mismatches} count mismatches, {dominance} dominance violations, "
                     f"{elapsed:.2f} s (limit 10 s)")


@pytest.mark.acceptance(8)
def test_geodesic_correctness(acceptance):
    rng = np.random.default_rng(8)
    k = 25
    t0 = time.perf_counter()
    agree = total = 0
    zero_exact = True
    for i in range(20):
        cost = rng.random((64, 64)) ** 4
        if i % 2:
            cost[:, rng.integers(10, 54)] = 1.0
        seeds = rng.random((64, 64)) < 0.1
        targets = np.flatnonzero(~seeds.ravel())
        lab_a, _ = knn_all(cost, seeds, k, 0.01)
        lab_e, _ = knn_exact(cost, seeds, targets, k, 0.01)
        lab_a = lab_a.reshape(-1, k)[targets]
        same = [set(a) == set(e) for a, e in zip(lab_a, lab_e)]
        agree += sum(same)
        total += len(same)

        zero = np.zeros((64, 64))
        za, _ = knn_all(zero, seeds, k, 0.01)
        ze, _ = knn_exact(zero, seeds, targets, k, 0.01)
        zero_exact &= np.array_equal(za.reshape(-1, k)[targets], ze)
    elapsed = time.perf_counter() - t0
    rate = agree / total
    acceptance.check(rate >= 0.95 and zero_exact and elapsed < 60,
                     f"set agreement {100 * rate:.2f}% over {total} queries (need 95%), "
                     f"exact on zero cost={zero_exact}, {elapsed:.1f} s (limit 60 s)")


@pytest.mark.acceptance(9)
def test_kitti_sparse_numbers(acceptance, tmp_path):
    root = os.environ.get("SFRECOMB_KITTI_DIR")
    if not root or not Path(root).is_dir():
        acceptance.skip("set SFRECOMB_KITTI_DIR to a KITTI training tree with method outputs to run")
    # expected layout: disp_0/, disp_1/, flow/ (SPS-st and FlowFields++ results) and gt/ (devkit)
    root = Path(root)
    out = tmp_path / "sparse"
    assert cli.main(["combine", "--input-dir", str(root), "--out-dir", str(out)]) == 0
    assert cli.main(["eval", "--input-dir", str(out), "--gt-dir", str(root / "gt"), "--mode", "sparse",
                     "--out-dir", str(tmp_path / "eval")]) == 0
    kv = dict(line.split("=") for line in (tmp_path / "eval" / "eval.kv").read_text().split())
    dens, sf = 100 * float(kv["density"]), 100 * float(kv["sf"])
    acceptance.check(abs(dens - 84.23) <= 2 and abs(sf - 12.7) <= 2,
                     f"density {dens:.2f}% (target 84.23 +- 2), SF {sf:.2f}% (target 12.7 +- 2)")


@pytest.mark.acceptance(10)
def test_pipeline_determinism(acceptance, tmp_cwd):
    spec = dataclasses.replace(random_scene_spec(np.random.default_rng(10), 64, 48, n_regions=3), rho=0.2, seed=11)
    Path("scene.txt").write_text(format_scene_spec(spec))
    Path("run.cfg").write_text("synth_spec = scene.txt\nvariant = full\n")
    t0 = time.perf_counter()
    codes = [cli.main(["pipeline", "--config", "run.cfg", "--out-dir", d]) for d in ("a", "b")]
    elapsed = time.perf_counter() - t0

    def tree(root):
        return {p.relative_to(root): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}

    ta, tb = tree("a"), tree("b")
    same = ta == tb
    acceptance.check(codes == [0, 0] and same and len(ta) > 20 and elapsed < 120,
                     f"exit codes {codes}, {len(ta)} files, identical={same}, {elapsed:.1f} s (limit 120 s)")
