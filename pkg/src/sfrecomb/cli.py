"""Command line pipeline: synth, combine, densify, eval, viz, pipeline.

Exit codes: 0 success, 1 usage/config error, 2 data/format error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RIG_KEYS, RunConfig, load_run_config, read_config, write_config
from .densify import densify
from .edgecost import gradient_edge_cost, load_edge_map
from .errors import ConfigError, NumericalError, SceneFlowError
from .evaluation import EvalReport, GroundTruth, aggregate, evaluate
from .layout import (
    discover_frames,
    frame_input_paths,
    gt_paths,
    per_frame_file,
    read_sceneflow,
    require_files,
    result_paths,
    staged_dir,
    write_sceneflow,
)
from .rasterio import (
    DisparityMap,
    FlowMap,
    GrayImage,
    read_disparity,
    read_flow,
    read_gray,
    write_disparity,
    write_flow,
    write_gray,
    write_mask,
    write_rgb,
)
from .recombination import density, recombine
from .synthgen import parse_scene_spec, render, sparsify
from .viz import disparity_to_color, export_pointcloud, flow_to_color

log = logging.getLogger("sfrecomb")


def _map_frames(fn, jobs, items):
    """Apply ``fn`` to each item, in order, using up to ``jobs`` processes."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# -- synth -------------------------------------------------------------------

def run_synth(spec_path, out_root, frame: str = "000000") -> dict:
    spec_path = Path(spec_path)
    if not spec_path.is_file():
        raise ConfigError(f"scene spec {spec_path} not found")
    spec = parse_scene_spec(spec_path.read_text())
    bundle = sparsify(render(spec), spec.rho, spec.seed)
    out = Path(out_root)
    d0, d1, fl = frame_input_paths(out, frame)
    write_disparity(bundle.d_t, d0)
    write_disparity(bundle.d_next_frame, d1)
    write_flow(bundle.flow, fl)
    write_gray(bundle.image, out / "image_2" / f"{frame}_10.png")
    write_gray(GrayImage(bundle.edges.cost), out / "edges" / f"{frame}_10.png")
    write_mask(bundle.occlusion, out / "occlusion" / f"{frame}_10.png")
    gt = bundle.gt
    noc = ~bundle.occlusion
    for split, mask in (("occ", np.ones_like(noc)), ("noc", noc)):
        g0, g1, gf = gt_paths(out / "gt", frame, split)
        write_disparity(DisparityMap(gt.values[..., 0], mask), g0)
        write_disparity(DisparityMap(gt.values[..., 3], mask), g1)
        write_flow(FlowMap(gt.values[..., 1:3], mask), gf)
    rig = spec.rig
    write_config({k: repr(float(getattr(rig, k))) for k in RIG_KEYS}, out / "rig.cfg")
    return {"frame": frame, "occluded": float(bundle.occlusion.mean())}


# -- combine -----------------------------------------------------------------

def _combine_frame(job):
    frame, (d0, d1, fl), out_root = job
    require_files(d0, d1, fl)
    sfi = recombine(read_disparity(d0), read_flow(fl), read_disparity(d1))
    write_sceneflow(sfi, result_paths(out_root, frame))
    return frame, density(sfi)


def _input_jobs(cfg: RunConfig):
    """(frame, (disp_0, disp_1, flow)) per frame from explicit files or input_dir."""
    explicit = [cfg.disp_0, cfg.disp_1, cfg.flow]
    if any(p is not None for p in explicit):
        if not all(p is not None for p in explicit):
            raise ConfigError("explicit inputs need all of disp_0, disp_1 and flow")
        frame = cfg.frame or cfg.disp_0.name.split("_")[0].removesuffix(".png")
        return [(frame, tuple(explicit))]
    if cfg.input_dir is None:
        raise ConfigError("no inputs: give input_dir or disp_0/disp_1/flow")
    frames = cfg.frames or discover_frames(cfg.input_dir)
    return [(f, frame_input_paths(cfg.input_dir, f)) for f in frames]


def _write_density(out_root, results):
    lines = [f"{frame} density={d:.6f}" for frame, d in results]
    Path(out_root, "density.txt").write_text("\n".join(lines) + "\n")


def run_combine(cfg: RunConfig, out_root) -> list:
    jobs = [(f, paths, Path(out_root)) for f, paths in _input_jobs(cfg)]
    for _, paths, _ in jobs:
        require_files(*paths)
    results = _map_frames(_combine_frame, cfg.jobs, jobs)
    _write_density(out_root, results)
    return results


# -- densify -----------------------------------------------------------------

def _edge_cost(cfg: RunConfig, frame: str):
    if cfg.edges is not None:
        path = per_frame_file(cfg.edges, frame)
        require_files(path)
        return load_edge_map(path)
    if cfg.image is not None:
        path = per_frame_file(cfg.image, frame)
        require_files(path)
        return gradient_edge_cost(read_gray(path))
    return None


def _densify_frame(job):
    frame, cfg, in_root, out_root = job
    sfi = read_sceneflow(result_paths(in_root, frame))
    cost = _edge_cost(cfg, frame)
    if cfg.densify.variant != "kitti" and cost is None:
        raise ConfigError(f"variant {cfg.densify.variant} needs edges (--edges) or an image (--image)")
    rig = cfg.rig if cfg.densify.variant == "kitti" else cfg.require_rig(f"variant {cfg.densify.variant}")
    dense = densify(sfi, cost, rig, cfg.densify)
    write_sceneflow(dense, result_paths(out_root, frame))
    return frame, density(dense)


def run_densify(cfg: RunConfig, in_root, out_root) -> list:
    if cfg.densify.variant != "kitti":
        cfg.require_rig(f"variant {cfg.densify.variant}")
        if cfg.edges is None and cfg.image is None:
            raise ConfigError(f"variant {cfg.densify.variant} needs edges (--edges) or an image (--image)")
    frames = cfg.frames or discover_frames(in_root)
    for f in frames:
        require_files(*result_paths(in_root, f))
    results = _map_frames(_densify_frame, cfg.jobs, [(f, cfg, Path(in_root), Path(out_root)) for f in frames])
    params = cfg.densify.as_dict()
    Path(out_root, "densify_params.txt").write_text("".join(f"{k} = {v}\n" for k, v in params.items()))
    _write_density(out_root, results)
    return results


# -- eval --------------------------------------------------------------------

def _eval_frame(job):
    frame, est_root, gt_root, split, mode, abs_t, rel_t = job
    est = read_sceneflow(result_paths(est_root, frame))
    gt_sfi = read_sceneflow(gt_paths(gt_root, frame, split))
    return frame, evaluate(est, GroundTruth.from_sfi(gt_sfi), mode, abs_t, rel_t)


def write_reports(out_root, name: str, per_frame: list, total: EvalReport):
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    text = [f"# {name}"]
    for frame, rep in per_frame:
        text += [f"## frame {frame}", rep.to_text()]
    text += ["## all frames (pixel-weighted)", total.to_text()]
    (out_root / f"{name}.txt").write_text("\n".join(text))
    (out_root / f"{name}.kv").write_text(total.to_keyvalue())
    for frame, rep in per_frame:
        (out_root / "frames").mkdir(exist_ok=True)
        (out_root / "frames" / f"{name}_{frame}.kv").write_text(rep.to_keyvalue())


def run_eval(cfg: RunConfig, est_root, gt_root, out_root, mode: str, name: str = "eval") -> EvalReport:
    frames = cfg.frames or discover_frames(est_root)
    for f in frames:
        require_files(*result_paths(est_root, f), *gt_paths(gt_root, f, cfg.split))
    jobs = [(f, Path(est_root), Path(gt_root), cfg.split, mode, cfg.abs_thresh, cfg.rel_thresh) for f in frames]
    per_frame = _map_frames(_eval_frame, cfg.jobs, jobs)
    total = aggregate([r for _, r in per_frame], [r.evaluated_pixels for _, r in per_frame])
    write_reports(out_root, name, per_frame, total)
    return total


# -- viz ---------------------------------------------------------------------

def _viz_frame(job):
    frame, cfg, in_root, out_root = job
    sfi = read_sceneflow(result_paths(in_root, frame))
    out_root = Path(out_root)
    max_mag = cfg.max_flow if cfg.max_flow is not None else "auto"
    write_rgb(flow_to_color(sfi.flow(), max_mag), out_root / f"{frame}_flow.png")
    for name, disp in (("disp_0", sfi.disparity()), ("disp_1", sfi.warped())):
        if disp.valid.any():
            write_rgb(disparity_to_color(disp), out_root / f"{frame}_{name}.png")
    cost = _edge_cost(cfg, frame)
    if cost is not None:
        write_gray(GrayImage(cost.cost), out_root / f"{frame}_edges.png")
    if cfg.rig is not None:
        export_pointcloud(sfi, cfg.rig, out_root / f"{frame}_cloud.ply")
    return frame


def run_viz(cfg: RunConfig, in_root, out_root) -> list:
    frames = cfg.frames or discover_frames(in_root)
    for f in frames:
        require_files(*result_paths(in_root, f))
    Path(out_root).mkdir(parents=True, exist_ok=True)
    return _map_frames(_viz_frame, cfg.jobs, [(f, cfg, Path(in_root), Path(out_root)) for f in frames])


# -- pipeline ----------------------------------------------------------------

def run_pipeline(cfg: RunConfig, root) -> dict:
    root = Path(root)
    summary = {}
    if cfg.synth_spec is not None:
        run_synth(cfg.synth_spec, root / "synth", cfg.frame or "000000")
        synth = root / "synth"
        cfg.input_dir = synth
        cfg.gt_dir = cfg.gt_dir or synth / "gt"
        if cfg.edges is None and cfg.image is None:
            cfg.image = synth / "image_2"
        if cfg.rig is None:
            cfg.rig = RunConfig.from_values(read_config(synth / "rig.cfg")).rig
    summary["sparse"] = run_combine(cfg, root / "sparse")
    summary["dense"] = run_densify(cfg, root / "sparse", root / "dense")
    if cfg.gt_dir is not None:
        summary["eval_sparse"] = run_eval(cfg, root / "sparse", cfg.gt_dir, root / "eval", "sparse", "sparse")
        summary["eval_dense"] = run_eval(cfg, root / "dense", cfg.gt_dir, root / "eval", "dense", "dense")
    run_viz(cfg, root / "dense", root / "viz")
    return summary


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p, *, inputs=False, rig=False, dens=False, ev=False, viz=False):
    p.add_argument("--config", help="key = value config file (default: $SFRECOMB_CONFIG)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--jobs", type=int, help="frames processed in parallel")
    p.add_argument("--frames", help="comma-separated frame names (default: discover)")
    if inputs:
        p.add_argument("--input-dir", dest="input_dir", help="KITTI-layout input directory")
        p.add_argument("--disp-0", dest="disp_0", help="disparity at t (single-frame mode)")
        p.add_argument("--disp-1", dest="disp_1", help="disparity of frame t+1 (single-frame mode)")
        p.add_argument("--flow", help="optical flow t->t+1 (single-frame mode)")
        p.add_argument("--frame", help="frame name for single-frame outputs")
    if rig:
        for k in RIG_KEYS:
            p.add_argument(f"--{k}", type=float)
    if dens:
        p.add_argument("--variant", choices=("kitti", "full", "motion", "disp_affine", "disp_plane"))
        p.add_argument("--k-geo", dest="k_geo", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--step-cost", dest="step_cost", type=float)
        p.add_argument("--ridge", type=float)
        p.add_argument("--exact-geodesic", dest="exact_geodesic", action="store_const", const="true")
        p.add_argument("--edges", help="8-bit edge map PNG (file or per-frame directory)")
        p.add_argument("--image", help="8-bit reference image for gradient edges (file or directory)")
    if ev:
        p.add_argument("--gt-dir", dest="gt_dir", help="ground truth directory (devkit layout)")
        p.add_argument("--split", choices=("occ", "noc"))
        p.add_argument("--mode", choices=("sparse", "dense"))
        p.add_argument("--abs-thresh", dest="abs_thresh", type=float)
        p.add_argument("--rel-thresh", dest="rel_thresh", type=float)
    if viz:
        p.add_argument("--max-flow", dest="max_flow", type=float, help="flow magnitude at full saturation")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfrecomb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic scene bundle")
    p.add_argument("spec", help="scene description file")
    p.add_argument("out", help="output directory")
    p.add_argument("--frame", default="000000")

    p = sub.add_parser("combine", help="warp d_t+1 along the flow into sparse scene flow")
    _add_common(p, inputs=True)

    p = sub.add_parser("densify", help="fill the gaps of sparse scene flow")
    _add_common(p, inputs=True, rig=True, dens=True)

    p = sub.add_parser("eval", help="KITTI outlier metrics against ground truth")
    _add_common(p, inputs=True, ev=True)

    p = sub.add_parser("viz", help="color renderings and point clouds")
    _add_common(p, inputs=True, rig=True, viz=True)
    p.add_argument("--edges")
    p.add_argument("--image")

    p = sub.add_parser("pipeline", help="synth (optional), combine, densify, eval, viz")
    _add_common(p, inputs=True, rig=True, dens=True, ev=True, viz=True)
    p.add_argument("--synth-spec", dest="synth_spec", help="render this scene first and use it as input")
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "spec", "out"}


def _run(args) -> int:
    if args.command == "synth":
        with staged_dir(args.out) as tmp:
            info = run_synth(args.spec, tmp, args.frame)
        print(f"{info['frame']} occluded={info['occluded']:.6f}")
        return 0

    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    cfg = load_run_config(args.config, overrides)
    if cfg.out_dir is None:
        raise ConfigError("no output directory (--out-dir)")

    if args.command == "combine":
        with staged_dir(cfg.out_dir) as tmp:
            results = run_combine(cfg, tmp)
        for frame, d in results:
            print(f"{frame} density={d:.6f}")
    elif args.command == "densify":
        if cfg.input_dir is None:
            raise ConfigError("densify reads sparse scene flow from --input-dir")
        with staged_dir(cfg.out_dir) as tmp:
            results = run_densify(cfg, cfg.input_dir, tmp)
        for frame, d in results:
            print(f"{frame} density={d:.6f}")
    elif args.command == "eval":
        if cfg.input_dir is None or cfg.gt_dir is None:
            raise ConfigError("eval needs --input-dir (estimate) and --gt-dir")
        with staged_dir(cfg.out_dir) as tmp:
            total = run_eval(cfg, cfg.input_dir, cfg.gt_dir, tmp, cfg.mode or "sparse")
        print(total.to_text(), end="")
    elif args.command == "viz":
        if cfg.input_dir is None:
            raise ConfigError("viz reads scene flow from --input-dir")
        with staged_dir(cfg.out_dir) as tmp:
            run_viz(cfg, cfg.input_dir, tmp)
    elif args.command == "pipeline":
        with staged_dir(cfg.out_dir) as tmp:
            summary = run_pipeline(cfg, tmp)
        for frame, d in summary["sparse"]:
            print(f"{frame} sparse density={d:.6f}")
        if "eval_dense" in summary:
            print(summary["eval_dense"].to_text(), end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except SceneFlowError as exc:
        print(f"sfrecomb: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"sfrecomb: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except OSError as exc:
        print(f"sfrecomb: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
