"""KITTI-style directory layout for frame pairs and results.

Inputs (per frame ``f``)::

    disp_0/f_10.png     disparity at t
    disp_1/f_11.png     disparity of frame t+1, in its own pixel grid
    flow/f_10.png       optical flow t -> t+1

Scene flow results use the KITTI submission layout::

    disp_0/f_10.png     d_t
    disp_1/f_10.png     d_next, the t+1 disparity warped into frame t
    flow/f_10.png       (u, v)

Ground truth directories follow the devkit: ``disp_occ_0``, ``disp_occ_1``,
``flow_occ`` and their ``noc`` counterparts.
"""

from __future__ import annotations

import os
import shutil
from contextlib import contextmanager
from pathlib import Path

from .errors import ConfigError
from .rasterio import (
    read_disparity,
    read_flow,
    write_disparity,
    write_flow,
)
from .recombination import SceneFlowImage, combine


def frame_input_paths(root, frame: str):
    root = Path(root)
    return (root / "disp_0" / f"{frame}_10.png",
            root / "disp_1" / f"{frame}_11.png",
            root / "flow" / f"{frame}_10.png")


def result_paths(root, frame: str):
    root = Path(root)
    return (root / "disp_0" / f"{frame}_10.png",
            root / "disp_1" / f"{frame}_10.png",
            root / "flow" / f"{frame}_10.png")


def gt_paths(root, frame: str, split: str = "occ"):
    root = Path(root)
    return (root / f"disp_{split}_0" / f"{frame}_10.png",
            root / f"disp_{split}_1" / f"{frame}_10.png",
            root / f"flow_{split}" / f"{frame}_10.png")


def discover_frames(root, subdir: str = "disp_0", suffix: str = "_10.png") -> list[str]:
    d = Path(root) / subdir
    if not d.is_dir():
        raise ConfigError(f"{d}: directory not found")
    frames = sorted(p.name[: -len(suffix)] for p in d.glob(f"*{suffix}"))
    if not frames:
        raise ConfigError(f"{d}: no *{suffix} frames found")
    return frames


def per_frame_file(path, frame: str) -> Path:
    """``path`` itself if it is a file, else ``path/<frame>_10.png``."""
    path = Path(path)
    return path / f"{frame}_10.png" if path.is_dir() else path


def require_files(*paths) -> None:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise ConfigError("missing input file(s): " + ", ".join(missing))


def read_sceneflow(paths) -> SceneFlowImage:
    d0, d1, fl = paths
    require_files(d0, d1, fl)
    return combine(read_disparity(d0), read_flow(fl), read_disparity(d1))


def write_sceneflow(sfi: SceneFlowImage, paths) -> None:
    d0, d1, fl = paths
    write_disparity(sfi.disparity(), d0)
    write_disparity(sfi.warped(), d1)
    write_flow(sfi.flow(), fl)


@contextmanager
def staged_dir(out_dir):
    """Build results in a sibling temp dir; move them into ``out_dir`` on success.

    On failure the temp dir is removed and ``out_dir`` is left untouched.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_dir.parent / f".{out_dir.name}.staging-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if not out_dir.exists():
        os.rename(tmp, out_dir)
        return
    for src in sorted(tmp.rglob("*")):
        if src.is_file():
            dst = out_dir / src.relative_to(tmp)
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
    shutil.rmtree(tmp)
