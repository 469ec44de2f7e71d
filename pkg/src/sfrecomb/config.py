"""Flat ``key = value`` run configuration.

A config file holds one setting per line; ``#`` starts a comment. Command
line flags override file values. Without ``--config`` the file named by the
``SFRECOMB_CONFIG`` environment variable is used, if set.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .densify import DensifyParams
from .errors import ConfigError, DomainError
from .evaluation import ABS_THRESHOLD, REL_THRESHOLD
from .geometry import CameraRig

CONFIG_ENV = "SFRECOMB_CONFIG"
RIG_KEYS = ("fx", "fy", "cx", "cy", "baseline")

_FLOAT = {"fx", "fy", "cx", "cy", "baseline", "alpha", "step_cost", "ridge", "abs_thresh", "rel_thresh", "max_flow"}
_INT = {"k_geo", "jobs"}
_BOOL = {"exact_geodesic"}
_STR = {"input_dir", "disp_0", "disp_1", "flow", "edges", "image", "gt_dir", "split", "out_dir",
        "variant", "mode", "synth_spec", "frames", "frame"}
KNOWN_KEYS = _FLOAT | _INT | _BOOL | _STR


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        cfg[key] = val
    return cfg


def read_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text(), str(path))


def write_config(values: dict, path) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in values.items()))


def _convert(key: str, val):
    if val is None or not isinstance(val, str):
        return val
    try:
        if key in _FLOAT:
            return float(val)
        if key in _INT:
            return int(val)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {val!r}") from exc
    if key in _BOOL:
        low = val.lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ConfigError(f"{key}: expected a boolean, got {val!r}")
        return low in ("1", "true", "yes")
    return val


@dataclass
class RunConfig:
    rig: CameraRig | None = None
    input_dir: Path | None = None
    disp_0: Path | None = None
    disp_1: Path | None = None
    flow: Path | None = None
    edges: Path | None = None
    image: Path | None = None
    gt_dir: Path | None = None
    split: str = "occ"
    out_dir: Path | None = None
    densify: DensifyParams = field(default_factory=DensifyParams)
    mode: str | None = None
    abs_thresh: float = ABS_THRESHOLD
    rel_thresh: float = REL_THRESHOLD
    jobs: int = 1
    synth_spec: Path | None = None
    frames: tuple | None = None
    frame: str | None = None
    max_flow: float | None = None

    @classmethod
    def from_values(cls, values: dict) -> "RunConfig":
        v = {k.replace("-", "_"): _convert(k.replace("-", "_"), x) for k, x in values.items() if x is not None}
        rig = None
        present = [k for k in RIG_KEYS if k in v]
        if present:
            missing = [k for k in RIG_KEYS if k not in v]
            if missing:
                raise ConfigError(f"incomplete camera rig, missing {', '.join(missing)}")
            try:
                rig = CameraRig(*(v[k] for k in RIG_KEYS))
            except DomainError as exc:
                raise ConfigError(f"invalid camera rig: {exc}") from exc
        dp = {k: v[k] for k in ("k_geo", "alpha", "step_cost", "ridge", "variant", "exact_geodesic") if k in v}
        paths = {k: Path(v[k]) for k in ("input_dir", "disp_0", "disp_1", "flow", "edges", "image", "gt_dir",
                                          "out_dir", "synth_spec") if k in v}
        split = v.get("split", "occ")
        if split not in ("occ", "noc"):
            raise ConfigError(f"split must be 'occ' or 'noc', got {split!r}")
        mode = v.get("mode")
        if mode not in (None, "sparse", "dense"):
            raise ConfigError(f"mode must be 'sparse' or 'dense', got {mode!r}")
        jobs = v.get("jobs", 1)
        if jobs < 1:
            raise ConfigError("jobs must be >= 1")
        frames = tuple(f.strip() for f in v["frames"].split(",") if f.strip()) if "frames" in v else None
        return cls(rig=rig, densify=DensifyParams(**dp), split=split, mode=mode,
                   abs_thresh=v.get("abs_thresh", ABS_THRESHOLD), rel_thresh=v.get("rel_thresh", REL_THRESHOLD),
                   jobs=jobs, frames=frames, frame=v.get("frame"), max_flow=v.get("max_flow"), **paths)

    def require_rig(self, why: str) -> CameraRig:
        if self.rig is None:
            raise ConfigError(f"{why} needs the camera rig (fx, fy, cx, cy, baseline); there is no default")
        return self.rig


def load_run_config(config_path, overrides: dict) -> RunConfig:
    """Merge a config file (or ``$SFRECOMB_CONFIG``) with flag overrides."""
    values: dict = {}
    path = config_path or os.environ.get(CONFIG_ENV)
    if path:
        values.update(read_config(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_values(values)
