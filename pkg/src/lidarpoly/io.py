"""File formats: point clouds (PCD/CSV), run configuration, JSON/CSV writers."""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from .explore import ExploreParams
from .freespace import AddCriteriaConfig
from .iris import IrisConfig
from .preprocess import PointCloud, PreprocessParams
from .world import SensorModel


# ---------------------------------------------------------------------------
# point clouds

def _pcd_error(path, lineno, msg):
    return DataError(f"{path}:{lineno}: {msg}")


def read_pcd(path, origin=None) -> PointCloud:
    """ASCII PCD with FIELDS ``x y`` or ``x y z`` (extra fields are ignored).

    The sensor origin comes from the VIEWPOINT line unless ``origin`` is given.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    header = {}
    data_line = None
    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        key = key.upper()
        if key not in {"VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT",
                       "VIEWPOINT", "POINTS", "DATA"}:
            raise _pcd_error(path, i, f"unexpected header entry {key!r}")
        header[key] = (i, rest.split())
        if key == "DATA":
            data_line = i
            break
    if data_line is None:
        raise _pcd_error(path, len(lines), "missing DATA line")
    if "FIELDS" not in header:
        raise _pcd_error(path, data_line, "missing FIELDS line")
    i, mode = header["DATA"]
    if mode != ["ascii"]:
        raise _pcd_error(path, i, f"only ascii DATA is supported, got {' '.join(mode)!r}")
    i, names = header["FIELDS"]
    names = [n.lower() for n in names]
    if names[:2] != ["x", "y"]:
        raise _pcd_error(path, i, "FIELDS must start with x y")
    d = 3 if len(names) > 2 and names[2] == "z" else 2

    rows = []
    for j, raw in enumerate(lines[data_line:], start=data_line + 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != len(names):
            raise _pcd_error(path, j, f"expected {len(names)} values, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts[:d]])
        except ValueError as exc:
            raise _pcd_error(path, j, f"bad number ({exc})") from exc
    if "POINTS" in header:
        i, n = header["POINTS"]
        try:
            n = int(n[0])
        except (IndexError, ValueError) as exc:
            raise _pcd_error(path, i, "POINTS must be an integer") from exc
        if n != len(rows):
            raise _pcd_error(path, i, f"POINTS says {n} but {len(rows)} rows follow")

    if origin is None:
        origin = np.zeros(d)
        if "VIEWPOINT" in header:
            i, vp = header["VIEWPOINT"]
            try:
                origin = np.array([float(v) for v in vp[:3]])[:d]
            except ValueError as exc:
                raise _pcd_error(path, i, "bad VIEWPOINT") from exc
    origin = np.asarray(origin, dtype=float)
    if len(origin) != d:
        raise DataError(f"{path}: origin has {len(origin)} coordinates, cloud is {d}D")
    try:
        return PointCloud(np.array(rows, dtype=float).reshape(-1, d), origin)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_pcd(path, cloud: PointCloud) -> None:
    names = "x y z"[: 2 * cloud.dim - 1]
    vp = list(cloud.origin) + [0.0] * (3 - cloud.dim)
    head = [
        "VERSION .7",
        f"FIELDS {names}",
        "SIZE " + " ".join(["4"] * cloud.dim),
        "TYPE " + " ".join(["F"] * cloud.dim),
        "COUNT " + " ".join(["1"] * cloud.dim),
        f"WIDTH {len(cloud)}",
        "HEIGHT 1",
        "VIEWPOINT " + " ".join(f"{v:g}" for v in vp) + " 1 0 0 0",
        f"POINTS {len(cloud)}",
        "DATA ascii",
    ]
    body = [" ".join(f"{v:.6f}" for v in p) for p in cloud.points]
    Path(path).write_text("\n".join(head + body) + "\n")


def read_csv_cloud(path, origin=None) -> PointCloud:
    """Comma separated ``x,y[,z]`` rows; a non-numeric first row is taken as a header."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    rows, d = [], None
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [s.strip() for s in line.split(",")]
        try:
            vals = [float(v) for v in parts]
        except ValueError as exc:
            if i == 1:
                continue
            raise DataError(f"{path}:{i}: bad number ({exc})") from exc
        if d is None:
            d = len(vals)
            if d not in (2, 3):
                raise DataError(f"{path}:{i}: expected 2 or 3 columns, got {d}")
        elif len(vals) != d:
            raise DataError(f"{path}:{i}: expected {d} columns, got {len(vals)}")
        rows.append(vals)
    if d is None:
        d = 2 if origin is None else len(origin)
    origin = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)
    if len(origin) != d:
        raise DataError(f"{path}: origin has {len(origin)} coordinates, cloud is {d}D")
    return PointCloud(np.array(rows, dtype=float).reshape(-1, d), origin)


def read_cloud(path, origin=None) -> PointCloud:
    if Path(path).suffix.lower() == ".csv":
        return read_csv_cloud(path, origin)
    return read_pcd(path, origin)


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    """Everything a command needs.  Config file sections map onto the fields.

    [preprocess]  d_max=10 n1=30 n2=10 n3=20 eps1=0.05 eps2=0.02 neighbor_radius=0.3
    [iris]        vol_growth_tol=0.02 max_iters=10 seed_ball_radius=0.05
    [add]         min_new_volume=0.1 min_new_fraction=0.25 mc_samples=2000 slice_overlap=0.15
    [explore]     robot_radius=0.2 eps=0.1 step=0.05 cell_size=0.25 extra_seeds=3 seed_reach=1.0
                  stall_attempts=3 visit_radius=1.0 defer_scans=5
    [sensor]      mode=omnidirectional fov_h=360 fov_v=30 range=10 rays_azimuth=720
                  rays_elevation=16 noise_sigma=0.005
    [run]         seed=0 budget=20 out_dir=out max_ticks=200000 frames=true
    """

    explore: ExploreParams = field(default_factory=ExploreParams)
    sensor: SensorModel = field(default_factory=SensorModel)
    seed: int = 0
    budget: int = 20
    out_dir: str = "out"
    max_ticks: int = 200_000
    frames: bool = True

    def with_seed(self, seed: int) -> "RunConfig":
        """Propagate one seed to every random source."""
        ex = replace(self.explore, seed=seed, add=replace(self.explore.add, seed=seed))
        return replace(self, seed=seed, explore=ex, sensor=replace(self.sensor, rng_seed=seed))


_RUN_KEYS = {"seed": int, "budget": int, "out_dir": str, "max_ticks": int, "frames": bool}


def _coerce(section, key, text, kind):
    try:
        if kind is bool:
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text.strip()
    except ValueError as exc:
        raise DataError(f"config [{section}] {key}: cannot parse {text!r}") from exc


def _apply(obj, section, items):
    types = {f.name: f.type for f in fields(obj) if f.type in ("int", "float", "str", "bool", int, float, str, bool)}
    kinds = {"int": int, "float": float, "str": str, "bool": bool}
    updates = {}
    for key, text in items:
        if key not in types or key == "rng_seed" or (section == "explore" and key == "seed"):
            raise DataError(f"config [{section}]: unknown key {key!r}")
        t = types[key]
        updates[key] = _coerce(section, key, text, kinds.get(t, t))
    try:
        return replace(obj, **updates)
    except ValueError as exc:
        raise DataError(f"config [{section}]: {exc}") from exc


def load_config(path=None) -> RunConfig:
    """Read an INI file; unknown sections or keys are errors."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise DataError(f"{path}: cannot read config ({exc})") from exc
    except configparser.Error as exc:
        raise DataError(f"{path}: {exc}") from exc
    ex = cfg.explore
    for section in parser.sections():
        items = list(parser.items(section))
        if section == "preprocess":
            ex = replace(ex, preprocess=_apply(ex.preprocess, section, items))
        elif section == "iris":
            ex = replace(ex, iris=_apply(ex.iris, section, items))
        elif section == "add":
            ex = replace(ex, add=_apply(ex.add, section, items))
        elif section == "explore":
            nested = {"preprocess", "iris", "add"}
            bad = [k for k, _ in items if k in nested]
            if bad:
                raise DataError(f"config [explore]: unknown key {bad[0]!r}")
            ex = _apply(ex, section, items)
        elif section == "sensor":
            cfg = replace(cfg, sensor=_apply(cfg.sensor, section, items))
        elif section == "run":
            updates = {}
            for key, text in items:
                if key not in _RUN_KEYS:
                    raise DataError(f"config [run]: unknown key {key!r}")
                updates[key] = _coerce(section, key, text, _RUN_KEYS[key])
            cfg = replace(cfg, **updates)
        else:
            raise DataError(f"{path}: unknown section [{section}]")
    return replace(cfg, explore=ex).with_seed(cfg.seed)


# ---------------------------------------------------------------------------
# writers

def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dump_json(obj))


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


def trajectory_csv(trajectory) -> str:
    if not trajectory:
        return "tick,x,y,mode\n"
    d = len(trajectory[0][1])
    head = "tick," + ",".join("xyz"[:d]) + ",mode"
    rows = [f"{t}," + ",".join(f"{v:.6f}" for v in p) + f",{m}" for t, p, m in trajectory]
    return "\n".join([head] + rows) + "\n"


def read_trajectory_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    if not lines:
        raise DataError(f"{path}:1: empty trajectory file")
    d = len(lines[0].split(",")) - 2
    pts = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            pts.append([float(v) for v in parts[1:1 + d]])
        except ValueError as exc:
            raise DataError(f"{path}:{i}: bad number ({exc})") from exc
    return np.array(pts, dtype=float).reshape(-1, max(d, 1))
