"""Synthetic worlds and a ray-casting lidar."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, GeometryError, PoseInObstacle
from .geometry import Polytope
from .preprocess import PointCloud


@dataclass
class WorldModel:
    bounds: Polytope
    obstacles: list
    # detection probability per obstacle; 1 is opaque, < 1 lets rays through (glass)
    materials: list = field(default_factory=list)
    start: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if not self.materials:
            self.materials = [1.0] * len(self.obstacles)
        if len(self.materials) != len(self.obstacles):
            raise ValueError("one material per obstacle required")
        if any(not 0.0 <= m <= 1.0 for m in self.materials):
            raise ValueError("detection probabilities must lie in [0, 1]")
        for o in self.obstacles:
            if not np.all(self.bounds.contains_many(o.vertices, tol=1e-6)):
                raise ValueError("obstacle extends outside the world bounds")

    @property
    def dim(self) -> int:
        return self.bounds.dim

    def in_obstacle(self, x, tol: float = 0.0) -> bool:
        return any(o.contains(x, -tol) for o in self.obstacles)

    def clearance(self, x) -> float:
        """Distance from ``x`` to the nearest obstacle or bounds facet."""
        from .geometry import project_point

        x = np.asarray(x, dtype=float)
        best = float(-self.bounds.slack(x))
        for o in self.obstacles:
            best = min(best, float(np.linalg.norm(project_point(x, o) - x)))
        return best

    def to_dict(self) -> dict:
        out = {
            "bounds": self.bounds.to_dict(),
            "obstacles": [o.to_dict() for o in self.obstacles],
            "materials": [float(m) for m in self.materials],
        }
        if self.start is not None:
            out["start"] = [float(v) for v in self.start]
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WorldModel":
        try:
            bounds = Polytope.from_dict(data["bounds"])
            obstacles = [Polytope.from_dict(o) for o in data.get("obstacles", [])]
            materials = [float(m) for m in data.get("materials", [])]
        except KeyError as exc:
            raise DataError(f"world file missing key {exc}") from exc
        except GeometryError as exc:
            raise DataError(f"world file: {exc}") from exc
        start = data.get("start")
        try:
            return cls(bounds, obstacles, materials,
                       None if start is None else np.asarray(start, dtype=float), data.get("name", ""))
        except ValueError as exc:
            raise DataError(f"world file: {exc}") from exc


def load_world(path) -> WorldModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    return WorldModel.from_dict(data)


def bundled_world(name: str) -> WorldModel:
    """One of the worlds shipped with the package (``office``, ``open_maze``, ...)."""
    ref = resources.files("lidarpoly") / "worlds" / f"{name}.json"
    return WorldModel.from_dict(json.loads(ref.read_text()))


def bundled_world_names() -> list[str]:
    d = resources.files("lidarpoly") / "worlds"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


@dataclass
class SensorModel:
    mode: str = "omnidirectional"  # or "limited-fov"
    fov_h: float = 360.0
    fov_v: float = 30.0
    range: float = 10.0
    rays_azimuth: int = 720
    rays_elevation: int = 16
    noise_sigma: float = 0.005
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("omnidirectional", "limited-fov"):
            raise ValueError(f"unknown sensor mode {self.mode!r}")
        if self.range <= 0 or self.rays_azimuth < 1 or self.rays_elevation < 1:
            raise ValueError("range and ray counts must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    def directions(self, d: int) -> np.ndarray:
        """Unit ray directions; limited-FOV sensors sweep a full turn."""
        if self.mode == "omnidirectional":
            az = 2 * np.pi * np.arange(self.rays_azimuth) / self.rays_azimuth
        else:
            fov = math.radians(self.fov_h)
            sweeps = math.ceil(2 * np.pi / fov - 1e-9)
            if self.rays_azimuth == 1:
                local = np.zeros(1)
            else:
                local = np.linspace(-fov / 2, fov / 2, self.rays_azimuth)
            yaws = 2 * np.pi * np.arange(sweeps) / sweeps
            az = (yaws[:, None] + local[None, :]).ravel()
        if d == 2:
            return np.stack([np.cos(az), np.sin(az)], axis=1)
        fv = math.radians(self.fov_v)
        el = np.zeros(1) if self.rays_elevation == 1 else np.linspace(-fv / 2, fv / 2, self.rays_elevation)
        A, E = np.meshgrid(az, el, indexing="ij")
        A, E = A.ravel(), E.ravel()
        return np.stack([np.cos(A) * np.cos(E), np.sin(A) * np.cos(E), np.sin(E)], axis=1)


@dataclass
class ScanRays:
    origin: np.ndarray
    directions: np.ndarray
    # distance travelled by each ray (to its return, or to max range)
    lengths: np.ndarray
    returned: np.ndarray
    points: np.ndarray  # noisy returns, one per returned ray

    def cloud(self) -> PointCloud:
        return PointCloud(self.points, self.origin)


def _slab(A, b, o, U):
    """Entry/exit ray parameters and the entry/exit facet for one convex polytope."""
    den = U @ A.T  # (R, m)
    num = b - A @ o  # (m,)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num[None, :] / den
    lower = np.where(den < 0, t, -np.inf)
    upper = np.where(den > 0, t, np.inf)
    parallel_out = (den == 0) & (num[None, :] < 0)
    t_in = lower.max(axis=1)
    t_out = upper.min(axis=1)
    t_out[parallel_out.any(axis=1)] = -np.inf
    return t_in, lower.argmax(axis=1), t_out, upper.argmin(axis=1)


def cast_rays(world: WorldModel, sensor: SensorModel, pose, scan_index: int = 0) -> ScanRays:
    o = np.asarray(pose, dtype=float)
    if world.in_obstacle(o):
        raise PoseInObstacle(f"pose {o.tolist()} lies inside an obstacle")
    if not world.bounds.contains(o, tol=0.0):
        raise PoseInObstacle(f"pose {o.tolist()} lies outside the world bounds")
    rng = np.random.default_rng([sensor.rng_seed, scan_index])
    U = sensor.directions(world.dim)
    R = len(U)
    _, _, t_wall, wall_row = _slab(world.bounds.A, world.bounds.b, o, U)
    best_t = t_wall.copy()
    best_n = world.bounds.A[wall_row]
    for k, obs in enumerate(world.obstacles):
        t_in, row, t_out, _ = _slab(obs.A, obs.b, o, U)
        hit = (t_in <= t_out) & (t_in > 0)
        detect = rng.random(R) < world.materials[k]
        take = hit & detect & (t_in < best_t)
        best_t[take] = t_in[take]
        best_n[take] = obs.A[row[take]]
    returned = best_t <= sensor.range
    lengths = np.minimum(best_t, sensor.range)
    pts = o + lengths[returned, None] * U[returned]
    if sensor.noise_sigma > 0 and returned.any():
        n = best_n[returned]
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
        pts = pts + sensor.noise_sigma * rng.standard_normal(len(pts))[:, None] * n
    return ScanRays(o, U, lengths, returned, pts)


def simulate_scan(world: WorldModel, sensor: SensorModel, pose, scan_index: int = 0) -> PointCloud:
    """Point cloud seen from ``pose``; deterministic in (sensor seed, scan index)."""
    return cast_rays(world, sensor, pose, scan_index).cloud()
