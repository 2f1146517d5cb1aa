"""Point cloud -> convex polytopic obstacles.

Repeatedly picks a random seed point, fits a plane to its neighborhood, grows
a connected planar patch around the seed and keeps the patch's convex hull as
an obstacle when it is large enough.  Isolated noise never reaches the size
threshold, so it is dropped implicitly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import DegenerateInput, EmptyCloud

log = logging.getLogger(__name__)

# Half-width used to give flat point patches a nonzero volume.
THICKEN = 1e-3


@dataclass
class PointCloud:
    points: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(-1)
        d = len(self.origin)
        pts = np.asarray(self.points, dtype=float)
        self.points = pts.reshape(-1, d) if pts.size else np.zeros((0, d))
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.origin))):
            raise ValueError("point cloud has non-finite coordinates")

    @property
    def dim(self) -> int:
        return len(self.origin)

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class PreprocessParams:
    d_max: float = 10.0
    n1: int = 30
    n2: int = 10
    n3: int = 20
    eps1: float = 0.05
    eps2: float = 0.02
    neighbor_radius: float = 0.3
    rng_seed: int = 0

    def validate(self, d: int) -> None:
        if not (self.d_max > 0 and self.eps1 > 0 and self.eps2 > 0 and self.neighbor_radius > 0):
            raise ValueError("d_max, eps1, eps2 and neighbor_radius must be positive")
        if min(self.n1, self.n2, self.n3) < 1:
            raise ValueError("n1, n2, n3 must be positive")
        if self.n3 < d + 1:
            raise ValueError("n3 must be at least d+1")


@dataclass
class ObstacleSet:
    obstacles: list
    # indices into ``cropped.points`` of the points behind each obstacle
    members: list = field(default_factory=list)
    cropped: PointCloud | None = None
    iterations: int = 0

    def __len__(self) -> int:
        return len(self.obstacles)

    def __iter__(self):
        return iter(self.obstacles)

    def to_dict(self) -> dict:
        return {"obstacles": [p.to_dict() for p in self.obstacles]}


class PlaneFit(NamedTuple):
    normal: np.ndarray
    offset: float
    degenerate: bool


def crop_point_cloud(cloud: PointCloud, d_max: float) -> PointCloud:
    dist = np.linalg.norm(cloud.points - cloud.origin, axis=1)
    return PointCloud(cloud.points[dist <= d_max], cloud.origin)


def random_select(cloud: PointCloud, rng: np.random.Generator) -> np.ndarray:
    if len(cloud) == 0:
        raise EmptyCloud("cannot select from an empty cloud")
    return cloud.points[rng.integers(len(cloud))].copy()


def get_neighbors(cloud: PointCloud, seed, radius: float) -> np.ndarray:
    dist = np.linalg.norm(cloud.points - np.asarray(seed, dtype=float), axis=1)
    return cloud.points[dist <= radius]


def _sign_normalize(n: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(n) > 1e-12)
    if len(nz) and n[nz[0]] < 0:
        return -n
    return n


def regression(points) -> PlaneFit:
    """Total-least-squares hyperplane ``normal . x + offset = 0`` with unit normal.

    ``degenerate`` is set when the points span fewer than d-1 dimensions, in
    which case the normal is an arbitrary unit vector orthogonal to them.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    d = P.shape[1]
    if len(P) < 2:
        raise DegenerateInput("need at least two points to fit a plane")
    mean = P.mean(axis=0)
    Q = P - mean
    _, sv, Vt = np.linalg.svd(Q, full_matrices=True)
    scale = max(float(np.abs(Q).max()), 1e-300)
    if sv[0] <= 1e-12 * scale:
        raise DegenerateInput("all points coincide")
    rank = int(np.sum(sv > 1e-9 * sv[0]))
    normal = _sign_normalize(Vt[-1])
    return PlaneFit(normal, float(-normal @ mean), rank < d - 1 or len(P) < d)


def grow_plane(points, seed_index: int, normal, offset: float, eps1: float, gap: float,
               tree: cKDTree | None = None, active=None) -> np.ndarray:
    """Indices of the connected planar patch around ``points[seed_index]``.

    A point joins when it is within ``eps1`` of the plane and closer than
    ``gap`` to a point already in the patch.  ``active`` restricts the search
    to a subset (mask) of ``points``.
    """
    P = np.asarray(points, dtype=float)
    if tree is None:
        tree = cKDTree(P)
    ok = np.abs(P @ np.asarray(normal) + offset) < eps1
    if active is not None:
        ok &= active
    seen = np.zeros(len(P), dtype=bool)
    seen[seed_index] = True
    frontier = [seed_index]
    r = np.nextafter(gap, 0.0)
    while frontier:
        hits = tree.query_ball_point(P[frontier], r)
        nxt = set()
        for h in hits:
            nxt.update(h)
        cand = np.fromiter(nxt, dtype=int, count=len(nxt))
        cand = cand[ok[cand] & ~seen[cand]]
        seen[cand] = True
        frontier = np.sort(cand).tolist()
    return np.flatnonzero(seen)


def obstacle_hull(points, normal=None) -> geo.Polytope:
    """Convex hull of a point patch, thickened slightly if it is flat."""
    P = np.asarray(points, dtype=float)
    try:
        return geo.hull(P)
    except DegenerateInput:
        d = P.shape[1]
        offs = [THICKEN * e for e in np.vstack([np.eye(d), -np.eye(d)])]
        if normal is not None:
            offs += [THICKEN * np.asarray(normal), -THICKEN * np.asarray(normal)]
        return geo.hull(np.vstack([P + o for o in offs]))


def preprocess(cloud: PointCloud, params: PreprocessParams | None = None) -> ObstacleSet:
    params = params or PreprocessParams()
    params.validate(cloud.dim)
    rng = np.random.default_rng(params.rng_seed)
    C = crop_point_cloud(cloud, params.d_max)
    out = ObstacleSet([], [], C, 0)
    if len(C) == 0:
        return out
    P = C.points
    tree = cKDTree(P)
    alive = np.ones(len(P), dtype=bool)
    n_fail = 0
    while alive.sum() >= params.n1 and n_fail < params.n2:
        out.iterations += 1
        idx_alive = np.flatnonzero(alive)
        s = int(idx_alive[rng.integers(len(idx_alive))])
        nb = np.asarray(tree.query_ball_point(P[s], params.neighbor_radius), dtype=int)
        nb = np.sort(nb[alive[nb]])
        try:
            fit = regression(P[nb])
        except DegenerateInput:
            n_fail += 1
            continue
        if fit.degenerate:
            n_fail += 1
            continue
        gap = params.eps2 * float(np.linalg.norm(C.origin - P[s]))
        patch = grow_plane(P, s, fit.normal, fit.offset, params.eps1, gap, tree, alive)
        if len(patch) > params.n3:
            try:
                obs = obstacle_hull(P[patch], fit.normal)
            except DegenerateInput:
                n_fail += 1
                continue
            out.obstacles.append(obs)
            out.members.append(patch)
            alive[patch] = False
            n_fail = 0
        else:
            n_fail += 1
    log.debug("preprocess: %d obstacles in %d iterations", len(out.obstacles), out.iterations)
    return out
