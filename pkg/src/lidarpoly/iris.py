"""Obstacle-free region inflation.

Alternates two steps until the inscribed ellipsoid stops growing:

1. for every obstacle (nearest first in the ellipsoid metric) emit the
   hyperplane tangent to the scaled ellipsoid at the obstacle's closest point,
   skipping obstacles already cut off by an earlier hyperplane;
2. refit the maximum-volume ellipsoid inside bounds + hyperplanes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import geometry as geo
from .errors import EmptyCloud, SeedInObstacle, SeedOutsideBounds
from .geometry import Halfspace, Polytope
from .solvers import Ellipsoid, closest_point_in_metric, max_volume_ellipsoid


@dataclass
class IrisConfig:
    vol_growth_tol: float = 0.02
    max_iters: int = 10
    seed_ball_radius: float = 0.05

    def __post_init__(self):
        if not 0 < self.vol_growth_tol < 1:
            raise ValueError("vol_growth_tol must lie in (0, 1)")
        if self.max_iters < 1 or self.seed_ball_radius <= 0:
            raise ValueError("max_iters and seed_ball_radius must be positive")


@dataclass
class IrisTrace:
    """Per-iteration record; ``ellipsoids[0]`` is the seed ball."""

    regions: list = field(default_factory=list)
    ellipsoids: list = field(default_factory=list)

    @property
    def dets(self) -> list[float]:
        return [e.det for e in self.ellipsoids]

    @property
    def region(self) -> Polytope:
        return self.regions[-1]

    @property
    def ellipsoid(self) -> Ellipsoid:
        return self.ellipsoids[-1]


def bounding_box(cloud, margin: float = 0.0) -> Polytope:
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    if len(pts) == 0:
        raise EmptyCloud("bounding box of an empty cloud")
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    # keep the box full-dimensional for planar clouds
    flat = hi - lo < 1e-6
    lo[flat] -= 1e-3
    hi[flat] += 1e-3
    return geo.box(lo, hi)


def _vertex_sets(obstacles) -> list[np.ndarray]:
    out = []
    for o in obstacles:
        out.append(np.atleast_2d(o.vertices if hasattr(o, "vertices") else np.asarray(o, dtype=float)))
    return out


def _as_segments(segments, d: int) -> np.ndarray:
    if segments is None:
        return np.zeros((0, 2, d))
    S = np.asarray(segments, dtype=float)
    if S.ndim == 2:  # plain points
        S = np.stack([S, S], axis=1)
    return S.reshape(-1, 2, d)


def _segment_closest(S: np.ndarray, metric: Ellipsoid):
    """Closest point of every segment to the ellipsoid center, in its metric."""
    Ci = np.linalg.inv(metric.C)
    Y0 = (S[:, 0] - metric.center) @ Ci.T
    Y1 = (S[:, 1] - metric.center) @ Ci.T
    D = Y1 - Y0
    dd = np.einsum("ij,ij->i", D, D)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(dd > 0, -np.einsum("ij,ij->i", Y0, D) / dd, 0.0)
    t = np.clip(t, 0.0, 1.0)
    X = S[:, 0] + t[:, None] * (S[:, 1] - S[:, 0])
    return X, np.linalg.norm(Y0 + t[:, None] * D, axis=1)


def separating_hyperplanes(obstacles: Iterable, metric: Ellipsoid, segments=None) -> list[Halfspace]:
    """Halfspaces containing the ellipsoid center and excluding every obstacle.

    ``segments`` optionally adds line-segment (n, 2, d) or point (n, d)
    obstacles, handled in bulk.
    """
    Vs = _vertex_sets(obstacles)
    S = _as_segments(segments, metric.dim)
    if not Vs and len(S) == 0:
        return []
    Q_inv = np.linalg.inv(metric.C @ metric.C.T)
    poly = []
    for V in Vs:
        x = closest_point_in_metric(V, metric)
        poly.append((metric.metric_distance(x), x))
    Xs, ds = _segment_closest(S, metric) if len(S) else (np.zeros((0, metric.dim)), np.zeros(0))
    if any(d <= 1e-9 for d, _ in poly) or np.any(ds <= 1e-9):
        raise SeedInObstacle("ellipsoid center lies inside an obstacle")
    # polytopes and segments are merged by distance; ties go to polytopes, then index
    order = sorted(range(len(poly)), key=lambda i: (poly[i][0], i))
    seg_order = np.lexsort((np.arange(len(S)), ds))
    out: list[Halfspace] = []
    gone = np.zeros(len(S), dtype=bool)
    pi = si = 0

    def cut(x):
        a = Q_inv @ (x - metric.center)
        a = a / np.linalg.norm(a)
        h = Halfspace(a, float(a @ x))
        out.append(h)
        if len(S):
            np.logical_or(gone, np.all(S @ a >= h.offset - geo.TOL_GEOM, axis=1), out=gone)

    while pi < len(order) or si < len(S):
        while si < len(S) and gone[seg_order[si]]:
            si += 1
        take_poly = pi < len(order) and (si >= len(S) or poly[order[pi]][0] <= ds[seg_order[si]])
        if take_poly:
            i = order[pi]
            pi += 1
            if any(np.min(Vs[i] @ h.normal) >= h.offset - geo.TOL_GEOM for h in out):
                continue
            cut(poly[i][1])
        elif si < len(S):
            j = seg_order[si]
            si += 1
            cut(Xs[j])
    return out


def inflate_region_trace(obstacles, seed, bounds: Polytope, cfg: IrisConfig | None = None,
                         segments=None) -> IrisTrace:
    cfg = cfg or IrisConfig()
    seed = np.asarray(seed, dtype=float)
    obstacles = list(obstacles)
    S = _as_segments(segments, len(seed))
    if bounds.slack(seed) >= -geo.TOL_GEOM:
        raise SeedOutsideBounds("seed is not strictly inside the bounds")
    for o in obstacles:
        if hasattr(o, "contains") and o.contains(seed, tol=0.0):
            raise SeedInObstacle("seed lies inside an obstacle")
    # the seed ball must fit, otherwise the first step could lose volume
    r0 = min(cfg.seed_ball_radius, 0.99 * -bounds.slack(seed))
    ball = Ellipsoid.ball(seed, 1.0)
    for V in _vertex_sets(obstacles):
        x = closest_point_in_metric(V, ball)
        r0 = min(r0, 0.99 * float(np.linalg.norm(x - seed)))
    if len(S):
        _, ds = _segment_closest(S, ball)
        r0 = min(r0, 0.99 * float(ds.min()))
    if r0 <= 0:
        raise SeedInObstacle("seed touches an obstacle")
    trace = IrisTrace([], [Ellipsoid.ball(seed, r0)])
    E = trace.ellipsoids[0]
    for _ in range(cfg.max_iters):
        hs = separating_hyperplanes(obstacles, E, S)
        A = np.vstack([bounds.A] + [h.normal[None, :] for h in hs])
        b = np.concatenate([bounds.b, [h.offset for h in hs]])
        region = geo.from_halfspaces(A, b)
        E_new = max_volume_ellipsoid(region)
        trace.regions.append(region)
        trace.ellipsoids.append(E_new)
        growth = (E_new.det - E.det) / E.det
        E = E_new
        if growth < cfg.vol_growth_tol:
            break
    return trace


def inflate_region(obstacles, seed, bounds: Polytope, cfg: IrisConfig | None = None, segments=None):
    """Large obstacle-free polytope grown around ``seed``; returns (region, ellipsoid).

    The region is not guaranteed to contain ``seed``.
    """
    trace = inflate_region_trace(obstacles, seed, bounds, cfg, segments)
    return trace.region, trace.ellipsoid
