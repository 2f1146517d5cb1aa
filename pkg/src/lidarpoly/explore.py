"""Closed-loop scan/move exploration of a synthetic world.

The robot alternates two modes.  In scan mode it takes a lidar scan, grows
the free space and the transition graph, and picks the next frontier
waypoint.  In move mode it walks straight lines between polytope
intersections until it reaches the waypoint, then scans again.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import (InitialClearanceViolation, SafetyViolation, SeedInObstacle,
                     SeedOutsideBounds, Unreachable)
from .freespace import AddCriteriaConfig, FreeSpace, add_new_poly_report, shrink_for_robot
from .graph import TransitionGraph, shortest_paths_multi, update_discrete_graph
from .grid import FREE, ExplorationGrid
from .iris import IrisConfig, inflate_region_trace
from .preprocess import PointCloud, PreprocessParams, preprocess
from .world import SensorModel, WorldModel, cast_rays

log = logging.getLogger(__name__)

DONE = None  # frontier_waypoint result when nothing is left to explore


@dataclass
class ExploreParams:
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)
    iris: IrisConfig = field(default_factory=IrisConfig)
    add: AddCriteriaConfig = field(default_factory=lambda: AddCriteriaConfig(mc_samples=2000, slice_overlap=0.15))
    robot_radius: float = 0.2
    eps: float = 0.1  # waypoint arrival radius
    step: float = 0.05  # distance per tick
    cell_size: float = 0.25
    extra_seeds: int = 3
    # extra seeds are taken within this distance of the free space when possible
    seed_reach: float = 1.0
    stall_attempts: int = 3
    # frontier cells this close to a scan pose that survive the scan count as a failed visit
    visit_radius: float = 1.0
    # deferred polytopes (no overlap with the free space yet) are retried this many scans
    defer_scans: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.robot_radius < 0:
            raise ValueError("robot_radius must be nonnegative")
        if self.eps <= 0 or self.step <= 0 or self.cell_size <= 0:
            raise ValueError("eps, step and cell_size must be positive")
        if self.extra_seeds < 0 or self.stall_attempts < 1:
            raise ValueError("extra_seeds must be >= 0 and stall_attempts >= 1")


@dataclass
class RobotState:
    position: np.ndarray
    radius: float
    mode: str = "scan"
    x_des: np.ndarray | None = None
    # (tick, position, mode) per simulation tick
    trajectory: list = field(default_factory=list)

    def record(self):
        self.trajectory.append((len(self.trajectory), self.position.copy(), self.mode))


@dataclass
class ScanReport:
    seeds: list = field(default_factory=list)
    accepted: list = field(default_factory=list)  # seed index per accepted region
    inserted: list = field(default_factory=list)  # new free-space ids
    deferred: int = 0
    obstacles: int = 0
    obstacle_set: object = None  # preprocess output, not serialized


# --- free space update ------------------------------------------------------

def _iris_bounds(cloud: PointCloud, x, d_max: float) -> geo.Polytope:
    pts = np.vstack([cloud.points, x[None, :]])
    lo, hi = pts.min(axis=0) - 0.1, pts.max(axis=0) + 0.1
    sides = 16 if len(x) == 2 else 64
    out = geo.intersect(geo.box(lo, hi), geo.range_polytope(x, d_max, len(x), sides))
    return out if out is not None else geo.box(lo, hi)


def _robot_regions(trace, x, r) -> list:
    """Eroded regions of the trace that still contain ``x``, latest first."""
    out = []
    for reg in reversed(trace.regions):
        s = shrink_for_robot(reg, r)
        if s is not None and s.contains(x):
            out.append(s)
    return out


def extra_seed_points(grid: ExplorationGrid, free_now: np.ndarray, cloud: PointCloud, x,
                      fs: FreeSpace, params: ExploreParams) -> np.ndarray:
    """Free cells seen in this scan, ordered by distance to the nearest frontier.

    Cells within ``params.seed_reach`` of the free space come first so that
    the new regions can attach to it (a seed in a doorway bridges two rooms);
    the rest follow.
    """
    d_max = params.preprocess.d_max
    C = grid.centers().reshape(-1, grid.dim)
    cand = free_now.ravel().copy()
    cand &= np.linalg.norm(C - x, axis=1) <= d_max
    idx = np.flatnonzero(cand)
    if len(idx) == 0:
        return np.zeros((0, grid.dim))
    idx = idx[~fs.covered(C[idx])]
    if len(idx):
        # depth inside the area this scan saw, which keeps seeds off shadow edges
        need = params.robot_radius + params.iris.seed_ball_radius + grid.cell_size
        depth = distance_transform_edt(np.pad(free_now, 1))[(slice(1, -1),) * grid.dim].ravel()
        idx = idx[depth[idx] * grid.cell_size >= need]
    if len(idx) and len(cloud):
        dist, _ = cKDTree(cloud.points).query(C[idx])
        idx = idx[dist >= need]
    if len(idx) == 0:
        return np.zeros((0, grid.dim))
    front = grid.frontier_mask()
    if front.any():
        to_front = distance_transform_edt(~front).ravel()[idx]
    else:
        to_front = np.zeros(len(idx))
    far = np.ones(len(idx), dtype=bool)
    if len(fs):
        covered = fs.covered(C).reshape(grid.shape)
        gap = distance_transform_edt(~covered).ravel()[idx] * grid.cell_size
        far = gap > params.seed_reach
    order = np.lexsort((idx, to_front, far))
    return C[idx[order]]


def _insert_connected(fs: FreeSpace, p: geo.Polytope, cfg: AddCriteriaConfig) -> tuple[list, bool]:
    """add_new_poly, keeping only pieces that join the existing free space.

    Returns (inserted polytopes, deferred?).  On an empty free space every
    piece is kept.
    """
    trial = fs.copy()
    rep = add_new_poly_report(p, trial, cfg)
    if not rep.inserted:
        return [], False
    if len(fs) == 0:
        fs.polytopes, fs._next = trial.polytopes, trial._next
        return rep.inserted, False
    linked = list(fs.polytopes)
    pending = list(rep.inserted)
    keep = []
    grew = True
    while grew and pending:
        grew = False
        for q in list(pending):
            if any(_overlaps(q, o) for o in linked):
                linked.append(q)
                keep.append(q)
                pending.remove(q)
                grew = True
    keep.sort(key=lambda q: geo.id_key(q.id))
    added = [fs.add(q) for q in keep]
    return added, bool(pending) and not added


def _overlaps(p: geo.Polytope, q: geo.Polytope) -> bool:
    if np.any(p.vertices.min(0) > q.vertices.max(0)) or np.any(q.vertices.min(0) > p.vertices.max(0)):
        return False
    inter = geo.intersect(p, q)
    return inter is not None and inter.volume > 1e-9


def shadow_segments(cloud: PointCloud, length: float) -> np.ndarray:
    """For every return, the segment from the hit point outward along its ray.

    Space behind a return was not observed by the scan, so inflated regions
    must stay clear of these segments.
    """
    P = cloud.points
    U = P - cloud.origin
    n = np.linalg.norm(U, axis=1, keepdims=True)
    U = np.divide(U, n, out=np.zeros_like(U), where=n > 0)
    return np.stack([P, P + length * U], axis=1)


def merge_map_points(old: np.ndarray | None, new: np.ndarray, voxel: float = 0.05) -> np.ndarray:
    """Accumulated returns, thinned to one point per voxel (first one wins)."""
    P = new if old is None or len(old) == 0 else np.vstack([old, new])
    if len(P) == 0:
        return P
    _, first = np.unique(np.floor(P / voxel).astype(np.int64), axis=0, return_index=True)
    return P[np.sort(first)]


def update_free_space_report(x, cloud: PointCloud, fs: FreeSpace, params: ExploreParams,
                             grid: ExplorationGrid | None = None, free_now=None,
                             scan_index: int = 0, deferred: list | None = None,
                             map_points: np.ndarray | None = None) -> ScanReport:
    """One scan's worth of free-space growth, in place.

    Regions are inflated from the robot position and from up to
    ``params.extra_seeds`` frontier-side free cells, eroded by the robot
    radius and inserted with add_new_poly.

    Besides the preprocessed obstacles, every region is kept out of the
    scan's shadows (see ``shadow_segments``).  This also covers returns that
    preprocessing did not assign to any obstacle, such as sparse hits on a
    wall seen at a grazing angle.  The robot region must keep the robot
    inside after erosion, and no region may swallow a previously seen return
    (``map_points``) deeper than ``eps1``.
    """
    x = np.asarray(x, dtype=float)
    rep = ScanReport()
    deferred = deferred if deferred is not None else []
    if len(cloud) == 0:
        return rep
    pp = replace(params.preprocess, rng_seed=params.preprocess.rng_seed + 7919 * params.seed + scan_index)
    obs = preprocess(cloud, pp)
    rep.obstacles = len(obs.obstacles)
    rep.obstacle_set = obs
    C = obs.cropped
    if len(C) == 0:
        return rep
    bounds = _iris_bounds(C, x, pp.d_max)
    shadows = shadow_segments(C, 2 * pp.d_max)
    r = params.robot_radius
    depth = max(r - pp.eps1, 0.0)

    def clear(region):
        return map_points is None or len(map_points) == 0 or not region.contains_many(map_points, depth).any()

    def offer(p, retries=params.defer_scans):
        added, defer = _insert_connected(fs, p, params.add)
        rep.inserted += [q.id for q in added]
        if defer and retries > 0:
            later.append((p, retries))
        return added

    later: list = []
    # regions from earlier scans that had nothing to attach to
    old = list(deferred)
    deferred.clear()
    for p, left in old:
        offer(p, left - 1)

    # robot seed
    rep.seeds.append(x)
    try:
        trace = inflate_region_trace(obs.obstacles, x, bounds, params.iris, shadows)
        # earlier, rounder iterates often reach through a doorway the final one left behind
        for region in _robot_regions(trace, x, r):
            if clear(region) and offer(region):
                rep.accepted.append(0)
                break
    except (SeedInObstacle, SeedOutsideBounds) as exc:
        log.debug("robot seed skipped: %s", exc)

    if grid is not None and free_now is not None and params.extra_seeds > 0:
        cands = extra_seed_points(grid, free_now, C, x, fs, params)
        used = 0
        for s in cands[: 8 * params.extra_seeds]:
            if used >= params.extra_seeds:
                break
            if fs.contains(s):
                continue
            rep.seeds.append(s)
            used += 1
            try:
                trace = inflate_region_trace(obs.obstacles, s, bounds, params.iris, shadows)
            except (SeedInObstacle, SeedOutsideBounds):
                continue
            regions = [shrink_for_robot(reg, r) for reg in reversed(trace.regions)]
            regions = [q for q in regions if q is not None and clear(q)]
            for k, region in enumerate(regions):
                # only the final iterate waits for a later scan
                if offer(region, params.defer_scans if k == 0 else 0):
                    rep.accepted.append(len(rep.seeds) - 1)
                    break
    deferred.extend(later)
    rep.deferred = len(later)
    return rep


def update_free_space(x, cloud: PointCloud, fs: FreeSpace, params: ExploreParams | None = None,
                      grid: ExplorationGrid | None = None, free_now=None, scan_index: int = 0) -> FreeSpace:
    update_free_space_report(x, cloud, fs, params or ExploreParams(), grid, free_now, scan_index)
    return fs


# --- waypoints and motion ---------------------------------------------------

class FrontierTracker:
    """Counts failed visits per frontier cell and blacklists persistent ones."""

    def __init__(self, limit: int = 3, visit_radius: float = 1.0):
        self.limit = limit
        self.visit_radius = visit_radius
        self.attempts: dict = {}
        self.blacklist: set = set()
        self.scan_poses: list = []

    def visited(self, w) -> bool:
        return any(np.linalg.norm(w - p) <= self.visit_radius for p in self.scan_poses)

    def fail(self, cell) -> None:
        cell = tuple(int(c) for c in cell)
        self.attempts[cell] = self.attempts.get(cell, 0) + 1
        if self.attempts[cell] >= self.limit:
            self.blacklist.add(cell)

    def ban(self, cell) -> None:
        self.blacklist.add(tuple(int(c) for c in cell))


def uncovered_free_cells(grid: ExplorationGrid, fs: FreeSpace, r: float) -> np.ndarray:
    """Known-free cells with room for the robot that the free space does not cover yet.

    Rays that pass through partly transparent obstacles can mark space free
    without leaving any frontier next to it; these cells keep such space on
    the agenda.
    """
    free = grid.cells == FREE
    if not free.any():
        return np.zeros((0, grid.dim), dtype=int)
    depth = distance_transform_edt(free) * grid.cell_size
    cells = np.argwhere(free & (depth >= r + grid.cell_size))
    if len(cells) == 0 or len(fs) == 0:
        return cells
    return cells[~fs.covered(grid.center(cells))]


def _pick_target(cells, grid, fs, x, eps, tracker):
    centers = grid.center(cells)
    dist = np.linalg.norm(centers - x, axis=1)
    order = np.lexsort((*cells.T[::-1], dist))
    hidden = None
    for i in order:
        cell = tuple(int(c) for c in cells[i])
        if cell in tracker.blacklist:
            continue
        w = geo.project_point(centers[i], fs.polytopes)
        if np.linalg.norm(w - x) <= eps:
            tracker.fail(cell)
            continue
        if not grid.line_clear(w, centers[i]):
            if hidden is None and not tracker.visited(w):
                hidden = (w, cell)
            continue
        return w, cell
    return hidden


def frontier_waypoint(grid: ExplorationGrid, fs: FreeSpace, x, eps: float = 0.1,
                      tracker: FrontierTracker | None = None):
    """Nearest frontier cell center projected onto the free space, or DONE.

    Without a tracker this is the plain nearest-frontier rule and returns the
    waypoint.  With one it returns (waypoint, cell): blacklisted cells are
    skipped, cells whose projection lands within ``eps`` of ``x`` (the robot
    is already as close as the free space allows) count as failed visits,
    and cells not in plain view of their waypoint (through known-free cells)
    are only used when no visible frontier is left and the waypoint is away
    from every earlier scan pose.  Once the frontier is used up, known-free
    cells outside the free space (see ``uncovered_free_cells``) are tried
    the same way.
    """
    x = np.asarray(x, dtype=float)
    cells = grid.frontier_cells()
    if len(fs) == 0:
        return DONE
    if tracker is None:
        if len(cells) == 0:
            return DONE
        centers = grid.center(cells)
        order = np.lexsort((*cells.T[::-1], np.linalg.norm(centers - x, axis=1)))
        return geo.project_point(centers[order[0]], fs.polytopes)
    if len(cells):
        hit = _pick_target(cells, grid, fs, x, eps, tracker)
        if hit is not None:
            return hit
    cells = uncovered_free_cells(grid, fs, fs.robot_radius)
    if len(cells):
        hit = _pick_target(cells, grid, fs, x, eps, tracker)
        if hit is not None:
            return hit
    return DONE


def generate_x_next(x, x_des, g: TransitionGraph, fs: FreeSpace):
    """Next intermediate target on the way from ``x`` to ``x_des``."""
    x = np.asarray(x, dtype=float)
    x_des = np.asarray(x_des, dtype=float)
    src = fs.containing(x)
    dst = fs.containing(x_des)
    if not src or not dst:
        raise Unreachable("start or goal is outside the free space")
    if set(src) & set(dst):
        return x_des.copy()
    _, path = shortest_paths_multi(g, src, dst)
    return g.edge(path[0], path[1]).cross.copy()


def navigate(state: RobotState, target, step: float, fs: FreeSpace | None = None,
             max_ticks: int | None = None) -> RobotState:
    """Walk straight to ``target`` in increments of at most ``step``.

    Every tick is recorded in ``state.trajectory``; with ``fs`` given each
    position is checked against the free space.
    """
    target = np.asarray(target, dtype=float)
    if fs is not None:
        common = set(fs.containing(state.position)) & set(fs.containing(target))
        if not common:
            raise SafetyViolation("segment endpoints share no free polytope")
    start = state.position.copy()
    seg = target - start
    L = float(np.linalg.norm(seg))
    if L == 0.0:
        return state
    n = int(np.ceil(L / step - 1e-12))
    if max_ticks is not None:
        n = min(n, max_ticks)
    for k in range(1, n + 1):
        state.position = target.copy() if k * step >= L else start + (k * step / L) * seg
        if fs is not None and not fs.contains(state.position):
            raise SafetyViolation(f"position {state.position.tolist()} left the free space")
        state.record()
    return state


# --- main loop ----------------------------------------------------------------

@dataclass
class ExplorationResult:
    fs: FreeSpace
    graph: TransitionGraph
    trajectory: list
    grid: ExplorationGrid
    scans: int = 0
    termination: str = ""
    scan_reports: list = field(default_factory=list)
    scan_poses: list = field(default_factory=list)

    def __iter__(self):
        # allows ``fs, graph, trajectory, grid = run_exploration(...)``
        return iter((self.fs, self.graph, self.trajectory, self.grid))

    def metadata(self) -> dict:
        return {
            "scans": self.scans,
            "termination": self.termination,
            "ticks": len(self.trajectory),
            "polytopes": len(self.fs),
            "edges": len(self.graph.edges),
            "connected": self.graph.is_connected(),
            "scan_poses": [[float(v) + 0.0 for v in p] for p in self.scan_poses],
            "per_scan": [
                {"obstacles": r.obstacles, "seeds": len(r.seeds), "accepted": len(r.accepted),
                 "inserted": list(r.inserted)}
                for r in self.scan_reports
            ],
        }


def run_exploration(world: WorldModel, sensor: SensorModel, params: ExploreParams | None = None,
                    budget: int = 10, start=None, on_scan=None, max_ticks: int = 200_000) -> ExplorationResult:
    """Explore ``world`` from ``start`` for at most ``max(1, budget)`` scans.

    ``on_scan(index, result, cloud)`` is called after every scan.
    """
    params = params or ExploreParams()
    x0 = np.asarray(start if start is not None else world.start, dtype=float)
    r = params.robot_radius
    if world.in_obstacle(x0) or world.clearance(x0) < r + params.iris.seed_ball_radius:
        raise InitialClearanceViolation(
            f"start {x0.tolist()} needs clearance >= {r + params.iris.seed_ball_radius}")
    fs = FreeSpace(r)
    grid = ExplorationGrid(world.bounds, params.cell_size)
    state = RobotState(x0.copy(), r)
    res = ExplorationResult(fs, TransitionGraph(), state.trajectory, grid)
    tracker = FrontierTracker(params.stall_attempts, params.visit_radius)
    deferred: list = []
    max_scans = max(1, int(budget))
    goal_cell = None
    map_points = None
    state.record()

    while True:
        if state.mode == "scan":
            k = res.scans
            rays = cast_rays(world, sensor, state.position, scan_index=k)
            free_now = grid.update(rays)
            map_points = merge_map_points(map_points, rays.points)
            rep = update_free_space_report(state.position, rays.cloud(), fs, params, grid, free_now,
                                           scan_index=k, deferred=deferred, map_points=map_points)
            res.graph = update_discrete_graph(fs, res.graph)
            res.scans += 1
            res.scan_reports.append(rep)
            res.scan_poses.append(state.position.copy())
            if k == 0 and not fs.contains(state.position):
                raise InitialClearanceViolation("first scan produced no free polytope around the start")
            if on_scan is not None:
                on_scan(k, res, rays.cloud())
            tracker.scan_poses.append(state.position.copy())
            for cell in grid.frontier_cells():
                if np.linalg.norm(grid.center(cell) - state.position) <= params.visit_radius:
                    tracker.fail(cell)
            nxt = frontier_waypoint(grid, fs, state.position, params.eps, tracker)
            if nxt is DONE:
                res.termination = "done"
                break
            if res.scans >= max_scans:
                res.termination = "budget"
                break
            state.x_des, goal_cell = nxt
            state.mode = "move"
            continue

        # move mode
        if np.linalg.norm(state.position - state.x_des) <= params.eps:
            state.mode = "scan"
            continue
        try:
            x_next = generate_x_next(state.position, state.x_des, res.graph, fs)
        except Unreachable:
            tracker.ban(goal_cell)
            nxt = frontier_waypoint(grid, fs, state.position, params.eps, tracker)
            if nxt is DONE:
                res.termination = "unreachable"
                break
            state.x_des, goal_cell = nxt
            continue
        if np.linalg.norm(x_next - state.position) <= 1e-12:
            tracker.ban(goal_cell)
            state.mode = "scan"
            continue
        navigate(state, x_next, params.step, fs)
        if len(state.trajectory) > max_ticks:
            res.termination = "ticks"
            break
    state.mode = "scan"
    return res
