import numpy as np
import pytest

from lidarpoly import geometry as geo
from lidarpoly.errors import InitialClearanceViolation, SafetyViolation, Unreachable
from lidarpoly.explore import (DONE, ExploreParams, FrontierTracker, RobotState, frontier_waypoint,
                               generate_x_next, navigate, run_exploration, update_free_space)
from lidarpoly.freespace import FreeSpace
from lidarpoly.graph import shortest_path, update_discrete_graph
from lidarpoly.grid import FREE, OCCUPIED, UNKNOWN, ExplorationGrid
from lidarpoly.preprocess import PointCloud
from lidarpoly.world import SensorModel, WorldModel, bundled_world, simulate_scan
from oracles import coverage_fraction, reachable_free_raster


def chain(*boxes):
    fs = FreeSpace(0, [geo.box(lo, hi) for lo, hi in boxes])
    return fs, update_discrete_graph(fs)


# -- update_free_space ---------------------------------------------------------

def test_first_scan_contains_robot_and_rescan_is_idempotent():
    w = bundled_world("empty_room")
    c = simulate_scan(w, SensorModel(), w.start)
    fs = update_free_space(w.start, c, FreeSpace(0.2), ExploreParams())
    assert len(fs) >= 1 and fs.contains(w.start)
    before = fs.to_dict()
    update_free_space(w.start, c, fs, ExploreParams())
    assert fs.to_dict() == before


def test_empty_cloud_leaves_fs():
    fs = FreeSpace(0.2, [geo.box([0, 0], [1, 1])])
    update_free_space([0.5, 0.5], PointCloud(np.zeros((0, 2)), [0.5, 0.5]), fs, ExploreParams())
    assert len(fs) == 1


# -- frontier ------------------------------------------------------------------

def east_grid():
    g = ExplorationGrid(geo.box([0, 0], [10, 4]), 0.25)
    g.cells[:] = FREE
    g.cells[20:, :] = UNKNOWN
    return g


def test_frontier_all_known_is_done():
    g = ExplorationGrid(geo.box([0, 0], [4, 4]), 0.25)
    g.cells[:] = FREE
    assert frontier_waypoint(g, FreeSpace(0, [geo.box([1, 1], [3, 3])]), [2, 2]) is DONE


def test_frontier_east():
    g = east_grid()
    fs = FreeSpace(0, [geo.box([0.5, 0.5], [3.5, 3.5])])
    w = frontier_waypoint(g, fs, [2, 2])
    assert fs.contains(w)
    assert w[0] == pytest.approx(3.5)
    cells = g.frontier_cells()
    centers = g.center(cells)
    nearest = centers[np.argmin(np.linalg.norm(centers - [2, 2], axis=1))]
    assert nearest[0] > 4.5
    assert np.allclose(w, geo.project_point(nearest, fs.polytopes))
    S = geo.sample_uniform(fs.polytopes[0], 1000, np.random.default_rng(0))
    assert np.linalg.norm(w - nearest) <= np.linalg.norm(S - nearest, axis=1).min() + 1e-9


def test_frontier_tracker_blacklists_after_limit():
    g = east_grid()
    fs = FreeSpace(0, [geo.box([0.5, 0.5], [3.5, 3.5])])
    tr = FrontierTracker(limit=2)
    w, cell = frontier_waypoint(g, fs, [2, 2], tracker=tr)
    tr.fail(cell)
    tr.fail(cell)
    assert cell in tr.blacklist
    w2, cell2 = frontier_waypoint(g, fs, [2, 2], tracker=tr)
    assert cell2 != cell


def test_uncovered_free_space_is_a_target():
    g = ExplorationGrid(geo.box([0, 0], [8, 4]), 0.25)
    g.cells[:] = FREE
    fs = FreeSpace(0.2, [geo.box([0, 0], [3.5, 4])])
    hit = frontier_waypoint(g, fs, [2, 2], tracker=FrontierTracker())
    assert hit is not DONE and hit[0][0] == pytest.approx(3.5)


# -- generate_x_next / navigate -----------------------------------------------

def test_generate_x_next_examples():
    fs, g = chain(([0, 0], [4, 2]))
    assert np.allclose(generate_x_next([1, 1], [3, 1.5], g, fs), [3, 1.5])
    fs, g = chain(([0, 0], [2, 2]), ([1.5, 0], [4, 2]))
    assert np.allclose(generate_x_next([0.5, 1], [3.5, 1], g, fs), g.edge("0", "1").cross)
    fs, g = chain(([0, 0], [2, 2]), ([1.5, 0], [4, 2]), ([3.5, 0], [6, 2]))
    nxt = generate_x_next([0.5, 1], [5.5, 1], g, fs)
    assert shortest_path(g, "0", "2") == ["0", "1", "2"]
    assert np.allclose(nxt, g.edge("0", "1").cross)
    with pytest.raises(Unreachable):
        generate_x_next([0.5, 1], [9, 9], g, fs)


def test_generate_x_next_disconnected():
    fs, g = chain(([0, 0], [1, 1]), ([2, 0], [3, 1]))
    with pytest.raises(Unreachable):
        generate_x_next([0.5, 0.5], [2.5, 0.5], g, fs)


def test_navigate_examples():
    s = RobotState(np.array([0.0, 0.0]), 0.2)
    navigate(s, [0, 0], 0.1)
    assert s.trajectory == []
    navigate(s, [1, 0], 0.1)
    pos = np.array([p for _, p, _ in s.trajectory])
    assert len(pos) == 10 and np.array_equal(pos[-1], [1, 0])
    d = np.linalg.norm(pos - [1, 0], axis=1)
    assert np.all(np.diff(d) < 0)


def test_navigate_refuses_unsafe_segment():
    fs, _ = chain(([0, 0], [1, 1]), ([2, 0], [3, 1]))
    with pytest.raises(SafetyViolation):
        navigate(RobotState(np.array([0.5, 0.5]), 0.1), [2.5, 0.5], 0.1, fs)


def test_random_corridors_are_safe():
    rng = np.random.default_rng(12)
    for _ in range(100):
        boxes, x = [], np.zeros(2)
        for _ in range(int(rng.integers(2, 6))):
            size = rng.uniform(0.5, 2.0, 2)
            boxes.append((x - size / 2, x + size / 2))
            x = x + rng.uniform(0.1, 0.4, 2) * size
        fs, g = chain(*boxes)
        if not g.is_connected():
            continue
        s = RobotState(np.asarray(geo.centroid(fs.polytopes[0])), 0.1)
        goal = geo.centroid(fs.polytopes[-1])
        for _ in range(len(fs) + 1):
            nxt = generate_x_next(s.position, goal, g, fs)
            navigate(s, nxt, 0.05, fs)
            if np.array_equal(s.position, goal):
                break
        assert np.array_equal(s.position, goal)


# -- closed loop ---------------------------------------------------------------

def test_empty_room_done_and_covered():
    w = bundled_world("empty_room")
    res = run_exploration(w, SensorModel(), ExploreParams(), budget=3)
    assert res.termination == "done"
    mask, lo, pitch = reachable_free_raster(w, res.fs.robot_radius, w.start)
    assert coverage_fraction(res.fs, mask, lo, pitch) >= 0.9


def test_split_room_stays_on_start_side():
    w = bundled_world("split_room")
    res = run_exploration(w, SensorModel(), ExploreParams(), budget=5)
    assert res.graph.is_connected()
    wall_x = min(o.vertices[:, 0].min() for o in w.obstacles)
    for p in res.fs:
        assert p.vertices[:, 0].max() <= wall_x + 1e-9


def test_budget_zero_single_scan():
    w = bundled_world("empty_room")
    res = run_exploration(w, SensorModel(), ExploreParams(), budget=0)
    assert res.scans == 1 and len(res.fs) >= 1
    assert len(res.trajectory) == 1 and np.array_equal(res.trajectory[0][1], w.start)


def test_initial_clearance():
    w = bundled_world("empty_room")
    with pytest.raises(InitialClearanceViolation):
        run_exploration(w, SensorModel(), ExploreParams(), budget=1, start=[0.1, 3.0])


def test_closed_loop_invariants_and_determinism():
    w = bundled_world("open_maze")
    vols, nodes = [], []

    def probe(k, res, cloud):
        vols.append(sum(p.volume for p in res.fs))
        nodes.append(len(res.graph.nodes))

    res = run_exploration(w, SensorModel(rng_seed=3), ExploreParams(seed=3), budget=4, on_scan=probe)
    assert all(b >= a for a, b in zip(vols, vols[1:]))
    assert all(b >= a for a, b in zip(nodes, nodes[1:]))
    pts = [p for _, p, _ in res.trajectory]
    for a, b in zip(pts[1:], pts[2:]):
        assert set(res.fs.containing(a)) & set(res.fs.containing(b))
    r = res.fs.robot_radius
    for _, p, _ in res.trajectory:
        assert w.clearance(p) >= r - 2 * ExploreParams().preprocess.eps1
    again = run_exploration(w, SensorModel(rng_seed=3), ExploreParams(seed=3), budget=4)
    assert again.fs.to_dict() == res.fs.to_dict()
    assert [(t, p.tolist(), m) for t, p, m in again.trajectory] == [(t, p.tolist(), m) for t, p, m in res.trajectory]


def test_small_3d_run():
    w = bundled_world("room3d")
    res = run_exploration(w, SensorModel(rays_azimuth=180, rays_elevation=8), ExploreParams(), budget=1)
    assert res.scans == 1 and len(res.fs) >= 1 and res.fs.contains(w.start)
