import numpy as np
import pytest
from hypothesis import given, strategies as st

from lidarpoly import geometry as geo
from lidarpoly.errors import EmptyCloud, SeedInObstacle, SeedOutsideBounds
from lidarpoly.iris import (IrisConfig, bounding_box, inflate_region, inflate_region_trace,
                            separating_hyperplanes)
from lidarpoly.preprocess import PointCloud
from lidarpoly.solvers import Ellipsoid, max_volume_ellipsoid
from oracles import random_polytope

seeds = st.integers(0, 2**32 - 1)


def random_scene(rng, n_obs=None, box=10.0):
    bounds = geo.box([0, 0], [box, box])
    obs = []
    for _ in range(n_obs or int(rng.integers(3, 11))):
        c = rng.uniform(1, box - 1, 2)
        obs.append(geo.hull(random_polytope(rng, 2, n=6, scale=1.5, center=c)))
    while True:
        seed = rng.uniform(0.5, box - 0.5, 2)
        if all(o.slack(seed) > 0.1 for o in obs):
            return bounds, obs, seed


def test_bounding_box_examples():
    b = bounding_box(PointCloud([[0, 0], [2, 1]], [0, 0]))
    assert np.allclose(b.vertices.min(0), [0, 0]) and np.allclose(b.vertices.max(0), [2, 1])
    b = bounding_box(PointCloud([[0, 0], [2, 1]], [0, 0]), 0.5)
    assert np.allclose(b.vertices.min(0), [-0.5, -0.5]) and np.allclose(b.vertices.max(0), [2.5, 1.5])
    with pytest.raises(EmptyCloud):
        bounding_box(PointCloud(np.zeros((0, 2)), [0, 0]))


@given(seeds)
def test_bounding_box_contains_cloud(seed):
    P = np.random.default_rng(seed).normal(size=(50, 3))
    assert np.all(bounding_box(P).contains_many(P, 1e-12))


def test_separating_single_point():
    hs = separating_hyperplanes([np.array([[1.0, 0.0]])], Ellipsoid.ball([0, 0], 1.0))
    assert len(hs) == 1 and np.allclose(hs[0].normal, [1, 0]) and hs[0].offset == pytest.approx(1)


def test_separating_symmetric_points():
    hs = separating_hyperplanes([np.array([[2.0, 0.0]]), np.array([[-2.0, 0.0]])],
                                Ellipsoid.ball([0, 0], 1.0))
    got = sorted((tuple(np.round(h.normal, 12)), round(h.offset, 12)) for h in hs)
    assert got == [((-1.0, 0.0), 2.0), ((1.0, 0.0), 2.0)]


def test_separating_segments_as_obstacles():
    hs = separating_hyperplanes([], Ellipsoid.ball([0, 0], 1.0), segments=[[[1, -1], [1, 1]]])
    assert len(hs) == 1 and np.allclose(hs[0].normal, [1, 0]) and hs[0].offset == pytest.approx(1)


@given(seeds)
def test_separating_soundness(seed):
    rng = np.random.default_rng(seed)
    _, obs, s = random_scene(rng)
    hs = separating_hyperplanes(obs, Ellipsoid.ball(s, 0.05))
    for o in obs:
        assert any(np.all(o.vertices @ h.normal >= h.offset - geo.TOL_GEOM) for h in hs)
        viol = np.any([o.vertices @ h.normal >= h.offset - geo.TOL_GEOM for h in hs], axis=0)
        assert np.all(viol)


def test_inflate_no_obstacles_is_bounds():
    bounds = geo.box([0, 0], [4, 2])
    region, E = inflate_region([], [1, 1], bounds)
    assert np.allclose(region.vertices.min(0), [0, 0]) and np.allclose(region.vertices.max(0), [4, 2])
    ref = max_volume_ellipsoid(bounds)
    assert np.allclose(E.C, ref.C, atol=1e-9) and np.allclose(E.semi_axes, [1, 2], rtol=1e-6)


def test_inflate_square_room():
    walls = [geo.box([0, 0], [6, 0.1]), geo.box([0, 5.9], [6, 6]),
             geo.box([0, 0], [0.1, 6]), geo.box([5.9, 0], [6, 6])]
    region, _ = inflate_region(walls, [3, 3], geo.box([-1, -1], [7, 7]))
    assert np.all(region.vertices >= 0.1 - 1e-7) and np.all(region.vertices <= 5.9 + 1e-7)
    for w in walls:
        assert not np.any(region.contains_many(w.vertices, -geo.TOL_GEOM))


def test_inflate_parallel_walls():
    walls = [geo.box([0, -0.2], [10, 0]), geo.box([0, 2], [10, 2.2])]
    _, E = inflate_region(walls, [5, 1], geo.box([-1, -1], [11, 3]))
    assert E.semi_axes[0] <= 1 + 1e-6


def test_inflate_seed_errors():
    with pytest.raises(SeedOutsideBounds):
        inflate_region([], [5, 5], geo.box([0, 0], [1, 1]))
    with pytest.raises(SeedInObstacle):
        inflate_region([geo.box([0, 0], [1, 1])], [0.5, 0.5], geo.box([-1, -1], [2, 2]))


@given(seeds)
def test_inflate_soundness_and_monotone(seed):
    rng = np.random.default_rng(seed)
    bounds, obs, s = random_scene(rng)
    tr = inflate_region_trace(obs, s, bounds, IrisConfig())
    dets = tr.dets
    assert all(b >= a - 1e-9 for a, b in zip(dets, dets[1:]))
    for region in tr.regions:
        for o in obs:
            assert not np.any(region.contains_many(o.vertices, -geo.TOL_GEOM))
        assert np.all(bounds.contains_many(region.vertices, geo.TOL_GEOM))
    assert tr.regions[0].contains(s)
