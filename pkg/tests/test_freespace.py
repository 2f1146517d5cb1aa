import numpy as np
import pytest
from hypothesis import given, strategies as st

from lidarpoly import geometry as geo
from lidarpoly.freespace import (AddCriteriaConfig, FreeSpace, add_criteria, add_new_poly,
                                 add_new_poly_report, locate, new_volume_fraction, shrink_for_robot)
from lidarpoly.iris import inflate_region
from test_iris import random_scene

seeds = st.integers(0, 2**32 - 1)


def test_shrink_for_robot():
    q = shrink_for_robot(geo.box([0, 0], [1, 1]), 0.1)
    assert np.allclose(q.vertices.min(0), 0.1) and np.allclose(q.vertices.max(0), 0.9)
    assert shrink_for_robot(geo.box([0, 0], [0.15, 2]), 0.1) is None


def test_new_volume_fraction_examples():
    rng = np.random.default_rng(0)
    p = geo.box([0, 0], [2, 1])
    assert new_volume_fraction(p, FreeSpace(), 10_000, rng) == 1.0
    assert new_volume_fraction(geo.box([0.2, 0.2], [0.8, 0.8]), FreeSpace(0, [geo.box([0, 0], [1, 1])]),
                               10_000, rng) == 0.0
    f = new_volume_fraction(p, FreeSpace(0, [geo.box([1, 0], [3, 1])]), 10_000, rng)
    assert f == pytest.approx(0.5, abs=0.02)


def test_add_criteria_examples():
    cfg = AddCriteriaConfig()
    p = geo.box([0, 0], [1, 1])
    assert add_criteria(FreeSpace(), p, cfg)
    assert not add_criteria(FreeSpace(0, [p]), p, cfg)
    assert not add_criteria(FreeSpace(), geo.box([0, 0], [0.2, 0.2]), cfg)


def test_add_criteria_boundary_is_inclusive():
    fs = FreeSpace(0, [geo.box([0, 0], [1, 1])])
    p = geo.box([0.5, 0], [1.5, 1])
    base = AddCriteriaConfig(seed=4)
    frac = new_volume_fraction(p, fs, base.mc_samples, np.random.default_rng(base.seed))
    assert add_criteria(fs, p, AddCriteriaConfig(seed=4, min_new_fraction=frac))
    assert not add_criteria(fs, p, AddCriteriaConfig(seed=4, min_new_fraction=min(frac + 1e-9, 1.0)))


def test_add_new_poly_examples():
    fs = add_new_poly(geo.box([0, 0], [2, 2]), FreeSpace())
    assert fs.ids == ["0"]
    rep = add_new_poly_report(geo.box([1, 0], [3, 2]), fs)
    assert len(rep.inserted) == 1
    piece = rep.inserted[0]
    assert np.allclose(piece.vertices.min(0), [2, 0]) and np.allclose(piece.vertices.max(0), [3, 2])
    before = fs.to_dict()
    add_new_poly(geo.box([0.5, 0.5], [1.5, 1.5]), fs)
    assert fs.to_dict() == before


def test_locate():
    fs = FreeSpace(0, [geo.box([0, 0], [2, 2]), geo.box([1, 0], [3, 2])])
    assert locate(fs, [0.5, 1]) == "0"
    assert locate(fs, [2.5, 1]) == "1"
    assert locate(fs, [1.5, 1]) == "0"
    assert locate(fs, [5, 5]) is None


def test_json_roundtrip():
    fs = FreeSpace(0.2, [geo.box([0, 0], [2, 2]), geo.box([1, 0], [3, 2])])
    again = FreeSpace.from_dict(fs.to_dict())
    assert again.to_dict() == fs.to_dict() and again.robot_radius == 0.2


@given(seeds)
def test_soundness_and_conservation(seed):
    rng = np.random.default_rng(seed)
    bounds, obs, _ = random_scene(rng, n_obs=4)
    fs = FreeSpace(0.2)
    cfg = AddCriteriaConfig(mc_samples=2000, seed=seed % 997)
    for _ in range(4):
        s = rng.uniform(0.5, 9.5, 2)
        if any(o.slack(s) > -0.1 for o in obs):
            continue
        region, _ = inflate_region(obs, s, bounds)
        p = shrink_for_robot(region, 0.2)
        if p is None:
            continue
        old = fs.copy()
        rep = add_new_poly_report(p, fs, cfg)
        for q in rep.inserted:
            assert np.all(p.contains_many(q.vertices, 1e-7))
        # new space lost from p is bounded by what the rejected pieces carried
        X = geo.sample_uniform(p, 4000, rng)
        lost = np.mean(~old.covered(X) & ~fs.covered(X))
        allowed = sum(new_volume_fraction(r, old, 2000, rng) * r.volume for r in rep.rejected) / p.volume
        assert lost <= allowed + 3 * np.sqrt(0.25 / 4000)
    for q in fs:
        for o in obs:
            assert not np.any(q.contains_many(o.vertices, -geo.TOL_GEOM))


def test_determinism():
    def build():
        fs = FreeSpace()
        for lo in ([0, 0], [1, 0.5], [2.5, -0.5]):
            add_new_poly(geo.box(lo, np.add(lo, 2)), fs, AddCriteriaConfig(seed=3))
        return fs.to_dict()

    assert build() == build()
