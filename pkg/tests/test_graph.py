from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lidarpoly import geometry as geo
from lidarpoly.errors import NoOverlap, Unreachable
from lidarpoly.freespace import FreeSpace
from lidarpoly.graph import (Edge, TransitionGraph, edge_distance, edge_key, path_cost, shortest_path,
                             update_discrete_graph)
from oracles import floyd_warshall, random_polygon

seeds = st.integers(0, 2**32 - 1)


def test_edge_distance_examples():
    cross, dist = edge_distance(geo.box([0, 0], [2, 1]), geo.box([1, 0], [3, 1]))
    assert np.allclose(cross, [1.5, 0.5]) and dist == pytest.approx(1.0)
    p = geo.box([0, 0], [1, 1])
    assert edge_distance(p, p)[1] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NoOverlap):
        edge_distance(p, geo.box([1, 0], [2, 1]))


@given(seeds)
def test_edge_distance_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    p = geo.hull(random_polygon(rng))
    q = geo.hull(random_polygon(rng, center=rng.uniform(-0.3, 0.3, 2)))
    try:
        cross, dist = edge_distance(p, q)
    except NoOverlap:
        return
    assert dist >= np.linalg.norm(p.centroid - q.centroid) - 1e-12
    assert p.contains(cross, 0.0) and q.contains(cross, 0.0)


def test_update_examples():
    g = update_discrete_graph(FreeSpace(0, [geo.box([0, 0], [1, 1])]))
    assert len(g.nodes) == 1 and not g.edges
    fs = FreeSpace(0, [geo.box([0, 0], [2, 1]), geo.box([1.5, 0], [3.5, 1]), geo.box([3, 0], [5, 1])])
    g = update_discrete_graph(fs)
    assert sorted(g.edges) == [("0", "1"), ("1", "2")]


@given(seeds)
def test_update_matches_pairwise_and_incremental(seed):
    rng = np.random.default_rng(seed)
    polys = [geo.hull(random_polygon(rng, center=rng.uniform(0, 2, 2))) for _ in range(6)]
    fs = FreeSpace(0, [])
    g_inc = TransitionGraph()
    for p in polys:
        fs.add(p)
        before = set(g_inc.edges)
        g_inc = update_discrete_graph(fs, g_inc)
        assert before <= set(g_inc.edges)
    g = update_discrete_graph(fs)
    want = set()
    for i, p in enumerate(fs.polytopes):
        for q in fs.polytopes[i + 1:]:
            inter = geo.intersect(p, q)
            if inter is not None and inter.volume > 1e-9:
                want.add(edge_key(p.id, q.id))
    assert set(g.edges) == want == set(g_inc.edges)
    for (a, b), e in g.edges.items():
        pa, pb = fs.get(a), fs.get(b)
        assert pa.contains(pa.centroid, 0.0) and pa.contains(e.cross, 0.0)
        assert pb.contains(pb.centroid, 0.0) and pb.contains(e.cross, 0.0)
        assert e.distance == pytest.approx(np.linalg.norm(pa.centroid - e.cross)
                                           + np.linalg.norm(pb.centroid - e.cross), abs=1e-9)


def graph_from(weights):
    g = TransitionGraph()
    names = sorted({n for a, b, _ in weights for n in (a, b)}, key=geo.id_key)
    for n in names:
        g.nodes[n] = np.zeros(2)
    for a, b, w in weights:
        k = edge_key(a, b)
        g.edges[k] = Edge(*k, np.zeros(2), float(w))
    return g


def test_shortest_path_examples():
    g = graph_from([("0", "1", 1), ("1", "2", 1), ("0", "2", 3)])
    assert shortest_path(g, "0", "0") == ["0"]
    assert shortest_path(g, "0", "2") == ["0", "1", "2"]
    assert path_cost(g, ["0", "1", "2"]) == 2
    g.nodes["9"] = np.zeros(2)
    with pytest.raises(Unreachable):
        shortest_path(g, "0", "9")


def random_graph(rng, n):
    w = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.35:
                # dyadic weights are exact in floating point, so sums are too
                w.append((str(i), str(j), int(rng.integers(1, 64)) / 8))
    return w


def test_shortest_path_floyd_warshall():
    rng = np.random.default_rng(77)
    for _ in range(100):
        n = int(rng.integers(2, 13))
        w = random_graph(rng, n)
        if not w:
            continue
        g = graph_from(w)
        D = floyd_warshall(list(g.nodes), w)
        for a in g.nodes:
            for b in g.nodes:
                if D[(a, b)] is None:
                    with pytest.raises(Unreachable):
                        shortest_path(g, a, b)
                else:
                    assert Fraction(path_cost(g, shortest_path(g, a, b))) == D[(a, b)]


@given(seeds)
def test_shortest_path_symmetric(seed):
    rng = np.random.default_rng(seed)
    w = random_graph(rng, 8)
    if not w:
        return
    g = graph_from(w)
    for a in g.nodes:
        for b in g.nodes:
            try:
                c1 = path_cost(g, shortest_path(g, a, b))
            except Unreachable:
                continue
            assert c1 == path_cost(g, shortest_path(g, b, a))


def test_json_roundtrip():
    fs = FreeSpace(0, [geo.box([0, 0], [2, 1]), geo.box([1, 0], [3, 1])])
    g = update_discrete_graph(fs)
    again = TransitionGraph.from_dict(g.to_dict())
    assert again.to_dict() == g.to_dict()
