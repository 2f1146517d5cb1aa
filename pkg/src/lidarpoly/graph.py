"""Transition graph over free polytopes.

Nodes are polytopes (keyed by id, storing the centroid); an edge joins two
polytopes whose intersection has positive volume and stores the centroid of
that intersection together with the centroid-to-centroid path length through
it.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import NoOverlap, Unreachable
from .geometry import Polytope

EDGE_VOL_TOL = 1e-9


@dataclass
class Edge:
    a: str
    b: str
    cross: np.ndarray
    distance: float


@dataclass
class TransitionGraph:
    nodes: dict = field(default_factory=dict)  # id -> centroid
    edges: dict = field(default_factory=dict)  # (id, id) sorted by id_key -> Edge

    def neighbors(self, pid) -> list[str]:
        out = []
        for (a, b) in self.edges:
            if a == pid:
                out.append(b)
            elif b == pid:
                out.append(a)
        return sorted(out, key=geo.id_key)

    def edge(self, a, b) -> Edge:
        return self.edges[edge_key(a, b)]

    def components(self) -> list[set]:
        seen: set = set()
        comps = []
        adj = {n: [] for n in self.nodes}
        for (a, b) in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for n in sorted(self.nodes, key=geo.id_key):
            if n in seen:
                continue
            comp = {n}
            stack = [n]
            while stack:
                u = stack.pop()
                for v in adj[u]:
                    if v not in comp:
                        comp.add(v)
                        stack.append(v)
            seen |= comp
            comps.append(comp)
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n, "centroid": [float(v) + 0.0 for v in self.nodes[n]]}
                for n in sorted(self.nodes, key=geo.id_key)
            ],
            "edges": [
                {"a": e.a, "b": e.b, "cross": [float(v) + 0.0 for v in e.cross], "distance": float(e.distance)}
                for _, e in sorted(self.edges.items(), key=lambda kv: (geo.id_key(kv[0][0]), geo.id_key(kv[0][1])))
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransitionGraph":
        g = cls()
        for n in data.get("nodes", []):
            g.nodes[str(n["id"])] = np.asarray(n["centroid"], dtype=float)
        for e in data.get("edges", []):
            a, b = str(e["a"]), str(e["b"])
            g.edges[edge_key(a, b)] = Edge(*edge_key(a, b), np.asarray(e["cross"], dtype=float), float(e["distance"]))
        return g


def edge_key(a, b) -> tuple[str, str]:
    a, b = str(a), str(b)
    return (a, b) if geo.id_key(a) <= geo.id_key(b) else (b, a)


def edge_distance(p1: Polytope, p2: Polytope):
    """(cross point, distance) for two overlapping polytopes."""
    inter = geo.intersect(p1, p2)
    if inter is None or inter.volume <= EDGE_VOL_TOL:
        raise NoOverlap("polytopes do not overlap with positive volume")
    cross = inter.centroid
    dist = float(np.linalg.norm(p1.centroid - cross) + np.linalg.norm(p2.centroid - cross))
    return cross, dist


def _try_edge(p: Polytope, q: Polytope):
    if np.any(p.vertices.min(0) > q.vertices.max(0)) or np.any(q.vertices.min(0) > p.vertices.max(0)):
        return None
    try:
        return edge_distance(p, q)
    except NoOverlap:
        return None


def update_discrete_graph(fs, graph: TransitionGraph | None = None) -> TransitionGraph:
    """Full rebuild (``graph`` None) or incremental update with new polytopes of ``fs``."""
    g = TransitionGraph() if graph is None else graph
    polys = {p.id: p for p in fs.polytopes}
    new = [pid for pid in sorted(polys, key=geo.id_key) if pid not in g.nodes]
    for pid in new:
        p = polys[pid]
        for qid in sorted(g.nodes, key=geo.id_key):
            res = _try_edge(p, polys[qid])
            if res is not None:
                a, b = edge_key(pid, qid)
                g.edges[(a, b)] = Edge(a, b, res[0], res[1])
        g.nodes[pid] = p.centroid.copy()
    return g


def shortest_path(g: TransitionGraph, from_id, to_id) -> list[str]:
    """Minimum-distance node sequence; ties go to the lexicographically smallest id sequence."""
    paths = shortest_paths_multi(g, [from_id], [to_id])
    return paths[1]


def path_cost(g: TransitionGraph, path) -> float:
    return float(sum(g.edge(a, b).distance for a, b in zip(path, path[1:])))


def shortest_paths_multi(g: TransitionGraph, sources, targets):
    """Best (cost, path) from any source to any target."""
    sources = [str(s) for s in sources]
    targets = {str(t) for t in targets}
    for n in list(sources) + list(targets):
        if n not in g.nodes:
            raise KeyError(n)
    adj: dict = {n: [] for n in g.nodes}
    for (a, b), e in g.edges.items():
        adj[a].append((b, e.distance))
        adj[b].append((a, e.distance))
    heap = [(0.0, tuple(geo.id_key(s) for s in [src]), (src,)) for src in sources]
    heapq.heapify(heap)
    done = set()
    while heap:
        cost, _, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u in targets:
            return cost, list(path)
        for v, w in adj[u]:
            if v not in done:
                np_ = path + (v,)
                heapq.heappush(heap, (cost + w, tuple(geo.id_key(x) for x in np_), np_))
    raise Unreachable(f"no path from {sources} to {sorted(targets)}")
