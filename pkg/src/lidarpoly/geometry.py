"""Polytope kernel for d in {2, 3}.

Polytopes are kept in H-representation ``A x <= b`` together with a cached,
verified vertex list.  Vertex enumeration intersects every d-subset of facet
hyperplanes and keeps the feasible solutions; with d <= 3 that is cheap enough
to be exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import (
    DegenerateInput,
    EmptyIntersection,
    EmptySet,
    GeometryError,
    Unbounded,
)

TOL_GEOM = 1e-7
# Intersections with smaller volume are treated as empty.
VOL_TOL = 1e-12


def id_key(pid) -> tuple:
    """Sort key putting numeric ids in numeric order ("2" < "10")."""
    s = str(pid)
    return (0, int(s), s) if s.isdigit() else (1, 0, s)


@dataclass(frozen=True)
class Halfspace:
    """The set ``{x : normal . x <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.ndim != 1 or not np.linalg.norm(n) > 0:
            raise ValueError("halfspace normal must be a nonzero vector")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def contains(self, x, tol: float = TOL_GEOM) -> bool:
        return float(self.normal @ x) <= self.offset + tol * np.linalg.norm(self.normal)


@dataclass(frozen=True)
class VertexClassification:
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray


class Polytope:
    """Bounded, full-dimensional convex polytope.

    Construct through :func:`from_halfspaces` or :func:`hull`; the raw
    constructor trusts its arguments (used by JSON loading after validation).
    """

    def __init__(self, A, b, vertices, id=None):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.vertices = np.asarray(vertices, dtype=float)
        self.id = id

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def halfspaces(self) -> list[Halfspace]:
        return [Halfspace(a, o) for a, o in zip(self.A, self.b)]

    @cached_property
    def _normalized(self):
        nrm = np.linalg.norm(self.A, axis=1)
        return self.A / nrm[:, None], self.b / nrm

    def contains(self, x, tol: float = TOL_GEOM) -> bool:
        An, bn = self._normalized
        return bool(np.all(An @ np.asarray(x, dtype=float) <= bn + tol))

    def contains_many(self, X, tol: float = TOL_GEOM) -> np.ndarray:
        An, bn = self._normalized
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all(X @ An.T <= bn + tol, axis=1)

    @cached_property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def slack(self, x) -> float:
        """Largest signed distance of ``x`` past any facet (<= 0 inside)."""
        An, bn = self._normalized
        return float(np.max(An @ np.asarray(x, dtype=float) - bn))

    @cached_property
    def simplices(self) -> np.ndarray:
        return _fan_simplices(self.A, self.b, self.vertices)

    @cached_property
    def simplex_volumes(self) -> np.ndarray:
        return _simplex_volumes(self.simplices)

    @cached_property
    def volume(self) -> float:
        return float(self.simplex_volumes.sum())

    @cached_property
    def centroid(self) -> np.ndarray:
        w = self.simplex_volumes
        return (w[:, None] * self.simplices.mean(axis=1)).sum(axis=0) / w.sum()

    def with_id(self, pid) -> "Polytope":
        q = Polytope(self.A, self.b, self.vertices, pid)
        q.__dict__.update({k: v for k, v in self.__dict__.items() if k != "id"})
        return q

    def to_dict(self) -> dict:
        return {
            "id": None if self.id is None else str(self.id),
            "halfspaces": [
                {"normal": [float(v) + 0.0 for v in a], "offset": float(o) + 0.0}
                for a, o in zip(self.A, self.b)
            ],
            "vertices": [[float(v) + 0.0 for v in row] for row in self.vertices],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Polytope":
        try:
            hs = data["halfspaces"]
            A = np.array([h["normal"] for h in hs], dtype=float)
            b = np.array([h["offset"] for h in hs], dtype=float)
            V = np.array(data["vertices"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise GeometryError(f"malformed polytope record: {exc}") from exc
        if A.ndim != 2 or V.ndim != 2 or A.shape[1] != V.shape[1]:
            raise GeometryError("polytope record has inconsistent dimensions")
        p = cls(A, b, V, data.get("id"))
        validate(p)
        return p

    def __repr__(self) -> str:
        return f"Polytope(id={self.id!r}, d={self.dim}, m={len(self.b)}, nv={len(self.vertices)})"


# ----------------------------------------------------------------------------
# internals


def _normalize_rows(A, b):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] != b.shape[0]:
        raise ValueError("A and b have different row counts")
    nrm = np.linalg.norm(A, axis=1)
    if np.any(nrm <= 0):
        raise ValueError("zero halfspace normal")
    return A / nrm[:, None], b / nrm


def _unique_rows(An, bn, tol=1e-9) -> np.ndarray:
    """Indices of the first occurrence of each distinct normalized halfspace."""
    keep: list[int] = []
    for i in range(len(bn)):
        if keep:
            k = np.asarray(keep)
            same = (np.abs(An[k] - An[i]).max(axis=1) <= tol) & (np.abs(bn[k] - bn[i]) <= tol)
            if same.any():
                continue
        keep.append(i)
    return np.asarray(keep, dtype=int)


def _is_bounded(An: np.ndarray) -> bool:
    # {Ax <= b} is bounded iff the origin lies strictly inside conv(normals).
    d = An.shape[1]
    if len(An) < d + 1:
        return False
    try:
        h = ConvexHull(An)
    except (QhullError, ValueError):
        return False
    return bool(np.all(h.equations[:, -1] < -1e-12))


def _solve_combos(An, bn, combos):
    d = An.shape[1]
    N = An[combos]  # (k, d, d)
    rhs = bn[combos]  # (k, d)
    if d == 2:
        det = N[:, 0, 0] * N[:, 1, 1] - N[:, 0, 1] * N[:, 1, 0]
        ok = np.abs(det) > 1e-12
        N, rhs, det = N[ok], rhs[ok], det[ok]
        x = (rhs[:, 0] * N[:, 1, 1] - rhs[:, 1] * N[:, 0, 1]) / det
        y = (N[:, 0, 0] * rhs[:, 1] - N[:, 1, 0] * rhs[:, 0]) / det
        return np.stack([x, y], axis=1)
    c12 = np.cross(N[:, 1], N[:, 2])
    c20 = np.cross(N[:, 2], N[:, 0])
    c01 = np.cross(N[:, 0], N[:, 1])
    det = np.einsum("ij,ij->i", N[:, 0], c12)
    ok = np.abs(det) > 1e-12
    num = rhs[ok, 0, None] * c12[ok] + rhs[ok, 1, None] * c20[ok] + rhs[ok, 2, None] * c01[ok]
    return num / det[ok, None]


def _cluster(points: np.ndarray, tol: float) -> np.ndarray:
    """Merge points closer than ``tol``; returns lexicographically sorted representatives."""
    if len(points) == 0:
        return points
    order = np.lexsort(points.T[::-1])
    points = points[order]
    tree = cKDTree(points)
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(points))])
    reps = np.unique(roots)
    return points[reps]


def _tight_mask(An, bn, V, tol=TOL_GEOM) -> np.ndarray:
    """(m, k) boolean: vertex k lies on facet hyperplane m."""
    return np.abs(An @ V.T - bn[:, None]) <= tol


def _facet_rows(An, bn, V, tol=TOL_GEOM) -> np.ndarray:
    """Indices of rows that support a (d-1)-dimensional face of conv(V)."""
    d = An.shape[1]
    tight = _tight_mask(An, bn, V, tol)
    keep = []
    seen: list[frozenset] = []
    for i in range(len(bn)):
        idx = np.flatnonzero(tight[i])
        if len(idx) < d:
            continue
        if d == 3:
            # tight vertices must not be collinear
            P = V[idx] - V[idx[0]]
            far = P[np.argmax(np.einsum("ij,ij->i", P, P))]
            cr = P[:, [1, 2, 0]] * far[[2, 0, 1]] - P[:, [2, 0, 1]] * far[[1, 2, 0]]
            if np.sqrt(np.einsum("ij,ij->i", cr, cr).max()) <= 1e-9 * max(np.linalg.norm(far), 1.0):
                continue
        key = frozenset(idx.tolist())
        if key in seen:
            continue
        seen.append(key)
        keep.append(i)
    return np.asarray(keep, dtype=int)


def _fan_simplices(A, b, V) -> np.ndarray:
    """Simplices (S, d+1, d) of the fan from the vertex mean over facet triangulations."""
    An, bn = _normalize_rows(A, b)
    d = V.shape[1]
    center = V.mean(axis=0)
    tight = _tight_mask(An, bn, V)
    out = []
    for i in range(len(bn)):
        idx = np.flatnonzero(tight[i])
        if len(idx) < d:
            continue
        F = V[idx]
        if d == 2:
            t = np.array([-An[i, 1], An[i, 0]])
            F = F[np.argsort(F @ t)]
            for k in range(len(F) - 1):
                out.append([center, F[k], F[k + 1]])
        else:
            fc = F.mean(axis=0)
            n = An[i]
            u = F[0] - fc
            if np.linalg.norm(u) < 1e-15:
                continue
            u = u / np.linalg.norm(u)
            w = np.array([n[1] * u[2] - n[2] * u[1], n[2] * u[0] - n[0] * u[2], n[0] * u[1] - n[1] * u[0]])
            ang = np.arctan2((F - fc) @ w, (F - fc) @ u)
            F = F[np.argsort(ang)]
            for k in range(1, len(F) - 1):
                out.append([center, F[0], F[k], F[k + 1]])
    if not out:
        return np.zeros((0, d + 1, d))
    return np.asarray(out)


def _simplex_volumes(S: np.ndarray) -> np.ndarray:
    if len(S) == 0:
        return np.zeros(0)
    d = S.shape[2]
    M = S[:, 1:, :] - S[:, :1, :]
    return np.abs(np.linalg.det(M)) / (2.0 if d == 2 else 6.0)


def _finalize(A, b, V, pid=None) -> Polytope:
    """Prune redundant rows against the vertex set and build a Polytope."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = A.shape[1]
    if len(V) < d + 1:
        raise DegenerateInput("fewer than d+1 vertices")
    An, bn = _normalize_rows(A, b)
    rows = _facet_rows(An, bn, V)
    if len(rows) < d + 1:
        raise DegenerateInput("polytope has no interior")
    A, b = A[rows], b[rows]
    tight = _tight_mask(An[rows], bn[rows], V)
    V = V[tight.sum(axis=0) >= d]
    p = Polytope(A, b, V, pid)
    if len(V) < d + 1 or p.volume <= VOL_TOL:
        raise DegenerateInput("polytope has zero volume")
    return p


# ----------------------------------------------------------------------------
# public operations


def vertices_of(A, b) -> np.ndarray:
    """Vertices of ``{x : A x <= b}`` (rows of the returned array, lexicographic order).

    Raises Unbounded if a recession direction exists and EmptySet if infeasible.
    """
    An, bn = _normalize_rows(A, b)
    d = An.shape[1]
    if d not in (2, 3):
        raise ValueError(f"only d in (2, 3) supported, got {d}")
    keep = _unique_rows(An, bn)
    An, bn = An[keep], bn[keep]
    if not _is_bounded(An):
        raise Unbounded("halfspaces admit a recession direction")
    combos = np.array(list(itertools.combinations(range(len(bn)), d)), dtype=int)
    X = _solve_combos(An, bn, combos)
    if len(X):
        X = X[np.all(X @ An.T <= bn + TOL_GEOM, axis=1)]
    if len(X) == 0:
        raise EmptySet("halfspaces have empty intersection")
    return _cluster(X, TOL_GEOM)


def from_halfspaces(A, b, pid=None) -> Polytope:
    """Polytope from H-representation; redundant rows dropped."""
    V = vertices_of(A, b)
    return _finalize(A, b, V, pid)


def box(lo, hi, pid=None) -> Polytope:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = len(lo)
    A = np.vstack([np.eye(d), -np.eye(d)])
    b = np.concatenate([hi, -lo])
    return from_halfspaces(A, b, pid)


def hull(points, pid=None) -> Polytope:
    """Convex hull of at least d+1 affinely independent points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts.shape[1]
    if d not in (2, 3):
        raise ValueError(f"only d in (2, 3) supported, got {d}")
    if len(pts) < d + 1:
        raise DegenerateInput("need at least d+1 points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite coordinates")
    try:
        h = ConvexHull(pts)
    except (QhullError, ValueError) as exc:
        raise DegenerateInput("points are affinely dependent") from exc
    if h.volume <= VOL_TOL:
        raise DegenerateInput("hull has zero volume")
    A = h.equations[:, :d]
    b = -h.equations[:, d]
    An, bn = _normalize_rows(A, b)
    keep = _unique_rows(An, bn, tol=1e-10)
    V = pts[np.sort(h.vertices)]
    V = V[np.lexsort(V.T[::-1])]
    return _finalize(An[keep], bn[keep], V, pid)


def intersect(p1: Polytope, p2: Polytope) -> Polytope | None:
    """Intersection, or None when it is empty or has zero volume."""
    return clip(p1, p2.A, p2.b)


def clip(p: Polytope, A, b) -> Polytope | None:
    """``p`` intersected with extra halfspaces; None if empty or flat."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    A2 = np.vstack([p.A, A])
    b2 = np.concatenate([p.b, b])
    try:
        if len(b) == 1:
            return _clip_one(p, A2, b2)
        return from_halfspaces(A2, b2)
    except (EmptySet, DegenerateInput):
        return None


def _clip_one(p: Polytope, A2, b2) -> Polytope:
    """Single-halfspace clip: kept vertices plus the cut points of crossing edges."""
    a, o = A2[-1], b2[-1]
    nrm = np.linalg.norm(a)
    if nrm <= 0:
        raise ValueError("zero halfspace normal")
    V = p.vertices
    s = (V @ a - o) / nrm
    if np.all(s <= TOL_GEOM):
        return _finalize(A2, b2, V)
    inside = s < -TOL_GEOM
    if not inside.any():
        raise EmptySet("clip leaves no interior")
    outside = s > TOL_GEOM
    An, bn = p._normalized
    tight = _tight_mask(An, bn, V)
    i_in, i_out = np.flatnonzero(inside), np.flatnonzero(outside)
    # vertex pairs sharing d-1 facets are edges
    shared = tight[:, i_in].T.astype(int) @ tight[:, i_out].astype(int)
    ii, jj = np.nonzero(shared >= p.dim - 1)
    vi, vj = V[i_in[ii]], V[i_out[jj]]
    si, sj = s[i_in[ii]], s[i_out[jj]]
    cut = vi + (si / (si - sj))[:, None] * (vj - vi)
    W = np.vstack([V[s <= TOL_GEOM], cut])
    return _finalize(A2, b2, _cluster(W, TOL_GEOM))


def shrink_halfspaces(A, b, r: float):
    """Row-wise Minkowski difference with a ball: ``b_i - r * ||A_i||``."""
    A = np.asarray(A, dtype=float)
    return A.copy(), np.asarray(b, dtype=float) - r * np.linalg.norm(A, axis=1)


def shrink(p: Polytope, r: float) -> Polytope | None:
    """Erode ``p`` by a ball of radius ``r``; None if nothing of volume remains."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0:
        return p
    A, b = shrink_halfspaces(p.A, p.b, r)
    try:
        return from_halfspaces(A, b, p.id)
    except (EmptySet, DegenerateInput):
        return None


def centroid(p: Polytope) -> np.ndarray:
    return p.centroid.copy()


def volume(p: Polytope) -> float:
    return p.volume


def sample_uniform(p: Polytope, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniformly distributed in ``p``."""
    S = p.simplices
    w = p.simplex_volumes
    pick = rng.choice(len(S), size=n, p=w / w.sum())
    bary = rng.dirichlet(np.ones(S.shape[1]), size=n)
    return np.einsum("nk,nkd->nd", bary, S[pick])


def project_point(target, onto: Polytope | Sequence[Polytope]) -> np.ndarray:
    """Euclidean projection onto a polytope or a union of polytopes.

    For a union the closest per-polytope projection wins; ties go to the
    lowest id (list order when ids are absent).
    """
    from .solvers import qp_project

    x = np.asarray(target, dtype=float)
    if isinstance(onto, Polytope):
        return qp_project(x, onto.A, onto.b)
    polys = list(onto)
    if not polys:
        raise EmptySet("cannot project onto an empty union")
    # the largest facet violation is a lower bound on the distance
    lb = [max(p.slack(x), 0.0) for p in polys]
    order = sorted(range(len(polys)), key=lambda i: (lb[i], polys[i].id is None, id_key(polys[i].id), i))
    best, best_key = None, None
    for i in order:
        if best_key is not None and lb[i] > best_key[0]:
            break
        p = polys[i]
        if lb[i] == 0.0 and p.contains(x, tol=0.0):
            y, dist = x.copy(), 0.0
        else:
            y = qp_project(x, p.A, p.b)
            dist = float(np.linalg.norm(y - x))
        key = (dist, p.id is None, id_key(p.id), i)
        if best_key is None or key < best_key:
            best, best_key = y, key
    return best


def _match(points: np.ndarray, ref: np.ndarray, tol: float) -> np.ndarray:
    """Mask of rows of ``points`` within ``tol`` of some row of ``ref``."""
    if len(points) == 0 or len(ref) == 0:
        return np.zeros(len(points), dtype=bool)
    d = np.linalg.norm(points[:, None, :] - ref[None, :, :], axis=2)
    return d.min(axis=1) <= tol


def classify_intersection_vertices(p1: Polytope, p2: Polytope) -> VertexClassification:
    """Split vertices of p1 & p2 into: interior to p2, interior to p1, on both boundaries."""
    inter = intersect(p1, p2)
    if inter is None:
        raise EmptyIntersection("polytopes do not overlap with positive volume")
    V = inter.vertices
    An1, bn1 = p1._normalized
    An2, bn2 = p2._normalized
    s1 = (V @ An1.T - bn1).max(axis=1)
    s2 = (V @ An2.T - bn2).max(axis=1)
    in1 = s1 < -TOL_GEOM
    in2 = s2 < -TOL_GEOM
    v1 = V[in2 & ~in1]
    v2 = V[in1 & ~in2]
    v3 = V[~in1 & ~in2]
    return VertexClassification(v1, v2, v3)


def conv_difference(p1: Polytope, p2: Polytope) -> Polytope:
    """Convex hull of ``p1 \\ p2`` from the vertex classification."""
    cls = classify_intersection_vertices(p1, p2)
    kept = p1.vertices[~_match(p1.vertices, cls.v1, TOL_GEOM * 10)]
    return hull(np.vstack([kept, cls.v3]))


def _plane_through(P: np.ndarray):
    d = P.shape[1]
    if d == 2:
        t = P[1] - P[0]
        n = np.array([-t[1], t[0]])
    else:
        n = np.cross(P[1] - P[0], P[2] - P[0])
    nn = np.linalg.norm(n)
    scale = max(np.linalg.norm(P - P[0], axis=1).max(), 1.0)
    if nn <= 1e-9 * scale ** (d - 1):
        return None
    n = n / nn
    return n, float(n @ P[0])


def plane_key(n, o, digits: int = 9) -> tuple:
    """Hashable identity of a unit-normal hyperplane, for deduplication."""
    return tuple(np.round(np.append(n, o), digits) + 0.0)


# Above this many d-subsets only the hull facets of the crossing vertices are used.
MAX_SLICE_COMBOS = 256


def _candidate_planes(V3: np.ndarray):
    n, d = V3.shape
    if math.comb(n, d) <= MAX_SLICE_COMBOS:
        for combo in itertools.combinations(range(n), d):
            plane = _plane_through(V3[list(combo)])
            if plane is not None:
                yield plane
        return
    try:
        eq = ConvexHull(V3).equations
    except (QhullError, ValueError):
        # coplanar crossing set: the plane that holds all of it
        ctr = V3.mean(axis=0)
        nrm = np.linalg.svd(V3 - ctr)[2][-1]
        yield nrm, float(nrm @ ctr)
        return
    for row in np.unique(np.round(eq, 9), axis=0):
        yield row[:d], float(-row[d])


def slicing_hyperplanes(p_new: Polytope, p_existing: Polytope) -> list[Halfspace]:
    """Halfspaces through d-subsets of the crossing vertices, facing away from the overlap.

    Each returned halfspace excludes the centroid of the overlap; hyperplanes
    through that centroid are skipped because they have no preferred side.
    """
    cls = classify_intersection_vertices(p_new, p_existing)
    V3 = cls.v3
    d = p_new.dim
    if len(V3) < d:
        return []
    c = intersect(p_new, p_existing).centroid
    out: list[Halfspace] = []
    seen: set = set()
    for n, o in _candidate_planes(V3):
        s = float(n @ c - o)
        if abs(s) <= TOL_GEOM:
            continue
        if s < 0:
            n, o = -n, -o
        key = plane_key(n, o)
        if key in seen:
            continue
        seen.add(key)
        out.append(Halfspace(n, o))
    return out


def validate(p: Polytope, tol: float = TOL_GEOM) -> None:
    """Raise GeometryError unless ``p`` satisfies the stored-polytope invariants."""
    d = p.dim
    if d not in (2, 3):
        raise GeometryError("dimension must be 2 or 3")
    if not (np.all(np.isfinite(p.A)) and np.all(np.isfinite(p.b)) and np.all(np.isfinite(p.vertices))):
        raise GeometryError("non-finite entries")
    if len(p.vertices) < d + 1:
        raise GeometryError("fewer than d+1 vertices")
    An, bn = _normalize_rows(p.A, p.b)
    if np.any(p.vertices @ An.T - bn > tol):
        raise GeometryError("vertex violates a halfspace")
    if np.any(_tight_mask(An, bn, p.vertices, tol).sum(axis=0) < d):
        raise GeometryError("vertex tight on fewer than d halfspaces")


def range_polytope(center, radius: float, d: int, sides: int = 16) -> Polytope:
    """Polytope inscribed in the ball ``B(center, radius)``."""
    c = np.asarray(center, dtype=float)
    if d == 2:
        t = 2 * np.pi * (np.arange(sides) + 0.5) / sides
        pts = np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        # Fibonacci sphere
        k = np.arange(sides) + 0.5
        phi = np.arccos(1 - 2 * k / sides)
        th = np.pi * (1 + 5 ** 0.5) * k
        pts = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    return hull(c + radius * pts)


def polytopes_to_json(polys: Iterable[Polytope]) -> list[dict]:
    return [p.to_dict() for p in polys]
