"""The union of free polytopes and the rule for adding new ones."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .geometry import Polytope


@dataclass
class AddCriteriaConfig:
    min_new_volume: float = 0.1
    min_new_fraction: float = 0.25
    mc_samples: int = 10_000
    seed: int = 0
    # Slices are pushed this far back into the overlap so that a sliced piece
    # still shares a strip of positive volume with the polytope it was cut
    # against.  0 reproduces the bare slice.
    slice_overlap: float = 0.0

    def __post_init__(self):
        if self.mc_samples < 1000:
            raise ValueError("mc_samples must be at least 1000")
        if self.min_new_volume < 0 or not 0 <= self.min_new_fraction <= 1:
            raise ValueError("invalid add criteria thresholds")
        if self.slice_overlap < 0:
            raise ValueError("slice_overlap must be nonnegative")


class FreeSpace:
    """Ordered collection of free polytopes with stable string ids ("0", "1", ...)."""

    def __init__(self, robot_radius: float = 0.0, polytopes=None):
        self.robot_radius = float(robot_radius)
        self.polytopes: list[Polytope] = []
        self._next = 0
        for p in polytopes or []:
            self.add(p, keep_id=True)

    def __len__(self) -> int:
        return len(self.polytopes)

    def __iter__(self):
        return iter(self.polytopes)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.polytopes]

    def get(self, pid) -> Polytope:
        for p in self.polytopes:
            if p.id == str(pid):
                return p
        raise KeyError(pid)

    def add(self, p: Polytope, keep_id: bool = False) -> Polytope:
        if keep_id and p.id is not None:
            pid = str(p.id)
            if pid in self.ids:
                raise ValueError(f"duplicate polytope id {pid}")
            if pid.isdigit():
                self._next = max(self._next, int(pid) + 1)
        else:
            pid = str(self._next)
            self._next += 1
        q = p.with_id(pid)
        self.polytopes.append(q)
        return q

    def containing(self, x, tol: float = geo.TOL_GEOM) -> list[str]:
        ids = [p.id for p in self.polytopes if p.contains(x, tol)]
        return sorted(ids, key=geo.id_key)

    def contains(self, x, tol: float = geo.TOL_GEOM) -> bool:
        return any(p.contains(x, tol) for p in self.polytopes)

    def covered(self, X, tol: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(X)
        if len(X) == 0 or not self.polytopes:
            return np.zeros(len(X), dtype=bool)
        # sort by the first coordinate so each polytope only scans its own x-range
        order = np.argsort(X[:, 0], kind="stable")
        Xs = X[order]
        hit = np.zeros(len(X), dtype=bool)
        pad = tol + 1e-9
        boxes = np.array([p.bbox for p in self.polytopes])
        near = np.all((boxes[:, 0] <= X.max(axis=0) + pad) & (boxes[:, 1] >= X.min(axis=0) - pad), axis=1)
        for k in np.flatnonzero(near):
            p = self.polytopes[k]
            lo, hi = p.bbox
            i0 = np.searchsorted(Xs[:, 0], lo[0] - pad, "left")
            i1 = np.searchsorted(Xs[:, 0], hi[0] + pad, "right")
            if i0 >= i1:
                continue
            sub = Xs[i0:i1]
            m = ~hit[i0:i1] & np.all((sub[:, 1:] >= lo[1:] - pad) & (sub[:, 1:] <= hi[1:] + pad), axis=1)
            if m.any():
                idx = np.flatnonzero(m) + i0
                hit[idx] = p.contains_many(Xs[idx], tol)
        out = np.empty_like(hit)
        out[order] = hit
        return out

    def copy(self) -> "FreeSpace":
        fs = FreeSpace(self.robot_radius)
        fs.polytopes = list(self.polytopes)
        fs._next = self._next
        return fs

    def to_dict(self) -> dict:
        return {"robot_radius": self.robot_radius, "polytopes": [p.to_dict() for p in self.polytopes]}

    @classmethod
    def from_dict(cls, data: dict) -> "FreeSpace":
        polys = [Polytope.from_dict(d) for d in data.get("polytopes", [])]
        return cls(float(data.get("robot_radius", 0.0)), polys)


def shrink_for_robot(p: Polytope, r: float) -> Polytope | None:
    """Erode by the robot radius so the robot center may sit anywhere inside."""
    return geo.shrink(p, r)


def locate(fs: FreeSpace, x) -> str | None:
    """Lowest id of a polytope containing ``x``, or None."""
    ids = fs.containing(x)
    return ids[0] if ids else None


def new_volume_fraction(p: Polytope, fs: FreeSpace, samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of vol(p minus fs) / vol(p)."""
    if len(fs) == 0:
        return 1.0
    X = geo.sample_uniform(p, samples, rng)
    return float(np.mean(~fs.covered(X)))


def add_criteria(fs: FreeSpace, p: Polytope, cfg: AddCriteriaConfig,
                 rng: np.random.Generator | None = None) -> bool:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if p.volume < cfg.min_new_volume:
        return False
    frac = new_volume_fraction(p, fs, cfg.mc_samples, rng)
    return frac >= cfg.min_new_fraction and frac * p.volume >= cfg.min_new_volume


@dataclass
class AddReport:
    candidates: list = field(default_factory=list)  # slicing halfspaces, in evaluation order
    inserted: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    whole: bool = False


def _boxes_overlap(p: Polytope, q: Polytope) -> bool:
    return bool(np.all(p.vertices.min(0) <= q.vertices.max(0)) and np.all(q.vertices.min(0) <= p.vertices.max(0)))


def add_new_poly_report(p: Polytope, fs: FreeSpace, cfg: AddCriteriaConfig | None = None) -> AddReport:
    """Insert ``p`` into ``fs`` (in place), sliced to reduce overlap.

    Candidate halfspaces come from the crossing vertices of ``p`` with every
    existing polytope it overlaps.  Each piece ``p & H`` passing the add
    criteria is inserted, evaluated against the free space as updated so far.
    When no piece qualifies, ``p`` itself is inserted if it qualifies.
    """
    cfg = cfg or AddCriteriaConfig()
    rng = np.random.default_rng(cfg.seed)
    report = AddReport()
    seen: set = set()
    for q in list(fs.polytopes):
        if not _boxes_overlap(p, q) or geo.intersect(p, q) is None:
            continue
        for h in geo.slicing_hyperplanes(p, q):
            key = geo.plane_key(h.normal, h.offset)
            if key not in seen:
                seen.add(key)
                report.candidates.append(h)
    for h in report.candidates:
        piece = geo.clip(p, h.normal, h.offset + cfg.slice_overlap * np.linalg.norm(h.normal))
        if piece is None:
            continue
        if add_criteria(fs, piece, cfg, rng):
            report.inserted.append(fs.add(piece))
        else:
            report.rejected.append(piece)
    if not report.inserted and add_criteria(fs, p, cfg, rng):
        report.inserted.append(fs.add(p))
        report.whole = True
    return report


def add_new_poly(p: Polytope, fs: FreeSpace, cfg: AddCriteriaConfig | None = None) -> FreeSpace:
    add_new_poly_report(p, fs, cfg)
    return fs
