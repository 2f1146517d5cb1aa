"""Occupancy grid used to find exploration frontiers."""
from __future__ import annotations

import numpy as np

UNKNOWN, FREE, OCCUPIED = 0, 1, 2


class ExplorationGrid:
    """Axis-aligned grid over the bounding box of the world bounds.

    Cells whose centers fall outside the bounds polytope start out occupied so
    they never show up as frontier.
    """

    def __init__(self, bounds, cell_size: float = 0.25):
        self.cell_size = float(cell_size)
        V = bounds.vertices
        self.lo = V.min(axis=0)
        span = V.max(axis=0) - self.lo
        self.shape = tuple(int(s) for s in np.maximum(np.ceil(span / cell_size - 1e-9), 1))
        self.cells = np.full(self.shape, UNKNOWN, dtype=np.int8)
        outside = ~bounds.contains_many(self.centers().reshape(-1, len(self.shape)), tol=0.0)
        self.cells[outside.reshape(self.shape)] = OCCUPIED

    @property
    def dim(self) -> int:
        return len(self.shape)

    def centers(self) -> np.ndarray:
        axes = [self.lo[i] + (np.arange(n) + 0.5) * self.cell_size for i, n in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def center(self, idx) -> np.ndarray:
        return self.lo + (np.asarray(idx, dtype=float) + 0.5) * self.cell_size

    def index(self, X) -> np.ndarray:
        idx = np.floor((np.atleast_2d(X) - self.lo) / self.cell_size).astype(int)
        return np.clip(idx, 0, np.asarray(self.shape) - 1)

    def update(self, rays) -> np.ndarray:
        """Mark traversed cells free and hit cells occupied; returns this scan's free mask."""
        step = self.cell_size / 3.0
        seen = np.zeros(self.shape, dtype=bool)
        ns = (rays.lengths / step).astype(int)
        if ns.sum() > 0:
            ray = np.repeat(np.arange(len(ns)), ns)
            starts = np.repeat(np.cumsum(ns) - ns, ns)
            ts = (np.arange(ns.sum()) - starts) * step
            idx = self.index(rays.origin + ts[:, None] * rays.directions[ray])
            seen[tuple(idx.T)] = True
        free_now = seen & (self.cells != OCCUPIED)
        self.cells[free_now] = FREE
        if len(rays.points):
            hit = self.index(rays.points)
            self.cells[tuple(hit.T)] = OCCUPIED
        return free_now & (self.cells == FREE)

    def line_clear(self, a, b) -> bool:
        """Every cell on the straight segment from ``a`` to ``b`` is known free."""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        n = max(int(np.linalg.norm(b - a) / (self.cell_size / 3.0)), 1)
        X = a + np.linspace(0.0, 1.0, n + 1)[:, None] * (b - a)
        return bool(np.all(self.cells[tuple(self.index(X).T)] == FREE))

    def frontier_mask(self) -> np.ndarray:
        """Free cells with at least one unknown face-neighbor."""
        free = self.cells == FREE
        unk = self.cells == UNKNOWN
        adj = np.zeros_like(free)
        for ax in range(self.dim):
            for sh in (1, -1):
                rolled = np.roll(unk, sh, axis=ax)
                edge = [slice(None)] * self.dim
                edge[ax] = 0 if sh == 1 else -1
                rolled[tuple(edge)] = False
                adj |= rolled
        return free & adj

    def frontier_cells(self) -> np.ndarray:
        return np.argwhere(self.frontier_mask())

    def known_fraction(self) -> float:
        return float(np.mean(self.cells != UNKNOWN))

    def to_pgm(self) -> bytes:
        """Binary PGM (P5); 3D grids are collapsed top-down."""
        c = self.cells
        if c.ndim == 3:
            occ = (c == OCCUPIED).any(axis=2)
            free = (c == FREE).any(axis=2)
            c = np.where(occ, OCCUPIED, np.where(free, FREE, UNKNOWN))
        # image rows run top to bottom = decreasing y
        img = np.full(c.shape, 128, dtype=np.uint8)
        img[c == FREE] = 255
        img[c == OCCUPIED] = 0
        img = img.T[::-1]
        h, w = img.shape
        return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()
