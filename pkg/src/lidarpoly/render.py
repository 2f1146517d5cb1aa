"""SVG 1.1 pictures of free space, obstacles, graphs, clouds and trajectories.

Everything is drawn in the xy plane.  3D inputs are shown as an orthographic
top-down projection, which the title states.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import Polytope

STYLE = """
.bounds { fill: #ffffff; stroke: #333333; stroke-width: 1.5; }
.obstacle { fill: #555555; fill-opacity: 0.8; stroke: #222222; stroke-width: 0.5; }
.world { fill: #bbbbbb; stroke: none; }
.free { fill: #3c8dde; fill-opacity: 0.25; stroke: #1f5fa0; stroke-width: 0.8; }
.edge { fill: none; stroke: #d9480f; stroke-width: 1.2; }
.node { fill: #d9480f; }
.cloud { fill: #2b8a3e; }
.trajectory { fill: none; stroke: #862e9c; stroke-width: 1.2; }
.robot { fill: none; stroke: #862e9c; stroke-width: 1; }
"""


def _xy_outline(V: np.ndarray) -> np.ndarray:
    """Counter-clockwise outline of the xy shadow of a vertex set."""
    P = np.asarray(V, dtype=float)[:, :2]
    if len(P) < 3:
        return P
    try:
        h = ConvexHull(P)
    except QhullError:
        return P
    return P[h.vertices]


class _Canvas:
    def __init__(self, points: np.ndarray, width: float = 800.0, margin: float = 20.0):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            pts = np.array([[0.0, 0.0], [1.0, 1.0]])
        self.lo = pts.min(axis=0)
        span = np.maximum(pts.max(axis=0) - self.lo, 1e-9)
        self.scale = (width - 2 * margin) / max(span)
        self.margin = margin
        self.size = span * self.scale + 2 * margin
        self.parts: list[str] = []

    def xy(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))[:, :2]
        out = (P - self.lo) * self.scale + self.margin
        out[:, 1] = self.size[1] - out[:, 1]  # y up
        return out

    def _pts(self, P) -> str:
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in self.xy(P))

    def polygon(self, P, cls, ident=None):
        extra = f' id="{escape(str(ident))}"' if ident is not None else ""
        self.parts.append(f'<polygon class="{cls}"{extra} points="{self._pts(P)}"/>')

    def polyline(self, P, cls):
        self.parts.append(f'<polyline class="{cls}" points="{self._pts(P)}"/>')

    def circle(self, c, r_px, cls):
        x, y = self.xy(c)[0]
        self.parts.append(f'<circle class="{cls}" cx="{x:.2f}" cy="{y:.2f}" r="{r_px:.2f}"/>')

    def svg(self, title: str) -> str:
        w, h = self.size
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0f}" height="{h:.0f}" '
            f'viewBox="0 0 {w:.2f} {h:.2f}">\n'
            f"<title>{escape(title)}</title>\n<style>{STYLE}</style>\n"
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def render_svg(polytopes=(), obstacles=(), graph=None, cloud=None, trajectory=None,
               bounds: Polytope | None = None, world_obstacles=(), robot=None, title: str = "") -> str:
    """Compose one SVG document.

    ``graph`` edges are drawn centroid to cross point to centroid.  ``robot``
    is an optional ``(position, radius)`` pair.
    """
    polytopes, obstacles, world_obstacles = list(polytopes), list(obstacles), list(world_obstacles)
    dims = {p.dim for p in polytopes + obstacles + world_obstacles}
    if bounds is not None:
        dims.add(bounds.dim)
    if cloud is not None and len(cloud):
        dims.add(np.asarray(cloud).shape[1])
    if graph is not None:
        dims |= {len(c) for c in graph.nodes.values()}
    is3d = 3 in dims

    pts = [p.vertices[:, :2] for p in polytopes + obstacles + world_obstacles]
    if bounds is not None:
        pts.append(bounds.vertices[:, :2])
    if cloud is not None and len(cloud):
        pts.append(np.asarray(cloud)[:, :2])
    if trajectory is not None and len(trajectory):
        pts.append(np.asarray(trajectory)[:, :2])
    if graph is not None and graph.nodes:
        pts.append(np.array([c[:2] for c in graph.nodes.values()]))
    cv = _Canvas(np.concatenate(pts) if pts else np.zeros((0, 2)))

    if bounds is not None:
        cv.polygon(_xy_outline(bounds.vertices), "bounds")
    for o in world_obstacles:
        cv.polygon(_xy_outline(o.vertices), "world")
    for o in obstacles:
        cv.polygon(_xy_outline(o.vertices), "obstacle")
    for p in polytopes:
        cv.polygon(_xy_outline(p.vertices), "free", p.id)
    if cloud is not None and len(cloud):
        for c in np.asarray(cloud, dtype=float):
            cv.circle(c, 1.2, "cloud")
    if graph is not None:
        for (a, b), e in sorted(graph.edges.items()):
            cv.polyline(np.array([graph.nodes[a][:2], e.cross[:2], graph.nodes[b][:2]]), "edge")
        for n in sorted(graph.nodes):
            cv.circle(graph.nodes[n], 2.5, "node")
    if trajectory is not None and len(trajectory) > 1:
        cv.polyline(np.asarray(trajectory)[:, :2], "trajectory")
    if robot is not None:
        pos, rad = robot
        cv.circle(pos, max(rad * cv.scale, 1.5), "robot")

    if is3d:
        title = (title + " " if title else "") + "(3D input, orthographic top-down projection onto xy)"
    return cv.svg(title)
