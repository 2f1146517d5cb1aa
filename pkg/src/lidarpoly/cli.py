"""Command line entry point: ``lidarpoly {discretize,explore,plan,render}``.

Exit codes: 0 success, 1 usage, 2 bad input data, 3 infeasible request.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import errors
from .explore import generate_x_next, run_exploration, update_free_space_report
from .freespace import FreeSpace
from .geometry import Polytope
from .graph import TransitionGraph, update_discrete_graph
from .io import (RunConfig, dump_json, load_config, read_cloud, read_json, read_trajectory_csv,
                 trajectory_csv, write_json)
from .render import render_svg
from .world import WorldModel, bundled_world, bundled_world_names, load_world

log = logging.getLogger("lidarpoly")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

INFEASIBLE = (errors.Unreachable, errors.EmptySet, errors.EmptyIntersection, errors.Infeasible,
              errors.SeedInObstacle, errors.SeedOutsideBounds, errors.InitialClearanceViolation,
              errors.PoseInObstacle, errors.NoOverlap, errors.EmptyCloud)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _point(text: str) -> np.ndarray:
    try:
        v = np.array([float(s) for s in text.replace(" ", "").split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y[,z], got {text!r}")
    if len(v) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected 2 or 3 coordinates, got {len(v)}")
    return v


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.robot_radius is not None:
        if args.robot_radius < 0:
            raise UsageError("--robot-radius must be nonnegative")
        cfg = replace(cfg, explore=replace(cfg.explore, robot_radius=args.robot_radius))
    if getattr(args, "budget", None) is not None:
        if args.budget < 0:
            raise UsageError("--budget must be nonnegative")
        cfg = replace(cfg, budget=args.budget)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=args.out_dir)
    return cfg.with_seed(args.seed if args.seed is not None else cfg.seed)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_discretize(args) -> int:
    cfg = _config(args)
    cloud = read_cloud(args.cloud, args.origin)
    out = _out_dir(cfg)
    fs = FreeSpace(cfg.explore.robot_radius)
    obstacles = []
    if len(cloud):
        rep = update_free_space_report(cloud.origin, cloud, fs, cfg.explore)
        if rep.obstacle_set is not None:
            obstacles = rep.obstacle_set.obstacles
        if not len(fs):
            log.warning("no free polytope kept around the origin %s", cloud.origin.tolist())
    write_json(out / "obstacles.json", {"obstacles": [o.to_dict() for o in obstacles]})
    write_json(out / "freespace.json", fs.to_dict())
    svg = Path(args.svg) if args.svg else out / "discretize.svg"
    svg.write_text(render_svg(fs.polytopes, obstacles, cloud=cloud.points,
                              title=f"{len(obstacles)} obstacles, {len(fs)} free polytopes"))
    print(f"{len(obstacles)} obstacles, {len(fs)} free polytopes -> {out}")
    return EXIT_OK


def _world(spec: str) -> WorldModel:
    path = Path(spec)
    if path.exists():
        return load_world(path)
    if spec in bundled_world_names():
        return bundled_world(spec)
    raise errors.DataError(f"world {spec!r} not found (bundled: {', '.join(bundled_world_names())})")


def cmd_explore(args) -> int:
    cfg = _config(args)
    world = _world(args.world)
    start = args.start if args.start is not None else world.start
    if start is None:
        raise UsageError("world has no start pose; pass --start")
    if len(start) != world.dim:
        raise UsageError(f"--start needs {world.dim} coordinates")
    out = _out_dir(cfg)
    frames = out / "frames"
    if cfg.frames:
        frames.mkdir(exist_ok=True)

    def on_scan(k, res, cloud):
        log.info("scan %d: %d polytopes, %d edges", k, len(res.fs), len(res.graph.edges))
        if not cfg.frames:
            return
        traj = np.array([p for _, p, _ in res.trajectory])
        pos = res.trajectory[-1][1]
        svg = render_svg(res.fs.polytopes, graph=res.graph, cloud=cloud.points, trajectory=traj,
                         bounds=world.bounds, world_obstacles=world.obstacles,
                         robot=(pos, cfg.explore.robot_radius),
                         title=f"scan {k}: {len(res.fs)} free polytopes")
        (frames / f"scan_{k:03d}.svg").write_text(svg)

    res = run_exploration(world, cfg.sensor, cfg.explore, budget=cfg.budget, start=start,
                          on_scan=on_scan, max_ticks=cfg.max_ticks)
    write_json(out / "freespace.json", res.fs.to_dict())
    write_json(out / "graph.json", res.graph.to_dict())
    (out / "trajectory.csv").write_text(trajectory_csv(res.trajectory))
    (out / "grid.pgm").write_bytes(res.grid.to_pgm())
    meta = res.metadata()
    meta.update(world=world.name or str(args.world), seed=cfg.seed, budget=cfg.budget,
                robot_radius=cfg.explore.robot_radius)
    write_json(out / "run.json", meta)
    print(f"{res.scans} scans ({res.termination}), {len(res.fs)} polytopes, "
          f"{len(res.graph.edges)} edges -> {out}")
    return EXIT_OK


def plan_waypoints(fs: FreeSpace, g: TransitionGraph, start, goal) -> list[np.ndarray]:
    """Iterate generate_x_next from ``start`` until ``goal`` is reached."""
    start, goal = np.asarray(start, dtype=float), np.asarray(goal, dtype=float)
    x, wps = start, []
    for _ in range(len(fs) + 2):
        if wps and np.array_equal(x, goal):
            return wps
        x = generate_x_next(x, goal, g, fs)
        wps.append(x)
        if np.array_equal(x, goal):
            return wps
    raise errors.Unreachable("waypoint iteration did not reach the goal")


def cmd_plan(args) -> int:
    fs = _load(args.freespace, FreeSpace)
    g = _load(args.graph, TransitionGraph) if args.graph else update_discrete_graph(fs)
    for name, p in (("start", args.start), ("goal", args.goal)):
        if len(fs) and len(p) != fs.polytopes[0].dim:
            raise UsageError(f"--{name} needs {fs.polytopes[0].dim} coordinates")
    wps = plan_waypoints(fs, g, args.start, args.goal)
    doc = {"start": [float(v) for v in args.start], "goal": [float(v) for v in args.goal],
           "waypoints": [[float(v) + 0.0 for v in w] for w in wps]}
    if args.out:
        Path(args.out).write_text(dump_json(doc))
    else:
        sys.stdout.write(dump_json(doc))
    if args.svg:
        traj = np.vstack([args.start] + wps)
        Path(args.svg).write_text(render_svg(fs.polytopes, graph=g, trajectory=traj,
                                             title=f"plan with {len(wps)} waypoints"))
    return EXIT_OK


def _load(path, cls):
    data = read_json(path)
    try:
        return cls.from_dict(data)
    except (KeyError, TypeError, ValueError, errors.GeometryError) as exc:
        raise errors.DataError(f"{path}: not a valid {cls.__name__} file ({exc})") from exc


def _polys(data, key) -> list[Polytope]:
    try:
        return [Polytope.from_dict(p) for p in data.get(key, [])]
    except errors.GeometryError as exc:
        raise errors.DataError(str(exc)) from exc


def cmd_render(args) -> int:
    data = read_json(args.input)
    if not isinstance(data, dict):
        raise errors.DataError(f"{args.input}: expected a JSON object")
    kw: dict = {}
    if "polytopes" in data:
        kw["polytopes"] = _polys(data, "polytopes")
        what = f"{len(kw['polytopes'])} free polytopes"
    elif "bounds" in data:
        w = WorldModel.from_dict(data)
        kw.update(bounds=w.bounds, world_obstacles=w.obstacles)
        what = f"world with {len(w.obstacles)} obstacles"
    elif "obstacles" in data:
        kw["obstacles"] = _polys(data, "obstacles")
        what = f"{len(kw['obstacles'])} obstacles"
    elif "nodes" in data:
        kw["graph"] = _load(args.input, TransitionGraph)
        what = f"graph with {len(kw['graph'].nodes)} nodes"
    elif "waypoints" in data:
        kw["trajectory"] = np.array([data["start"]] + data["waypoints"], dtype=float)
        what = f"{len(data['waypoints'])} waypoints"
    else:
        raise errors.DataError(f"{args.input}: unrecognized JSON document")
    if args.graph:
        kw["graph"] = _load(args.graph, TransitionGraph)
    if args.world:
        w = _world(args.world)
        kw.update(bounds=w.bounds, world_obstacles=w.obstacles)
    if args.cloud:
        kw["cloud"] = read_cloud(args.cloud).points
    if args.trajectory:
        kw["trajectory"] = read_trajectory_csv(args.trajectory)
    svg = Path(args.svg) if args.svg else Path(args.input).with_suffix(".svg")
    svg.write_text(render_svg(title=what, **kw))
    print(f"wrote {svg}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [preprocess] [iris] [add] [explore] [sensor] [run]")
    common.add_argument("--seed", type=int, help="rng seed for every random source")
    common.add_argument("--out-dir", help="output directory (default: out)")
    common.add_argument("--robot-radius", type=float, help="robot radius in meters")
    common.add_argument("--svg", help="SVG output path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="lidarpoly", description="Convex free-space decomposition from lidar scans.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    d = sub.add_parser("discretize", parents=[common], help="one cloud to obstacles and free polytopes")
    d.add_argument("cloud", help="ASCII .pcd or .csv point cloud")
    d.add_argument("--origin", type=_point, help="sensor origin x,y[,z] (default: PCD VIEWPOINT)")
    d.set_defaults(func=cmd_discretize)

    e = sub.add_parser("explore", parents=[common], help="closed-loop exploration of a world")
    e.add_argument("world", help=f"world JSON file or bundled name ({', '.join(bundled_world_names())})")
    e.add_argument("--budget", type=int, help="maximum number of scans (default 20)")
    e.add_argument("--start", type=_point, help="start pose (default: the world's)")
    e.set_defaults(func=cmd_explore)

    pl = sub.add_parser("plan", parents=[common], help="waypoints between two points of a free space")
    pl.add_argument("freespace", help="freespace.json")
    pl.add_argument("--graph", help="graph.json (rebuilt from the free space when omitted)")
    pl.add_argument("--start", type=_point, required=True)
    pl.add_argument("--goal", type=_point, required=True)
    pl.add_argument("--out", help="write the waypoint JSON here instead of stdout")
    pl.set_defaults(func=cmd_plan)

    r = sub.add_parser("render", parents=[common], help="draw any output JSON as SVG")
    r.add_argument("input", help="freespace, obstacles, graph, world or plan JSON")
    r.add_argument("--graph", help="overlay a transition graph")
    r.add_argument("--world", help="draw a world file or bundled world underneath")
    r.add_argument("--cloud", help="overlay a point cloud")
    r.add_argument("--trajectory", help="overlay a trajectory CSV")
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lidarpoly: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INFEASIBLE as exc:
        print(f"lidarpoly: infeasible: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (errors.DataError, errors.GeometryError, OSError) as exc:
        print(f"lidarpoly: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except errors.LidarPolyError as exc:
        print(f"lidarpoly: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
