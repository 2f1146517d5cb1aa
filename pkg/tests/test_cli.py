import json

import numpy as np
import pytest

from lidarpoly import geometry as geo
from lidarpoly.cli import main
from lidarpoly.freespace import FreeSpace
from lidarpoly.graph import update_discrete_graph
from lidarpoly.io import write_json, write_pcd
from lidarpoly.preprocess import PointCloud
from lidarpoly.world import SensorModel, bundled_world, simulate_scan


def fs_file(path, *boxes):
    fs = FreeSpace(0.0, [geo.box(lo, hi) for lo, hi in boxes])
    write_json(path, fs.to_dict())
    return path


@pytest.fixture
def room_pcd(tmp_path):
    w = bundled_world("empty_room")
    f = tmp_path / "room.pcd"
    write_pcd(f, simulate_scan(w, SensorModel(), w.start))
    return f


def test_discretize_square_room(tmp_path, room_pcd):
    out = tmp_path / "out"
    assert main(["discretize", str(room_pcd), "--out-dir", str(out)]) == 0
    obs = json.loads((out / "obstacles.json").read_text())["obstacles"]
    fs = json.loads((out / "freespace.json").read_text())["polytopes"]
    assert len(obs) == 4 and len(fs) >= 1
    assert (out / "discretize.svg").read_text().startswith("<?xml")


def test_discretize_empty_and_malformed(tmp_path):
    f = tmp_path / "empty.pcd"
    write_pcd(f, PointCloud(np.zeros((0, 2)), [0, 0]))
    out = tmp_path / "o"
    assert main(["discretize", str(f), "--out-dir", str(out)]) == 0
    assert json.loads((out / "obstacles.json").read_text()) == {"obstacles": []}
    assert json.loads((out / "freespace.json").read_text())["polytopes"] == []
    bad = tmp_path / "bad.pcd"
    bad.write_text("FIELDS x y\nDATA ascii\n1 2 3\n")
    assert main(["discretize", str(bad), "--out-dir", str(out)]) == 2


def test_explore_budget_one(tmp_path):
    out = tmp_path / "e"
    assert main(["explore", "empty_room", "--budget", "1", "--out-dir", str(out), "--seed", "1"]) == 0
    meta = json.loads((out / "run.json").read_text())
    assert meta["scans"] == 1 and meta["seed"] == 1
    for name in ("freespace.json", "graph.json", "trajectory.csv", "grid.pgm", "frames/scan_000.svg"):
        assert (out / name).exists()


def test_explore_missing_world(tmp_path):
    assert main(["explore", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == 2


def test_explore_bad_start(tmp_path):
    assert main(["explore", "empty_room", "--start", "0.05,3", "--out-dir", str(tmp_path)]) == 3


def test_plan(tmp_path, capsys):
    f = fs_file(tmp_path / "fs.json", ([0, 0], [2, 2]))
    assert main(["plan", str(f), "--start", "1,1", "--goal", "1,1"]) == 0
    assert json.loads(capsys.readouterr().out)["waypoints"] == [[1.0, 1.0]]
    f = fs_file(tmp_path / "fs2.json", ([0, 0], [2, 2]), ([1.5, 0], [4, 2]))
    out = tmp_path / "plan.json"
    assert main(["plan", str(f), "--start", "0.5,1", "--goal", "3.5,1", "--out", str(out),
                 "--svg", str(tmp_path / "plan.svg")]) == 0
    wps = json.loads(out.read_text())["waypoints"]
    assert len(wps) == 2 and wps[-1] == [3.5, 1.0]
    assert 1.5 - 1e-9 <= wps[0][0] <= 2 + 1e-9
    f = fs_file(tmp_path / "fs3.json", ([0, 0], [1, 1]), ([2, 0], [3, 1]))
    assert main(["plan", str(f), "--start", "0.5,0.5", "--goal", "2.5,0.5"]) == 3


def test_render(tmp_path):
    f = fs_file(tmp_path / "fs.json", ([0, 0], [2, 2]), ([1.5, 0], [4, 2]))
    svg = tmp_path / "a.svg"
    assert main(["render", str(f), "--svg", str(svg)]) == 0
    assert svg.read_text().count('class="free"') == 2
    g = tmp_path / "g.json"
    write_json(g, update_discrete_graph(FreeSpace.from_dict(json.loads(f.read_text()))).to_dict())
    assert main(["render", str(f), "--graph", str(g), "--svg", str(svg)]) == 0
    assert svg.read_text().count('class="edge"') == 1


def test_render_3d_note(tmp_path):
    f = fs_file(tmp_path / "fs.json", ([0, 0, 0], [1, 1, 1]))
    svg = tmp_path / "b.svg"
    assert main(["render", str(f), "--svg", str(svg)]) == 0
    assert "top-down projection" in svg.read_text()


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["plan", "x.json", "--start", "1,2"])
    assert exc.value.code == 1
    assert main(["explore", "empty_room", "--budget", "-1", "--out-dir", str(tmp_path)]) == 1
    assert main(["render", str(tmp_path / "missing.json")]) == 2
