import csv
import json
import subprocess
import sys

import pytest

import framedsurf as F
from framedsurf.cli import build_parser, main
from framedsurf.core import Grid
from framedsurf.errors import ExprSyntaxError, FrameError, SchemaError
from framedsurf.invariants import NAMES, basic_invariants
from framedsurf.scene import (TaskError, dump_scene, export_mesh, invariant_rows, load_scene,
                              run, scene_from_dict, scene_to_dict, write_csv)
from conftest import load

SHIPPED = ["cuspidal_edge", "helicoid_family", "cuspidal_crosscap"]


def plane_scene(**extra):
    data = {"surfaces": [{"name": "plane", "x": ["u", "v", "0"], "n": ["0", "0", "1"],
                          "s": ["1", "0", "0"],
                          "domain": {"u": [-1, 1], "v": [-1, 1], "base": [0, 0]}}],
            "mates": [], "tasks": [{"task": "check"}]}
    data.update(extra)
    return data


def write(tmp_path, data, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# ------------------------------------------------------------------ loading


def test_shipped_edge_scene():
    sc = load("cuspidal_edge")
    assert list(sc.surfaces) == ["cuspidal_edge"]
    assert len(sc.mates) == 4
    assert {m.kind.value for m in sc.mates.values()} == {"ns", "nt", "sn", "tn"}


def test_helicoid_scene_carries_a_note():
    assert "sqrt(2)" in load("helicoid_family").surface().note


def test_unknown_surface_reference(tmp_path):
    data = plane_scene(mates=[{"name": "m", "surface": "ghost", "kind": "nn", "lambda": "1"}])
    with pytest.raises(SchemaError) as info:
        load_scene(write(tmp_path, data))
    assert info.value.path == "$.mates[0].surface"


def test_non_unit_normal_is_rejected(tmp_path):
    data = plane_scene()
    data["surfaces"][0]["n"] = ["0", "0", "1+u^2+0.5"]
    with pytest.raises(FrameError):
        load_scene(write(tmp_path, data))


def test_non_tangent_position_is_rejected(tmp_path):
    data = plane_scene()
    data["surfaces"][0]["x"] = ["u", "v", "u"]
    with pytest.raises(FrameError):
        load_scene(write(tmp_path, data))


def test_expression_syntax_error_carries_path(tmp_path):
    data = plane_scene()
    data["surfaces"][0]["x"][1] = "sin(v"
    with pytest.raises(ExprSyntaxError) as info:
        load_scene(write(tmp_path, data))
    assert info.value.offset == 6
    assert "$.surfaces[0].x[1]" in str(info.value)
    assert isinstance(info.value, SyntaxError)


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["surfaces"][0].pop("s"), "$.surfaces[0]"),
    (lambda d: d["surfaces"][0].update(x=["u", "v"]), "$.surfaces[0].x"),
    (lambda d: d.update(tasks=[{"task": "fly"}]), "$.tasks[0].task"),
    (lambda d: d.update(grid={"nu": 1, "nv": 5}), "$.grid.nu"),
    (lambda d: d.update(mates=[{"name": "m", "surface": "plane", "kind": "qq"}]),
     "$.mates[0].kind"),
])
def test_schema_errors_name_the_field(tmp_path, mutate, path):
    data = plane_scene()
    mutate(data)
    with pytest.raises(SchemaError) as info:
        load_scene(write(tmp_path, data))
    assert info.value.path.startswith(path)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        load_scene(p)


@pytest.mark.parametrize("name", SHIPPED)
def test_scene_round_trip(tmp_path, name):
    sc = load(name)
    p = tmp_path / f"{name}.json"
    dump_scene(sc, p)
    again = load_scene(p)
    assert scene_to_dict(again) == scene_to_dict(sc)
    for k, S in sc.surfaces.items():
        assert again.surfaces[k].texts() == S.texts()
        assert again.surfaces[k].domain == S.domain
    for k, m in sc.mates.items():
        m2 = again.mates[k]
        assert (m2.kind, m2.c, m2.base, m2.surface) == (m.kind, m.c, m.base, m.surface)


# ------------------------------------------------------------------ writers


def test_invariant_csv_layout(tmp_path, edge):
    g = Grid(edge.domain, 7, 5)
    header, rows = invariant_rows(edge, g)
    write_csv(tmp_path / "t.csv", header, rows)
    with open(tmp_path / "t.csv", newline="") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["u", "v", *NAMES, "J", "K", "H", "detG"]
    assert len(table) - 1 == 7 * 5
    # row-major: second row is (u_0, v_1)
    U, V = g.mesh()
    assert float(table[2][0]) == U[0, 1] and float(table[2][1]) == V[0, 1]
    inv = basic_invariants(edge, U[3, 2], V[3, 2])
    row = [float(x) for x in table[1 + 3 * 5 + 2]]
    assert row[2 + NAMES.index("b2")] == pytest.approx(inv.b2, abs=1e-15)


def _obj_counts(path):
    kinds = [ln.split()[0] for ln in path.read_text().splitlines() if ln and ln[0] != "#"]
    return kinds.count("v"), kinds.count("vn"), kinds.count("f")


def test_obj_plane_2x2(tmp_path, plane):
    export_mesh(plane.sample(Grid(plane.domain, 2, 2)), tmp_path / "p.obj")
    assert _obj_counts(tmp_path / "p.obj") == (4, 4, 2)
    faces = [ln for ln in (tmp_path / "p.obj").read_text().splitlines() if ln.startswith("f ")]
    assert faces == ["f 1//1 3//3 4//4", "f 1//1 4//4 2//2"]


def test_obj_edge_51x51(tmp_path, edge):
    S = edge.sample(Grid(edge.domain, 51, 51))
    export_mesh(S, tmp_path / "e.obj")
    assert _obj_counts(tmp_path / "e.obj") == (2601, 2601, 5000)
    first = (tmp_path / "e.obj").read_text().splitlines()[1].split()
    assert [float(x) for x in first[1:]] == list(S.x[0, 0])


# ------------------------------------------------------------------ run


def test_run_writes_summary(tmp_path):
    sc = load("cuspidal_edge")
    summary = run(sc, "check", tmp_path)
    on_disk = json.loads((tmp_path / "check.json").read_text())
    assert on_disk == summary
    assert summary["status"] == "pass"
    assert set(summary) >= {"task", "max_residuals", "status"}
    assert summary["max_residuals"]["cuspidal_edge.integrability"] <= 1e-6


def test_run_with_tight_tolerance_fails(tmp_path):
    summary = run(load("cuspidal_edge"), "check", tmp_path, tol=1e-20)
    assert summary["status"] == "fail"


def test_run_outputs(tmp_path):
    sc = load("cuspidal_edge")
    run(sc, "invariants", tmp_path)
    run(sc, "caustic_s", tmp_path)
    run(sc, {"task": "curvature"}, tmp_path, grid={"nu": 5, "nv": 5})
    assert (tmp_path / "cuspidal_edge_invariants.csv").exists()
    assert (tmp_path / "caustic_s.obj").exists()
    with open(tmp_path / "cuspidal_edge_curvature.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["u", "v", "J", "K", "H", "detG", "class"]
    assert len(rows) == 26
    assert any(r[-1] == "FrontRank1" for r in rows[1:])


def test_task_errors_carry_context(tmp_path):
    sc = scene_from_dict(plane_scene(tasks=[{"task": "caustic", "variant": "s"}]))
    with pytest.raises(TaskError) as info:
        run(sc, "caustic", tmp_path, grid={"nu": 5, "nv": 5})
    assert "caustic" in str(info.value) and "BranchError" in str(info.value)
    with pytest.raises(SchemaError):
        run(sc, "nope", tmp_path)


# ------------------------------------------------------------------ command line


def test_grid_flag_parsing():
    p = build_parser()
    assert p.parse_args(["--grid", "5x7", "check"]).grid == {"nu": 5, "nv": 7}
    assert p.parse_args(["check", "--grid", "9X3"]).grid == {"nu": 9, "nv": 3}
    with pytest.raises(SystemExit):
        p.parse_args(["--grid", "5x1", "check"])
    with pytest.raises(SystemExit):
        p.parse_args(["mate", "--kind", "xx"])


def test_flags_before_or_after_command():
    p = build_parser()
    a = p.parse_args(["--scene", "a.json", "--out", "o", "check"])
    b = p.parse_args(["check", "--scene", "a.json", "--out", "o"])
    assert (a.scene, a.out) == (b.scene, b.out) == ("a.json", "o")
    assert p.parse_args(["check"]).out == "out"


def test_main_exit_codes(tmp_path, capsys):
    scene = str(F.scene_path("cuspidal_edge"))
    out = str(tmp_path)
    assert main(["--scene", scene, "--out", out, "check"]) == 0
    assert main(["--scene", scene, "--out", out, "--tol", "1e-20", "check"]) == 1
    assert main(["--out", out, "check"]) == 2
    assert main(["--scene", str(tmp_path / "missing.json"), "check"]) == 2
    line = capsys.readouterr().out.strip().splitlines()[0]
    assert json.loads(line)["status"] == "pass"


def test_main_mate_and_compose(tmp_path):
    scene = str(F.scene_path("cuspidal_edge"))
    common = ["--scene", scene, "--out", str(tmp_path), "--grid", "11x11"]
    assert main(common + ["mate", "--kind", "ns"]) == 0
    assert (tmp_path / "mate_Cs.json").exists()
    assert main(common + ["mate", "--name", "Is"]) == 0
    assert main(common + ["mate", "--name", "Is", "--kind", "ns"]) == 2
    assert main(common + ["mate", "--kind", "tt"]) == 2
    assert main(common + ["compose", "--pipeline", "CsIs", "--theta=-pi/2"]) == 0
    assert main(common + ["export", "--name", "It"]) == 0
    assert (tmp_path / "It.obj").exists()
    assert main(common + ["run", "--task", "caustic_t"]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "framedsurf", "--scene",
                           str(F.scene_path("cuspidal_crosscap")), "--out", str(tmp_path),
                           "invariants"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["status"] == "pass"


@pytest.mark.parametrize("name", SHIPPED)
def test_every_shipped_task_passes(tmp_path, name):
    sc = load(name)
    for t in sc.tasks:
        assert run(sc, t, tmp_path)["status"] == "pass", t
