"""Scene files: loading, validation, task execution and output writers.

A scene is UTF-8 JSON::

    {"surfaces": [{"name", "x", "n", "s", "domain": {"u", "v", "base"}, "note"?}],
     "mates":    [{"name", "surface", "kind", "lambda"?, "theta"?, "c"?, "base"?}],
     "grid":     {"nu", "nv", "u"?, "v"?},
     "tasks":    [{"task", "name"?, ...}]}

Every task writes a JSON summary ``{"task", "max_residuals", "status"}`` next
to its CSV/OBJ products.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Domain, FramedPoint, Grid, SampledSurface, dot, frame_defect
from .errors import ExprSyntaxError, FrameError, FramedSurfaceError, SchemaError
from .expr import parse, to_text
from .fields import AngleExpr, AnglePair, ConstantAngle
from .invariants import (NAMES, FramedMap, SurfaceDef, basic_invariants, classify_invariants,
                         curvature, integrability_residuals)
from .mates import (MateKind, MateSpec, build_mate, caustic, compose_check, involute,
                    normalize_pipeline, tangential)
from .reconstruct import InvariantFields, congruence, reconstruct, seed_from

TASKS = ("check", "invariants", "curvature", "caustic", "involute", "tangential", "mate",
         "compose", "reconstruct", "export")
DEFAULT_TOL = {"reconstruct": 1e-4}
TOL = 1e-6
SPOT_TOL = 1e-9


@dataclass
class Scene:
    surfaces: dict
    mates: dict = field(default_factory=dict)
    tasks: list = field(default_factory=list)
    grid: dict = field(default_factory=lambda: {"nu": 21, "nv": 21})
    path: str | None = None

    def surface(self, name: str | None = None) -> SurfaceDef:
        if name is None:
            if len(self.surfaces) != 1:
                raise SchemaError("surface", "scene has several surfaces; name one")
            return next(iter(self.surfaces.values()))
        try:
            return self.surfaces[name]
        except KeyError:
            raise SchemaError("surface", f"unknown surface {name!r}") from None

    def make_grid(self, surface: SurfaceDef, override: dict | None = None) -> Grid:
        g = dict(self.grid)
        g.update(override or {})
        d = surface.domain
        u = tuple(g.get("u", d.u))
        v = tuple(g.get("v", d.v))
        # the grid may cover a sub-rectangle that misses the base point; the
        # base itself always comes from the surface domain
        base = (min(max(d.base[0], u[0]), u[1]), min(max(d.base[1], v[0]), v[1]))
        return Grid(Domain(u, v, base), int(g["nu"]), int(g["nv"]))


# ------------------------------------------------------------------ loading


def _require(obj, key, path, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(path, f"missing field {key!r}")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise SchemaError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return val


def _parse_at(text, path):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(text)
    if not isinstance(text, str):
        raise SchemaError(path, "expected an expression string")
    try:
        return parse(text)
    except ExprSyntaxError as e:
        raise ExprSyntaxError(f"{path}: {e.msg}", e.text, e.offset, e.expected) from e


def _pair(val, path):
    if not (isinstance(val, list) and len(val) == 2
            and all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in val)):
        raise SchemaError(path, "expected [number, number]")
    return float(val[0]), float(val[1])


def _surface_from_json(obj, path) -> SurfaceDef:
    name = _require(obj, "name", path, str)
    vecs = {}
    for k in ("x", "n", "s"):
        comp = _require(obj, k, path, list)
        if len(comp) != 3:
            raise SchemaError(f"{path}.{k}", "expected three components")
        vecs[k] = tuple(_parse_at(c, f"{path}.{k}[{i}]") for i, c in enumerate(comp))
    dom = _require(obj, "domain", path, dict)
    try:
        domain = Domain(_pair(_require(dom, "u", f"{path}.domain"), f"{path}.domain.u"),
                        _pair(_require(dom, "v", f"{path}.domain"), f"{path}.domain.v"),
                        _pair(dom.get("base", [0, 0]), f"{path}.domain.base"))
    except ValueError as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(f"{path}.domain", str(e)) from None
    note = obj.get("note", "")
    return SurfaceDef(name, vecs["x"], vecs["n"], vecs["s"], domain, note)


def _theta_from_json(val, path):
    if val is None:
        return None
    if isinstance(val, dict):
        if set(val) != {"sin", "cos"}:
            raise SchemaError(path, "an angle pair needs exactly 'sin' and 'cos'")
        return AnglePair(_parse_at(val["sin"], f"{path}.sin"), _parse_at(val["cos"], f"{path}.cos"))
    return AngleExpr(_parse_at(val, path))


def _theta_to_json(ang):
    if ang is None:
        return None
    if isinstance(ang, ConstantAngle):
        return ang.theta
    return ang.to_json()


def _lam_from_json(val, path):
    return None if val is None else _parse_at(val, path)


def _mate_from_json(obj, path, surfaces) -> MateSpec:
    name = _require(obj, "name", path, str)
    surf = _require(obj, "surface", path, str)
    if surf not in surfaces:
        raise SchemaError(f"{path}.surface", f"unknown surface {surf!r}")
    try:
        kind = MateKind.parse(_require(obj, "kind", path, str))
    except (ValueError, FramedSurfaceError) as e:
        raise SchemaError(f"{path}.kind", str(e)) from None
    c = obj.get("c", 0.0)
    if not isinstance(c, (int, float)) or isinstance(c, bool):
        raise SchemaError(f"{path}.c", "expected a number")
    base = _pair(obj["base"], f"{path}.base") if obj.get("base") is not None else None
    return MateSpec(kind, _lam_from_json(obj.get("lambda"), f"{path}.lambda"),
                    _theta_from_json(obj.get("theta"), f"{path}.theta"),
                    base, float(c), name, surf)


def spot_check(S: SurfaceDef, tol: float = SPOT_TOL) -> float:
    """Frame and tangency defects at the base point; raises FrameError above ``tol``."""
    u0, v0 = S.domain.base
    x, n, s = S.frame_jets(u0, v0)
    d = frame_defect(n.value, s.value)
    if not d <= tol:
        raise FrameError(f"surface {S.name!r}: frame not orthonormal at base point "
                         f"({u0:g}, {v0:g}), defect {d:.3e}")
    tang = max(abs(float(dot(x.du, n.value))), abs(float(dot(x.dv, n.value))))
    if not tang <= tol:
        raise FrameError(f"surface {S.name!r}: n is not normal to x at base point "
                         f"({u0:g}, {v0:g}), defect {tang:.3e}")
    return max(d, tang)


def scene_from_dict(data, path_name: str | None = None) -> Scene:
    if not isinstance(data, dict):
        raise SchemaError("$", "top level must be an object")
    surf_list = _require(data, "surfaces", "$", list)
    surfaces = {}
    for i, obj in enumerate(surf_list):
        S = _surface_from_json(obj, f"$.surfaces[{i}]")
        if S.name in surfaces:
            raise SchemaError(f"$.surfaces[{i}].name", f"duplicate surface {S.name!r}")
        surfaces[S.name] = S
    mates = {}
    for i, obj in enumerate(data.get("mates", [])):
        m = _mate_from_json(obj, f"$.mates[{i}]", surfaces)
        if m.name in mates:
            raise SchemaError(f"$.mates[{i}].name", f"duplicate mate {m.name!r}")
        mates[m.name] = m
    grid = {"nu": 21, "nv": 21}
    g = data.get("grid", {})
    if not isinstance(g, dict):
        raise SchemaError("$.grid", "expected an object")
    for k in ("nu", "nv"):
        if k in g:
            if not isinstance(g[k], int) or g[k] < 2:
                raise SchemaError(f"$.grid.{k}", "expected an integer >= 2")
            grid[k] = g[k]
    for k in ("u", "v"):
        if k in g:
            grid[k] = list(_pair(g[k], f"$.grid.{k}"))
    tasks = data.get("tasks", [])
    if not isinstance(tasks, list):
        raise SchemaError("$.tasks", "expected a list")
    for i, t in enumerate(tasks):
        kind = _require(t, "task", f"$.tasks[{i}]", str)
        if kind not in TASKS:
            raise SchemaError(f"$.tasks[{i}].task", f"unknown task {kind!r}")
        for ref, pool in (("surface", surfaces), ("mate", mates)):
            if ref in t and t[ref] not in pool:
                raise SchemaError(f"$.tasks[{i}].{ref}", f"unknown {ref} {t[ref]!r}")
    for S in surfaces.values():
        spot_check(S)
    return Scene(surfaces, mates, list(tasks), grid, path_name)


def load_scene(path) -> Scene:
    """Read and fully validate a scene file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(str(path), f"invalid JSON: {e}") from None
    return scene_from_dict(data, str(path))


def scene_to_dict(scene: Scene) -> dict:
    surfaces = []
    for S in scene.surfaces.values():
        d = S.domain
        obj = {"name": S.name, **S.texts(),
               "domain": {"u": list(d.u), "v": list(d.v), "base": list(d.base)}}
        if S.note:
            obj["note"] = S.note
        surfaces.append(obj)
    mates = []
    for m in scene.mates.values():
        obj = {"name": m.name, "surface": m.surface, "kind": m.kind.value.lower(),
               "lambda": None if m.lam is None else to_text(m.lam),
               "theta": _theta_to_json(m.theta), "c": m.c}
        if m.base is not None:
            obj["base"] = list(m.base)
        mates.append(obj)
    return {"surfaces": surfaces, "mates": mates, "grid": dict(scene.grid),
            "tasks": list(scene.tasks)}


def dump_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


# ------------------------------------------------------------------ writers


def invariant_rows(S: FramedMap, grid: Grid):
    """Header and rows of the invariant table, row-major over the grid."""
    U, V = grid.mesh()
    inv = basic_invariants(S, U, V)
    c = curvature(inv)
    cols = [U, V] + [np.broadcast_to(getattr(inv, k), U.shape) for k in NAMES]
    cols += [np.broadcast_to(q, U.shape) for q in (c.J, c.K, c.H)]
    cols.append(np.broadcast_to(inv.a1 * inv.b2 - inv.a2 * inv.b1, U.shape))
    header = ["u", "v", *NAMES, "J", "K", "H", "detG"]
    return header, np.stack([np.ravel(a) for a in cols], axis=1)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else repr(float(x)) for x in r])


def export_mesh(surface: SampledSurface, path) -> None:
    """Wavefront OBJ: vertices and normals row-major, two triangles per cell."""
    nu, nv = surface.x.shape[:2]
    lines = [f"# {nu}x{nv} framed surface samples"]
    lines += ["v %.17g %.17g %.17g" % tuple(p) for p in surface.x.reshape(-1, 3)]
    lines += ["vn %.17g %.17g %.17g" % tuple(p) for p in surface.n.reshape(-1, 3)]
    for i in range(nu - 1):
        for j in range(nv - 1):
            a = i * nv + j + 1
            b, c, d = a + nv, a + nv + 1, a + 1
            lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
            lines.append(f"f {a}//{a} {c}//{c} {d}//{d}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _slug(text: str) -> str:
    keep = text.replace("∘", "o").replace("^", "")
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in keep)


# ------------------------------------------------------------------ tasks


def _check(scene, task, grid_for, out):
    names = [task["surface"]] if "surface" in task else list(scene.surfaces)
    res, details = {}, {}
    for name in names:
        S = scene.surface(name)
        g = grid_for(S)
        U, V = g.mesh()
        r = integrability_residuals(S, U, V)
        res[f"{name}.frame"] = S.framed_defect(U, V)
        res[f"{name}.integrability"] = r.max()
        details[name] = {f"r{i + 1}": float(np.max(np.abs(x))) for i, x in enumerate(r.as_tuple())}
    return res, details


def _invariants(scene, task, grid_for, out):
    S = scene.surface(task.get("surface"))
    g = grid_for(S)
    header, rows = invariant_rows(S, g)
    write_csv(out / f"{_slug(S.name)}_invariants.csv", header, rows)
    U, V = g.mesh()
    return {f"{S.name}.frame": S.framed_defect(U, V)}, {"rows": len(rows)}


def _curvature(scene, task, grid_for, out, tol):
    S = scene.surface(task.get("surface"))
    g = grid_for(S)
    header, rows = invariant_rows(S, g)
    U, V = g.mesh()
    inv = basic_invariants(S, U, V)
    classes = []
    for idx in np.ndindex(U.shape):
        classes.append(classify_invariants(inv.map(lambda a: np.broadcast_to(a, U.shape)[idx]),
                                           tol).value)
    keep = [header.index(k) for k in ("u", "v", "J", "K", "H", "detG")]
    table = [[*map(float, r[keep]), c] for r, c in zip(rows, classes)]
    write_csv(out / f"{_slug(S.name)}_curvature.csv",
              ["u", "v", "J", "K", "H", "detG", "class"], table)
    counts = {c: classes.count(c) for c in sorted(set(classes))}
    return {f"{S.name}.frame": S.framed_defect(U, V)}, {"classes": counts}


def _mate_outputs(res, out, label):
    header, rows = invariant_rows(res.surface, res.grid)
    write_csv(out / f"{_slug(label)}_invariants.csv", header, rows)
    export_mesh(res.sampled, out / f"{_slug(label)}.obj")
    return {f"{label}.condition": res.condition_error,
            f"{label}.prediction": res.prediction_error,
            f"{label}.frame": res.framed_defect}


def _num_or_expr(val):
    return None if val is None else (float(val) if isinstance(val, (int, float)) else val)


def _angle_param(val):
    if val is None or isinstance(val, (int, float)):
        return val
    if isinstance(val, dict):
        return AnglePair(val["sin"], val["cos"])
    return AngleExpr(val)


def _mate_task(scene, task, grid_for, out, gate_tol):
    kind = task["task"]
    if kind == "mate" or "mate" in task:
        spec = scene.mates[task["mate"]]
        S = scene.surface(spec.surface)
        res = build_mate(S, spec, grid_for(S), gate_tol=gate_tol)
        label = spec.name
    else:
        S = scene.surface(task.get("surface"))
        g = grid_for(S)
        variant = task.get("variant", "s" if kind != "tangential" else "s_t")
        lam = _num_or_expr(task.get("lambda"))
        theta = _angle_param(task.get("theta"))
        if kind == "caustic":
            if lam is None:
                res = caustic(S, variant, g, gate_tol=gate_tol,
                              theta_shift=float(task.get("theta_shift", math.pi / 2)))
            else:
                res = caustic(S, variant, g, lam, theta, gate_tol=gate_tol)
        elif kind == "involute":
            base = tuple(task["base"]) if task.get("base") is not None else None
            res = involute(S, variant, g, theta if theta is not None else 0.0, base,
                           float(task.get("c", 0.0)), gate_tol)
        else:
            res = tangential(S, variant, g, lam, theta, gate_tol)
        label = task.get("name") or f"{S.name}_{kind}_{variant}"
    return _mate_outputs(res, out, label), {"kind": res.kind.value}


def _compose(scene, task, grid_for, out, gate_tol):
    S = scene.surface(task.get("surface"))
    p = normalize_pipeline(task["pipeline"])
    rep = compose_check(
        S, p, grid_for(S), theta=_angle_param(task.get("theta")),
        lam=_num_or_expr(task.get("lambda")),
        base=tuple(task["base"]) if task.get("base") is not None else None,
        offset=float(task.get("c", 0.0)),
        outer_lam=_num_or_expr(task.get("outer_lambda")),
        outer_theta=_angle_param(task.get("outer_theta")), gate_tol=gate_tol)
    export_mesh(rep.output.sampled, out / f"{_slug(S.name)}_{_slug(p)}.obj")
    return ({f"{S.name}.{p}.x": rep.max_dx, f"{S.name}.{p}.n": rep.max_dn,
             f"{S.name}.{p}.s": rep.max_ds},
            {"pipeline": p})


def _reconstruct(scene, task, grid_for, out):
    S = scene.surface(task.get("surface"))
    g = grid_for(S)
    F = InvariantFields.from_surface(S)
    seed = seed_from(S, *S.domain.base)
    if "seed" in task:
        sd = task["seed"]
        seed = FramedPoint(np.asarray(sd["x"], float), np.asarray(sd["n"], float),
                           np.asarray(sd["s"], float))
    B = reconstruct(F, seed, g)
    _, err = congruence(S.sample(g), B)
    export_mesh(B, out / f"{_slug(S.name)}_reconstructed.obj")
    return ({f"{S.name}.congruence": err, f"{S.name}.integrability": B.max_residual,
             f"{S.name}.correction": B.max_correction},
            {"refine": B.refine})


def _export(scene, task, grid_for, out):
    if "mate" in task:
        spec = scene.mates[task["mate"]]
        S = scene.surface(spec.surface)
        res = build_mate(S, spec, grid_for(S))
        export_mesh(res.sampled, out / f"{_slug(spec.name)}.obj")
        return {f"{spec.name}.frame": res.framed_defect}, {}
    S = scene.surface(task.get("surface"))
    g = grid_for(S)
    export_mesh(S.sample(g), out / f"{_slug(S.name)}.obj")
    U, V = g.mesh()
    return {f"{S.name}.frame": S.framed_defect(U, V)}, {"vertices": g.nu * g.nv}


def run(scene: Scene, task, out_dir, tol: float | None = None,
        grid: dict | None = None) -> dict:
    """Execute one task (a dict, or the name of a task in the scene).

    Returns the summary that is also written to ``<out_dir>/<name>.json``.
    ``tol`` overrides the task's tolerance; ``grid`` overrides grid fields.
    Residual-type tasks fail (``status: "fail"``) when any measured maximum
    exceeds the tolerance; construction errors are re-raised with context.
    """
    if isinstance(task, str):
        found = [t for t in scene.tasks if t.get("name", t["task"]) == task]
        if not found:
            raise SchemaError("task", f"no task named {task!r}")
        task = found[0]
    kind = task["task"]
    if kind not in TASKS:
        raise SchemaError("task", f"unknown task {kind!r}")
    name = task.get("name", kind)
    tol = tol if tol is not None else float(task.get("tol", DEFAULT_TOL.get(kind, TOL)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    override = dict(task.get("grid", {}))
    override.update(grid or {})

    def grid_for(S):
        return scene.make_grid(S, override)

    gate_tol = max(tol, TOL)
    try:
        if kind == "check":
            res, details = _check(scene, task, grid_for, out)
        elif kind == "invariants":
            res, details = _invariants(scene, task, grid_for, out)
        elif kind == "curvature":
            res, details = _curvature(scene, task, grid_for, out, float(task.get("class_tol", 1e-9)))
        elif kind in ("caustic", "involute", "tangential", "mate"):
            res, details = _mate_task(scene, task, grid_for, out, gate_tol)
        elif kind == "compose":
            res, details = _compose(scene, task, grid_for, out, gate_tol)
        elif kind == "reconstruct":
            res, details = _reconstruct(scene, task, grid_for, out)
        else:
            res, details = _export(scene, task, grid_for, out)
    except FramedSurfaceError as e:
        where = task.get("surface") or task.get("mate") or "scene"
        raise TaskError(name, where, e) from e
    status = "pass" if all(v <= tol for v in res.values()) else "fail"
    summary = {"task": name, "max_residuals": {k: float(v) for k, v in res.items()},
               "status": status, "tol": tol, "details": details}
    (out / f"{_slug(name)}.json").write_text(json.dumps(summary, indent=2) + "\n",
                                             encoding="utf-8")
    return summary


class TaskError(FramedSurfaceError):
    """A task failed; ``cause`` holds the original error."""

    def __init__(self, task, where, cause):
        super().__init__(f"task {task!r} on {where!r}: {type(cause).__name__}: {cause}")
        self.task, self.where, self.cause = task, where, cause


__all__ = ["Scene", "TASKS", "load_scene", "scene_from_dict", "scene_to_dict", "dump_scene",
           "spot_check", "invariant_rows", "write_csv", "export_mesh", "run", "TaskError"]
