"""Command line front end: ``framedsurf --scene S.json <command> [options]``."""

from __future__ import annotations

import argparse
import json
import re
import sys

from .errors import FramedSurfaceError, SchemaError
from .scene import load_scene, run

KINDS = ("nn", "ns", "nt", "sn", "ss", "st", "tn", "ts", "tt")


def _grid(text: str) -> dict:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m or min(int(m.group(1)), int(m.group(2))) < 2:
        raise argparse.ArgumentTypeError(f"expected NUxNV with both >= 2, got {text!r}")
    return {"nu": int(m.group(1)), "nv": int(m.group(2))}


def build_parser() -> argparse.ArgumentParser:
    def flags(parser):
        parser.add_argument("--scene", help="scene JSON file")
        parser.add_argument("--out", help="output directory (default: out)")
        parser.add_argument("--grid", type=_grid, help="sample grid, e.g. 21x21")
        parser.add_argument("--tol", type=float, help="tolerance for pass/fail")

    # the flags are accepted before or after the command
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    flags(common)
    p = argparse.ArgumentParser(prog="framedsurf",
                                description="Framed surfaces: invariants, mates, reconstruction.")
    flags(p)
    p.set_defaults(out="out")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    c = add("check", "frame and integrability residuals")
    c.add_argument("--surface")
    for name, help_ in (("invariants", "basic invariant table (CSV)"),
                        ("curvature", "curvature table and front classes (CSV)"),
                        ("reconstruct", "integrate from invariants and test congruence"),
                        ("export", "OBJ mesh of a surface or a named mate")):
        q = add(name, help_)
        q.add_argument("--surface")
        if name == "export":
            q.add_argument("--name", help="mate spec to export instead of a surface")
    m = add("mate", "construct a mate from a scene mate spec")
    m.add_argument("--kind", choices=KINDS)
    m.add_argument("--name", help="mate spec name in the scene")
    k = add("compose", "check a composition identity")
    k.add_argument("--surface")
    k.add_argument("--pipeline", required=True, help="e.g. CsIs, IsCs, TsSt, StTs")
    k.add_argument("--theta", help="inner angle (expression)")
    k.add_argument("--lambda", dest="lam", help="inner lambda (expression)")
    k.add_argument("--c", type=float, default=0.0, help="involute offset")
    r = add("run", "run every task listed in the scene")
    r.add_argument("--task", action="append", help="run only these task names")
    return p


def _task_from_args(args, scene) -> dict:
    cmd = args.command
    task = {"task": cmd}
    if getattr(args, "surface", None):
        task["surface"] = args.surface
    if cmd == "mate":
        if args.name:
            if args.name not in scene.mates:
                raise SchemaError("--name", f"unknown mate {args.name!r}")
            spec = scene.mates[args.name]
            if args.kind and spec.kind.value != args.kind:
                raise SchemaError("--kind", f"mate {args.name!r} has kind {spec.kind.value}")
        else:
            hits = [n for n, s in scene.mates.items() if s.kind.value == args.kind]
            if not args.kind or not hits:
                raise SchemaError("--kind", "give --name, or a --kind present in the scene")
            args.name = hits[0]
        task.update(mate=args.name, name=f"mate_{args.name}")
    elif cmd == "export" and args.name:
        task.update(mate=args.name, name=f"export_{args.name}")
    elif cmd == "compose":
        task.update(pipeline=args.pipeline, c=args.c, name=f"compose_{args.pipeline}")
        if args.theta is not None:
            task["theta"] = args.theta
        if args.lam is not None:
            task["lambda"] = args.lam
    return task


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.scene:
        print("error: --scene is required", file=sys.stderr)
        return 2
    try:
        scene = load_scene(args.scene)
        if args.command == "run":
            tasks = scene.tasks
            if args.task:
                tasks = [t for t in tasks if t.get("name", t["task"]) in args.task]
        else:
            tasks = [_task_from_args(args, scene)]
        status = 0
        for t in tasks:
            summary = run(scene, t, args.out, tol=args.tol, grid=args.grid)
            print(json.dumps({k: summary[k] for k in ("task", "status", "max_residuals")}))
            if summary["status"] != "pass":
                status = 1
        return status
    except (FramedSurfaceError, SyntaxError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
