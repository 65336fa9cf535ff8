"""Framed surfaces in Euclidean 3-space.

Basic invariants, Bertrand-type mates (caustics, involutes, tangential
direction surfaces), composition identities and reconstruction from
invariants, for surfaces that may have singular points.
"""

from importlib.resources import files as _files

from .core import Domain, FramedPoint, FrameTriple, Grid, SampledSurface
from .errors import (BranchError, EvalError, ExprSyntaxError, FrameError, FramedSurfaceError,
                     GateError, IntegrabilityError, NoThetaError, SchemaError, SpecError,
                     StepError)
from .expr import Jet1, eval_jet, evaluate, parse, to_text
from .invariants import (BasicInvariants, FrontClass, SurfaceDef, basic_invariants,
                         classify_front, curvature, integrability_residuals, reflect_frame,
                         reflected_invariants, rotate_frame, rotated_invariants)
from .mates import (MateKind, MateSpec, MateSurface, build_mate, caustic, compose_check,
                    involute, parallel_mate, solve_caustic_lambda, solve_caustic_theta,
                    tangential, track_caustic)
from .reconstruct import InvariantFields, RigidMotion, congruence, reconstruct, seed_from
from .scene import Scene, dump_scene, export_mesh, load_scene, run


def scene_path(name: str) -> str:
    """Path of a shipped scene, e.g. ``scene_path("cuspidal_edge")``."""
    return str(_files(__name__) / "scenes" / f"{name.removesuffix('.json')}.json")


__version__ = "0.1.0"

__all__ = [
    "Domain", "FramedPoint", "FrameTriple", "Grid", "SampledSurface", "BranchError",
    "EvalError", "ExprSyntaxError", "FrameError", "FramedSurfaceError", "GateError",
    "IntegrabilityError", "NoThetaError", "SchemaError", "SpecError", "StepError", "Jet1",
    "eval_jet", "evaluate", "parse", "to_text", "BasicInvariants", "FrontClass", "SurfaceDef",
    "basic_invariants", "classify_front", "curvature", "integrability_residuals",
    "reflect_frame", "reflected_invariants", "rotate_frame", "rotated_invariants", "MateKind",
    "MateSpec", "MateSurface", "build_mate", "caustic", "compose_check", "involute",
    "parallel_mate", "solve_caustic_lambda", "solve_caustic_theta", "tangential",
    "track_caustic", "InvariantFields", "RigidMotion", "congruence", "reconstruct", "seed_from",
    "Scene", "dump_scene", "export_mesh", "load_scene", "run", "scene_path", "__version__",
]
