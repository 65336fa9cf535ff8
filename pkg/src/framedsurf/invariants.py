"""Basic invariants, curvature, integrability and frame changes of framed surfaces.

A framed surface is ``(x, n, s)`` with ``n`` a unit normal of ``x`` and ``s`` a
unit tangent vector orthogonal to ``n``; ``t = n x s`` completes the frame.  Its
ten basic invariants are the projections

    a_i = x_i . s,  b_i = x_i . t,  e_i = n_i . s,  f_i = n_i . t,  g_i = s_i . t

where the index ``i = 1, 2`` stands for the partial derivative in ``u`` or ``v``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .core import FRAME_TOL, Domain, Grid, SampledSurface, cross, dot, frame_defect
from .errors import FrameError
from .expr import Jet1, as_expr, call, eval_jet, jstack, to_text
from .fields import FD_STEP, as_angle_field

NAMES = ("a1", "b1", "a2", "b2", "e1", "f1", "g1", "e2", "f2", "g2")


@dataclass(frozen=True)
class BasicInvariants:
    """The ten basic invariants; each entry is a float or an array."""

    a1: object
    b1: object
    a2: object
    b2: object
    e1: object
    f1: object
    g1: object
    e2: object
    f2: object
    g2: object

    @classmethod
    def from_dict(cls, d) -> "BasicInvariants":
        return cls(**{k: d[k] for k in NAMES})

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in NAMES}

    def map(self, fn) -> "BasicInvariants":
        return BasicInvariants(*(fn(getattr(self, k)) for k in NAMES))

    @property
    def G(self) -> np.ndarray:
        return np.stack([np.stack([self.a1, self.b1], -1),
                         np.stack([self.a2, self.b2], -1)], -2)

    @property
    def F1(self) -> np.ndarray:
        z = np.zeros_like(np.asarray(self.e1, dtype=float))
        return np.stack([np.stack([z, self.e1, self.f1], -1),
                         np.stack([-np.asarray(self.e1), z, self.g1], -1),
                         np.stack([-np.asarray(self.f1), -np.asarray(self.g1), z], -1)], -2)

    @property
    def F2(self) -> np.ndarray:
        z = np.zeros_like(np.asarray(self.e2, dtype=float))
        return np.stack([np.stack([z, self.e2, self.f2], -1),
                         np.stack([-np.asarray(self.e2), z, self.g2], -1),
                         np.stack([-np.asarray(self.f2), -np.asarray(self.g2), z], -1)], -2)

    def max_abs_diff(self, other: "BasicInvariants") -> float:
        return max(float(np.max(np.abs(np.asarray(getattr(self, k)) - getattr(other, k))))
                   for k in NAMES)

    def diffs(self, other: "BasicInvariants") -> dict:
        return {k: float(np.max(np.abs(np.asarray(getattr(self, k)) - getattr(other, k))))
                for k in NAMES}


@dataclass(frozen=True)
class CurvatureTriple:
    J: object
    K: object
    H: object


@dataclass(frozen=True)
class IntegrabilityResiduals:
    r1: object
    r2: object
    r3: object
    r4: object
    r5: object
    r6: object

    def as_tuple(self):
        return tuple(getattr(self, f.name) for f in fields(self))

    def max(self) -> float:
        return max(float(np.max(np.abs(r))) for r in self.as_tuple())


class FrontClass(enum.Enum):
    REGULAR = "Regular"
    FRONT_RANK1 = "FrontRank1"
    FRONT_RANK0 = "FrontRank0"
    NOT_FRONT_OR_UNDETERMINED = "NotFrontOrUndetermined"


# ------------------------------------------------------------------ framed maps


class FramedMap:
    """Anything that yields jets of ``(x, n, s)`` at parameter points."""

    def frame_jets(self, u, v) -> tuple[Jet1, Jet1, Jet1]:
        raise NotImplementedError

    def invariants(self, u, v, tol: float = FRAME_TOL) -> BasicInvariants:
        return basic_invariants(self, u, v, tol)

    def sample(self, grid: Grid) -> SampledSurface:
        U, V = grid.mesh()
        x, n, s = self.frame_jets(U, V)
        return SampledSurface(grid, np.asarray(x.value), np.asarray(n.value),
                              np.asarray(s.value))

    def framed_defect(self, u, v) -> float:
        """Largest violation of unit/orthogonal frame and tangency conditions."""
        x, n, s = self.frame_jets(u, v)
        tang = max(float(np.max(np.abs(dot(x.du, n.value)))),
                   float(np.max(np.abs(dot(x.dv, n.value)))))
        return max(frame_defect(n.value, s.value), tang)


def _triple(items, what) -> tuple:
    items = tuple(as_expr(e) for e in items)
    if len(items) != 3:
        raise ValueError(f"{what} needs exactly three components")
    return items


@dataclass(frozen=True)
class SurfaceDef(FramedMap):
    """A framed surface given by nine expressions."""

    name: str
    x: tuple
    n: tuple
    s: tuple
    domain: Domain
    note: str = ""

    def __post_init__(self):
        for k in ("x", "n", "s"):
            object.__setattr__(self, k, _triple(getattr(self, k), k))

    @classmethod
    def from_strings(cls, name: str, x: Sequence[str], n: Sequence[str], s: Sequence[str],
                     domain: Domain, note: str = "") -> "SurfaceDef":
        return cls(name, tuple(x), tuple(n), tuple(s), domain, note)

    def texts(self) -> dict:
        return {k: [to_text(e) for e in getattr(self, k)] for k in ("x", "n", "s")}

    def frame_jets(self, u, v):
        return tuple(jstack([eval_jet(e, u, v) for e in getattr(self, k)])
                     for k in ("x", "n", "s"))


def basic_invariants(S: FramedMap, u, v, tol: float = FRAME_TOL) -> BasicInvariants:
    """The ten basic invariants at (u, v); arrays broadcast pointwise."""
    x, n, s = S.frame_jets(u, v)
    defect = frame_defect(n.value, s.value)
    if not defect <= tol:
        raise FrameError(f"frame of {getattr(S, 'name', '') or 'surface'} is not orthonormal "
                         f"(defect {defect:.3e})")
    t = cross(n.value, s.value)
    sv = s.value
    return BasicInvariants(
        a1=dot(x.du, sv), b1=dot(x.du, t), a2=dot(x.dv, sv), b2=dot(x.dv, t),
        e1=dot(n.du, sv), f1=dot(n.du, t), g1=dot(s.du, t),
        e2=dot(n.dv, sv), f2=dot(n.dv, t), g2=dot(s.dv, t),
    )


def integrability_residuals(F, u, v, h: float = FD_STEP) -> IntegrabilityResiduals:
    """Signed residuals (left minus right) of the six compatibility equations.

    ``F`` is anything with an ``invariants(u, v)`` method: a framed map or a set
    of prescribed invariant fields.  Derivatives of the invariants are central
    differences with step ``h``.
    """
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    c = F.invariants(u, v)
    up, um = F.invariants(u + h, v), F.invariants(u - h, v)
    vp, vm = F.invariants(u, v + h), F.invariants(u, v - h)

    def du(k):
        return (getattr(up, k) - getattr(um, k)) / (2 * h)

    def dv(k):
        return (getattr(vp, k) - getattr(vm, k)) / (2 * h)

    return IntegrabilityResiduals(
        r1=dv("a1") - c.b1 * c.g2 - (du("a2") - c.b2 * c.g1),
        r2=dv("b1") - c.a2 * c.g1 - (du("b2") - c.a1 * c.g2),
        r3=c.a1 * c.e2 + c.b1 * c.f2 - (c.a2 * c.e1 + c.b2 * c.f1),
        r4=dv("e1") - c.f1 * c.g2 - (du("e2") - c.f2 * c.g1),
        r5=dv("f1") - c.e2 * c.g1 - (du("f2") - c.e1 * c.g2),
        r6=dv("g1") - c.e1 * c.f2 - (du("g2") - c.e2 * c.f1),
    )


def curvature(inv: BasicInvariants) -> CurvatureTriple:
    J = inv.a1 * inv.b2 - inv.a2 * inv.b1
    K = inv.e1 * inv.f2 - inv.e2 * inv.f1
    H = -0.5 * ((inv.a1 * inv.f2 - inv.a2 * inv.f1) - (inv.b1 * inv.e2 - inv.b2 * inv.e1))
    return CurvatureTriple(J, K, H)


def is_singular(inv: BasicInvariants, tol: float) -> bool:
    return bool(abs(curvature(inv).J) <= tol)


def classify_invariants(inv: BasicInvariants, tol: float) -> FrontClass:
    c = curvature(inv)
    if abs(c.J) > tol:
        return FrontClass.REGULAR
    rank0 = all(abs(float(g)) <= tol for g in (inv.a1, inv.b1, inv.a2, inv.b2))
    if not rank0 and abs(c.H) > tol:
        return FrontClass.FRONT_RANK1
    if rank0 and abs(c.K) > tol:
        return FrontClass.FRONT_RANK0
    return FrontClass.NOT_FRONT_OR_UNDETERMINED


def classify_front(S: FramedMap, u: float, v: float, tol: float = 1e-9) -> FrontClass:
    """Regular point, front of rank 1 or 0, or neither (by the H / K criterion)."""
    return classify_invariants(basic_invariants(S, u, v), tol)


# ---------------------------------------------------------------- frame changes


def _cross_exprs(a, b):
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def rotate_frame(S: SurfaceDef, theta) -> SurfaceDef:
    """Rotation frame ``(x, n, cos(theta) s - sin(theta) t)``.

    ``theta`` is an expression (or text), or a ``(sin, cos)`` pair of them.
    """
    if isinstance(theta, (tuple, dict)):
        pair = as_angle_field(theta)
        sn, cs = pair.sin_expr, pair.cos_expr
        label = "pair"
    else:
        th = as_expr(theta)
        sn, cs = call("sin", th), call("cos", th)
        label = to_text(th)
    t = _cross_exprs(S.n, S.s)
    s_new = tuple(cs * si - sn * ti for si, ti in zip(S.s, t))
    return SurfaceDef(f"{S.name}[rot {label}]", S.x, S.n, s_new, S.domain, S.note)


def reflect_frame(S: SurfaceDef) -> SurfaceDef:
    """Reflection frame ``(x, -n, t)``."""
    t = _cross_exprs(S.n, S.s)
    return SurfaceDef(f"{S.name}[refl]", S.x, tuple(-e for e in S.n), t, S.domain, S.note)


def rotated_invariants(inv: BasicInvariants, sin_t, cos_t, theta_u, theta_v) -> BasicInvariants:
    """Invariants of the rotation frame predicted from those of the original."""
    def rot(a, b):
        return a * cos_t - b * sin_t, a * sin_t + b * cos_t

    a1, b1 = rot(inv.a1, inv.b1)
    a2, b2 = rot(inv.a2, inv.b2)
    e1, f1 = rot(inv.e1, inv.f1)
    e2, f2 = rot(inv.e2, inv.f2)
    return BasicInvariants(a1, b1, a2, b2, e1, f1, inv.g1 - theta_u,
                           e2, f2, inv.g2 - theta_v)


def reflected_invariants(inv: BasicInvariants) -> BasicInvariants:
    return BasicInvariants(inv.b1, inv.a1, inv.b2, inv.a2,
                           -inv.f1, -inv.e1, -inv.g1, -inv.f2, -inv.e2, -inv.g2)


__all__ = [
    "NAMES", "BasicInvariants", "CurvatureTriple", "IntegrabilityResiduals", "FrontClass",
    "FramedMap", "SurfaceDef", "basic_invariants", "integrability_residuals",
    "curvature", "is_singular", "classify_invariants", "classify_front",
    "rotate_frame", "reflect_frame", "rotated_invariants", "reflected_invariants",
]
