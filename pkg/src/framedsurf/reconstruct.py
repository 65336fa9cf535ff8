"""Integrate framed surfaces from invariant fields, and test congruence.

The frame is carried as a matrix whose rows are ``n, s, t``.  Along ``u`` it
obeys ``d/du [n; s; t] = F1 [n; s; t]`` and the position ``x_u = a1 s + b1 t``;
along ``v`` the same with ``F2``, ``a2``, ``b2``.  Paths run first along ``v``
at ``u = u0`` (the spine), then along ``u`` on every row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .core import FramedPoint, Grid, SampledSurface, Domain, cross, norm
from .errors import IntegrabilityError, StepError
from .expr import as_expr, eval_jet, evaluate, to_text
from .invariants import (NAMES, BasicInvariants, FramedMap, IntegrabilityResiduals,
                         integrability_residuals)

INTEGRABILITY_TOL = 1e-6
CORRECTION_TOL = 1e-3


class InvariantFields:
    """Ten prescribed invariant fields over a domain.

    Fields come either from expressions (their derivatives are then exact) or
    from any callable returning :class:`BasicInvariants`.
    """

    def __init__(self, source: Callable, domain: Domain, exprs: Mapping | None = None):
        self._source = source
        self.domain = domain
        self.exprs = dict(exprs) if exprs is not None else None

    @classmethod
    def from_strings(cls, fields: Mapping, domain: Domain) -> "InvariantFields":
        missing = [k for k in NAMES if k not in fields]
        if missing:
            raise KeyError(f"missing invariant fields: {', '.join(missing)}")
        exprs = {k: as_expr(fields[k]) for k in NAMES}

        def source(u, v):
            u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
            return BasicInvariants(**{k: np.broadcast_to(evaluate(e, u, v), u.shape)
                                      for k, e in exprs.items()})

        return cls(source, domain, exprs)

    @classmethod
    def from_surface(cls, S: FramedMap, domain: Domain | None = None) -> "InvariantFields":
        return cls(S.invariants, domain if domain is not None else S.domain)

    def invariants(self, u, v) -> BasicInvariants:
        return self._source(u, v)

    def texts(self) -> dict | None:
        return None if self.exprs is None else {k: to_text(e) for k, e in self.exprs.items()}

    def residuals(self, u, v) -> IntegrabilityResiduals:
        if self.exprs is None:
            return integrability_residuals(self, u, v)
        j = {k: eval_jet(e, u, v) for k, e in self.exprs.items()}
        c = {k: j[k].value for k in NAMES}
        return IntegrabilityResiduals(
            r1=j["a1"].dv - c["b1"] * c["g2"] - (j["a2"].du - c["b2"] * c["g1"]),
            r2=j["b1"].dv - c["a2"] * c["g1"] - (j["b2"].du - c["a1"] * c["g2"]),
            r3=c["a1"] * c["e2"] + c["b1"] * c["f2"] - (c["a2"] * c["e1"] + c["b2"] * c["f1"]),
            r4=j["e1"].dv - c["f1"] * c["g2"] - (j["e2"].du - c["f2"] * c["g1"]),
            r5=j["f1"].dv - c["e2"] * c["g1"] - (j["f2"].du - c["e1"] * c["g2"]),
            r6=j["g1"].dv - c["e1"] * c["f2"] - (j["g2"].du - c["e2"] * c["f1"]),
        )

    def check(self, grid: Grid, tol: float = INTEGRABILITY_TOL) -> float:
        """Largest residual on the grid; raises IntegrabilityError above ``tol``."""
        U, V = grid.mesh()
        res = self.residuals(U, V)
        worst = res.max()
        if not worst <= tol:
            vals = [np.abs(np.broadcast_to(r, U.shape)) for r in res.as_tuple()]
            k = int(np.argmax([np.max(a) for a in vals]))
            i, j = np.unravel_index(int(np.argmax(vals[k])), U.shape)
            raise IntegrabilityError(
                f"compatibility residual r{k + 1} = {worst:.3e} exceeds {tol:.1e} "
                f"at (u, v) = ({U[i, j]:.4g}, {V[i, j]:.4g})")
        return worst


@dataclass(frozen=True)
class RigidMotion:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, float)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10 or abs(np.linalg.det(R) - 1) > 1e-10:
            raise ValueError("rotation is not in SO(3)")

    def apply(self, x):
        return np.asarray(x) @ self.rotation.T + self.translation

    def rotate(self, w):
        return np.asarray(w) @ self.rotation.T


@dataclass(frozen=True)
class Reconstruction(SampledSurface):
    """Sampled result plus integration diagnostics."""

    max_correction: float = 0.0
    refine: int = 1
    max_residual: float = 0.0


def _orthonormalize(M):
    """Gram-Schmidt on rows in the order n, s, then t = n x s."""
    n = M[..., 0, :] / norm(M[..., 0, :])[..., None]
    s = M[..., 1, :] - np.sum(M[..., 1, :] * n, -1)[..., None] * n
    s = s / norm(s)[..., None]
    return np.stack([n, s, cross(n, s)], axis=-2)


class _Leg:
    """Right-hand side of the frame/position system in one parameter direction."""

    def __init__(self, F, direction: str):
        self.F = F
        self.direction = direction

    def __call__(self, u, v, M):
        inv = self.F.invariants(u, v)
        if self.direction == "u":
            A, a, b = inv.F1, inv.a1, inv.b1
        else:
            A, a, b = inv.F2, inv.a2, inv.b2
        A = np.broadcast_to(A, M.shape)
        dM = A @ M
        dx = np.asarray(a)[..., None] * M[..., 1, :] + np.asarray(b)[..., None] * M[..., 2, :]
        return dM, dx


def _march(rhs: _Leg, fixed, start: float, targets, M, x, h: float, stats: dict):
    """Carry (M, x) from ``start`` through sorted ``targets``; returns stacked states.

    ``fixed`` is the other parameter (scalar or array broadcasting with the
    batch axis of ``M``).
    """
    out_M, out_x = [], []
    pos = start
    for tgt in targets:
        steps = max(1, math.ceil(abs(tgt - pos) / h - 1e-9)) if tgt != pos else 0
        if steps:
            dh = (tgt - pos) / steps
            for k in range(steps):
                p = pos + k * dh
                M, x = _rk4(rhs, fixed, p, dh, M, x, stats)
        pos = tgt
        out_M.append(M)
        out_x.append(x)
    return out_M, out_x


def _rk4(rhs, fixed, p, h, M, x, stats):
    def f(q, Mq):
        if rhs.direction == "u":
            return rhs(np.full(np.shape(fixed), q) if np.ndim(fixed) else q, fixed, Mq)
        return rhs(fixed, np.full(np.shape(fixed), q) if np.ndim(fixed) else q, Mq)

    k1M, k1x = f(p, M)
    k2M, k2x = f(p + h / 2, M + h / 2 * k1M)
    k3M, k3x = f(p + h / 2, M + h / 2 * k2M)
    k4M, k4x = f(p + h, M + h * k3M)
    M_raw = M + h / 6 * (k1M + 2 * k2M + 2 * k3M + k4M)
    x_new = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
    M_new = _orthonormalize(M_raw)
    corr = float(np.max(np.abs(M_new - M_raw)))
    stats["max_correction"] = max(stats["max_correction"], corr)
    if corr > CORRECTION_TOL:
        raise StepError(f"re-orthonormalization correction {corr:.3e} exceeds "
                        f"{CORRECTION_TOL:.0e} (step {h:.3g})")
    return M_new, x_new


def _ordered(values, start):
    """Grid values split into an increasing leg and a decreasing leg from ``start``."""
    idx = np.arange(len(values))
    up = idx[values >= start]
    down = idx[values < start][::-1]
    return up, down


def _integrate(F, seed: FramedPoint, grid: Grid, u0: float, v0: float, refine: int, stats):
    us, vs = grid.us, grid.vs
    h_u, h_v = grid.du / refine, grid.dv / refine
    M0 = np.stack([seed.n, seed.s, seed.t]).astype(float)
    x0 = np.asarray(seed.x, float)

    # spine along v at u0
    spine_M = np.empty((grid.nv, 3, 3))
    spine_x = np.empty((grid.nv, 3))
    v_leg = _Leg(F, "v")
    for part in _ordered(vs, v0):
        if len(part):
            Ms, xs = _march(v_leg, u0, v0, vs[part], M0, x0, h_v, stats)
            spine_M[part] = Ms
            spine_x[part] = xs

    # every row along u, all rows at once
    M = np.empty((grid.nu, grid.nv, 3, 3))
    x = np.empty((grid.nu, grid.nv, 3))
    u_leg = _Leg(F, "u")
    for part in _ordered(us, u0):
        if len(part):
            Ms, xs = _march(u_leg, vs, u0, us[part], spine_M, spine_x, h_u, stats)
            M[part] = np.stack(Ms)
            x[part] = np.stack(xs)
    return M, x


def reconstruct(F: InvariantFields, seed: FramedPoint, grid: Grid,
                base: tuple[float, float] | None = None, *,
                check: bool = True, tol: float = INTEGRABILITY_TOL) -> Reconstruction:
    """Framed surface with invariants ``F`` passing through ``seed`` at the base point.

    The step equals the grid spacing; a StepError triggers one retry at half
    the step before it propagates.
    """
    u0, v0 = base if base is not None else F.domain.base
    residual = F.check(grid, tol) if check else float("nan")
    last = None
    for refine in (1, 2):
        stats = {"max_correction": 0.0}
        try:
            M, x = _integrate(F, seed, grid, float(u0), float(v0), refine, stats)
        except StepError as exc:
            last = exc
            continue
        return Reconstruction(grid, x, M[..., 0, :], M[..., 1, :],
                              max_correction=stats["max_correction"], refine=refine,
                              max_residual=residual)
    raise last


def congruence(A: SampledSurface, B: SampledSurface,
               index: tuple[int, int] | None = None) -> tuple[RigidMotion, float]:
    """Rigid motion taking A's frame at the base node onto B's, and the worst misfit.

    The misfit is ``|R x_A + a - x_B| + |R n_A - n_B| + |R s_A - s_B|`` maximized
    over the grid.
    """
    if A.x.shape != B.x.shape:
        raise ValueError("surfaces are sampled on different grids")
    i, j = index if index is not None else A.grid.base_index()
    FA = np.stack([A.n[i, j], A.s[i, j], cross(A.n[i, j], A.s[i, j])])
    FB = np.stack([B.n[i, j], B.s[i, j], cross(B.n[i, j], B.s[i, j])])
    R = FB.T @ FA
    R = _orthonormalize(R.T).T if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-12 else R
    a = B.x[i, j] - R @ A.x[i, j]
    motion = RigidMotion(R, a)
    err = (norm(motion.apply(A.x) - B.x) + norm(motion.rotate(A.n) - B.n)
           + norm(motion.rotate(A.s) - B.s))
    return motion, float(np.max(err))


def seed_from(S: FramedMap, u: float, v: float) -> FramedPoint:
    x, n, s = S.frame_jets(u, v)
    return FramedPoint(np.asarray(x.value, float), np.asarray(n.value, float),
                       np.asarray(s.value, float))


__all__ = ["InvariantFields", "RigidMotion", "Reconstruction", "reconstruct",
           "congruence", "seed_from", "INTEGRABILITY_TOL", "CORRECTION_TOL"]
