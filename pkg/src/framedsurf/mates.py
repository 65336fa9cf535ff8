"""Bertrand mates of framed surfaces: conditions, solvers and constructions.

A ``(v, w)``-mate of ``(x, n, s)`` is a framed surface ``x + lambda * v`` whose
frame vector ``w`` is parallel to ``v``; ``v, w`` range over ``n, s, t``.  All
nine kinds are built here by jet arithmetic on the base surface, so the mate's
basic invariants can be recomputed from scratch and compared with the closed
forms predicted from the base invariants.

Angles enter only through ``(sin theta, cos theta)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Grid, SampledSurface, frame_defect, dot
from .errors import BranchError, GateError, NoThetaError, SpecError
from .expr import Jet1, jcross
from .fields import (AngleField, ConstantAngle, FunctionField, AngleFunction, ScalarField,
                     _Memo, as_angle_field, as_scalar_field)
from .invariants import BasicInvariants, FramedMap, basic_invariants, curvature

GATE_TOL = 1e-6
ZERO_LAMBDA_TOL = 1e-12


class MateKind(enum.Enum):
    NN = "nn"
    NS = "ns"
    NT = "nt"
    SN = "sn"
    SS = "ss"
    ST = "st"
    TN = "tn"
    TS = "ts"
    TT = "tt"

    @property
    def direction(self) -> str:
        """The base frame vector the mate is displaced along."""
        return self.value[0]

    @property
    def needs_theta(self) -> bool:
        return self not in (MateKind.NN, MateKind.SN, MateKind.TN)

    @classmethod
    def parse(cls, text) -> "MateKind":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).lower())
        except ValueError:
            raise SpecError(f"unknown mate kind {text!r}") from None


# ---------------------------------------------------------------------- frames


def _mate_frame(kind: MateKind, x, n, s, t, lam: Jet1, sn: Jet1, cs: Jet1):
    """Jets of the mate ``(x_bar, n_bar, s_bar)`` for the given kind."""
    S, C = sn.col(), cs.col()
    L = lam.col()
    disp = {"n": n, "s": s, "t": t}[kind.direction]
    xb = x + L * disp
    if kind is MateKind.NN:
        nb, sb = n, s
    elif kind is MateKind.NS:
        nb, sb = S * s + C * t, n
    elif kind is MateKind.NT:
        nb, sb = C * s - S * t, S * s + C * t
    elif kind is MateKind.SN:
        nb, sb = s, C * t - S * n
    elif kind is MateKind.SS:
        nb, sb = S * t + C * n, s
    elif kind is MateKind.ST:
        nb, sb = C * t - S * n, S * t + C * n
    elif kind is MateKind.TN:
        nb, sb = t, C * n - S * s
    elif kind is MateKind.TS:
        nb, sb = S * n + C * s, t
    else:
        nb, sb = C * n - S * s, S * n + C * s
    return xb, nb, sb


def _zero_angle_jets(shape):
    return Jet1(np.zeros(shape), 0.0, 0.0), Jet1(np.ones(shape), 0.0, 0.0)


class MateSurface(FramedMap):
    """The mate of ``base`` of a given kind, defined wherever the fields are."""

    def __init__(self, base: FramedMap, kind: MateKind, lam: ScalarField,
                 angle: AngleField | None = None, name: str = ""):
        self.base = base
        self.kind = MateKind.parse(kind)
        self.lam = as_scalar_field(lam)
        self.angle = None if angle is None else as_angle_field(angle)
        self.domain = base.domain
        self.name = name or f"{self.kind.value}-mate of {getattr(base, 'name', '')}"

    def angle_jets(self, u, v):
        if self.angle is None:
            return _zero_angle_jets(np.broadcast_shapes(np.shape(u), np.shape(v)))
        return self.angle.sincos(u, v)

    def frame_jets(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        x, n, s = self.base.frame_jets(u, v)
        t = jcross(n, s)
        lam = self.lam.jet(u, v).broadcast(u.shape)
        sn, cs = self.angle_jets(u, v)
        return _mate_frame(self.kind, x, n, s, t, lam, sn.broadcast(u.shape),
                           cs.broadcast(u.shape))


# ----------------------------------------------------------- conditions, formulas


def condition_rows(kind: MateKind, inv: BasicInvariants, lam: Jet1, sn, cs):
    """The two residuals of the existence condition for ``kind``.

    For NN these are the partials of lambda; for SN and TN they are the gate
    determinant and the size of the lambda-gradient mismatch.
    """
    kind = MateKind.parse(kind)
    L = lam.value
    i = inv
    if kind is MateKind.NN:
        return lam.du, lam.dv
    if kind is MateKind.SN:
        return (i.b1 * i.g2 - i.b2 * i.g1,
                np.hypot(lam.du + i.a1, lam.dv + i.a2))
    if kind is MateKind.TN:
        return (i.g1 * i.a2 - i.g2 * i.a1,
                np.hypot(lam.du + i.b1, lam.dv + i.b2))

    def rows(fn):
        return (fn(i.a1, i.b1, i.e1, i.f1, i.g1), fn(i.a2, i.b2, i.e2, i.f2, i.g2))

    table = {
        MateKind.NS: lambda a, b, e, f, g: (a + L * e) * sn + (b + L * f) * cs,
        MateKind.NT: lambda a, b, e, f, g: -(a + L * e) * cs + (b + L * f) * sn,
        MateKind.SS: lambda a, b, e, f, g: (b + L * g) * sn - L * e * cs,
        MateKind.ST: lambda a, b, e, f, g: L * e * sn + (b + L * g) * cs,
        MateKind.TS: lambda a, b, e, f, g: -L * f * sn + (a - L * g) * cs,
        MateKind.TT: lambda a, b, e, f, g: L * f * cs + (a - L * g) * sn,
    }
    return rows(table[kind])


def predicted_invariants(kind: MateKind, inv: BasicInvariants, lam: Jet1, sn, cs,
                         th_u, th_v) -> BasicInvariants:
    """Closed-form basic invariants of a mate in terms of those of the base."""
    kind = MateKind.parse(kind)
    L = lam.value

    def each(fn):
        r1 = fn(inv.a1, inv.b1, inv.e1, inv.f1, inv.g1, lam.du, th_u)
        r2 = fn(inv.a2, inv.b2, inv.e2, inv.f2, inv.g2, lam.dv, th_v)
        return BasicInvariants(r1[0], r1[1], r2[0], r2[1], r1[2], r1[3], r1[4],
                               r2[2], r2[3], r2[4])

    S, C = sn, cs
    if kind is MateKind.NN:
        return each(lambda a, b, e, f, g, l, th: (a + L * e, b + L * f, e, f, g))
    if kind is MateKind.NS:
        return each(lambda a, b, e, f, g, l, th: (
            l, (a + L * e) * C - (b + L * f) * S,
            -e * S - f * C, th - g, e * C - f * S))
    if kind is MateKind.NT:
        return each(lambda a, b, e, f, g, l, th: (
            (a + L * e) * S + (b + L * f) * C, l,
            g - th, -e * C + f * S, -e * S - f * C))
    if kind is MateKind.SN:
        return each(lambda a, b, e, f, g, l, th: (
            (b + L * g) * C + L * e * S, (b + L * g) * S - L * e * C,
            e * S + g * C, -e * C + g * S, -f - th))
    if kind is MateKind.SS:
        return each(lambda a, b, e, f, g, l, th: (
            a + l, (b + L * g) * C + L * e * S,
            -g * S + e * C, th + f, g * C + e * S))
    if kind is MateKind.ST:
        return each(lambda a, b, e, f, g, l, th: (
            -L * e * C + (b + L * g) * S, a + l,
            -th - f, -g * C - e * S, -g * S + e * C))
    if kind is MateKind.TN:
        return each(lambda a, b, e, f, g, l, th: (
            -(a - L * g) * S - L * f * C, (a - L * g) * C - L * f * S,
            -f * C + g * S, -f * S - g * C, e - th))
    if kind is MateKind.TS:
        return each(lambda a, b, e, f, g, l, th: (
            b + l, -L * f * C - (a - L * g) * S,
            f * S + g * C, th - e, -f * C + g * S))
    return each(lambda a, b, e, f, g, l, th: (
        -L * f * S + (a - L * g) * C, b + l,
        e - th, f * C - g * S, f * S + g * C))


# ------------------------------------------------------------------- spec, result


@dataclass
class MateSpec:
    """A mate request as written in a scene file.

    ``lam`` and ``theta`` keep their source form (text, number, ``{"sin", "cos"}``
    or field objects); ``None`` means "solve" (caustics) or "integrate"
    (SN/TN involutes).
    """

    kind: MateKind
    lam: object = None
    theta: object = None
    base: tuple | None = None
    c: float = 0.0
    name: str = ""
    surface: str = ""

    def __post_init__(self):
        self.kind = MateKind.parse(self.kind)

    def lam_field(self) -> ScalarField:
        if self.lam is None:
            raise SpecError(f"mate {self.name or self.kind.value}: lambda is required")
        return as_scalar_field(self.lam)

    def angle_field(self) -> AngleField | None:
        if self.theta is None:
            if self.kind.needs_theta:
                raise SpecError(f"mate {self.name or self.kind.value}: theta is required")
            return None
        return as_angle_field(self.theta)


def condition_residual(inv: BasicInvariants, spec: MateSpec, u, v):
    """Residual pair of the existence condition of ``spec`` at (u, v)."""
    lam = spec.lam_field().jet(u, v)
    angle = spec.angle_field()
    if angle is None:
        sn, cs = _zero_angle_jets(np.shape(lam.value))
    else:
        sn, cs = angle.sincos(u, v)
    return condition_rows(spec.kind, inv, lam, sn.value, cs.value)


@dataclass
class MateResult:
    """A mate sampled on a grid with its predicted and recomputed invariants."""

    kind: MateKind
    surface: MateSurface
    grid: Grid
    sampled: SampledSurface
    lam: np.ndarray
    theta: np.ndarray
    predicted: BasicInvariants
    recomputed: BasicInvariants
    residuals: tuple
    framed_defect: float
    extras: dict = field(default_factory=dict)

    @property
    def prediction_error(self) -> float:
        return self.recomputed.max_abs_diff(self.predicted)

    @property
    def condition_error(self) -> float:
        return max(float(np.max(np.abs(r))) for r in self.residuals)


def _check_lambda_nonzero(lam: np.ndarray, grid: Grid):
    small = np.abs(lam) <= ZERO_LAMBDA_TOL
    cells = small[:-1, :-1] & small[1:, :-1] & small[:-1, 1:] & small[1:, 1:]
    if np.any(cells):
        i, j = np.argwhere(cells)[0]
        raise SpecError(f"lambda vanishes on the grid cell at "
                        f"(u, v) = ({grid.us[i]:.4g}, {grid.vs[j]:.4g})")


def evaluate_mate(mate: MateSurface, grid: Grid, gate_tol: float | None = None,
                  check_nonzero: bool = True) -> MateResult:
    """Sample a mate and compare its recomputed invariants with the prediction.

    With ``gate_tol`` set, a ``GateError`` is raised when the existence
    condition fails anywhere on the grid by more than that amount.
    """
    U, V = grid.mesh()
    base_inv = basic_invariants(mate.base, U, V)
    lam = mate.lam.jet(U, V).broadcast(U.shape)
    sn, cs = mate.angle_jets(U, V)
    sn, cs = sn.broadcast(U.shape), cs.broadcast(U.shape)
    th_u = cs.value * sn.du - sn.value * cs.du
    th_v = cs.value * sn.dv - sn.value * cs.dv
    res = condition_rows(mate.kind, base_inv, lam, sn.value, cs.value)
    worst = max(float(np.max(np.abs(r))) for r in res)
    if gate_tol is not None and not worst <= gate_tol:
        raise GateError(f"{mate.kind.value} condition fails on {mate.base.name or 'surface'}:"
                        f" residual {worst:.3e} > {gate_tol:.1e}")
    if check_nonzero and mate.kind is not MateKind.NN:
        _check_lambda_nonzero(lam.value, grid)
    x, n, s = mate.frame_jets(U, V)
    recomputed = basic_invariants(mate, U, V)
    tang = max(float(np.max(np.abs(dot(x.du, n.value)))),
               float(np.max(np.abs(dot(x.dv, n.value)))))
    return MateResult(
        kind=mate.kind, surface=mate, grid=grid,
        sampled=SampledSurface(grid, x.value, n.value, s.value),
        lam=lam.value, theta=np.arctan2(sn.value, cs.value),
        predicted=predicted_invariants(mate.kind, base_inv, lam, sn.value, cs.value,
                                       th_u, th_v),
        recomputed=recomputed, residuals=res,
        framed_defect=max(frame_defect(n.value, s.value), tang),
    )


# --------------------------------------------------------------------- parallel


def parallel_mate(S: FramedMap, lam: float, grid: Grid) -> MateResult:
    """``(x + lambda n, n, s)`` for a nonzero constant lambda."""
    if lam == 0:
        raise SpecError("a parallel mate needs lambda != 0")
    return evaluate_mate(MateSurface(S, MateKind.NN, float(lam)), grid)


# ---------------------------------------------------------------- caustic solve


class AllLambda:
    """Marker: every lambda solves the caustic equation at this point."""

    def __repr__(self):
        return "ALL_LAMBDA"


ALL_LAMBDA = AllLambda()
_ZERO = 1e-12
_HUGE = 1e12


def _quadratic_roots(K, H, J):
    """Vectorized real roots of ``K l^2 - 2 H l + J = 0``.

    Returns ``(lo, hi, all_mask)``; missing roots are NaN and a single root
    sits in ``lo``.
    """
    K, H, J = (np.asarray(a, float) for a in np.broadcast_arrays(K, H, J))
    scale = np.maximum.reduce([np.abs(K), np.abs(H), np.abs(J)])
    all_mask = scale <= _ZERO
    lo = np.full(K.shape, np.nan)
    hi = np.full(K.shape, np.nan)
    with np.errstate(all="ignore"):
        linear = (np.abs(K) <= _ZERO * np.maximum(scale, 1.0)) & ~all_mask
        lin_ok = linear & (np.abs(H) > _ZERO * scale)
        lo = np.where(lin_ok, J / (2 * H), lo)

        quad = ~linear & ~all_mask
        disc = H * H - K * J
        tiny = _ZERO * np.maximum(H * H, np.abs(K * J))
        disc = np.where(quad & (disc < 0) & (disc >= -tiny), 0.0, disc)
        ok = quad & (disc >= 0)
        q = H + np.copysign(np.sqrt(np.where(ok, disc, 0.0)), H)
        r1 = q / K
        r2 = np.where(q != 0, J / q, r1)
        a = np.minimum(r1, r2)
        b = np.maximum(r1, r2)
        lo = np.where(ok, a, lo)
        hi = np.where(ok & (b != a), b, hi)
    lo = np.where(np.abs(lo) > _HUGE, np.nan, lo)
    hi = np.where(np.abs(hi) > _HUGE, np.nan, hi)
    # keep a lone finite root in ``lo``
    swap = np.isnan(lo) & ~np.isnan(hi)
    lo, hi = np.where(swap, hi, lo), np.where(swap, np.nan, hi)
    return lo, hi, all_mask


def solve_caustic_lambda(inv: BasicInvariants):
    """Real roots of ``det(G + lambda [e f]) = 0`` at a point, sorted.

    The expanded determinant is ``K lambda^2 - 2 H lambda + J``.  Returns
    ``ALL_LAMBDA`` when the quadratic vanishes identically.
    """
    c = curvature(inv)
    lo, hi, all_mask = _quadratic_roots(c.K, c.H, c.J)
    if bool(all_mask):
        return ALL_LAMBDA
    return [float(r) for r in (lo, hi) if not np.isnan(r)]


def _caustic_matrix(inv: BasicInvariants, lam):
    return (inv.a1 + lam * inv.e1, inv.b1 + lam * inv.f1,
            inv.a2 + lam * inv.e2, inv.b2 + lam * inv.f2)


def _theta_candidates(inv: BasicInvariants, lam, ref, zero_tol: float, rank_tol: float):
    """Vectorized kernel angles with the pi ambiguity resolved against ``ref``.

    Returns ``(theta, rank2_mask)``; where the matrix vanishes theta = ref.
    """
    m11, m12, m21, m22 = (np.asarray(a, float) for a in _caustic_matrix(inv, lam))
    n1 = np.hypot(m11, m12)
    n2 = np.hypot(m21, m22)
    use1 = n1 >= n2
    p = np.where(use1, m11, m21)
    q = np.where(use1, m12, m22)
    big = np.maximum(n1, n2)
    theta0 = np.arctan2(-q, p)
    ref = np.broadcast_to(np.asarray(ref, float), theta0.shape)
    theta = theta0 + math.pi * np.round((ref - theta0) / math.pi)
    zero = big <= zero_tol
    theta = np.where(zero, ref, theta)
    frob2 = n1 * n1 + n2 * n2
    with np.errstate(all="ignore"):
        rel = np.abs(m11 * m22 - m12 * m21) / np.where(frob2 > 0, frob2, 1.0)
    rank2 = ~zero & (rel > rank_tol)
    return theta, rank2


def _seed_theta(theta):
    """Representative in (-pi/2, pi/2]."""
    t = theta - math.pi * np.ceil(theta / math.pi - 0.5)
    return t


def solve_caustic_theta(inv: BasicInvariants, lam: float, prev_theta: float | None = None,
                        tol: float = 1e-12, rank_tol: float = 1e-8) -> float:
    """Kernel angle of ``G + lambda [e f]``: both rows must annihilate (sin, cos)."""
    ref = 0.0 if prev_theta is None else prev_theta
    theta, rank2 = _theta_candidates(inv, lam, ref, tol, rank_tol)
    if bool(rank2):
        raise NoThetaError(f"caustic matrix has rank 2 at lambda = {lam:.6g}")
    theta = float(theta)
    if prev_theta is None and not (np.asarray(_caustic_matrix(inv, lam)) == 0).all():
        theta = float(_seed_theta(theta))
    return theta


@dataclass
class CausticBranch:
    """A tracked continuous (lambda, theta) branch of the caustic equation."""

    surface: FramedMap
    grid: Grid
    lam: np.ndarray
    theta: np.ndarray
    holes: int = 0

    def __post_init__(self):
        pts = (self.grid.us, self.grid.vs)
        self._lam_ref = RegularGridInterpolator(pts, self.lam, bounds_error=False,
                                                fill_value=None)
        self._theta_ref = RegularGridInterpolator(pts, self.theta, bounds_error=False,
                                                  fill_value=None)
        U, V = self.grid.mesh()
        c = curvature(basic_invariants(self.surface, U, V))
        self._side = RegularGridInterpolator(pts, _root_side(self.lam, c.K, c.H),
                                             bounds_error=False, fill_value=None)
        self._memo = _Memo()

    def solve_at(self, u, v):
        """(lambda, theta) at arbitrary points, on the branch nearest the grid one."""
        return self._memo.get(u, v, self._solve)

    def _solve(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        pts = np.stack([u.ravel(), v.ravel()], -1)
        lam_ref = self._lam_ref(pts).reshape(u.shape)
        th_ref = self._theta_ref(pts).reshape(u.shape)
        inv = basic_invariants(self.surface, u, v)
        c = curvature(inv)
        lo, hi, all_mask = _quadratic_roots(c.K, c.H, c.J)
        lam = _nearest(lo, hi, lam_ref)
        # where the surrounding grid nodes agree on the side of the vertex,
        # that side identifies the branch better than the interpolated value
        side = self._side(pts).reshape(u.shape)
        agree = (np.abs(side) > 1 - 1e-12) & ~np.isnan(hi)
        s_lo, s_hi = _root_side(lo, c.K, c.H), _root_side(hi, c.K, c.H)
        by_side = np.where(s_lo == np.sign(side), lo, np.where(s_hi == np.sign(side), hi, lam))
        lam = np.where(agree, by_side, lam)
        lam = np.where(all_mask, lam_ref, lam)
        if np.any(np.isnan(lam)):
            raise BranchError("caustic branch leaves the real roots near the grid")
        theta, _ = _theta_candidates(inv, lam, th_ref, 1e-12, 1e-8)
        return lam, theta

    def lam_field(self) -> ScalarField:
        return FunctionField(lambda u, v: self.solve_at(u, v)[0])

    def theta_field(self) -> AngleField:
        return AngleFunction(lambda u, v: self.solve_at(u, v)[1])


def _root_side(lam, K, H):
    """+1 or -1 by the side of ``H / K`` the root lies on; 0 where K vanishes."""
    with np.errstate(invalid="ignore"):
        side = np.sign(np.asarray(lam) * K - H)
    return np.where(np.abs(K) <= _ZERO, 0.0, np.nan_to_num(side))


def _nearest(lo, hi, ref):
    d_lo = np.abs(lo - ref)
    d_hi = np.abs(hi - ref)
    pick_hi = np.isnan(lo) | (~np.isnan(hi) & (d_hi < d_lo))
    return np.where(pick_hi, hi, lo)


def _roots_at(S: FramedMap, u: float, v: float):
    c = curvature(basic_invariants(S, u, v))
    lo, hi, all_mask = _quadratic_roots(c.K, c.H, c.J)
    if bool(all_mask):
        return None
    return [float(r) for r in (lo, hi) if not np.isnan(r)]


def _follow(S, p0, lam0, p1, cand, depth: int = 0, max_depth: int = 24):
    """Nearest-root continuation from ``p0`` to ``p1``, bisecting fast steps.

    A step is accepted when the change of lambda is small against the gap
    between the roots at the target; otherwise the segment is halved and the
    branch is followed through the midpoint first.
    """
    pick = min(cand, key=lambda r: abs(r - lam0))
    gap = abs(cand[0] - cand[1]) if len(cand) == 2 else math.inf
    if abs(pick - lam0) <= 0.1 * gap or depth >= max_depth:
        return pick
    mid = (0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1]))
    mid_cand = _roots_at(S, *mid)
    if not mid_cand:
        return pick
    lam_mid = _follow(S, p0, lam0, mid, mid_cand, depth + 1, max_depth)
    return _follow(S, mid, lam_mid, p1, cand, depth + 1, max_depth)


def track_caustic(S: FramedMap, grid: Grid, rank_tol: float = 1e-8) -> CausticBranch:
    """Solve the caustic equation on the grid and follow one continuous branch.

    The seed at grid corner (0, 0) is the root of smaller magnitude; every
    later point takes the root nearest to its predecessor in a row-by-row
    sweep (row = fixed v), with steps bisected where the branch moves fast.
    Points where every lambda works are filled from their neighbours
    afterwards.
    """
    U, V = grid.mesh()
    inv = basic_invariants(S, U, V)
    c = curvature(inv)
    lo, hi, all_mask = _quadratic_roots(c.K, c.H, c.J)
    nu, nv = U.shape
    lam = np.full((nu, nv), np.nan)
    row_ref = row_pt = None
    for j in range(nv):
        prev, first = row_ref, None
        prev_pt = row_pt
        for i in range(nu):
            if all_mask[i, j]:
                continue
            cand = [r for r in (lo[i, j], hi[i, j]) if not np.isnan(r)]
            if not cand:
                raise BranchError(f"no real caustic root at (u, v) = "
                                  f"({U[i, j]:.4g}, {V[i, j]:.4g})")
            if prev is None:
                pick = min(cand, key=abs)
            else:
                pick = _follow(S, prev_pt, prev, (U[i, j], V[i, j]), cand)
            prev_pt = (U[i, j], V[i, j])
            lam[i, j] = prev = pick
            if first is None:
                first, first_pt = pick, prev_pt
        if first is not None:
            row_ref, row_pt = first, first_pt
    holes = np.argwhere(np.isnan(lam))
    for i, j in holes:
        nb = [lam[a, b] for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1))
              if 0 <= a < nu and 0 <= b < nv and not np.isnan(lam[a, b])]
        if len(nb) < 2 or any(all_mask[a, b] for a, b in
                              ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1))
                              if 0 <= a < nu and 0 <= b < nv):
            raise BranchError(f"lambda is undetermined on a region around "
                              f"(u, v) = ({U[i, j]:.4g}, {V[i, j]:.4g})")
        lam[i, j] = float(np.mean(nb))

    theta = np.zeros((nu, nv))
    row_ref = None
    for j in range(nv):
        prev = row_ref
        for i in range(nu):
            pt = inv.map(lambda a: a[i, j])
            th, rank2 = _theta_candidates(pt, lam[i, j], 0.0 if prev is None else prev,
                                          1e-12, rank_tol)
            if rank2 and not all_mask[i, j]:
                raise NoThetaError(f"caustic matrix has rank 2 at (u, v) = "
                                   f"({U[i, j]:.4g}, {V[i, j]:.4g})")
            th = float(th) if prev is not None else float(_seed_theta(th))
            theta[i, j] = prev = th
            if i == 0:
                row_ref = th
    return CausticBranch(S, grid, lam, theta, holes=len(holes))


# ------------------------------------------------------------------ constructors


def caustic(S: FramedMap, variant: str, grid: Grid, lam=None, theta=None,
            theta_shift: float = math.pi / 2, gate_tol: float = GATE_TOL) -> MateResult:
    """Caustic ``C^s`` (variant ``"s"``) or ``C^t`` (variant ``"t"``).

    Without ``lam`` the caustic equation is solved and tracked over the grid;
    the t-variant then uses ``theta_ns + theta_shift``.  A prescribed
    ``(lam, theta)`` is checked against the existence condition instead.
    """
    if variant not in ("s", "t"):
        raise SpecError(f"caustic variant must be 's' or 't', not {variant!r}")
    kind = MateKind.NS if variant == "s" else MateKind.NT
    branch = None
    if lam is None:
        if theta is not None:
            raise SpecError("theta without lambda is not supported for caustics")
        branch = track_caustic(S, grid)
        lam_f = branch.lam_field()
        ang = branch.theta_field()
        if variant == "t":
            ang = ang + ConstantAngle(theta_shift)
    else:
        if theta is None:
            raise SpecError("a prescribed caustic lambda needs theta as well")
        lam_f, ang = as_scalar_field(lam), as_angle_field(theta)
    res = evaluate_mate(MateSurface(S, kind, lam_f, ang, name=f"C^{variant}"), grid,
                        gate_tol=gate_tol)
    res.extras["branch"] = branch
    return res


class InvoluteLambda(ScalarField):
    """``-(path integral of a) + c`` (variant s) or the same with ``b`` (variant t).

    The path runs from the base point along v at ``u = u0``, then along u.
    Each leg uses composite Simpson starting from ``refine`` panels per grid
    spacing and doubling the panel count until successive results agree to
    ``tol`` (relative).
    The partials follow from the fundamental theorem of calculus together
    with the integrability gate: ``lambda_u = -a1``, ``lambda_v = -a2``.
    """

    def __init__(self, S: FramedMap, variant: str, base, c: float = 0.0,
                 spacing=(0.1, 0.1), refine: int = 4, tol: float = 1e-10,
                 max_panels: int = 1 << 12):
        self.S = S
        self.key = ("a1", "a2") if variant == "s" else ("b1", "b2")
        self.base = (float(base[0]), float(base[1]))
        self.c = float(c)
        self.spacing = spacing
        self.refine = refine
        self.tol = tol
        self.max_panels = max_panels
        self._memo = _Memo()

    def _integrand(self, which, u, v):
        inv = basic_invariants(self.S, u, v)
        return getattr(inv, self.key[which])

    def _simpson(self, which, a, b, f, along_u: bool, N):
        """Composite Simpson on many legs at once; ``N`` panels per leg (even)."""
        counts = N + 1
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        k = np.arange(counts.sum()) - np.repeat(starts, counts)
        n_rep = np.repeat(N, counts)
        w = np.where((k == 0) | (k == n_rep), 1.0, np.where(k % 2 == 1, 4.0, 2.0))
        nodes = np.repeat(a, counts) + np.repeat(b - a, counts) * (k / n_rep)
        ff = np.repeat(f, counts)
        vals = (self._integrand(which, nodes, ff) if along_u
                else self._integrand(which, ff, nodes))
        return (b - a) / (3 * N) * np.add.reduceat(vals * w, starts)

    def _leg(self, which, start, end, fixed, along_u: bool, h: float):
        start = np.broadcast_to(start, end.shape).astype(float)
        out = np.zeros(end.shape)
        span = np.abs(end - start)
        N = 2 * np.maximum(1, np.ceil(self.refine * span / h / 2)).astype(int)
        idx = np.flatnonzero(span > 0)
        if not idx.size:
            return out
        N = N[idx]
        coarse = self._simpson(which, start[idx], end[idx], fixed[idx], along_u, N)
        while idx.size:
            N = 2 * N
            fine = self._simpson(which, start[idx], end[idx], fixed[idx], along_u, N)
            out[idx] = fine
            bad = (np.abs(fine - coarse) > self.tol * (1.0 + np.abs(fine))) & \
                (N < self.max_panels)
            idx, coarse, N = idx[bad], fine[bad], N[bad]
        return out

    def _values(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        flat_u, flat_v = u.ravel(), v.ravel()
        u0, v0 = self.base
        hu, hv = self.spacing
        leg_v = self._leg(1, v0, flat_v, np.full(flat_v.shape, u0), False, hv)
        leg_u = self._leg(0, u0, flat_u, flat_v, True, hu)
        return (-(leg_u + leg_v) + self.c).reshape(u.shape)

    def value(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return self._memo.get(u, v, self._values)

    def jet(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        inv = basic_invariants(self.S, u, v)
        return Jet1(self.value(u, v), -getattr(inv, self.key[0]), -getattr(inv, self.key[1]))


def involute_gate(S: FramedMap, variant: str, grid: Grid) -> float:
    """Largest |det(b, g)| (variant s) or |det(g, a)| (variant t) on the grid."""
    U, V = grid.mesh()
    i = basic_invariants(S, U, V)
    d = i.b1 * i.g2 - i.b2 * i.g1 if variant == "s" else i.g1 * i.a2 - i.g2 * i.a1
    return float(np.max(np.abs(d)))


def involute(S: FramedMap, variant: str, grid: Grid, theta=0.0, base=None,
             offset: float = 0.0, gate_tol: float = GATE_TOL, refine: int = 4) -> MateResult:
    """Involute ``I^s`` (variant ``"s"``) or ``I^t`` (variant ``"t"``)."""
    if variant not in ("s", "t"):
        raise SpecError(f"involute variant must be 's' or 't', not {variant!r}")
    gate = involute_gate(S, variant, grid)
    if not gate <= gate_tol:
        which = "det(b, g)" if variant == "s" else "det(g, a)"
        raise GateError(f"involute gate {which} = {gate:.3e} exceeds {gate_tol:.1e}")
    base = tuple(S.domain.base) if base is None else tuple(base)
    lam = InvoluteLambda(S, variant, base, offset, (grid.du, grid.dv), refine)
    kind = MateKind.SN if variant == "s" else MateKind.TN
    mate = MateSurface(S, kind, lam, as_angle_field(theta), name=f"I^{variant}")
    res = evaluate_mate(mate, grid)
    res.extras["gate"] = gate
    return res


def tangential(S: FramedMap, variant: str, grid: Grid, lam, theta,
               gate_tol: float = GATE_TOL) -> MateResult:
    """Tangential direction surface ``S^t`` (``"s_t"``) or ``T^s`` (``"t_s"``)."""
    kinds = {"s_t": MateKind.ST, "t_s": MateKind.TS}
    if variant not in kinds:
        raise SpecError(f"tangential variant must be 's_t' or 't_s', not {variant!r}")
    mate = MateSurface(S, kinds[variant], as_scalar_field(lam), as_angle_field(theta),
                       name="S^t" if variant == "s_t" else "T^s")
    return evaluate_mate(mate, grid, gate_tol=gate_tol)


def build_mate(S: FramedMap, spec: MateSpec, grid: Grid, gate_tol: float = GATE_TOL,
               theta_shift: float = math.pi / 2) -> MateResult:
    """Construct the mate described by ``spec`` (dispatch on its kind)."""
    k = spec.kind
    if k is MateKind.NN:
        lam = spec.lam_field()
        res = evaluate_mate(MateSurface(S, k, lam), grid, gate_tol=gate_tol)
        if float(np.max(np.abs(res.lam))) == 0.0:
            raise SpecError("a parallel mate needs lambda != 0")
        return res
    if k in (MateKind.NS, MateKind.NT):
        variant = "s" if k is MateKind.NS else "t"
        if spec.lam is None:
            return caustic(S, variant, grid, theta_shift=theta_shift, gate_tol=gate_tol)
        return caustic(S, variant, grid, spec.lam, spec.angle_field(), gate_tol=gate_tol)
    if k in (MateKind.SN, MateKind.TN):
        variant = "s" if k is MateKind.SN else "t"
        theta = spec.theta if spec.theta is not None else 0.0
        if spec.lam is None:
            return involute(S, variant, grid, theta, spec.base, spec.c, gate_tol)
        mate = MateSurface(S, k, spec.lam_field(), as_angle_field(theta))
        return evaluate_mate(mate, grid, gate_tol=gate_tol)
    mate = MateSurface(S, k, spec.lam_field(), spec.angle_field(),
                       name=spec.name or k.value)
    return evaluate_mate(mate, grid, gate_tol=gate_tol)


# ------------------------------------------------------------------ composition

PIPELINES = ("Cs∘Is", "Is∘Cs", "Ts∘St", "St∘Ts", "Ct∘It", "It∘Ct")
_ASCII = {p.replace("∘", ""): p for p in PIPELINES}
_ASCII.update({p.replace("∘", "o"): p for p in PIPELINES})
_ASCII.update({p.replace("∘", "-"): p for p in PIPELINES})


def normalize_pipeline(name: str) -> str:
    if name in PIPELINES:
        return name
    try:
        return _ASCII[name.replace(" ", "")]
    except KeyError:
        raise SpecError(f"unknown pipeline {name!r}; choose from {PIPELINES}") from None


@dataclass
class ComposeReport:
    pipeline: str
    max_dx: float
    max_dn: float
    max_ds: float
    output: MateResult
    expected: SampledSurface
    stages: list

    @property
    def max_deviation(self) -> float:
        return max(self.max_dx, self.max_dn, self.max_ds)


def _deviation(a: SampledSurface, b: SampledSurface):
    def m(p, q):
        return float(np.max(np.linalg.norm(p - q, axis=-1)))
    return m(a.x, b.x), m(a.n, b.n), m(a.s, b.s)


def compose_check(S: FramedMap, pipeline: str, grid: Grid, *, theta=None, lam=None,
                  base=None, offset: float = 0.0, outer_lam=None, outer_theta=None,
                  gate_tol: float = GATE_TOL) -> ComposeReport:
    """Run a two-step pipeline and measure its distance from the predicted result.

    ``theta``/``lam`` parametrize the inner step (the involute angle, the
    tangential surface data, or a prescribed caustic).  By default the outer
    step uses the negated inner data, which the composition identities
    require; ``outer_lam``/``outer_theta`` override that, and the prediction
    then becomes the (s, s)- or (t, t)-mate with the summed parameters.
    """
    p = normalize_pipeline(pipeline)
    if p in ("Cs∘Is", "Ct∘It"):
        v = "s" if p == "Cs∘Is" else "t"
        inner = involute(S, v, grid, theta if theta is not None else 0.0, base, offset,
                         gate_tol)
        lam_in = inner.surface.lam
        ang_in = inner.surface.angle
        lam_out = -lam_in if outer_lam is None else as_scalar_field(outer_lam)
        ang_out = -ang_in if outer_theta is None else as_angle_field(outer_theta)
        outer = caustic(inner.surface, v, grid, lam_out, ang_out, gate_tol=gate_tol)
        kind = MateKind.SS if v == "s" else MateKind.TT
        expected_map = MateSurface(S, kind, lam_out + lam_in, ang_out + ang_in)
    elif p in ("Is∘Cs", "It∘Ct"):
        v = "s" if p == "Is∘Cs" else "t"
        if lam is None:
            inner = caustic(S, v, grid, gate_tol=gate_tol)
        else:
            inner = caustic(S, v, grid, lam, theta, gate_tol=gate_tol)
        ang_out = -inner.surface.angle if outer_theta is None else as_angle_field(outer_theta)
        outer = involute(inner.surface, v, grid, ang_out, base, offset, gate_tol)
        b = tuple(S.domain.base) if base is None else tuple(base)
        shift = float(inner.surface.lam.value(np.array(b[0]), np.array(b[1]))) + offset
        expected_map = MateSurface(S, MateKind.NN, shift)
    else:
        first, second = ("s_t", "t_s") if p == "Ts∘St" else ("t_s", "s_t")
        if lam is None or theta is None:
            raise SpecError(f"{p} needs lam and theta for the inner step")
        inner = tangential(S, first, grid, lam, theta, gate_tol)
        lam_out = -inner.surface.lam if outer_lam is None else as_scalar_field(outer_lam)
        ang_out = -inner.surface.angle if outer_theta is None else as_angle_field(outer_theta)
        outer = tangential(inner.surface, second, grid, lam_out, ang_out, gate_tol)
        expected_map = None
    expected = S.sample(grid) if expected_map is None else expected_map.sample(grid)
    dx, dn, ds = _deviation(outer.sampled, expected)
    return ComposeReport(p, dx, dn, ds, outer, expected, [inner, outer])
