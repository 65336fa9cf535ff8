"""Scalar and angle fields over the parameter plane.

A scalar field returns a :class:`~framedsurf.expr.Jet1` for array arguments.
Angle fields return the jets of ``sin theta`` and ``cos theta``; angles are never
differentiated through ``atan2``, which keeps the pair form (an angle known only
through its sine and cosine) on equal footing with an explicit expression.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Callable

import numpy as np

from .errors import FrameError
from .expr import Expr, Jet1, as_expr, eval_jet, evaluate, to_text
from . import expr as X

FD_STEP = 1e-5


def central_jet(fn: Callable, u, v, h: float = FD_STEP) -> Jet1:
    """Jet of a numeric function by central differences."""
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    val = np.asarray(fn(u, v), dtype=float)
    fu = (np.asarray(fn(u + h, v)) - np.asarray(fn(u - h, v))) / (2 * h)
    fv = (np.asarray(fn(u, v + h)) - np.asarray(fn(u, v - h))) / (2 * h)
    return Jet1(val, fu, fv)


class _Memo:
    """Tiny cache keyed by the argument arrays; repeated grid sweeps hit it."""

    def __init__(self, size: int = 16):
        self.size = size
        self.data: OrderedDict = OrderedDict()

    def get(self, u, v, compute):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        key = (u.shape, u.tobytes(), v.shape, v.tobytes())
        if key in self.data:
            self.data.move_to_end(key)
            return self.data[key]
        out = compute(u, v)
        self.data[key] = out
        if len(self.data) > self.size:
            self.data.popitem(last=False)
        return out


# ------------------------------------------------------------------ scalar fields


class ScalarField:
    def jet(self, u, v) -> Jet1:
        raise NotImplementedError

    def value(self, u, v):
        return self.jet(u, v).value

    def __neg__(self):
        return _Combo(self, None, -1.0, 0.0)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return _Combo(self, None, 1.0, float(other))
        return _Combo(self, as_scalar_field(other), 1.0, 0.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-as_scalar_field(other))

    @property
    def text(self) -> str | None:
        """Expression text when the field has one (for serialization)."""
        return None


class ExprField(ScalarField):
    def __init__(self, expr):
        self.expr: Expr = as_expr(expr)

    def jet(self, u, v):
        j = eval_jet(self.expr, u, v)
        return j

    def value(self, u, v):
        return evaluate(self.expr, u, v)

    def __neg__(self):
        return ExprField(-self.expr)

    def __add__(self, other):
        if isinstance(other, ExprField):
            return ExprField(self.expr + other.expr)
        if isinstance(other, (int, float)):
            return ExprField(self.expr + other)
        return super().__add__(other)

    @property
    def text(self):
        return to_text(self.expr)

    def __repr__(self):
        return f"ExprField({self.text!r})"


class FunctionField(ScalarField):
    """Numeric field; jets from an explicit jet function or central differences."""

    def __init__(self, fn: Callable, jet_fn: Callable | None = None, h: float = FD_STEP):
        self.fn = fn
        self.jet_fn = jet_fn
        self.h = h

    def jet(self, u, v):
        if self.jet_fn is not None:
            return self.jet_fn(u, v)
        return central_jet(self.fn, u, v, self.h)

    def value(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return self.fn(u, v)


class _Combo(ScalarField):
    """``alpha * a + b + const``."""

    def __init__(self, a: ScalarField, b: ScalarField | None, alpha: float, const: float):
        self.a, self.b, self.alpha, self.const = a, b, alpha, const

    def jet(self, u, v):
        j = self.a.jet(u, v) * self.alpha + self.const
        return j + self.b.jet(u, v) if self.b is not None else j


def as_scalar_field(x) -> ScalarField:
    if isinstance(x, ScalarField):
        return x
    if isinstance(x, (str, Expr, int, float)):
        return ExprField(x)
    if callable(x):
        return FunctionField(x)
    raise TypeError(f"cannot make a scalar field from {x!r}")


# ------------------------------------------------------------------- angle fields


class AngleField:
    def sincos(self, u, v) -> tuple[Jet1, Jet1]:
        raise NotImplementedError

    def grad(self, u, v):
        """(theta_u, theta_v) from the sine/cosine jets."""
        s, c = self.sincos(u, v)
        return c.value * s.du - s.value * c.du, c.value * s.dv - s.value * c.dv

    def value(self, u, v):
        s, c = self.sincos(u, v)
        return np.arctan2(s.value, c.value)

    def __neg__(self):
        return _AngleCombo(self, None, -1)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return _AngleCombo(self, ConstantAngle(float(other)), 1)
        return _AngleCombo(self, as_angle_field(other), 1)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-as_angle_field(other))

    def to_json(self):
        return None


class AngleExpr(AngleField):
    def __init__(self, expr):
        self.expr = as_expr(expr)

    def sincos(self, u, v):
        j = eval_jet(self.expr, u, v)
        return X.sin(j), X.cos(j)

    def __neg__(self):
        return AngleExpr(-self.expr)

    def __add__(self, other):
        if isinstance(other, AngleExpr):
            return AngleExpr(self.expr + other.expr)
        if isinstance(other, (int, float)):
            return AngleExpr(self.expr + other)
        return super().__add__(other)

    def to_json(self):
        return to_text(self.expr)

    def __repr__(self):
        return f"AngleExpr({to_text(self.expr)!r})"


class ConstantAngle(AngleExpr):
    def __init__(self, theta: float):
        super().__init__(theta)
        self.theta = float(theta)

    def sincos(self, u, v):
        shape = np.broadcast_shapes(np.shape(u), np.shape(v))
        return (Jet1(np.full(shape, math.sin(self.theta)), 0.0, 0.0),
                Jet1(np.full(shape, math.cos(self.theta)), 0.0, 0.0))


class AnglePair(AngleField):
    """Angle given by expressions for its sine and cosine."""

    def __init__(self, sin_expr, cos_expr, tol: float = 1e-9):
        self.sin_expr = as_expr(sin_expr)
        self.cos_expr = as_expr(cos_expr)
        self.tol = tol

    def sincos(self, u, v):
        s = eval_jet(self.sin_expr, u, v)
        c = eval_jet(self.cos_expr, u, v)
        defect = np.max(np.abs(np.asarray(s.value) ** 2 + np.asarray(c.value) ** 2 - 1.0))
        if defect > self.tol:
            raise FrameError(f"sin^2 + cos^2 deviates from 1 by {defect:.3e}")
        return s, c

    def __neg__(self):
        return AnglePair(-self.sin_expr, self.cos_expr, self.tol)

    def to_json(self):
        return {"sin": to_text(self.sin_expr), "cos": to_text(self.cos_expr)}


class AngleFunction(AngleField):
    """Numeric angle ``theta(u, v)``; jets by central differences."""

    def __init__(self, fn: Callable, h: float = FD_STEP):
        self.fn = fn
        self.h = h

    def sincos(self, u, v):
        j = central_jet(self.fn, u, v, self.h)
        return X.sin(j), X.cos(j)

    def value(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return self.fn(u, v)


class _AngleCombo(AngleField):
    """``sign * a + b`` via the addition formulas."""

    def __init__(self, a: AngleField, b: AngleField | None, sign: int):
        self.a, self.b, self.sign = a, b, sign

    def sincos(self, u, v):
        s, c = self.a.sincos(u, v)
        if self.sign < 0:
            s = -s
        if self.b is None:
            return s, c
        s2, c2 = self.b.sincos(u, v)
        return s * c2 + c * s2, c * c2 - s * s2


def as_angle_field(x) -> AngleField:
    if isinstance(x, AngleField):
        return x
    if isinstance(x, dict):
        return AnglePair(x["sin"], x["cos"])
    if isinstance(x, tuple) and len(x) == 2:
        return AnglePair(*x)
    if isinstance(x, (int, float)):
        return ConstantAngle(x)
    if isinstance(x, (str, Expr)):
        return AngleExpr(x)
    if callable(x):
        return AngleFunction(x)
    raise TypeError(f"cannot make an angle field from {x!r}")
