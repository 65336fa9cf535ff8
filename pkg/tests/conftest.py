"""Shared fixtures and the independent sympy oracle."""

from __future__ import annotations

import functools

import numpy as np
import pytest
import sympy as sp

import framedsurf as F
from framedsurf.core import Domain, Grid
from framedsurf.invariants import NAMES, SurfaceDef

u_, v_ = sp.symbols("u v", real=True)

SUB = Domain((-1, 1), (0.1, 1), (0, 0.1))

# one line per acceptance check, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def load(name):
    return F.load_scene(F.scene_path(name))


@functools.lru_cache(maxsize=None)
def shipped(name) -> SurfaceDef:
    return load(name).surface()


def sym(text: str):
    return sp.sympify(text, locals={"u": u_, "v": v_, "pi": sp.pi, "abs": sp.Abs})


def oracle_invariants(S: SurfaceDef):
    """Basic invariants by symbolic differentiation; returns a numeric callable."""
    t = S.texts()
    x, n, s = (sp.Matrix([sym(c) for c in t[k]]) for k in ("x", "n", "s"))
    tt = n.cross(s)
    d = {
        "a1": x.diff(u_).dot(s), "b1": x.diff(u_).dot(tt),
        "a2": x.diff(v_).dot(s), "b2": x.diff(v_).dot(tt),
        "e1": n.diff(u_).dot(s), "f1": n.diff(u_).dot(tt), "g1": s.diff(u_).dot(tt),
        "e2": n.diff(v_).dot(s), "f2": n.diff(v_).dot(tt), "g2": s.diff(v_).dot(tt),
    }
    fns = {k: sp.lambdify((u_, v_), d[k], "numpy") for k in NAMES}

    def evaluate(u, v):
        return {k: np.broadcast_to(np.asarray(f(u, v), float), np.shape(u)) for k, f in fns.items()}

    return evaluate


def lambdify(text_or_expr):
    e = sym(text_or_expr) if isinstance(text_or_expr, str) else text_or_expr
    f = sp.lambdify((u_, v_), e, "numpy")
    return lambda u, v: np.broadcast_to(np.asarray(f(u, v), float), np.shape(u))


@pytest.fixture(scope="session")
def edge():
    return shipped("cuspidal_edge")


@pytest.fixture(scope="session")
def helicoid():
    return shipped("helicoid_family")


@pytest.fixture(scope="session")
def crosscap():
    return shipped("cuspidal_crosscap")


@pytest.fixture(scope="session")
def plane():
    return SurfaceDef.from_strings("plane", ["u", "v", "0"], ["0", "0", "1"], ["1", "0", "0"],
                                   Domain((-1, 1), (-1, 1)))


@pytest.fixture(scope="session")
def grid_full():
    return Grid(Domain((-1, 1), (-1, 1)), 21, 21)


@pytest.fixture(scope="session")
def grid_sub():
    return Grid(SUB, 21, 21)
