"""Geometric primitives: vectors, orthonormal frames, parameter domains, grids.

Vectors are plain ``numpy`` arrays whose last axis has length 3, so every
helper here works pointwise on a single vector or on a whole grid of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameError

FRAME_TOL = 1e-9

Vec3 = np.ndarray


def vec3(x, y, z) -> Vec3:
    return np.array([x, y, z], dtype=float)


def dot(a, b):
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def norm(a):
    return np.sqrt(dot(a, a))


def cross(a, b) -> Vec3:
    return np.cross(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def frame_defect(n, s):
    """Largest violation of |n| = 1, |s| = 1, n.s = 0 over all points."""
    n = np.asarray(n, dtype=float)
    s = np.asarray(s, dtype=float)
    d = np.maximum(np.abs(norm(n) - 1.0), np.abs(norm(s) - 1.0))
    d = np.maximum(d, np.abs(dot(n, s)))
    return float(np.max(d))


def frame_t(n, s, tol: float = FRAME_TOL) -> Vec3:
    """Return ``t = n x s`` after checking that (n, s) is orthonormal."""
    defect = frame_defect(n, s)
    if not defect <= tol:
        raise FrameError(f"(n, s) is not orthonormal: defect {defect:.3e} > {tol:.1e}")
    return cross(n, s)


@dataclass(frozen=True)
class FrameTriple:
    n: Vec3
    s: Vec3
    t: Vec3

    @classmethod
    def from_ns(cls, n, s, tol: float = FRAME_TOL) -> "FrameTriple":
        n = np.asarray(n, dtype=float)
        s = np.asarray(s, dtype=float)
        return cls(n, s, frame_t(n, s, tol))

    def matrix(self) -> np.ndarray:
        """Rows n, s, t; orthogonal with determinant +1."""
        return np.stack([self.n, self.s, self.t], axis=-2)


@dataclass(frozen=True)
class FramedPoint:
    """A position together with an orthonormal frame."""

    x: Vec3
    n: Vec3
    s: Vec3

    def __post_init__(self):
        frame_t(self.n, self.s)

    @property
    def t(self) -> Vec3:
        return cross(self.n, self.s)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned parameter rectangle with a base point inside it."""

    u: tuple[float, float]
    v: tuple[float, float]
    base: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        (u0, u1), (v0, v1) = self.u, self.v
        if not (u0 < u1 and v0 < v1):
            raise ValueError(f"empty domain u={self.u}, v={self.v}")
        bu, bv = self.base
        if not (u0 <= bu <= u1 and v0 <= bv <= v1):
            raise ValueError(f"base point {self.base} outside the domain")
        object.__setattr__(self, "u", (float(u0), float(u1)))
        object.__setattr__(self, "v", (float(v0), float(v1)))
        object.__setattr__(self, "base", (float(bu), float(bv)))


@dataclass(frozen=True)
class Grid:
    """``nu x nv`` samples of a domain; index (i, j) is (u_i, v_j)."""

    domain: Domain
    nu: int
    nv: int

    def __post_init__(self):
        if self.nu < 2 or self.nv < 2:
            raise ValueError("a grid needs at least 2 samples per direction")

    @property
    def us(self) -> np.ndarray:
        return np.linspace(*self.domain.u, self.nu)

    @property
    def vs(self) -> np.ndarray:
        return np.linspace(*self.domain.v, self.nv)

    @property
    def du(self) -> float:
        return (self.domain.u[1] - self.domain.u[0]) / (self.nu - 1)

    @property
    def dv(self) -> float:
        return (self.domain.v[1] - self.domain.v[0]) / (self.nv - 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``U, V`` of shape (nu, nv)."""
        return np.meshgrid(self.us, self.vs, indexing="ij")

    def nearest_index(self, u: float, v: float) -> tuple[int, int]:
        i = int(np.argmin(np.abs(self.us - u)))
        j = int(np.argmin(np.abs(self.vs - v)))
        return i, j

    def base_index(self) -> tuple[int, int]:
        return self.nearest_index(*self.domain.base)

    def with_domain(self, domain: Domain) -> "Grid":
        return Grid(domain, self.nu, self.nv)


@dataclass(frozen=True)
class SampledSurface:
    """A framed surface sampled on a grid; arrays have shape (nu, nv, 3)."""

    grid: Grid
    x: np.ndarray
    n: np.ndarray
    s: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return cross(self.n, self.s)

    def frame_defect(self) -> float:
        return frame_defect(self.n, self.s)
