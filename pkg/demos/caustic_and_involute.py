"""Caustic and involute of a cuspidal edge, and how they undo each other.

The cuspidal edge x = (u, v^2/2, v^3/3) is singular along v = 0.  Its caustic
comes from the quadratic K lam^2 - 2 H lam + J = 0 in the curvature triple,
and its involute from integrating lam_u = -a1, lam_v = -a2 from a base point.
Composing the two returns the surface we started from.
"""

import numpy as np

import framedsurf as fs
from framedsurf.core import Grid
from framedsurf.invariants import SurfaceDef


def main():
    S = SurfaceDef.from_strings("edge", ["u", "v^2/2", "v^3/3"],
                                ["0", "-v/sqrt(v^2+1)", "1/sqrt(v^2+1)"], ["1", "0", "0"],
                                fs.Domain((-1, 1), (-1, 1), (0, 0)))
    grid = Grid(S.domain, 21, 21)

    c = fs.curvature(fs.basic_invariants(S, 0.0, 0.5))
    print(f"at (0, 0.5): J={c.J:.4f}  K={c.K:.4f}  H={c.H:.4f}")
    print("front class at (0, 0):", fs.classify_front(S, 0.0, 0.0).value)

    cs = fs.caustic(S, "s", grid)
    i, j = 10, 20  # (u, v) = (0, 1)
    print("caustic lambda at (0, 1):", cs.lam[i, j], " expected", 2 ** 1.5)
    print("caustic point at (0, 1): ", cs.sampled.x[i, j])
    print(f"predicted vs recomputed invariants: {cs.prediction_error:.2e}")

    inv = fs.involute(S, "s", grid, "-pi/2", (0, 0))
    U, V = grid.mesh()
    closed = np.stack([0 * U, V ** 2 / 2, V ** 3 / 3], -1)
    print(f"involute vs (0, v^2/2, v^3/3): {np.max(np.abs(inv.sampled.x - closed)):.2e}")

    for pipeline, kw in (("CsIs", dict(theta="-pi/2", base=(0, 0))),
                         ("IsCs", dict(base=(0, 0)))):
        rep = fs.compose_check(S, pipeline, grid, **kw)
        print(f"{rep.pipeline}: distance from the identity {rep.max_deviation:.2e}")


if __name__ == "__main__":
    main()
