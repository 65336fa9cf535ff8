import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from framedsurf.core import Domain, Grid
from framedsurf.errors import FrameError
from framedsurf.expr import to_text
from framedsurf.invariants import (NAMES, BasicInvariants, FrontClass, SurfaceDef,
                                   basic_invariants, classify_front, classify_invariants,
                                   curvature, integrability_residuals, is_singular,
                                   reflect_frame, reflected_invariants, rotate_frame,
                                   rotated_invariants)
from framedsurf.reconstruct import InvariantFields
from conftest import SUB, oracle_invariants, shipped

SCENES = ["cuspidal_edge", "helicoid_family", "cuspidal_crosscap"]

EDGE_FIELDS = {"a1": "1", "b1": "0", "a2": "0", "b2": "v*sqrt(v^2+1)", "e1": "0", "f1": "0",
               "g1": "0", "e2": "0", "f2": "-1/(v^2+1)", "g2": "0"}


def point_front():
    # a single point carrying the sphere of directions: G vanishes, K does not
    return SurfaceDef.from_strings(
        "point", ["0", "0", "0"], ["cos(v)*cos(u)", "cos(v)*sin(u)", "sin(v)"],
        ["-sin(u)", "cos(u)", "0"], Domain((-1, 1), (-1, 1)))


def grid_of(name):
    full = Grid(Domain((-1, 1), (-1, 1)), 21, 21)
    return full if name == "cuspidal_edge" else Grid(SUB, 21, 21)


@pytest.mark.parametrize("name", SCENES)
def test_invariants_match_symbolic_oracle(name):
    S = shipped(name)
    U, V = grid_of(name).mesh()
    got = basic_invariants(S, U, V)
    want = oracle_invariants(S)(U, V)
    for k in NAMES:
        assert np.max(np.abs(np.asarray(getattr(got, k)) - want[k])) <= 1e-9, k


def test_edge_invariants_at_point(edge):
    inv = basic_invariants(edge, 0.0, 2.0)
    expect = dict(a1=1, b1=0, a2=0, b2=2 * math.sqrt(5), e1=0, f1=0, g1=0, e2=0, f2=-0.2, g2=0)
    for k, val in expect.items():
        assert getattr(inv, k) == pytest.approx(val, abs=1e-12), k


@pytest.mark.xfail(strict=True, reason="printed helicoid-family invariants are not those of "
                                       "any unit-normal framing (see decisions ledger)")
def test_helicoid_printed_first_row_values(helicoid):
    inv = basic_invariants(helicoid, 0.0, 1.0)
    assert (inv.a1, inv.b1, inv.a2, inv.b2) == pytest.approx((0, 2 * math.sqrt(2), 2, -2),
                                                             abs=1e-6)


def test_helicoid_corrected_values(helicoid):
    inv = basic_invariants(helicoid, 0.0, 1.0)
    assert (inv.a1, inv.b1, inv.a2, inv.b2) == pytest.approx((0, 2, 2, -math.sqrt(2)), abs=1e-12)


def test_plane_invariants(plane):
    inv = basic_invariants(plane, 0.3, -0.2)
    assert (inv.a1, inv.b1, inv.a2, inv.b2) == (1, 0, 0, 1)
    assert all(getattr(inv, k) == 0 for k in ("e1", "f1", "g1", "e2", "f2", "g2"))


def test_non_unit_frame_is_rejected():
    S = SurfaceDef.from_strings("bad", ["u", "v", "0"], ["0", "0", "2"], ["1", "0", "0"],
                                Domain((0, 1), (0, 1)))
    with pytest.raises(FrameError):
        basic_invariants(S, 0.5, 0.5)


# ------------------------------------------------------------ integrability


def test_edge_integrability_at_point(edge):
    r = integrability_residuals(edge, 0.3, 0.7)
    assert r.max() <= 1e-6


def test_plane_integrability_is_exact(plane):
    assert integrability_residuals(plane, 0.2, 0.4).max() == 0


@pytest.mark.parametrize("name", SCENES)
def test_shipped_scenes_are_integrable(name):
    U, V = grid_of(name).mesh()
    assert integrability_residuals(shipped(name), U, V).max() <= 1e-6


def test_corrupted_fields_fail_r1(edge):
    F = InvariantFields.from_strings({**EDGE_FIELDS, "a1": "1+v^2"}, edge.domain)
    U, V = Grid(edge.domain, 21, 21).mesh()
    r = F.residuals(U, V)
    # a1_v - b1 g2 - (a2_u - b2 g1) = 2v
    assert np.allclose(r.r1, 2 * V)
    assert np.max(np.abs(r.r1)) >= 1e-2
    # the FD route through the invariants callable agrees
    assert np.allclose(integrability_residuals(F, U, V).r1, 2 * V, atol=1e-6)


def test_b2_corruption_is_still_integrable(edge):
    # b2 only meets g1 and f1 in the relations, and both vanish on this surface
    F = InvariantFields.from_strings({**EDGE_FIELDS, "b2": "v^2"}, edge.domain)
    U, V = Grid(edge.domain, 21, 21).mesh()
    assert F.residuals(U, V).max() == 0


# ------------------------------------------------------------ curvature, fronts


def test_curvature_examples(edge, helicoid):
    c = curvature(basic_invariants(edge, 0.0, 1.0))
    assert (c.J, c.K, c.H) == pytest.approx((math.sqrt(2), 0, 0.25), abs=1e-12)
    z = curvature(BasicInvariants(*([0.0] * 10)))
    assert (z.J, z.K, z.H) == (0, 0, 0)


def test_curvature_of_corrected_helicoid(helicoid):
    c = curvature(basic_invariants(helicoid, 0.4, 1.0))
    r2 = math.sqrt(2)
    assert (c.J, c.K, c.H) == pytest.approx((-2 * r2 * r2, -r2 / (2 * r2 ** 3), r2), abs=1e-12)


def test_is_singular(edge, plane):
    assert is_singular(basic_invariants(edge, 0.0, 0.0), 1e-9)
    assert not is_singular(basic_invariants(edge, 0.0, 1.0), 1e-9)
    U, V = Grid(plane.domain, 5, 5).mesh()
    inv = basic_invariants(plane, U, V)
    assert not np.any(np.abs(curvature(inv).J) <= 1e-9)


def test_classify_front(edge, plane):
    assert classify_front(edge, 0.0, 0.0) is FrontClass.FRONT_RANK1
    assert classify_front(edge, 0.0, 0.5) is FrontClass.REGULAR
    assert classify_front(plane, 0.1, 0.1) is FrontClass.REGULAR
    assert classify_front(point_front(), 0.2, 0.3) is FrontClass.FRONT_RANK0


def test_classify_undetermined():
    inv = BasicInvariants(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert classify_invariants(inv, 1e-9) is FrontClass.NOT_FRONT_OR_UNDETERMINED


# ------------------------------------------------------------ frame changes


def test_rotation_by_zero_is_identity(edge):
    R = rotate_frame(edge, "0")
    a, b = basic_invariants(edge, 0.3, 0.6), basic_invariants(R, 0.3, 0.6)
    assert a.max_abs_diff(b) <= 1e-15


def test_edge_quarter_turn(edge):
    inv = basic_invariants(rotate_frame(edge, "pi/2"), 0.2, 0.5)
    assert (inv.a1, inv.b1) == pytest.approx((0, 1), abs=1e-15)


def test_plane_rotation_by_u(plane):
    inv = basic_invariants(rotate_frame(plane, "u"), 0.4, 0.1)
    assert inv.g1 == pytest.approx(-1)
    assert all(abs(getattr(inv, k)) < 1e-15 for k in ("e1", "f1", "e2", "f2"))


def test_rotation_by_pair_matches_expression(edge):
    a = basic_invariants(rotate_frame(edge, "u*v"), 0.3, 0.4)
    b = basic_invariants(rotate_frame(edge, ("sin(u*v)", "cos(u*v)")), 0.3, 0.4)
    assert a.max_abs_diff(b) <= 1e-14


def test_reflection_examples(plane, edge):
    p = basic_invariants(reflect_frame(plane), 0.1, 0.2)
    assert (p.a1, p.b1, p.a2, p.b2) == (0, 1, 1, 0)
    e = basic_invariants(reflect_frame(edge), 0.0, 1.0)
    assert e.b2 == pytest.approx(0, abs=1e-15)
    assert e.a2 == pytest.approx(math.sqrt(2))
    twice = reflect_frame(reflect_frame(edge))
    assert basic_invariants(twice, 0.3, 0.7).max_abs_diff(basic_invariants(edge, 0.3, 0.7)) < 1e-15


coef = st.floats(-2, 2, allow_nan=False)
scene_names = st.sampled_from(SCENES)
uv = st.tuples(st.floats(-1, 1), st.floats(0.1, 1))


def theta_text(c):
    return f"{c[0]!r} + {c[1]!r}*u + {c[2]!r}*v^2 + {c[3]!r}*sin(u*v)"


@settings(max_examples=40, deadline=None)
@given(scene_names, st.tuples(coef, coef, coef, coef), uv)
def test_rotation_law_and_curvature_invariance(name, c, p):
    S = shipped(name)
    text = theta_text(c)
    R = rotate_frame(S, text)
    inv = basic_invariants(S, *p)
    from framedsurf.expr import eval_jet
    th = eval_jet(text, *p)
    pred = rotated_invariants(inv, math.sin(th.value), math.cos(th.value), th.du, th.dv)
    got = basic_invariants(R, *p)
    assert got.max_abs_diff(pred) <= 1e-9
    c0, c1 = curvature(inv), curvature(got)
    assert abs(c0.J - c1.J) <= 1e-9 and abs(c0.K - c1.K) <= 1e-9 and abs(c0.H - c1.H) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(scene_names, uv)
def test_reflection_law(name, p):
    S = shipped(name)
    inv = basic_invariants(S, *p)
    got = basic_invariants(reflect_frame(S), *p)
    assert got.max_abs_diff(reflected_invariants(inv)) <= 1e-9
    c0, c1 = curvature(inv), curvature(got)
    assert abs(c1.J + c0.J) <= 1e-9 and abs(c1.K + c0.K) <= 1e-9 and abs(c1.H - c0.H) <= 1e-9


@settings(max_examples=200)
@given(st.lists(st.floats(-10, 10), min_size=10, max_size=10), st.floats(-math.pi, math.pi),
       st.floats(-5, 5), st.floats(-5, 5))
def test_curvature_identities_on_random_tuples(vals, t, tu, tv):
    inv = BasicInvariants(*vals)
    c = curvature(inv)
    rot = curvature(rotated_invariants(inv, math.sin(t), math.cos(t), tu, tv))
    ref = curvature(reflected_invariants(inv))
    tol = 1e-9 * (1 + max(abs(x) for x in vals)) ** 2
    assert abs(rot.J - c.J) <= tol and abs(rot.K - c.K) <= tol and abs(rot.H - c.H) <= tol
    assert abs(ref.J + c.J) <= tol and abs(ref.K + c.K) <= tol and abs(ref.H - c.H) <= tol


def test_surface_texts_round_trip(edge):
    t = edge.texts()
    again = SurfaceDef.from_strings("e", t["x"], t["n"], t["s"], edge.domain)
    assert [to_text(e) for e in again.x] == t["x"]
    assert again.x == edge.x
