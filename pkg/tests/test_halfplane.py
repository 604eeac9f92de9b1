import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hypfill.halfplane import (
    HalfPlanePoint,
    busemann_numeric,
    geodesic_arc_length,
    hyp_distance,
    refine_segment,
    run_oracle_checks,
    uniformized_polyline_length,
    uniformized_segment_length,
)

coord = st.floats(-20, 20)
height = st.floats(1e-3, 1e3)


def test_point_rejects_boundary():
    with pytest.raises(ValueError):
        HalfPlanePoint(0.0, 0.0)
    with pytest.raises(ValueError):
        HalfPlanePoint(1.0, -2.0)


def test_distance_known_values():
    assert hyp_distance((0, 1), (0, math.e)) == pytest.approx(1.0, rel=1e-15)
    assert hyp_distance((3, 2), (3, 2)) == 0
    # unit horizontal step at height 1: arccosh(3/2)
    assert hyp_distance((0, 1), (1, 1)) == pytest.approx(math.acosh(1.5), rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(coord, height, coord, height)
def test_distance_matches_arccosh(x1, y1, x2, y2):
    d = hyp_distance((x1, y1), (x2, y2))
    arg = 1 + ((x1 - x2) ** 2 + (y1 - y2) ** 2) / (2 * y1 * y2)
    if arg < 1e6:
        assert d == pytest.approx(math.acosh(arg), rel=1e-9, abs=1e-7)
    assert d == pytest.approx(hyp_distance((x2, y2), (x1, y1)), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(coord, height, coord, height, coord, height)
def test_distance_triangle(x1, y1, x2, y2, x3, y3):
    a, b, c = (x1, y1), (x2, y2), (x3, y3)
    assert hyp_distance(a, c) <= hyp_distance(a, b) + hyp_distance(b, c) + 1e-9


@settings(max_examples=200, deadline=None)
@given(coord, height)
def test_busemann_nonincreasing_to_limit(x, y):
    ts = np.linspace(0, 40, 41)
    vals = [busemann_numeric((x, y), t) for t in ts]
    assert all(v2 <= v1 + 1e-9 for v1, v2 in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(-math.log(y), abs=1e-6)
    assert vals[-1] >= -math.log(y) - 1e-9


def test_busemann_on_ray_is_exact():
    for s in (0.0, 1.5, 7.0):
        assert busemann_numeric((0, math.exp(s)), 10.0) == pytest.approx(-s, abs=1e-12)
    with pytest.raises(ValueError):
        busemann_numeric((0, 1), -1)


@pytest.mark.parametrize(
    "p,q",
    [((0, 1), (1, 1)), ((-2, 0.5), (3, 4)), ((0, 1), (0, 5)), ((1, 1e-2), (1.5, 3e-2)), ((-5, 2), (5, 2))],
)
def test_segment_length_matches_quad(p, q):
    # independent oracle: integrate y ds_hyp = |dz| along the circular arc by angle
    L = uniformized_segment_length(p, q)
    if p[0] == q[0]:
        assert L == abs(q[1] - p[1])
        return
    c = ((q[0] ** 2 + q[1] ** 2) - (p[0] ** 2 + p[1] ** 2)) / (2 * (q[0] - p[0]))
    R = math.hypot(p[0] - c, p[1])
    t0, t1 = math.atan2(p[1], p[0] - c), math.atan2(q[1], q[0] - c)
    want, _ = quad(lambda t: R, min(t0, t1), max(t0, t1), epsabs=1e-13)
    assert L == pytest.approx(want, rel=1e-7)
    assert geodesic_arc_length(p, q) == pytest.approx(want, rel=1e-13)


def test_segment_zero_and_polyline():
    assert uniformized_segment_length((1, 1), (1, 1)) == 0
    with pytest.raises(ValueError):
        uniformized_polyline_length([(0, 1)])
    pts = [(0, 1), (1, 2), (3, 2), (3, 0.5)]
    whole = uniformized_polyline_length(pts)
    parts = sum(uniformized_segment_length(a, b) for a, b in zip(pts, pts[1:]))
    assert whole == pytest.approx(parts, rel=1e-12)


def test_arc_length_dominates_euclidean():
    p, q = (-2, 0.5), (3, 4)
    assert uniformized_segment_length(p, q) >= math.dist(p, q)


@pytest.mark.parametrize("p,q", [((0, 1), (1, 1)), ((-2, 0.5), (3, 4)), ((0, 0.1), (2, 0.3))])
def test_refinement_converges_to_euclidean(p, q):
    e = math.dist(p, q)
    errs = [abs(uniformized_polyline_length(refine_segment(p, q, k)) - e) / e for k in (2, 4, 6, 8)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3
    pts = refine_segment(p, q, 3)
    assert len(pts) == 9 and pts[0] == HalfPlanePoint(*map(float, p)) and pts[-1] == HalfPlanePoint(*map(float, q))


def test_run_oracle_checks():
    rep = run_oracle_checks()
    assert rep["passed"]
    assert rep["busemann"]["points"] == 9 * 13
    assert rep["busemann"]["max_residual"] <= 1e-6
    assert all(c["rel_error"] <= 1e-4 for c in rep["segments"]["cases"])
    assert rep["vertical_segment"]["passed"]
    assert rep["short_ray"]["informational"] and rep["short_ray"]["exceeds_tolerance"]


def test_oracle_detects_tight_tolerance():
    rep = run_oracle_checks(t=5.0, tol=1e-6)
    assert not rep["passed"]
