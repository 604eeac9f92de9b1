"""Analytic checks in the upper half-plane model.

The vertical ray t -> (0, e^t) has Busemann function -log y, and the
density exp(-b) = y turns hyperbolic length into Euclidean length.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "HalfPlanePoint",
    "hyp_distance",
    "busemann_numeric",
    "geodesic_arc_length",
    "uniformized_segment_length",
    "uniformized_polyline_length",
    "refine_segment",
    "run_oracle_checks",
]

QUAD_TOL = 1e-8


@dataclass(frozen=True)
class HalfPlanePoint:
    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"half-plane point needs y > 0, got {self.y}")


def _pt(p) -> HalfPlanePoint:
    return p if isinstance(p, HalfPlanePoint) else HalfPlanePoint(float(p[0]), float(p[1]))


def hyp_distance(p, q) -> float:
    p, q = _pt(p), _pt(q)
    e2 = (p.x - q.x) ** 2 + (p.y - q.y) ** 2
    # arccosh(1 + e2 / (2 py qy)) written via asinh to keep short distances accurate
    return 2.0 * math.asinh(math.sqrt(e2 / (4.0 * p.y * q.y)))


def busemann_numeric(p, t: float) -> float:
    """``d((0, e^t), p) - t``; nonincreasing in t with limit ``-log(p.y)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return hyp_distance(HalfPlanePoint(0.0, math.exp(t)), p) - t


def _arc(p: HalfPlanePoint, q: HalfPlanePoint):
    """Geodesic through p, q as (kind, center, radius, s0, s1) in the hyperbolic-arclength chart."""
    dx = q.x - p.x
    if abs(dx) <= 1e-14 * max(1.0, abs(p.x), abs(q.x), p.y, q.y):
        return "vertical", p.x, 0.0, math.log(p.y), math.log(q.y)
    c = ((q.x**2 + q.y**2) - (p.x**2 + p.y**2)) / (2 * dx)
    R = math.hypot(p.x - c, p.y)
    return "circle", c, R, math.atanh((p.x - c) / R), math.atanh((q.x - c) / R)


def geodesic_arc_length(p, q) -> float:
    """Closed-form Euclidean length of the hyperbolic geodesic from p to q."""
    p, q = _pt(p), _pt(q)
    kind, c, R, _, _ = _arc(p, q)
    if kind == "vertical":
        return abs(q.y - p.y)
    t0 = math.atan2(p.y, p.x - c)
    t1 = math.atan2(q.y, q.x - c)
    return R * abs(t1 - t0)


def uniformized_segment_length(p, q, tol: float = QUAD_TOL, max_doublings: int = 24) -> float:
    """Integral of y over the hyperbolic geodesic from p to q, w.r.t. hyperbolic arclength.

    Composite midpoint rule, doubling the panel count until two successive
    values agree within `tol`.
    """
    p, q = _pt(p), _pt(q)
    if p == q:
        return 0.0
    kind, c, R, s0, s1 = _arc(p, q)
    if kind == "vertical":
        # density times hyperbolic arclength is dy exactly
        return abs(q.y - p.y)

    def f(s):
        return R / np.cosh(s)

    span = s1 - s0
    prev = None
    n = 1
    for _ in range(max_doublings + 1):
        mid = s0 + (np.arange(n) + 0.5) * (span / n)
        val = abs(span) / n * float(f(mid).sum())
        if prev is not None and abs(val - prev) < tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise RuntimeError("quadrature did not converge")


def uniformized_polyline_length(points: Sequence, tol: float = QUAD_TOL) -> float:
    pts = [_pt(p) for p in points]
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    return sum(uniformized_segment_length(p, q, tol) for p, q in zip(pts, pts[1:]))


def refine_segment(p, q, k: int) -> list[HalfPlanePoint]:
    """2**k equal pieces of the Euclidean segment from p to q."""
    p, q = _pt(p), _pt(q)
    s = np.linspace(0.0, 1.0, 2**k + 1)
    return [HalfPlanePoint(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)) for t in s]


def _grid():
    xs = np.linspace(-10, 10, 9)
    ys = np.logspace(-3, 3, 13)
    return [(float(x), float(y)) for x in xs for y in ys]


def run_oracle_checks(t: float = 30.0, tol: float = 1e-6, refine_k: int = 10, seg_tol: float = 1e-4) -> dict:
    """Grid check of the Busemann limit plus segment-length checks.

    ``passed`` covers the assertional checks only; the short-ray residual is
    informational.
    """
    t0 = time.perf_counter()
    grid = _grid()
    res = [abs(busemann_numeric(p, t) + math.log(p[1])) for p in grid]
    bus_ok = max(res) <= tol

    segments = [((0.0, 1.0), (1.0, 1.0)), ((-2.0, 0.5), (3.0, 4.0)), ((0.0, 1.0), (0.0, 2.0))]
    seg = []
    for p, q in segments:
        L = uniformized_polyline_length(refine_segment(p, q, refine_k))
        e = math.dist(p, q)
        seg.append({"p": list(p), "q": list(q), "length": L, "euclidean": e, "rel_error": abs(L - e) / e})
    seg_ok = all(s["rel_error"] <= seg_tol for s in seg)
    vertical_exact = uniformized_segment_length((0.0, 1.0), (0.0, 2.0))

    short = [abs(busemann_numeric(p, 5.0) + math.log(p[1])) for p in grid]
    return {
        "busemann": {"t": t, "points": len(grid), "max_residual": max(res), "tolerance": tol, "passed": bus_ok},
        "segments": {"refinement": 2**refine_k, "tolerance": seg_tol, "cases": seg, "passed": seg_ok},
        "vertical_segment": {"length": vertical_exact, "expected": 1.0, "passed": abs(vertical_exact - 1.0) <= 1e-12},
        "short_ray": {
            "t": 5.0,
            "max_residual": max(short),
            "informational": True,
            "exceeds_tolerance": max(short) > tol,
        },
        "passed": bool(bus_ok and seg_ok and abs(vertical_exact - 1.0) <= 1e-12),
        "seconds": time.perf_counter() - t0,
    }
