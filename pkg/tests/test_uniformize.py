import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hypfill.filling import FillingParams, anchored_descending_ray, build_filling
from hypfill.hyperbolic import busemann_estimate, geodesic
from hypfill.metric import from_matrix
from hypfill.uniformize import (
    EpsilonWarning,
    EpsilonWeighting,
    Uniformized,
    boundary_bilipschitz,
    boundary_distance,
    check_uniform_curve,
    dist_to_boundary,
    edge_length_eps,
    measure_admissibility,
    tail_length,
    truncated_tail,
    uniform_constant_sweep,
    verify_distance_regimes,
    write_pairs_csv,
)

from conftest import EPS, filling

LN2 = math.log(2)


def two_point(n_min=-1, n_max=1, tau=4.0):
    M = from_matrix([0, 1], [[0, 1], [1, 0]])
    return build_filling(M, FillingParams(0.5, tau, n_min, n_max))


def all_simple_path_lengths(G, W, s, t):
    best = math.inf
    stack = [(s, (s,), 0.0)]
    while stack:
        x, seen, L = stack.pop()
        if x == t:
            best = min(best, L)
            continue
        for y in G.neighbors(x):
            if y not in seen:
                stack.append((y, seen + (y,), L + W(x, y)))
    return best


def test_weighting_basics():
    w = EpsilonWeighting(LN2, 0.5)
    assert w.beta == pytest.approx(1.0)
    assert w.horizontal(0) == 1
    assert w.vertical(0) == pytest.approx(0.721348, abs=5e-7)
    assert w.vertical(0) == pytest.approx((1 / LN2) * 0.5, rel=1e-15)
    assert EpsilonWeighting(LN2 / 2, 0.5).beta == pytest.approx(0.5)
    with pytest.warns(EpsilonWarning):
        EpsilonWeighting(1.0, 0.5)
    with pytest.raises(ValueError):
        EpsilonWeighting(0.0, 0.5)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("eps", [0.1, LN2, 1.0, 2.5])
@pytest.mark.parametrize("k", [-3, 0, 2, 7])
def test_edge_weights_match_quadrature(eps, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EpsilonWarning)
        w = EpsilonWeighting(eps, 0.5)
    vert, _ = quad(lambda s: math.exp(-eps * (k + s)), 0, 1, epsabs=1e-14, epsrel=1e-14)
    hor, _ = quad(lambda s: math.exp(-eps * k), 0, 1, epsabs=1e-14, epsrel=1e-14)
    assert abs(w.vertical(k) - vert) <= 1e-12 * max(1, vert)
    assert abs(w.horizontal(k) - hor) <= 1e-12 * max(1, hor)


def test_edge_length_eps_dispatch(G20):
    w = EpsilonWeighting(LN2, 0.5)
    U = Uniformized(G20, w)
    for e, wt in zip(G20.edges, U.edge_weights):
        assert edge_length_eps(G20, e, w) == wt


def test_gadget_bruteforce():
    G = two_point()
    assert len(G) == 5
    for eps in (0.2, LN2, 1.5):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EpsilonWarning)
            U = Uniformized(G, EpsilonWeighting(eps, 0.5))
        D = U.distance_matrix()
        for s in range(5):
            for t in range(5):
                want = 0.0 if s == t else all_simple_path_lengths(G, lambda x, y: U.W[x, y], s, t)
                assert D[s, t] == pytest.approx(want, rel=1e-14)
        # horizontal pair at the top: detour through the level below never wins
        u, v = G.levels[1]
        detour = 2 / eps * (1 - math.exp(-eps)) * math.exp(-eps * 0)
        assert not detour < math.exp(-eps)
        assert D[u, v] == pytest.approx(math.exp(-eps), rel=1e-15)


def test_distance_metric_axioms(G20):
    U = Uniformized(G20, EpsilonWeighting(LN2, 0.5))
    D = U.distance_matrix()
    assert np.array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)
    assert np.all(D[~np.eye(len(G20), dtype=bool)] > 0)
    for k in range(len(G20)):
        assert np.all(D <= D[:, k][:, None] + D[k, :][None, :] + 1e-12)
    assert U.distance(3, 3) == 0
    for u, v, lab in G20.edges:
        if lab == "horizontal":
            assert D[u, v] <= math.exp(-LN2 * G20.height[u]) * (1 + 1e-15)


def test_witness_path(G20):
    U = Uniformized(G20, EpsilonWeighting(LN2, 0.5))
    for u, v in [(0, len(G20) - 1), (5, 40), (12, 12)]:
        p = U.path(u, v)
        assert p[0] == u and p[-1] == v
        assert U.length(p) == pytest.approx(U.distance(u, v), rel=1e-12)
        assert p == U.path(u, v)


def test_tails():
    w = EpsilonWeighting(1.0, 0.3)
    assert truncated_tail(4, 4, w) == 0
    assert tail_length(0, w) == 1
    with pytest.raises(ValueError):
        truncated_tail(5, 4, w)


@settings(max_examples=200, deadline=None)
@given(st.integers(-10, 10), st.integers(0, 10), st.integers(0, 10), st.floats(0.05, 0.69))
def test_tail_telescoping(n, k1, k2, eps):
    w = EpsilonWeighting(eps, 0.5)
    m1, m2 = n + k1, n + k1 + k2
    lhs = truncated_tail(n, m1, w) + truncated_tail(m1, m2, w)
    assert lhs == pytest.approx(truncated_tail(n, m2, w), rel=1e-12, abs=1e-300)
    assert truncated_tail(n, m2, w) <= tail_length(n, w)


def test_truncated_tail_equals_ray_sum(G20):
    w = EpsilonWeighting(LN2, 0.5)
    U = Uniformized(G20, w)
    p = G20.params
    for z in G20.metric.point_ids[:6]:
        ray = anchored_descending_ray(G20, z)
        s = sum(U.W[x, y] for x, y in zip(ray, ray[1:]))
        assert s == pytest.approx(truncated_tail(p.n_min, p.n_max, w), rel=1e-13)


def test_boundary_distance_same_point(G20):
    U = Uniformized(G20, EpsilonWeighting(LN2, 0.5))
    z = G20.metric.point_ids[2]
    iv = boundary_distance(U, z, z)
    assert iv.lower <= 0 <= iv.upper
    assert iv.width <= 2 * tail_length(G20.params.n_max, U.w) + 1e-15
    with pytest.raises(KeyError):
        boundary_distance(U, z, "nope")


def test_boundary_two_point_nested():
    w = EpsilonWeighting(LN2, 0.5)
    prev = None
    for n_max in (2, 4, 6, 8):
        iv = boundary_distance(Uniformized(two_point(-2, n_max), w), 0, 1)
        assert iv.level_used == n_max and iv.tail_bound == tail_length(n_max, w)
        if prev is not None:
            assert prev.lower <= iv.lower <= iv.upper <= prev.upper + 1e-12
            assert iv.width < prev.width
        prev = iv


def test_boundary_bilipschitz_20(G20):
    r = boundary_bilipschitz(Uniformized(G20, EpsilonWeighting(EPS, 0.5)))
    assert r["pairs"] == 190 and np.isfinite(r["L"]) and r["L"] >= 1


def test_dist_to_boundary(G20):
    w = EpsilonWeighting(LN2, 0.5)
    U = Uniformized(G20, w)
    emp = dist_to_boundary(U)
    for z in G20.metric.point_ids[:5]:
        for v in anchored_descending_ray(G20, z):
            assert emp[v] <= tail_length(G20.height[v], w) * (1 + 1e-12)
            assert dist_to_boundary(U, v) == emp[v]
    h0 = two_point(0, 2)
    U1 = Uniformized(h0, EpsilonWeighting(1.0, 0.3))
    assert dist_to_boundary(U1, h0.levels[0][0], mode="proxy") == 1.0
    ratio = emp / dist_to_boundary(U, mode="proxy")
    assert np.all(np.isfinite(ratio)) and ratio.min() > 0
    with pytest.raises(ValueError):
        dist_to_boundary(U, mode="other")


def test_uniform_curve_single_edge(G20):
    U = Uniformized(G20, EpsilonWeighting(LN2, 0.5))
    M = measure_admissibility(U)["M"]
    for u, v, _ in G20.edges[:50]:
        r = check_uniform_curve(U, [u, v])
        assert 1 - 1e-12 <= r["A_length"] <= M + 1e-12
        if U.distance(u, v) == U.W[u, v]:
            assert r["A_length"] == 1


def test_uniform_curve_vertical(G20):
    w = EpsilonWeighting(LN2, 0.5)
    U = Uniformized(G20, w)
    p = G20.params
    ray = anchored_descending_ray(G20, G20.metric.point_ids[0])
    dtb = dist_to_boundary(U)
    r = check_uniform_curve(U, ray, dtb)
    # closed form: prefix from the top is a truncated tail
    want = max(
        min(truncated_tail(G20.height[v], p.n_max, w), truncated_tail(p.n_min, G20.height[v], w)) / dtb[v]
        for v in ray
    )
    assert r["A_cigar"] == pytest.approx(want, rel=1e-12)
    assert r["A_length"] == pytest.approx(1.0)


def test_uniform_sweep_matches_per_path(G20):
    U = Uniformized(G20, EpsilonWeighting(LN2, 0.5))
    sw = uniform_constant_sweep(U)
    dtb = dist_to_boundary(U)
    a1 = a2 = 0.0
    for u in range(len(G20)):
        for v in range(len(G20)):
            if u == v:
                continue
            r = check_uniform_curve(U, geodesic(G20, u, v), dtb)
            a1, a2 = max(a1, r["A_length"]), max(a2, r["A_cigar"])
    assert sw["A_length"] == pytest.approx(a1, rel=1e-12)
    assert sw["A_cigar"] == pytest.approx(a2, rel=1e-12)
    assert np.isfinite(sw["A"])


def test_admissibility():
    chain = build_filling(from_matrix(["x"], [[0.0]]), FillingParams(0.5, 4.0, 0, 6))
    U = Uniformized(chain, EpsilonWeighting(LN2, 0.5))
    assert measure_admissibility(U)["M"] == pytest.approx(1.0)
    G = two_point()
    U = Uniformized(G, EpsilonWeighting(LN2, 0.5))
    r = measure_admissibility(U, pairs=[(G.levels[1][0], G.levels[1][1])])
    assert r["M"] == 1.0 and r["pairs"] == 1


def test_admissibility_refinement(Z20):
    w = EpsilonWeighting(EPS, 0.5)
    M0 = measure_admissibility(Uniformized(filling(Z20), w))["M"]
    M2 = measure_admissibility(Uniformized(filling(Z20, extra_top=2), w))["M"]
    assert np.isfinite(M0) and np.isfinite(M2)
    assert max(M0, M2) / min(M0, M2) <= 2


def test_regimes(G20, tmp_path):
    ray = anchored_descending_ray(G20, G20.metric.point_ids[0])
    est = busemann_estimate(G20, ray)
    for eps in (EPS, EPS / 2):
        U = Uniformized(G20, EpsilonWeighting(eps, 0.5))
        recs, rows = verify_distance_regimes(U, est, seed=0)
        kinds = {(r.lemma_id, r.regime) for r in recs}
        assert ("large_distance", "hop>=2") in kinds and ("nonvertex", "hop<=2") in kinds
        assert ("arc_harnack", "lower") in kinds and ("estimate_both", "eps*hop>=1") in kinds
        for r in recs:
            assert np.isfinite(r.C) and r.ratio_min > 0
        up = next(r for r in recs if r.lemma_id == "arc_harnack" and r.regime == "upper")
        assert up.ratio_max <= 1 + 1e-12
        assert len(rows) == len(G20) * (len(G20) - 1) // 2
    path = write_pairs_csv(rows, tmp_path / "pairs.csv")
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["u", "v", "hops", "d_eps", "predicted"] and len(data) == len(rows) + 1


def test_adjacent_same_height_ratio(G20):
    eps = EPS
    U = Uniformized(G20, EpsilonWeighting(eps, 0.5))
    D = U.distance_matrix()
    for u, v, lab in G20.edges:
        if lab == "horizontal":
            k = G20.height[u]
            # (u|v)_h = k - 1/2 for adjacent same-height vertices
            pred = math.exp(-eps * (k - 0.5))
            assert D[u, v] / pred == pytest.approx(math.exp(-eps / 2), rel=1e-12)


def test_vertical_pair_harnack_exact(G20):
    eps = EPS
    w = EpsilonWeighting(eps, 0.5)
    U = Uniformized(G20, w)
    for u, v, lab in G20.edges:
        if lab != "vertical":
            continue
        lo, hi = (u, v) if G20.height[u] < G20.height[v] else (v, u)
        d = U.distance(lo, hi)
        rho = w.density(G20.height)
        assert d == pytest.approx(rho[hi] * math.expm1(eps) / eps, rel=1e-13)
        assert d == pytest.approx(rho[lo] * -math.expm1(-eps) / eps, rel=1e-13)
