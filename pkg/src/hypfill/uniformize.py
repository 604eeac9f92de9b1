"""Conformal deformation of a filling by the density exp(-eps * height).

Edge lengths are the exact line integrals of the density with the height
interpolated linearly along each unit edge, so shortest weighted paths give
the deformed metric between vertices.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .filling import FillingGraph, anchored_descending_ray
from .hyperbolic import (
    BusemannEstimate,
    DisconnectedError,
    height_product_matrix,
    predecessor_matrix,
)

log = logging.getLogger(__name__)

__all__ = [
    "EpsilonWarning",
    "EpsilonWeighting",
    "edge_length_eps",
    "Uniformized",
    "tail_length",
    "truncated_tail",
    "BoundaryDistanceInterval",
    "boundary_distance",
    "boundary_bilipschitz",
    "dist_to_boundary",
    "check_uniform_curve",
    "uniform_constant_sweep",
    "measure_admissibility",
    "RegimeRecord",
    "verify_distance_regimes",
    "write_pairs_csv",
]


class EpsilonWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EpsilonWeighting:
    epsilon: float
    a: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.a < 1:
            raise ValueError(f"a must lie in (0, 1), got {self.a}")
        if self.epsilon > self.eps_max * (1 + 1e-12):
            warnings.warn(
                f"epsilon={self.epsilon:g} exceeds -log a={self.eps_max:g}; constants are measured but not guaranteed",
                EpsilonWarning,
                stacklevel=3,
            )

    @property
    def eps_max(self) -> float:
        return -math.log(self.a)

    @property
    def beta(self) -> float:
        return self.epsilon / self.eps_max

    def density(self, h):
        return np.exp(-self.epsilon * np.asarray(h, dtype=float))

    def horizontal(self, k) -> float:
        return np.exp(-self.epsilon * np.asarray(k, dtype=float))

    def vertical(self, k) -> float:
        """Edge between heights k and k+1."""
        e = self.epsilon
        return -np.expm1(-e) / e * np.exp(-e * np.asarray(k, dtype=float))


def edge_length_eps(G: FillingGraph, edge, w: EpsilonWeighting) -> float:
    u, v = int(edge[0]), int(edge[1])
    hu, hv = int(G.height[u]), int(G.height[v])
    if hu == hv:
        return float(w.horizontal(hu))
    if abs(hu - hv) != 1:
        raise ValueError(f"({u}, {v}) is not an edge of a filling")
    return float(w.vertical(min(hu, hv)))


def tail_length(n, w: EpsilonWeighting) -> float:
    return math.exp(-w.epsilon * n) / w.epsilon


def truncated_tail(n, n_top, w: EpsilonWeighting) -> float:
    if n > n_top:
        raise ValueError(f"n={n} above n_top={n_top}")
    e = w.epsilon
    # e^{-en} - e^{-e n_top} without cancellation
    return -math.exp(-e * n) * math.expm1(-e * (n_top - n)) / e


class Uniformized:
    """Deformed metric on the vertices of a filling."""

    def __init__(self, G: FillingGraph, w: EpsilonWeighting):
        self.G = G
        self.w = w
        h = G.height
        self.edge_weights = np.array(
            [w.horizontal(h[u]) if h[u] == h[v] else w.vertical(min(h[u], h[v])) for u, v, _ in G.edges],
            dtype=float,
        )
        V = len(G)
        W = np.full((V, V), np.inf)
        if G.edges:
            e = np.array([(u, v) for u, v, _ in G.edges])
            W[e[:, 0], e[:, 1]] = self.edge_weights
            W[e[:, 1], e[:, 0]] = self.edge_weights
        np.fill_diagonal(W, 0.0)
        self.W = W
        self._D: np.ndarray | None = None
        self._L: np.ndarray | None = None

    @property
    def epsilon(self) -> float:
        return self.w.epsilon

    def distance_matrix(self) -> np.ndarray:
        if self._D is None:
            D = dijkstra(self.G.sparse_adjacency(self.edge_weights), directed=False)
            # summation order differs between the two directions
            D = np.minimum(D, D.T)
            D.setflags(write=False)
            self._D = D
        return self._D

    def distance(self, u: int, v: int) -> float:
        d = self.distance_matrix()[u, v]
        if not math.isfinite(d):
            raise DisconnectedError(f"vertices {u} and {v} lie in different components")
        return float(d)

    def path(self, u: int, v: int) -> tuple[int, ...]:
        """A shortest weighted path from u to v; predecessor ties go to the smallest id."""
        D = self.distance_matrix()
        d = self.distance(u, v)
        tol = 1e-12 * max(d, 1.0)
        out = [v]
        while out[-1] != u:
            x = out[-1]
            for y in self.G.neighbors(x):
                if abs(D[u, y] + self.W[y, x] - D[u, x]) <= tol and D[u, y] < D[u, x]:
                    out.append(y)
                    break
            else:  # pragma: no cover - Dijkstra distances always admit a predecessor
                raise RuntimeError(f"no predecessor for {x} toward {u}")
        return tuple(reversed(out))

    def length(self, path: Iterable[int]) -> float:
        p = list(path)
        return float(sum(self.W[x, y] for x, y in zip(p, p[1:])))

    def geodesic_lengths(self) -> np.ndarray:
        """``L[r, x]``: deformed length of the canonical hop geodesic from r to x."""
        if self._L is None:
            G = self.G
            V = len(G)
            H = G.hop_matrix()
            pred = predecessor_matrix(G)
            L = np.full((V, V), np.inf)
            for r in range(V):
                order = np.argsort(H[r], kind="stable")
                order = order[np.isfinite(H[r, order])]
                L[r, r] = 0.0
                for x in order[1:]:
                    p = pred[r, x]
                    L[r, x] = L[r, p] + self.W[p, x]
            L.setflags(write=False)
            self._L = L
        return self._L


# ---------------------------------------------------------------------------
# boundary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryDistanceInterval:
    lower: float
    upper: float
    level_used: int
    tail_bound: float
    center: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "center": self.center,
            "width": self.width,
            "level_used": self.level_used,
            "tail_bound": self.tail_bound,
        }


def _ray(U: Uniformized, z: Hashable) -> tuple[int, ...]:
    key = ("ray", z)
    if key not in U.G._cache:
        U.G._cache[key] = anchored_descending_ray(U.G, z)
    return U.G._cache[key]


def boundary_distance(U: Uniformized, z1: Hashable, z2: Hashable) -> BoundaryDistanceInterval:
    """Distance between the boundary points anchored at z1 and z2.

    Centered on the distance of the top ray vertices; each ray's missing
    tail moves the true value by at most ``tail_length(n_max)``.
    """
    for z in (z1, z2):
        if z not in U.G.metric._index:
            raise KeyError(f"{z!r} is not a point of the space")
    n = U.G.params.n_max
    c = U.distance(_ray(U, z1)[0], _ray(U, z2)[0])
    T = tail_length(n, U.w)
    return BoundaryDistanceInterval(max(c - 2 * T, 0.0), c + 2 * T, n, T, c)


def boundary_bilipschitz(U: Uniformized) -> dict:
    """Sweep all pairs of distinct points: center / d(z1, z2) and width / center."""
    ids = U.G.metric.point_ids
    n = len(ids)
    if n < 2:
        return {"pairs": 0, "ratio_min": 1.0, "ratio_max": 1.0, "L": 1.0, "width_ratio_max": 0.0}
    tops = np.array([_ray(U, z)[0] for z in ids])
    D = U.distance_matrix()[np.ix_(tops, tops)]
    iu = np.triu_indices(n, 1)
    c = D[iu]
    r = c / U.G.metric.dist[iu]
    T = tail_length(U.G.params.n_max, U.w)
    width = np.minimum(c, 2 * T) + 2 * T
    k = int(np.argmax(width / c))
    return {
        "pairs": int(len(c)),
        "ratio_min": float(r.min()),
        "ratio_max": float(r.max()),
        "L": float(max(r.max(), 1 / r.min())),
        "width_ratio_max": float(width[k] / c[k]),
        "width_ratio_median": float(np.median(width / c)),
        "worst_width_pair": [ids[iu[0][k]], ids[iu[1][k]]],
        "tail_bound": T,
    }


def dist_to_boundary(U: Uniformized, x: int | None = None, mode: str = "empirical"):
    """Distance to the boundary for vertex x, or an array over all vertices when x is None."""
    G, w = U.G, U.w
    if mode == "proxy":
        h = G.height if x is None else G.height[x]
        out = np.exp(-w.epsilon * h.astype(float)) / w.epsilon
    elif mode == "empirical":
        tops = sorted({_ray(U, z)[0] for z in G.metric.point_ids})
        D = U.distance_matrix()[:, tops]
        out = D.min(axis=1) + tail_length(G.params.n_max, w)
        if x is not None:
            out = out[x]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(out) if x is not None else out


# ---------------------------------------------------------------------------
# uniformity and admissibility
# ---------------------------------------------------------------------------

def check_uniform_curve(U: Uniformized, path, dtb: np.ndarray | None = None) -> dict:
    """Measured constants of both uniform-curve conditions along a vertex path."""
    p = [int(v) for v in (path.vertices if hasattr(path, "vertices") else path)]
    if dtb is None:
        dtb = dist_to_boundary(U)
    steps = np.array([U.W[x, y] for x, y in zip(p, p[1:])])
    prefix = np.r_[0.0, np.cumsum(steps)]
    total = prefix[-1]
    ends = U.distance(p[0], p[-1])
    a1 = total / ends if ends > 0 else 1.0
    a2 = float((np.minimum(prefix, total - prefix) / dtb[p]).max())
    return {"length": float(total), "endpoint_distance": ends, "A_length": a1, "A_cigar": a2, "A": max(a1, a2)}


def uniform_constant_sweep(U: Uniformized) -> dict:
    """Both uniform-curve constants over the canonical geodesics of every vertex pair."""
    G = U.G
    V = len(G)
    D = U.distance_matrix()
    L = U.geodesic_lengths()
    pred = predecessor_matrix(G)
    dtb = dist_to_boundary(U)
    off = ~np.eye(V, dtype=bool)
    a1 = float((L[off] / D[off]).max()) if V > 1 else 1.0
    a2 = 0.0
    idx = np.arange(V)
    for r in range(V):
        cur = idx.copy()
        total = L[r]
        best = np.zeros(V)
        live = np.ones(V, dtype=bool)
        while live.any():
            c = cur[live]
            val = np.minimum(L[r, c], total[live] - L[r, c]) / dtb[c]
            best[live] = np.maximum(best[live], val)
            nxt = pred[r, c]
            cur[live] = nxt
            live[live] = nxt >= 0
        a2 = max(a2, float(best.max()))
    return {"A_length": a1, "A_cigar": a2, "A": max(a1, a2), "paths": V * (V - 1) // 2}


def measure_admissibility(U: Uniformized, pairs=None) -> dict:
    """M = max over pairs of (length of the canonical hop geodesic) / d_eps."""
    D = U.distance_matrix()
    L = U.geodesic_lengths()
    V = len(U.G)
    if pairs is None:
        iu = np.triu_indices(V, 1)
    else:
        pr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        iu = (pr[:, 0], pr[:, 1])
    keep = iu[0] != iu[1]
    r = L[iu][keep] / D[iu][keep]
    if r.size == 0:
        return {"M": 1.0, "pairs": 0, "witness": None}
    k = int(r.argmax())
    return {"M": float(r[k]), "pairs": int(r.size), "witness": [int(iu[0][keep][k]), int(iu[1][keep][k])]}


# ---------------------------------------------------------------------------
# distance regimes
# ---------------------------------------------------------------------------

@dataclass
class RegimeRecord:
    lemma_id: str
    regime: str
    epsilon: float
    n_window: tuple[int, int]
    ratio_min: float
    ratio_max: float
    pairs_checked: int
    additive_defect_max: float | None = None
    seed: int | None = None

    @property
    def C(self) -> float:
        if self.pairs_checked == 0:
            return 1.0
        return max(self.ratio_max, 1 / self.ratio_min)

    def to_dict(self) -> dict:
        return {
            "lemma_id": self.lemma_id,
            "regime": self.regime,
            "epsilon": self.epsilon,
            "n_window": list(self.n_window),
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "C": self.C,
            "additive_defect_max": self.additive_defect_max,
            "pairs_checked": self.pairs_checked,
            "seed": self.seed,
        }


class HarnackViolation(AssertionError):
    pass


def verify_distance_regimes(U: Uniformized, busemann: BusemannEstimate | None = None, seed: int | None = None):
    """Compare d_eps against each regime's prediction over all vertex pairs.

    Returns (records, pairs) where pairs is a list of rows for the CSV dump.
    Harnack bounds are checked exactly and raise HarnackViolation.
    """
    G, w = U.G, U.w
    e = w.epsilon
    V = len(G)
    win = (G.params.n_min, G.params.n_max)
    H = G.hop_matrix()
    D = U.distance_matrix()
    P = height_product_matrix(G)
    h = G.height.astype(float)
    rho = w.density(h)

    # edgewise Harnack
    for u, v, _ in G.edges:
        q = rho[u] / rho[v]
        if not math.exp(-e) * (1 - 1e-12) <= q <= math.exp(e) * (1 + 1e-12):
            raise HarnackViolation(f"density ratio {q} across edge ({u}, {v})")

    iu, ju = np.triu_indices(V, 1)
    hop, d, pr = H[iu, ju], D[iu, ju], P[iu, ju]
    records = []

    def rec(lemma, regime, mask, pred):
        r = d[mask] / pred[mask] if mask.any() else np.array([1.0])
        records.append(RegimeRecord(lemma, regime, e, win, float(r.min()), float(r.max()), int(mask.sum()), seed=seed))

    base = np.exp(-e * pr)
    rec("large_distance", "hop>=2", hop >= 2, base)
    rec("nonvertex", "hop<=2", hop <= 2, base * hop)

    if busemann is not None:
        # re-base the ray at height 0 so that b and h agree up to a bounded error
        b = busemann.values + G.height[busemann.ray[0]]
        pb = 0.5 * (b[iu] + b[ju] - hop)
        small = e * hop <= 1
        rec("estimate_both", "eps*hop<=1", small, np.exp(-e * pb) * hop)
        rec("estimate_both", "eps*hop>=1", e * hop >= 1, np.exp(-e * pb) / e)
        defect = np.abs(pb - pr)
        records[-1].additive_defect_max = float(defect.max()) if defect.size else 0.0

    # arc Harnack, in both orientations
    upper_slack = []
    lows = []
    for x, y in ((iu, ju), (ju, iu)):
        up = rho[x] * np.expm1(e * hop) / e
        lo = rho[x] * -np.expm1(-e * hop) / e
        bad = d > up * (1 + 1e-12)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise HarnackViolation(f"d_eps({x[k]}, {y[k]}) = {d[k]} exceeds arc bound {up[k]}")
        upper_slack.append(d / up)
        lows.append(d / lo)
    lo_r = np.concatenate(lows) if V > 1 else np.array([1.0])
    records.append(
        RegimeRecord("arc_harnack", "lower", e, win, float(lo_r.min()), float(lo_r.max()), int(len(iu)), seed=seed)
    )
    up_r = np.concatenate(upper_slack) if V > 1 else np.array([1.0])
    records.append(
        RegimeRecord("arc_harnack", "upper", e, win, float(up_r.min()), float(up_r.max()), int(len(iu)), seed=seed)
    )

    rows = [
        (int(a), int(b_), int(t), float(dd), float(q))
        for a, b_, t, dd, q in zip(iu, ju, hop, d, np.where(hop >= 2, base, base * hop))
    ]
    return records, rows


def write_pairs_csv(rows, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["u", "v", "hops", "d_eps", "predicted"])
        wr.writerows(rows)
    return path
