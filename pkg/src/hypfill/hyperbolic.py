"""Hop-metric diagnostics on a filling: Gromov products, four-point delta,
equiradial points and tripod maps, truncated Busemann functions."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .filling import FillingGraph, branch_point_matrix

__all__ = [
    "DisconnectedError",
    "GeodesicPath",
    "predecessor_matrix",
    "geodesic",
    "graph_distance",
    "gromov_product_base",
    "gromov_product_height",
    "gromov_product_busemann",
    "height_product_matrix",
    "DeltaEstimate",
    "delta_four_point",
    "four_point_delta_matrix",
    "delta_triple",
    "tetrahedron_check",
    "Equiradial",
    "canonical_equiradial",
    "tripod_defect",
    "BusemannEstimate",
    "busemann_estimate",
    "adapted_defect",
    "branch_estimate_constants",
    "delta_inequality_height",
]


class DisconnectedError(ValueError):
    pass


@dataclass(frozen=True)
class GeodesicPath:
    vertices: tuple[int, ...]

    @property
    def hops(self) -> int:
        return len(self.vertices) - 1

    @property
    def start(self) -> int:
        return self.vertices[0]

    @property
    def end(self) -> int:
        return self.vertices[-1]

    def reversed(self) -> "GeodesicPath":
        return GeodesicPath(self.vertices[::-1])


def predecessor_matrix(G: FillingGraph) -> np.ndarray:
    """``pred[r, x]``: smallest-id neighbour of x one hop closer to r (-1 at r or if unreachable)."""
    if "pred" not in G._cache:
        H = G.hop_matrix()
        V = len(G)
        pred = np.full((V, V), -1, dtype=np.int64)
        for x in range(V):
            nb = np.array(G.neighbors(x), dtype=np.int64)
            if nb.size == 0:
                continue
            hit = H[:, nb] == (H[:, x] - 1)[:, None]
            has = hit.any(axis=1)
            pred[has, x] = nb[hit[has].argmax(axis=1)]
        pred.setflags(write=False)
        G._cache["pred"] = pred
    return G._cache["pred"]


def geodesic(G: FillingGraph, u: int, v: int) -> GeodesicPath:
    """Canonical geodesic from u to v (predecessor ties broken by smallest id)."""
    H = G.hop_matrix()
    if not np.isfinite(H[u, v]):
        raise DisconnectedError(f"vertices {u} and {v} lie in different components")
    pred = predecessor_matrix(G)
    path = [v]
    while path[-1] != u:
        path.append(int(pred[u, path[-1]]))
    return GeodesicPath(tuple(reversed(path)))


def graph_distance(G: FillingGraph, u: int, v: int) -> tuple[int, GeodesicPath]:
    p = geodesic(G, u, v)
    return p.hops, p


def gromov_product_base(G: FillingGraph, u: int, v: int, p: int) -> float:
    H = G.hop_matrix()
    return 0.5 * (H[u, p] + H[v, p] - H[u, v])


def gromov_product_height(G: FillingGraph, u: int, v: int) -> float:
    return 0.5 * (G.height[u] + G.height[v] - G.hop_matrix()[u, v])


def gromov_product_busemann(G: FillingGraph, u: int, v: int, b) -> float:
    """Gromov product based at a function b given as an array over vertices."""
    return 0.5 * (b[u] + b[v] - G.hop_matrix()[u, v])


def height_product_matrix(G: FillingGraph) -> np.ndarray:
    h = G.height.astype(float)
    return 0.5 * (h[:, None] + h[None, :] - G.hop_matrix())


# ---------------------------------------------------------------------------
# four-point delta
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaEstimate:
    delta: float
    mode: str
    quadruples: int
    seed: int | None = None
    witness: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "mode": self.mode,
            "quadruples": self.quadruples,
            "seed": self.seed,
            "witness": None if self.witness is None else list(self.witness),
        }


def _gap(s1, s2, s3):
    # largest pair-sum minus the middle one
    mx = np.maximum(np.maximum(s1, s2), s3)
    mn = np.minimum(np.minimum(s1, s2), s3)
    return 2 * mx + mn - (s1 + s2 + s3)


def four_point_delta_matrix(D: np.ndarray) -> tuple[float, tuple[int, ...] | None, int]:
    """Exact smallest d' with ``(x|z)_p >= min((x|y)_p, (y|z)_p) - d'`` for all quadruples.

    Over all bases this equals half the gap between the two largest of the
    three pair-sums of each quadruple, maximized. Returns (delta, witness, count).
    """
    V = D.shape[0]
    best, wit, count = 0.0, None, 0
    for x in range(V):
        for y in range(x + 1, V - 2):
            rest = np.arange(y + 1, V)
            dx, dy = D[x, rest], D[y, rest]
            sub = D[np.ix_(rest, rest)]
            g = _gap(D[x, y] + sub, dx[:, None] + dy[None, :], dy[:, None] + dx[None, :])
            g = np.triu(g, 1)
            count += len(rest) * (len(rest) - 1) // 2
            k = int(g.argmax())
            if g.flat[k] > best:
                best = float(g.flat[k])
                wit = (x, y, int(rest[k // len(rest)]), int(rest[k % len(rest)]))
    return best / 2, wit, count


def delta_four_point(G: FillingGraph, mode: str = "exact", seed: int = 0, count: int = 100_000) -> DeltaEstimate:
    H = G.hop_matrix()
    if len(G) and not np.all(np.isfinite(H)):
        raise DisconnectedError("four-point delta needs a connected graph")
    if mode == "exact":
        d, wit, n = four_point_delta_matrix(H)
        return DeltaEstimate(d, "exact", n, None, wit)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    V = len(G)
    Q = rng.integers(0, V, size=(count, 4))
    x, y, z, u = Q.T
    g = _gap(H[x, y] + H[z, u], H[x, z] + H[y, u], H[x, u] + H[y, z])
    k = int(g.argmax())
    return DeltaEstimate(float(g[k]) / 2, "sampled", count, seed, tuple(int(t) for t in Q[k]))


def delta_triple(triple: Sequence[float], delta: float, tol: float = 1e-12) -> bool:
    s = sorted(triple)
    return s[1] - s[0] <= delta + tol


def tetrahedron_check(d12, d13, d14, d23, d24, d34, delta: float, tol: float = 1e-12) -> bool:
    """Tetrahedron lemma as an implication: if the four face triples are
    delta-triples then the three opposite-pair sums form a 2*delta-triple.
    Returns False only when the hypotheses hold and the conclusion fails."""
    faces = [(d23, d24, d34), (d13, d14, d34), (d12, d14, d24), (d12, d13, d23)]
    if not all(delta_triple(t, delta, tol) for t in faces):
        return True
    return delta_triple((d12 + d34, d13 + d24, d14 + d23), 2 * delta, 4 * tol)


# ---------------------------------------------------------------------------
# triangles
# ---------------------------------------------------------------------------

def _orient(path: GeodesicPath, a: int, b: int) -> GeodesicPath:
    if path.start == a and path.end == b:
        return path
    if path.start == b and path.end == a:
        return path.reversed()
    raise ValueError(f"geodesic does not join {a} and {b}")


def _triangle(G: FillingGraph, x: int, y: int, z: int, geodesics) -> tuple[GeodesicPath, ...]:
    if geodesics is None:
        return geodesic(G, x, y), geodesic(G, x, z), geodesic(G, y, z)
    gxy, gxz, gyz = geodesics
    return _orient(gxy, x, y), _orient(gxz, x, z), _orient(gyz, y, z)


@dataclass(frozen=True)
class Equiradial:
    points: tuple[int, int, int]  # (on yz, on xz, on xy)
    positions: tuple[int, int, int]  # offsets: from y on yz, from x on xz, from x on xy
    diameter: float


def canonical_equiradial(G: FillingGraph, x: int, y: int, z: int, geodesics=None) -> Equiradial:
    """Equiradial points at vertex resolution.

    Arclengths are Gromov products (half-integers) rounded down, i.e. toward
    the triangle vertex they are measured from.
    """
    gxy, gxz, gyz = _triangle(G, x, y, z, geodesics)
    H = G.hop_matrix()
    px = math.floor(0.5 * (H[x, y] + H[y, z] - H[x, z]))  # (x|z)_y, from y along yz
    pyz = math.floor(0.5 * (H[x, y] + H[x, z] - H[y, z]))  # (y|z)_x, from x
    xh, yh, zh = gyz.vertices[px], gxz.vertices[pyz], gxy.vertices[pyz]
    diam = max(H[xh, yh], H[yh, zh], H[xh, zh])
    return Equiradial((xh, yh, zh), (px, pyz, pyz), float(diam))


def tripod_defect(G: FillingGraph, x: int, y: int, z: int, geodesics=None) -> float:
    """Max over vertex pairs on the triangle of ``| |T(p)T(q)| - |pq| |``."""
    gxy, gxz, gyz = _triangle(G, x, y, z, geodesics)
    eq = canonical_equiradial(G, x, y, z, (gxy, gxz, gyz))
    sx, sy, sz = eq.positions
    verts, legs, radii = [], [], []

    def side(path, s, leg_a, leg_b):
        for t, v in enumerate(path.vertices):
            verts.append(v)
            legs.append(leg_a if t <= s else leg_b)
            radii.append(abs(s - t))

    side(gxy, sz, 1, 2)
    side(gxz, sy, 1, 3)
    side(gyz, sx, 2, 3)
    verts, legs, radii = np.array(verts), np.array(legs), np.array(radii, dtype=float)
    same = legs[:, None] == legs[None, :]
    tri = np.where(same, np.abs(radii[:, None] - radii[None, :]), radii[:, None] + radii[None, :])
    H = G.hop_matrix()
    return float(np.abs(tri - H[np.ix_(verts, verts)]).max())


# ---------------------------------------------------------------------------
# Busemann functions of truncated rays
# ---------------------------------------------------------------------------

@dataclass
class BusemannEstimate:
    """Truncated Busemann function of a descending ray.

    The ray is indexed by arclength t from its start ``ray[0]`` toward the
    coarse end. ``|ray[t] x| - t`` is nonincreasing in t (triangle
    inequality), so ``values[x]``, its value at the deepest t, is the minimum
    over the available t and an upper bound of the untruncated function.
    """

    ray: tuple[int, ...]
    values: np.ndarray
    last_increment: np.ndarray
    stabilized: np.ndarray
    truncation_level: int
    anchor: Hashable | None = None
    trace: np.ndarray = field(repr=False, default=None)

    def __call__(self, x: int) -> float:
        return float(self.values[x])


def busemann_estimate(G: FillingGraph, ray: Sequence[int], anchor: Hashable | None = None, window: int = 3) -> BusemannEstimate:
    """Evaluate the truncated Busemann function of `ray` at every vertex.

    A vertex counts as stabilized when its maximand did not change over the
    last `window` steps of the ray.
    """
    ray = tuple(int(v) for v in ray)
    if len(ray) < 2:
        raise ValueError("ray must contain at least 2 vertices")
    H = G.hop_matrix()
    t = np.arange(len(ray), dtype=float)
    trace = H[list(ray), :] - t[:, None]
    inc = np.diff(trace, axis=0)
    if np.any(inc > 1e-12):
        r, x = np.argwhere(inc > 1e-12)[0]
        raise AssertionError(f"Busemann sequence increased at t={r + 1} for vertex {x}")
    if len(ray) > window:
        stable = np.all(inc[-window:] == 0, axis=0)
    else:
        stable = np.zeros(len(G), dtype=bool)
    return BusemannEstimate(
        ray=ray,
        values=trace[-1].copy(),
        last_increment=inc[-1].copy(),
        stabilized=stable,
        truncation_level=int(G.height[ray[-1]]),
        anchor=anchor,
        trace=trace,
    )


def adapted_defect(path: GeodesicPath | Sequence[int], b, hops=None) -> float:
    """Measured adaptedness constant of a geodesic for the function b.

    t = 0 sits at the first vertex minimizing b; the defect is
    ``max_t |b(path[t]) - |t| - (x|y)_b|`` with x, y the endpoints.
    `hops` is the endpoints' distance (defaults to the path length).
    """
    verts = list(path.vertices if isinstance(path, GeodesicPath) else path)
    vals = np.array([b[v] for v in verts], dtype=float)
    L = len(verts) - 1 if hops is None else hops
    k = int(vals.argmin())
    gp = 0.5 * (vals[0] + vals[-1] - L)
    t = np.abs(np.arange(len(verts)) - k)
    return float(np.abs(vals - t - gp).max())


# ---------------------------------------------------------------------------
# sweeps over all pairs / triples
# ---------------------------------------------------------------------------

def branch_estimate_constants(G: FillingGraph) -> dict:
    """Additive gap ``|h(u) - (v|w)_h|`` and multiplicative comparison
    ``a^{(v|w)_h} / (d(v, w) + a^{min h})`` over all vertex pairs."""
    p = G.params
    B = branch_point_matrix(G)
    P = height_product_matrix(G)
    iu = np.triu_indices(len(G), 0)
    b = B[iu]
    if np.any(b < 0):
        raise ValueError("some pair has no cone point in the window")
    h = G.height.astype(float)
    gap = np.abs(h[b] - P[iu])
    d = G.metric.dist[G.center_index[iu[0]], G.center_index[iu[1]]]
    r = p.a ** P[iu] / (d + p.a ** np.minimum(h[iu[0]], h[iu[1]]))
    return {
        "c_additive": float(gap.max()),
        "ratio_min": float(r.min()),
        "ratio_max": float(r.max()),
        "C_multiplicative": float(max(r.max(), 1 / r.min())),
        "branch_below_product": bool(np.all(h[b] <= P[iu] + 1e-12)),
        "pairs": int(len(b)),
    }


def delta_inequality_height(G: FillingGraph) -> tuple[float, tuple[int, int, int] | None]:
    """Smallest c' with ``(u|w)_h >= min((u|v)_h, (v|w)_h) - c'`` over all triples."""
    P = height_product_matrix(G)
    best, wit = -math.inf, None
    for v in range(len(G)):
        s = np.minimum(P[:, v][:, None], P[v, :][None, :]) - P
        k = int(s.argmax())
        if s.flat[k] > best:
            best = float(s.flat[k])
            wit = (k // len(G), v, k % len(G))
    return max(best, 0.0), wit


def all_triangles(V: int):
    return itertools.combinations(range(V), 3)
