"""Truncated hyperbolic filling of a finite metric space.

Level ``n`` holds one vertex per point of a greedy maximal ``a**n``-separated
net; vertex ``(x, n)`` carries the open ball ``B(x, tau * a**n)``. Two distinct
vertices at the same or adjacent levels are joined when their balls meet.
Higher levels are finer scales; descending rays run toward coarse levels.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Hashable, NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .metric import FiniteMetricSpace, net_indices

MODES = ("witness_scan", "center_sum")

__all__ = [
    "FillingParams",
    "FillingParamError",
    "ConstructionError",
    "NoConePointError",
    "Vertex",
    "FillingGraph",
    "tau_lower_bound",
    "build_filling",
    "balls_intersect",
    "descending_closure",
    "cone_points",
    "branch_point",
    "branch_point_matrix",
    "anchored_descending_ray",
    "to_json_dict",
    "from_json_dict",
    "to_dot",
    "export_graph",
    "import_graph",
]


class FillingParamError(ValueError):
    pass


class ConstructionError(RuntimeError):
    """A structural guarantee of the construction failed at runtime."""


class NoConePointError(ValueError):
    pass


def tau_lower_bound(a: float) -> float:
    return max(3.0, 1.0 / (1.0 - a))


@dataclass(frozen=True)
class FillingParams:
    a: float
    tau: float
    n_min: int
    n_max: int
    intersection_mode: str = "witness_scan"
    order_seed: int | None = None

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise FillingParamError(f"a must lie in (0, 1), got {self.a}")
        bound = tau_lower_bound(self.a)
        if not self.tau > bound:
            raise FillingParamError(f"tau must exceed max(3, 1/(1-a)) = {bound:.6g}, got {self.tau}")
        if self.intersection_mode not in MODES:
            raise FillingParamError(f"intersection_mode must be one of {MODES}")

    def ball_radius(self, n: int) -> float:
        return self.tau * self.a**n

    def levels(self) -> range:
        return range(self.n_min, self.n_max + 1)


class Vertex(NamedTuple):
    id: int
    level: int
    center: Hashable


class FillingGraph:
    """Immutable leveled graph; derived tables are computed lazily and cached."""

    def __init__(self, metric: FiniteMetricSpace, params: FillingParams, centers, heights, edges):
        self.metric = metric
        self.params = params
        self.center_index = np.asarray(centers, dtype=np.int64)
        self.height = np.asarray(heights, dtype=np.int64)
        V = len(self.center_index)
        order = np.lexsort((np.arange(V), self.height))
        if np.any(order != np.arange(V)):
            raise ValueError("vertices must be ordered by level")
        self.edges = tuple(sorted((min(u, v), max(u, v), lab) for u, v, lab in edges))
        nbrs: list[list[int]] = [[] for _ in range(V)]
        for u, v, _ in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        self._nbrs = tuple(tuple(sorted(x)) for x in nbrs)
        self.levels: dict[int, tuple[int, ...]] = {}
        for i, n in enumerate(self.height.tolist()):
            self.levels.setdefault(n, ())
            self.levels[n] += (i,)
        self._lookup = {(int(n), int(c)): i for i, (n, c) in enumerate(zip(self.height, self.center_index))}
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.center_index)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FillingGraph):
            return NotImplemented
        return (
            self.params == other.params
            and self.metric.point_ids == other.metric.point_ids
            and np.array_equal(self.metric.dist, other.metric.dist)
            and np.array_equal(self.center_index, other.center_index)
            and np.array_equal(self.height, other.height)
            and self.edges == other.edges
        )

    __hash__ = None

    def vertex(self, i: int) -> Vertex:
        return Vertex(int(i), int(self.height[i]), self.metric.point_ids[self.center_index[i]])

    def vertices(self) -> list[Vertex]:
        return [self.vertex(i) for i in range(len(self))]

    def vertex_at(self, level: int, center: Hashable) -> int:
        return self._lookup[(level, self.metric.index(center))]

    def find(self, level: int, center: Hashable) -> int | None:
        return self._lookup.get((level, self.metric.index(center)))

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._nbrs[i]

    def adjacent(self, u: int, v: int) -> bool:
        return v in self._nbrs[u]

    def center_dist(self, u: int, v: int) -> float:
        return float(self.metric.dist[self.center_index[u], self.center_index[v]])

    @property
    def n_vertices(self) -> int:
        return len(self)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def sparse_adjacency(self, weights=None) -> csr_matrix:
        V = len(self)
        if not self.edges:
            return csr_matrix((V, V))
        u = np.array([e[0] for e in self.edges])
        v = np.array([e[1] for e in self.edges])
        w = np.ones(len(u)) if weights is None else np.asarray(weights, dtype=float)
        return csr_matrix((np.r_[w, w], (np.r_[u, v], np.r_[v, u])), shape=(V, V))

    def is_connected(self) -> bool:
        if len(self) == 0:
            return True
        k, _ = connected_components(self.sparse_adjacency(), directed=False)
        return k == 1

    def hop_matrix(self) -> np.ndarray:
        """All-pairs hop distances (float; ``inf`` across components)."""
        if "hops" not in self._cache:
            if len(self) == 0:
                H = np.zeros((0, 0))
            else:
                H = shortest_path(self.sparse_adjacency(), method="D", directed=False, unweighted=True)
            H.setflags(write=False)
            self._cache["hops"] = H
        return self._cache["hops"]

    def summary(self) -> dict:
        per_level = []
        for n in self.params.levels():
            ids = self.levels.get(n, ())
            idset = set(ids)
            horiz = sum(1 for u, v, lab in self.edges if lab == "horizontal" and u in idset)
            up = sum(1 for u, v, lab in self.edges if lab == "vertical" and u in idset and self.height[v] == n + 1)
            per_level.append({"n": n, "vertices": len(ids), "horizontal_edges": horiz, "vertical_edges_up": up})
        return {
            "vertices": len(self),
            "edges": len(self.edges),
            "connected": self.is_connected(),
            "levels": per_level,
        }


def _net_order(M: FiniteMetricSpace, seed: int | None) -> list[int]:
    if seed is None:
        return list(range(len(M)))
    return np.random.default_rng(seed).permutation(len(M)).tolist()


def _level_pair_intersections(
    D: np.ndarray, params: FillingParams, cA: np.ndarray, nA: int, cB: np.ndarray, nB: int
) -> np.ndarray:
    """Boolean matrix: ball of (cA[i], nA) meets ball of (cB[j], nB)."""
    rA, rB = params.ball_radius(nA), params.ball_radius(nB)
    if params.intersection_mode == "witness_scan":
        inA = (D[cA] < rA).astype(np.int32)
        inB = (D[cB] < rB).astype(np.int32)
        return (inA @ inB.T) > 0
    return D[np.ix_(cA, cB)] < rA + rB


def build_filling(M: FiniteMetricSpace, params: FillingParams) -> FillingGraph:
    """Build the filling of M on levels ``params.n_min .. params.n_max``."""
    if params.n_min > params.n_max:
        raise FillingParamError(f"empty window [{params.n_min}, {params.n_max}]")
    if len(M) == 0:
        raise FillingParamError("cannot fill an empty space")
    D = M.dist
    order = _net_order(M, params.order_seed)
    centers: list[int] = []
    heights: list[int] = []
    level_centers: dict[int, np.ndarray] = {}
    level_ids: dict[int, np.ndarray] = {}
    for n in params.levels():
        net = net_indices(D, params.a**n, order)
        level_ids[n] = np.arange(len(centers), len(centers) + len(net))
        level_centers[n] = np.array(net, dtype=np.int64)
        centers.extend(net)
        heights.extend([n] * len(net))

    edges = []
    for n in params.levels():
        c, ids = level_centers[n], level_ids[n]
        X = _level_pair_intersections(D, params, c, n, c, n)
        for i, j in zip(*np.nonzero(np.triu(X, 1))):
            edges.append((int(ids[i]), int(ids[j]), "horizontal"))
        if n < params.n_max:
            c2, ids2 = level_centers[n + 1], level_ids[n + 1]
            Y = _level_pair_intersections(D, params, c, n, c2, n + 1)
            for i, j in zip(*np.nonzero(Y)):
                edges.append((int(ids[i]), int(ids2[j]), "vertical"))
    return FillingGraph(M, params, centers, heights, edges)


def balls_intersect(G: FillingGraph, v: int, w: int) -> bool:
    p = G.params
    cv, cw = G.center_index[v], G.center_index[w]
    hv, hw = int(G.height[v]), int(G.height[w])
    D = G.metric.dist
    if p.intersection_mode == "witness_scan":
        return bool(np.any((D[cv] < p.ball_radius(hv)) & (D[cw] < p.ball_radius(hw))))
    return bool(D[cv, cw] < p.ball_radius(hv) + p.ball_radius(hw))


def balls_intersect_levels(G: FillingGraph, n1: int, n2: int) -> np.ndarray:
    """Ball-intersection matrix between all vertices of two levels."""
    a, b = np.array(G.levels[n1]), np.array(G.levels[n2])
    return _level_pair_intersections(G.metric.dist, G.params, G.center_index[a], n1, G.center_index[b], n2)


def down_neighbors(G: FillingGraph, v: int) -> tuple[int, ...]:
    h = G.height[v]
    return tuple(u for u in G.neighbors(v) if G.height[u] == h - 1)


def descendant_matrix(G: FillingGraph) -> np.ndarray:
    """``desc[v, u]`` is True when u is reachable from v along strictly descending edges."""
    if "desc" not in G._cache:
        V = len(G)
        desc = np.eye(V, dtype=bool)
        for v in range(V):  # ids ascend with level, so lower rows are final
            down = down_neighbors(G, v)
            if down:
                desc[v] |= desc[list(down)].any(axis=0)
        desc.setflags(write=False)
        G._cache["desc"] = desc
    return G._cache["desc"]


def descending_closure(G: FillingGraph, v: int) -> frozenset[int]:
    return frozenset(np.flatnonzero(descendant_matrix(G)[v]).tolist())


def cone_points(G: FillingGraph, v: int, w: int) -> tuple[int, ...]:
    desc = descendant_matrix(G)
    return tuple(np.flatnonzero(desc[v] & desc[w]).tolist())


def _best(G: FillingGraph, mask: np.ndarray) -> np.ndarray:
    # max height, then smallest id; -1 where the mask row is empty
    V = len(G)
    score = np.where(mask, G.height[None, :] * (V + 1) - np.arange(V)[None, :], np.iinfo(np.int64).min)
    best = score.argmax(axis=1)
    best[~mask.any(axis=1)] = -1
    return best


def branch_point(G: FillingGraph, v: int, w: int) -> int:
    """Highest common vertical ancestor of v and w (ties: smallest id)."""
    desc = descendant_matrix(G)
    b = int(_best(G, (desc[v] & desc[w])[None, :])[0])
    if b < 0:
        raise NoConePointError(
            f"vertices {v} and {w} have no cone point in the window; lower n_min below {G.params.n_min}"
        )
    return b


def branch_point_matrix(G: FillingGraph) -> np.ndarray:
    """Branch point for every vertex pair (-1 where none exists in the window)."""
    if "branch" not in G._cache:
        desc = descendant_matrix(G)
        V = len(G)
        B = np.empty((V, V), dtype=np.int64)
        for v in range(V):
            B[v] = _best(G, desc[v][None, :] & desc)
        B.setflags(write=False)
        G._cache["branch"] = B
    return G._cache["branch"]


def anchored_descending_ray(G: FillingGraph, z: Hashable, n_top: int | None = None) -> tuple[int, ...]:
    """Vertices from level ``n_top`` down to ``n_min`` whose centers are nearest to z.

    Each chosen center lies within ``(tau/3) a**n`` of z and consecutive
    vertices are adjacent; either failure raises ConstructionError.
    """
    p = G.params
    n_top = p.n_max if n_top is None else n_top
    if not p.n_min <= n_top <= p.n_max:
        raise ValueError(f"n_top={n_top} outside window [{p.n_min}, {p.n_max}]")
    zi = G.metric.index(z)
    D = G.metric.dist
    ray = []
    for n in range(n_top, p.n_min - 1, -1):
        ids = np.array(G.levels[n])
        dz = D[zi, G.center_index[ids]]
        k = int(dz.argmin())
        if not dz[k] < p.tau / 3 * p.a**n:
            raise ConstructionError(f"no center within (tau/3)a^{n} of {z!r} at level {n}")
        v = int(ids[k])
        if ray and not G.adjacent(ray[-1], v):
            raise ConstructionError(f"ray anchored at {z!r}: vertices {ray[-1]} and {v} are not adjacent")
        ray.append(v)
    return tuple(ray)


def to_json_dict(G: FillingGraph) -> dict:
    M = G.metric
    levels = []
    for n in G.params.levels():
        ids = G.levels.get(n, ())
        levels.append({"n": n, "vertices": [{"id": i, "center": M.point_ids[G.center_index[i]]} for i in ids]})
    return {
        "params": asdict(G.params),
        "levels": levels,
        "edges": [{"u": u, "v": v, "label": lab} for u, v, lab in G.edges],
        "metric": {"point_ids": list(M.point_ids), "dist": M.dist.tolist()},
    }


def from_json_dict(data: dict) -> FillingGraph:
    M = FiniteMetricSpace(data["metric"]["point_ids"], np.array(data["metric"]["dist"], dtype=float))
    params = FillingParams(**data["params"])
    verts = sorted(
        ((v["id"], lvl["n"], M.index(v["center"])) for lvl in data["levels"] for v in lvl["vertices"]),
    )
    if [v[0] for v in verts] != list(range(len(verts))):
        raise ValueError("vertex ids must be 0..V-1")
    edges = [(e["u"], e["v"], e["label"]) for e in data["edges"]]
    return FillingGraph(M, params, [v[2] for v in verts], [v[1] for v in verts], edges)


DOT_LIMIT = 2000


def to_dot(G: FillingGraph) -> str:
    if len(G) >= DOT_LIMIT:
        raise ValueError(f"DOT export is limited to graphs under {DOT_LIMIT} vertices")
    M = G.metric
    lines = ["graph filling {", "  rankdir=BT;"]
    for n in G.params.levels():
        ids = G.levels.get(n, ())
        if not ids:
            continue
        lines.append("  { rank=same; " + " ".join(f"v{i};" for i in ids) + " }")
        for i in ids:
            lines.append(f'  v{i} [label="{M.point_ids[G.center_index[i]]}@{n}"];')
    for u, v, lab in G.edges:
        style = " [style=dashed]" if lab == "horizontal" else ""
        lines.append(f"  v{u} -- v{v}{style};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(G: FillingGraph, path: str | Path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or ("dot" if path.suffix == ".dot" else "json")
    if fmt == "json":
        path.write_text(json.dumps(to_json_dict(G), indent=1), encoding="utf-8")
    elif fmt == "dot":
        path.write_text(to_dot(G), encoding="utf-8")
    else:
        raise ValueError(f"unknown graph format {fmt!r}")
    return path


def import_graph(path: str | Path) -> FillingGraph:
    return from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# structural lemma checks; each returns a list of failure witnesses
# ---------------------------------------------------------------------------

def check_edge_rule(G: FillingGraph) -> list[dict]:
    bad = []
    for u, v, lab in G.edges:
        dh = abs(int(G.height[u]) - int(G.height[v]))
        if dh > 1 or not balls_intersect(G, u, v) or (lab == "horizontal") != (dh == 0):
            bad.append({"edge": [u, v], "label": lab, "dh": dh})
    # completeness: every intersecting same/adjacent-level pair is an edge
    for n in G.params.levels():
        for m in (n, n + 1):
            if m not in G.levels or n not in G.levels:
                continue
            X = balls_intersect_levels(G, n, m)
            A, B = G.levels[n], G.levels[m]
            for i, j in zip(*np.nonzero(X)):
                u, v = A[i], B[j]
                if u != v and not G.adjacent(u, v):
                    bad.append({"missing_edge": [u, v]})
    return bad


def check_height_connection(G: FillingGraph) -> list[dict]:
    """Intersecting balls at different heights imply a vertical path."""
    desc = descendant_matrix(G)
    bad = []
    lv = sorted(G.levels)
    for i, n1 in enumerate(lv):
        for n2 in lv[i + 1:]:
            X = balls_intersect_levels(G, n1, n2)
            lo, hi = np.array(G.levels[n1]), np.array(G.levels[n2])
            reach = desc[np.ix_(hi, lo)].T
            for r, c in zip(*np.nonzero(X & ~reach)):
                bad.append({"lower": int(lo[r]), "upper": int(hi[c])})
    return bad


def geometric_series_check(G: FillingGraph) -> tuple[float, list[dict]]:
    """Center distance along vertical paths vs ``2 tau a^h(lower) / (1-a)``.

    Returns the worst ratio observed and the violating pairs.
    """
    p = G.params
    desc = descendant_matrix(G)
    D = G.metric.dist[np.ix_(G.center_index, G.center_index)]
    bound = 2 * p.tau * p.a ** G.height.astype(float) / (1 - p.a)
    ratio = np.where(desc, D / bound[None, :], 0.0)  # rows: upper v, cols: lower u
    worst = float(ratio.max()) if len(G) else 0.0
    bad = [{"upper": int(v), "lower": int(u), "ratio": float(ratio[v, u])} for v, u in zip(*np.nonzero(ratio > 1 + 1e-12))]
    return worst, bad


def check_cone_adjacent(G: FillingGraph) -> list[dict]:
    """Adjacent same-level vertices above n_min have a branch point one level down."""
    B = branch_point_matrix(G)
    bad = []
    for u, v, lab in G.edges:
        if lab != "horizontal" or G.height[u] == G.params.n_min:
            continue
        b = B[u, v]
        if b < 0 or G.height[b] != G.height[u] - 1:
            bad.append({"pair": [u, v], "branch": int(b)})
    return bad


def rays_for_all_points(G: FillingGraph, n_top: int | None = None) -> dict:
    return {z: anchored_descending_ray(G, z, n_top) for z in G.metric.point_ids}


def check_bounded_distance_vertical(G: FillingGraph) -> list[dict]:
    """Rays anchored at y, z are adjacent at every level k with (tau/3)a^k > d(y, z)."""
    p = G.params
    rays = rays_for_all_points(G)
    ids = G.metric.point_ids
    bad = []
    for i, y in enumerate(ids):
        for z in ids[i + 1:]:
            dyz = G.metric.d(y, z)
            for t, n in enumerate(range(p.n_max, p.n_min - 1, -1)):
                if p.tau / 3 * p.a**n > dyz:
                    v, w = rays[y][t], rays[z][t]
                    if v != w and not G.adjacent(v, w):
                        bad.append({"points": [y, z], "level": n, "vertices": [v, w]})
    return bad


def branch_comparison(G: FillingGraph) -> dict:
    """Ratio ``a^h(u) / (d(v, w) + a^min(h(v), h(w)))`` over all pairs, u the branch point."""
    p = G.params
    B = branch_point_matrix(G)
    iu = np.triu_indices(len(G), 0)
    b = B[iu]
    if np.any(b < 0):
        k = int(np.flatnonzero(b < 0)[0])
        raise NoConePointError(f"pair ({iu[0][k]}, {iu[1][k]}) has no cone point")
    h = G.height.astype(float)
    d = G.metric.dist[G.center_index[iu[0]], G.center_index[iu[1]]]
    r = p.a ** h[b] / (d + p.a ** np.minimum(h[iu[0]], h[iu[1]]))
    lo, hi = float(r.min()), float(r.max())
    return {"ratio_min": lo, "ratio_max": hi, "C": max(hi, 1 / lo), "pairs": int(len(r))}


def check_starlike(G: FillingGraph) -> list[dict]:
    """Every vertex lies on the anchored ray of its own center (distance 0 <= 1/2)."""
    rays = rays_for_all_points(G)
    bad = []
    for v in range(len(G)):
        z = G.metric.point_ids[G.center_index[v]]
        t = G.params.n_max - int(G.height[v])
        if rays[z][t] != v:
            bad.append({"vertex": v, "ray_vertex": rays[z][t]})
    return bad
