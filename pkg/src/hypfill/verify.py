"""Run configuration and the verification suite behind the command line.

Exact invariants are assertions: any witness lands in ``failures`` and makes
the run fail. Everything else is a measured constant and is only reported.
"""
from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .filling import (
    MODES,
    FillingGraph,
    FillingParams,
    anchored_descending_ray,
    branch_comparison,
    build_filling,
    check_bounded_distance_vertical,
    check_cone_adjacent,
    check_edge_rule,
    check_height_connection,
    check_starlike,
    geometric_series_check,
)
from .hyperbolic import (
    adapted_defect,
    branch_estimate_constants,
    busemann_estimate,
    canonical_equiradial,
    delta_four_point,
    delta_inequality_height,
    geodesic,
    height_product_matrix,
    tripod_defect,
)
from .metric import FiniteMetricSpace, load_metric, scale_stats
from .uniformize import (
    EpsilonWarning,
    EpsilonWeighting,
    Uniformized,
    boundary_bilipschitz,
    dist_to_boundary,
    measure_admissibility,
    truncated_tail,
    uniform_constant_sweep,
    verify_distance_regimes,
)

log = logging.getLogger(__name__)

SUITES = (
    "exact_invariants",
    "height_busemann",
    "hyperbolicity",
    "tripod",
    "branch_estimate",
    "delta_inequality_filling",
    "distance_regimes",
    "admissibility",
    "boundary_bilip",
    "uniform_curves",
    "starlike",
)

TOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input: str | None = None
    format: str | None = None
    kind: str = "euclidean"
    theta: float = 1.0
    a: float = 0.5
    tau: float = 4.0
    epsilons: list[float] | None = None  # None: [-log a]
    n_min: int | None = None
    n_max: int | None = None
    max_levels: int = 14
    intersection_mode: str = "witness_scan"
    order_seed: int | None = None
    seed: int = 0
    delta_mode: str = "exact"
    delta_samples: int = 100_000
    triangle_samples: int = 500
    pair_samples: int = 2000
    suites: list[str] = field(default_factory=lambda: list(SUITES))
    out_dir: str = "out"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def merged(self, overrides: dict) -> "RunConfig":
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)

    def eps_list(self) -> list[float]:
        return list(self.epsilons) if self.epsilons else [-math.log(self.a)]

    def validate(self) -> None:
        if self.epsilons is not None:
            if len(self.epsilons) == 0:
                raise ConfigError("epsilon list must not be empty")
            if any(not (e > 0 and math.isfinite(e)) for e in self.epsilons):
                raise ConfigError(f"every epsilon must be positive: {self.epsilons}")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suites {unknown}; choose from {list(SUITES)}")
        if len(set(self.suites)) != len(self.suites):
            raise ConfigError("suites must not repeat")
        if self.intersection_mode not in MODES:
            raise ConfigError(f"intersection_mode must be one of {MODES}")
        if self.delta_mode not in ("exact", "sampled"):
            raise ConfigError("delta_mode must be exact or sampled")
        try:
            # window placeholder: only a and tau are checked here
            FillingParams(self.a, self.tau, 0, 0, self.intersection_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def params_for(self, M: FiniteMetricSpace) -> FillingParams:
        st = scale_stats(M, self.a, self.max_levels)
        n_min = st.suggested_n_min if self.n_min is None else self.n_min
        n_max = st.suggested_n_max if self.n_max is None else self.n_max
        if n_min > n_max:
            raise ConfigError(f"empty window [{n_min}, {n_max}]")
        try:
            return FillingParams(self.a, self.tau, n_min, n_max, self.intersection_mode, self.order_seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def load(self) -> FiniteMetricSpace:
        if not self.input:
            raise ConfigError("no input given")
        return load_metric(self.input, self.format, kind=self.kind, theta=self.theta)


@dataclass
class ComparisonReport:
    config: dict
    window: tuple[int, int]
    suites: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list, repr=False)  # rows for pairs.csv

    @property
    def ok(self) -> bool:
        return not self.failures

    def body(self) -> dict:
        """Report payload without wall-clock data; identical across reruns."""
        return {
            "tool": "hypfill",
            "version": __version__,
            "config": self.config,
            "window": list(self.window),
            "seed": self.config.get("seed"),
            "suites": self.suites,
            "failures": self.failures,
            "ok": self.ok,
        }

    def to_dict(self) -> dict:
        d = self.body()
        d["timings"] = self.timings
        return d

    def dumps(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict() if timings else self.body(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


# ---------------------------------------------------------------------------
# individual suites
# ---------------------------------------------------------------------------

def _metric_axioms(D: np.ndarray, tol: float) -> list[dict]:
    bad = []
    V = D.shape[0]
    if not np.all(np.isfinite(D)):
        i, j = np.argwhere(~np.isfinite(D))[0]
        return [{"kind": "disconnected", "pair": [int(i), int(j)]}]
    asym = np.abs(D - D.T)
    if asym.max(initial=0) > 0:
        i, j = np.unravel_index(asym.argmax(), asym.shape)
        bad.append({"kind": "symmetry", "pair": [int(i), int(j)]})
    off = ~np.eye(V, dtype=bool)
    if np.any(D[off] <= 0):
        i, j = np.argwhere((D <= 0) & off)[0]
        bad.append({"kind": "positivity", "pair": [int(i), int(j)]})
    scale = max(float(D.max(initial=0)), 1.0)
    for k in range(V):
        s = D[:, k][:, None] + D[k, :][None, :] - D
        if s.min() < -tol * scale:
            i, j = np.unravel_index(s.argmin(), s.shape)
            bad.append({"kind": "triangle", "triple": [int(i), int(k), int(j)]})
            break
    return bad


def exact_invariants(G: FillingGraph, weightings: list[EpsilonWeighting]) -> tuple[dict, list]:
    fails = []

    def add(name, witnesses):
        for w in witnesses[:20]:
            fails.append({"check": name, "witness": w})
        return len(witnesses)

    counts = {}
    counts["edge_rule"] = add("edge_rule", check_edge_rule(G))
    H = G.hop_matrix()
    h = G.height.astype(float)
    lip = np.abs(h[:, None] - h[None, :]) - H
    counts["height_lipschitz"] = add("height_lipschitz", [list(map(int, p)) for p in np.argwhere(lip > TOL)])
    P = height_product_matrix(G)
    lh = P - np.minimum(h[:, None], h[None, :])
    counts["lip_height"] = add("lip_height", [list(map(int, p)) for p in np.argwhere(lh > TOL)])
    counts["height_connection"] = add("height_connection", check_height_connection(G))
    worst, geo = geometric_series_check(G)
    counts["geometric_series"] = add("geometric_series", geo)
    counts["cone_adjacent"] = add("cone_adjacent", check_cone_adjacent(G))
    counts["bounded_distance_vertical"] = add("bounded_distance_vertical", check_bounded_distance_vertical(G))
    counts["connected"] = add("connected", [] if G.is_connected() else [{"components": "many"}])

    p = G.params
    per_eps = []
    for w in weightings:
        U = Uniformized(G, w)
        e = w.epsilon
        rho = w.density(G.height)
        harn = []
        for u, v, _ in G.edges:
            q = rho[u] / rho[v]
            if not math.exp(-e) * (1 - TOL) <= q <= math.exp(e) * (1 + TOL):
                harn.append({"edge": [u, v], "ratio": q})
        tele = []
        for n in range(p.n_min, p.n_max + 1):
            for m in range(n, p.n_max + 1):
                lhs = truncated_tail(n, m, w) + truncated_tail(m, p.n_max, w)
                rhs = truncated_tail(n, p.n_max, w)
                if abs(lhs - rhs) > TOL * max(1.0, abs(rhs)):
                    tele.append({"levels": [n, m, p.n_max], "gap": lhs - rhs})
        axioms = _metric_axioms(U.distance_matrix(), TOL)
        add(f"harnack_edge[eps={e:g}]", harn)
        add(f"tail_telescoping[eps={e:g}]", tele)
        add(f"d_eps_metric[eps={e:g}]", axioms)
        per_eps.append({"epsilon": e, "harnack_edge": len(harn), "tail_telescoping": len(tele), "d_eps_metric": len(axioms)})
    rec = {"violations": counts, "geometric_series_worst_ratio": worst, "per_epsilon": per_eps, "passed": not fails}
    return rec, fails


def _anchor_ray(G: FillingGraph):
    z = G.metric.point_ids[0]
    return z, anchored_descending_ray(G, z)


def height_busemann(G: FillingGraph) -> dict:
    z, ray = _anchor_ray(G)
    if len(ray) < 2:
        return {"anchor": z, "skipped": "window has a single level"}
    est = busemann_estimate(G, ray, anchor=z)
    h = G.height.astype(float)
    target = h - h[ray[0]]
    defect = np.abs(est.values - target)
    st = est.stabilized
    on_ray = np.array([est.values[v] for v in ray])
    return {
        "anchor": z,
        "ray_length": len(ray),
        "truncation_level": est.truncation_level,
        "stabilized_vertices": int(st.sum()),
        "vertices": len(G),
        "defect_max_stabilized": float(defect[st].max()) if st.any() else None,
        "defect_max_all": float(defect.max()),
        "bound": 3,
        "within_bound": bool(not st.any() or defect[st].max() <= 3),
        "last_increment_max": float(est.last_increment.max()),
        "ray_values_exact": bool(np.array_equal(on_ray, -np.arange(len(ray), dtype=float))),
    }


def _sample_triangles(V: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    total = V * (V - 1) * (V - 2) // 6
    if total <= budget:
        from itertools import combinations

        return np.array(list(combinations(range(V), 3)), dtype=np.int64).reshape(-1, 3)
    T = np.sort(rng.integers(0, V, size=(budget * 2, 3)), axis=1)
    T = T[(T[:, 0] < T[:, 1]) & (T[:, 1] < T[:, 2])]
    return np.unique(T, axis=0)[:budget]


def hyperbolicity(G: FillingGraph, cfg: RunConfig) -> dict:
    est = delta_four_point(G, cfg.delta_mode, seed=cfg.seed, count=cfg.delta_samples)
    rng = np.random.default_rng(cfg.seed)
    tris = _sample_triangles(len(G), cfg.triangle_samples, rng)
    diam = max((canonical_equiradial(G, *map(int, t)).diameter for t in tris), default=0.0)
    out = est.to_dict()
    out.update(
        {
            "triangles": int(len(tris)),
            "equiradial_diameter_max": diam,
            "equiradial_bound": 4 * est.delta + 2,
            "equiradial_within_bound": bool(diam <= 4 * est.delta + 2),
        }
    )
    return out


def tripod(G: FillingGraph, cfg: RunConfig, delta: float, chi: float) -> dict:
    rng = np.random.default_rng(cfg.seed + 1)
    tris = _sample_triangles(len(G), cfg.triangle_samples, rng)
    worst = max((tripod_defect(G, *map(int, t)) for t in tris), default=0.0)
    bound = 6 * chi + 16 * delta + 2
    return {"triangles": int(len(tris)), "defect_max": worst, "chi": chi, "bound": bound, "within_bound": bool(worst <= bound)}


def _sample_pairs(V: int, budget: int, rng) -> np.ndarray:
    iu = np.array(np.triu_indices(V, 1)).T
    if len(iu) <= budget:
        return iu
    return iu[np.sort(rng.choice(len(iu), budget, replace=False))]


def branch_estimate(G: FillingGraph, cfg: RunConfig) -> dict:
    out = branch_estimate_constants(G)
    out["comparison"] = branch_comparison(G)
    rng = np.random.default_rng(cfg.seed + 2)
    h = G.height.astype(float)
    adapted = 0.0
    pairs = _sample_pairs(len(G), cfg.pair_samples, rng)
    for u, v in pairs:
        adapted = max(adapted, adapted_defect(geodesic(G, int(u), int(v)), h))
    out["adapted_defect_max"] = adapted
    out["adapted_pairs"] = int(len(pairs))
    return out


def run_suites(G: FillingGraph, cfg: RunConfig) -> ComparisonReport:
    cfg.validate()
    weightings = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EpsilonWarning)
        for e in cfg.eps_list():
            weightings.append(EpsilonWeighting(e, cfg.a))
    eps_warn = [str(c.message) for c in caught]
    for m in eps_warn:
        log.warning(m)
    rep = ComparisonReport(config=asdict(cfg), window=(G.params.n_min, G.params.n_max))
    rep.config["epsilons"] = cfg.eps_list()
    uni = {w.epsilon: Uniformized(G, w) for w in weightings}
    delta = chi = None

    for name in cfg.suites:
        t0 = time.perf_counter()
        if name == "exact_invariants":
            rec, fails = exact_invariants(G, weightings)
            rep.failures.extend(fails)
        elif name == "height_busemann":
            rec = height_busemann(G)
        elif name == "hyperbolicity":
            rec = hyperbolicity(G, cfg)
            delta, chi = rec["delta"], rec["equiradial_diameter_max"]
        elif name == "tripod":
            if delta is None:
                hy = hyperbolicity(G, cfg)
                delta, chi = hy["delta"], hy["equiradial_diameter_max"]
            rec = tripod(G, cfg, delta, chi)
        elif name == "branch_estimate":
            rec = branch_estimate(G, cfg)
        elif name == "delta_inequality_filling":
            c, wit = delta_inequality_height(G)
            rec = {"c_prime": c, "witness": None if wit is None else list(wit)}
        elif name == "distance_regimes":
            z, ray = _anchor_ray(G)
            est = busemann_estimate(G, ray, anchor=z) if len(ray) >= 2 else None
            rec = {"per_epsilon": []}
            for e, U in uni.items():
                records, rows = verify_distance_regimes(U, est, seed=cfg.seed)
                rec["per_epsilon"].append({"epsilon": e, "records": [r.to_dict() for r in records]})
                rep.pairs.extend((e,) + r for r in rows)
        elif name == "admissibility":
            rec = {"per_epsilon": [dict(measure_admissibility(U), epsilon=e, beta=U.w.beta) for e, U in uni.items()]}
        elif name == "boundary_bilip":
            rec = {"per_epsilon": [dict(boundary_bilipschitz(U), epsilon=e) for e, U in uni.items()]}
        elif name == "uniform_curves":
            rec = {"per_epsilon": []}
            for e, U in uni.items():
                r = uniform_constant_sweep(U)
                ratio = dist_to_boundary(U, mode="empirical") / dist_to_boundary(U, mode="proxy")
                r.update(
                    {
                        "epsilon": e,
                        "empirical_over_proxy_min": float(ratio.min()),
                        "empirical_over_proxy_max": float(ratio.max()),
                        "C_distance_to_boundary": float(max(ratio.max(), 1 / ratio.min())),
                    }
                )
                rec["per_epsilon"].append(r)
        elif name == "starlike":
            bad = check_starlike(G)
            rep.failures.extend({"check": "starlike", "witness": w} for w in bad[:20])
            rec = {"violations": len(bad), "passed": not bad}
        rep.suites[name] = rec
        rep.timings[name] = time.perf_counter() - t0
    if eps_warn:
        rep.config["warnings"] = eps_warn
    return rep


def build_from_config(cfg: RunConfig) -> FillingGraph:
    M = cfg.load()
    return build_filling(M, cfg.params_for(M))
