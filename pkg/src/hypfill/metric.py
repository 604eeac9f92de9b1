"""Finite metric spaces: ingestion, validation, separated nets and scale statistics."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

TOL_METRIC = 1e-9

__all__ = [
    "FiniteMetricSpace",
    "MetricError",
    "Violation",
    "ValidationReport",
    "ScaleStats",
    "from_matrix",
    "from_points",
    "load_metric",
    "validate_metric",
    "maximal_separated_net",
    "scale_metric",
    "scale_stats",
]


class MetricError(ValueError):
    """Raised when input data does not describe a metric within tolerance."""

    def __init__(self, message: str, violation: "Violation | None" = None):
        super().__init__(message)
        self.violation = violation


@dataclass(frozen=True)
class FiniteMetricSpace:
    point_ids: tuple
    dist: np.ndarray
    coords: np.ndarray | None = None
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "point_ids", tuple(self.point_ids))
        object.__setattr__(self, "_index", {p: i for i, p in enumerate(self.point_ids)})
        if len(self._index) != len(self.point_ids):
            raise MetricError("duplicate point ids")
        if d.shape != (len(self.point_ids),) * 2:
            raise MetricError(f"distance table has shape {d.shape} for {len(self.point_ids)} points")

    def __len__(self) -> int:
        return len(self.point_ids)

    def index(self, p: Hashable) -> int:
        try:
            return self._index[p]
        except KeyError:
            raise KeyError(f"unknown point id {p!r}") from None

    def d(self, p: Hashable, q: Hashable) -> float:
        return float(self.dist[self.index(p), self.index(q)])

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if len(self) else 0.0

    @property
    def min_positive_distance(self) -> float:
        off = self.dist[~np.eye(len(self), dtype=bool)]
        off = off[off > 0]
        return float(off.min()) if off.size else math.inf


@dataclass(frozen=True)
class Violation:
    kind: str  # "diagonal" | "symmetry" | "positivity" | "triangle"
    points: tuple
    slack: float  # amount by which the invariant fails (positive = violated)


@dataclass
class ValidationReport:
    violations: list[Violation]
    tolerance: float
    worst: dict[str, float]

    @property
    def ok(self) -> bool:
        return not self.violations

    def hard(self) -> list[Violation]:
        # coincident distinct points are never repairable
        return [v for v in self.violations if v.slack > self.tolerance or v.kind == "positivity"]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "tolerance": self.tolerance,
            "worst": self.worst,
            "violations": [
                {"kind": v.kind, "points": [str(p) for p in v.points], "slack": v.slack}
                for v in self.violations
            ],
        }


def validate_metric(M: FiniteMetricSpace, tol: float = TOL_METRIC, limit: int = 100) -> ValidationReport:
    """Report every metric-axiom violation (up to `limit` per kind) with its slack.

    Slack is measured in absolute units; the tolerance reported alongside is
    `tol` scaled by the diameter.
    """
    D = M.dist
    n = len(M)
    ids = M.point_ids
    abs_tol = tol * max(M.diameter, 1.0 if n else 0.0)
    out: list[Violation] = []
    worst = {"diagonal": 0.0, "symmetry": 0.0, "positivity": 0.0, "triangle": 0.0}

    diag = np.abs(np.diag(D))
    for i in np.flatnonzero(diag > 0)[:limit]:
        out.append(Violation("diagonal", (ids[i],), float(diag[i])))
    worst["diagonal"] = float(diag.max()) if n else 0.0

    asym = np.abs(D - D.T)
    iu = np.triu_indices(n, 1)
    bad = np.flatnonzero(asym[iu] > 0)
    for k in bad[:limit]:
        i, j = iu[0][k], iu[1][k]
        out.append(Violation("symmetry", (ids[i], ids[j]), float(asym[i, j])))
    worst["symmetry"] = float(asym.max()) if n else 0.0

    nonpos = D[iu] <= 0
    for k in np.flatnonzero(nonpos)[:limit]:
        i, j = iu[0][k], iu[1][k]
        out.append(Violation("positivity", (ids[i], ids[j]), float(-D[i, j])))
    if nonpos.any():
        worst["positivity"] = float(-D[iu][nonpos].min())

    # slack[p, r] over middle point q: D[p, r] - D[p, q] - D[q, r]
    found = 0
    worst_tri = 0.0
    for q in range(n):
        slack = D - D[:, q][:, None] - D[q, :][None, :]
        m = float(slack.max())
        worst_tri = max(worst_tri, m)
        if m > 0 and found < limit:
            for p, r in zip(*np.nonzero(slack > 0)):
                if found >= limit:
                    break
                out.append(Violation("triangle", (ids[p], ids[q], ids[r]), float(slack[p, r])))
                found += 1
    worst["triangle"] = worst_tri
    return ValidationReport(out, abs_tol, worst)


def from_matrix(
    point_ids: Sequence[Hashable],
    matrix,
    tol: float = TOL_METRIC,
    theta: float = 1.0,
    coords=None,
) -> FiniteMetricSpace:
    """Build a validated space from a square distance table.

    Violations beyond ``tol * diameter`` raise MetricError naming the offending
    points; smaller ones are logged and repaired (symmetrized, clipped).
    """
    D = np.array(matrix, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] != len(point_ids):
        raise MetricError(f"expected a {len(point_ids)}x{len(point_ids)} table, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise MetricError("distance table contains non-finite entries")
    if not 0 < theta <= 1:
        raise MetricError(f"snowflake exponent must satisfy 0 < theta <= 1, got {theta}")
    if np.any(D < 0):
        i, j = np.argwhere(D < 0)[0]
        raise MetricError(f"negative distance between {point_ids[i]!r} and {point_ids[j]!r}")
    if theta != 1.0:
        D = D**theta
    raw = FiniteMetricSpace(point_ids, D, coords)
    report = validate_metric(raw, tol)
    hard = report.hard()
    if hard:
        v = hard[0]
        pts = ", ".join(repr(p) for p in v.points)
        raise MetricError(f"{v.kind} violation at ({pts}) with slack {v.slack:.3g}", v)
    if report.violations:
        log.warning("metric violations within tolerance %.3g: %d", report.tolerance, len(report.violations))
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
    return FiniteMetricSpace(point_ids, D, coords)


def _pairwise(X: np.ndarray, kind: str) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    if kind in ("euclidean", "snowflake"):
        return np.sqrt((diff**2).sum(-1))
    if kind == "max":
        return np.abs(diff).max(-1)
    raise MetricError(f"unknown metric kind {kind!r}")


def from_points(
    point_ids: Sequence[Hashable],
    coords,
    kind: str = "euclidean",
    theta: float = 1.0,
    tol: float = TOL_METRIC,
) -> FiniteMetricSpace:
    """Metric from a point cloud: ``euclidean``, ``max`` (sup-norm) or ``snowflake`` (euclidean**theta)."""
    X = np.atleast_2d(np.asarray(coords, dtype=float))
    if X.shape[0] != len(point_ids):
        raise MetricError("coordinate count does not match id count")
    if kind != "snowflake":
        theta = 1.0
    D = _pairwise(X, kind)
    return from_matrix(point_ids, D, tol=tol, theta=theta, coords=X)


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise MetricError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    body = rows[1:]
    # optional leading label column: header then has an empty corner cell
    labelled = bool(body) and len(body[0]) == len(header) and header[0] == ""
    if labelled:
        header = header[1:]
    n = len(header)
    if len(body) != n:
        raise MetricError(f"{path}: header names {n} points but found {len(body)} rows")
    table = []
    for k, r in enumerate(body):
        cells = r[1:] if labelled else r
        if len(cells) != n:
            raise MetricError(f"{path}: row {k + 2} has {len(cells)} entries, expected {n}")
        try:
            table.append([float(c) for c in cells])
        except ValueError as exc:
            raise MetricError(f"{path}: row {k + 2}: {exc}") from None
    return header, np.array(table, dtype=float).reshape(n, n)


def _read_points(path: Path) -> tuple[list, np.ndarray]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MetricError(f"{path}: {exc}") from None
    if not isinstance(data, list) or not all(isinstance(d, dict) and "id" in d and "coords" in d for d in data):
        raise MetricError(f"{path}: expected a JSON array of {{id, coords}} objects")
    ids = [d["id"] for d in data]
    coords = [d["coords"] for d in data]
    if len({len(c) for c in coords}) > 1:
        raise MetricError(f"{path}: points have differing dimensions")
    return ids, np.array(coords, dtype=float)


def load_metric(
    source: str | Path,
    fmt: str | None = None,
    kind: str = "euclidean",
    theta: float = 1.0,
    tol: float = TOL_METRIC,
) -> FiniteMetricSpace:
    """Load a distance-matrix CSV or a point-cloud JSON file.

    ``fmt`` is ``"csv"`` or ``"points"``; inferred from the suffix when omitted.
    For matrices, ``theta < 1`` snowflakes the given distances.
    """
    path = Path(source)
    if fmt is None:
        fmt = "points" if path.suffix.lower() == ".json" else "csv"
    if fmt == "csv":
        ids, D = _read_csv(path)
        return from_matrix(ids, D, tol=tol, theta=theta)
    if fmt == "points":
        ids, X = _read_points(path)
        return from_points(ids, X, kind=kind, theta=theta, tol=tol)
    raise MetricError(f"unknown input format {fmt!r}")


def _order_indices(M: FiniteMetricSpace, order: Iterable[Hashable] | None) -> list[int]:
    if order is None:
        return list(range(len(M)))
    idx = [M.index(p) for p in order]
    if sorted(idx) != list(range(len(M))):
        raise ValueError("order must be a permutation of the point ids")
    return idx


def net_indices(D: np.ndarray, r: float, order: Sequence[int]) -> list[int]:
    """Greedy maximal r-separated subset of row indices, scanned in `order`."""
    chosen: list[int] = []
    for i in order:
        if not chosen or D[i, chosen].min() >= r:
            chosen.append(i)
    return chosen


def maximal_separated_net(
    M: FiniteMetricSpace, r: float, order: Iterable[Hashable] | None = None
) -> tuple:
    """Greedy maximal r-separated net; members returned in selection order."""
    if not r > 0:
        raise ValueError("separation radius must be positive")
    return tuple(M.point_ids[i] for i in net_indices(M.dist, r, _order_indices(M, order)))


def scale_metric(M: FiniteMetricSpace, s: float) -> FiniteMetricSpace:
    if not s > 0:
        raise ValueError("scale factor must be positive")
    coords = None if M.coords is None else M.coords * s
    return FiniteMetricSpace(M.point_ids, M.dist * s, coords)


@dataclass(frozen=True)
class ScaleStats:
    diameter: float
    min_positive_distance: float
    suggested_n_min: int
    suggested_n_max: int
    degenerate: bool = False
    clamped: bool = False


def scale_stats(M: FiniteMetricSpace, a: float, max_levels: int = 14) -> ScaleStats:
    """Suggest a truncation window [n_min, n_max].

    n_min is the largest level with a**n_min > diameter (bottom net is a single
    point); n_max the smallest with a**n_max < min positive distance (top net is
    all of Z). When the window would exceed `max_levels`, n_max is lowered and
    `clamped` is set. A one-point space gets the window [0, max_levels - 1]
    capped at 5 levels and is flagged degenerate.
    """
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    diam = M.diameter
    mpd = M.min_positive_distance
    if len(M) <= 1 or diam == 0:
        return ScaleStats(diam, mpd, 0, min(max_levels, 5) - 1, degenerate=True)
    la = math.log(a)
    n_min = math.ceil(math.log(diam) / la) - 1
    while a**n_min <= diam:
        n_min -= 1
    while a ** (n_min + 1) > diam:
        n_min += 1
    n_max = math.floor(math.log(mpd) / la) + 1
    while a**n_max >= mpd:
        n_max += 1
    while a ** (n_max - 1) < mpd:
        n_max -= 1
    clamped = n_max - n_min + 1 > max_levels
    if clamped:
        n_max = n_min + max_levels - 1
    return ScaleStats(diam, mpd, n_min, n_max, clamped=clamped)
