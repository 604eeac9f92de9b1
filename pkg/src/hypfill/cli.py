"""Command line: validate | build | verify | oracle-halfplane.

Exit codes: 0 ok, 2 input or parameter error, 3 half-plane oracle breach,
4 failed invariant.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .filling import FillingParamError, export_graph, import_graph, to_json_dict
from .halfplane import run_oracle_checks
from .metric import MetricError, validate_metric
from .uniformize import write_pairs_csv
from .verify import SUITES, ConfigError, RunConfig, build_from_config, run_suites

log = logging.getLogger("hypfill")

EXIT_OK, EXIT_INPUT, EXIT_ORACLE, EXIT_ASSERT = 0, 2, 3, 4

# flag dest -> RunConfig field; every flag defaults to None so the config file wins unless given
_FLAG_FIELDS = (
    "input", "format", "kind", "theta", "a", "tau", "epsilons", "n_min", "n_max", "max_levels",
    "intersection_mode", "order_seed", "seed", "delta_mode", "delta_samples", "triangle_samples",
    "pair_samples", "suites", "out_dir",
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", nargs="?", help="distance matrix CSV or point cloud JSON")
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--format", choices=["csv", "points"])
    p.add_argument("--kind", choices=["euclidean", "max", "snowflake"], help="metric for point clouds")
    p.add_argument("--theta", type=float, help="snowflake exponent in (0, 1]")
    p.add_argument("-o", "--out-dir", dest="out_dir")


def _add_filling(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--n-min", type=int, dest="n_min")
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--max-levels", type=int, dest="max_levels")
    p.add_argument("--mode", dest="intersection_mode", choices=["witness_scan", "center_sum"])
    p.add_argument("--order-seed", type=int, dest="order_seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypfill", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="check metric axioms of the input")
    _add_common(p)

    p = sub.add_parser("build", help="build the filling and export it")
    _add_common(p)
    _add_filling(p)
    p.add_argument("--no-dot", action="store_true")

    p = sub.add_parser("verify", help="run the verification suites")
    _add_common(p)
    _add_filling(p)
    p.add_argument("--graph", help="reuse a graph.json written by build")
    p.add_argument("--epsilon", type=float, action="append", dest="epsilons")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta-mode", choices=["exact", "sampled"], dest="delta_mode")
    p.add_argument("--delta-samples", type=int, dest="delta_samples")
    p.add_argument("--triangle-samples", type=int, dest="triangle_samples")
    p.add_argument("--pair-samples", type=int, dest="pair_samples")
    p.add_argument("--suite", action="append", dest="suites", choices=SUITES)

    p = sub.add_parser("oracle-halfplane", help="analytic half-plane checks")
    p.add_argument("--t", type=float, default=30.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("-o", "--out-dir", dest="out_dir")
    return ap


def _config(args) -> RunConfig:
    base = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    over = {k: getattr(args, k) for k in _FLAG_FIELDS if hasattr(args, k)}
    return base.merged(over)


def _write(out_dir: str, name: str, text: str) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    path = d / name
    path.write_text(text, encoding="utf-8")
    return path


def cmd_validate(args) -> int:
    cfg = _config(args)
    M = cfg.load()  # raises on hard violations
    rep = validate_metric(M).to_dict()
    rep.update({"points": len(M), "input": cfg.input, "theta": cfg.theta, "kind": cfg.kind})
    print(json.dumps(rep, indent=2))
    return EXIT_OK


def cmd_build(args) -> int:
    cfg = _config(args)
    G = build_from_config(cfg)
    text = json.dumps(to_json_dict(G), indent=1, sort_keys=True)
    _write(cfg.out_dir, "graph.json", text)
    if not args.no_dot and len(G) < 2000:
        export_graph(G, Path(cfg.out_dir) / "graph.dot")
    summary = G.summary()
    summary["sha256"] = hashlib.sha256(text.encode()).hexdigest()
    summary["window"] = [G.params.n_min, G.params.n_max]
    for lv in summary["levels"]:
        log.info("level %d: %d vertices", lv["n"], lv["vertices"])
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    if args.graph:
        G = import_graph(args.graph)
    else:
        G = build_from_config(cfg)
    rep = run_suites(G, cfg)
    _write(cfg.out_dir, "report.json", rep.dumps())
    _write(cfg.out_dir, "graph.json", json.dumps(to_json_dict(G), indent=1, sort_keys=True))
    if rep.pairs:
        write_pairs_csv(rep.pairs, Path(cfg.out_dir) / "pairs.csv")
    for f in rep.failures:
        log.error("invariant failed: %s %s", f["check"], f["witness"])
    print(json.dumps({"ok": rep.ok, "failures": len(rep.failures), "report": str(Path(cfg.out_dir) / "report.json")}))
    return EXIT_OK if rep.ok else EXIT_ASSERT


def cmd_oracle_halfplane(args) -> int:
    rep = run_oracle_checks(t=args.t, tol=args.tol)
    if rep["short_ray"]["exceeds_tolerance"]:
        log.info("short ray t=5 residual %.3g (informational)", rep["short_ray"]["max_residual"])
    text = json.dumps(rep, indent=2)
    if args.out_dir:
        _write(args.out_dir, "oracle_halfplane.json", text)
    print(text)
    return EXIT_OK if rep["passed"] else EXIT_ORACLE


COMMANDS = {
    "validate": cmd_validate,
    "build": cmd_build,
    "verify": cmd_verify,
    "oracle-halfplane": cmd_oracle_halfplane,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except (MetricError, ConfigError, FillingParamError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
