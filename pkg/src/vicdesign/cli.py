"""Command-line front end: learn, design, simulate, report.

Every command is deterministic given its inputs, config and seed; outputs are
plain JSON/CSV.  A manifest with input digests, config hash, seed, version
and timestamps is written next to each output; on failure a marker file is
left so partial artifacts are never mistaken for results.
"""

from __future__ import annotations

import argparse
import glob as globlib
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .demos import align, load_demonstrations
from .errors import SearchError, VicDesignError
from .hgp import TaskModel, fit_hgp
from .preference import DesignConfig
from .search import search
from .simulate import ForceSchedule, compare, simulate
from .stiffness import ControllerSolution, build_profile

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True), encoding="utf-8")


def _write_manifest(out: Path, command: str, inputs, seed, config_obj=None) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "config_hash": hashlib.sha256(
            json.dumps(config_obj, sort_keys=True).encode()).hexdigest()
        if config_obj is not None else None,
        "created_unix": time.time(),
    }
    target = out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")
    _dump_json(manifest, target)


def _failure_marker(out: Path, message: str) -> None:
    try:
        target = out / "FAILED" if out.is_dir() else out.with_name(out.name + ".FAILED")
        target.write_text(message + "\n", encoding="utf-8")
    except OSError:
        pass


def _expand_demo_args(patterns) -> list:
    paths = []
    for pat in patterns:
        hits = sorted(globlib.glob(pat))
        paths.extend(hits if hits else ([pat] if Path(pat).exists() else []))
    return paths


def cmd_learn(args) -> int:
    paths = _expand_demo_args(args.demos)
    if not paths:
        print("error: no demonstration files matched", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    demos = load_demonstrations(paths, args.axis)
    corpus = align(demos, args.period)
    model = fit_hgp(corpus, max_em_iters=args.max_em_iters, seed=args.seed)
    _dump_json(model.to_dict(), out)
    _write_manifest(out, "learn", paths, args.seed)
    print(f"model written to {out} ({model.grid.size} grid points, "
          f"{model.em_iterations} EM iterations)")
    return EXIT_OK


def cmd_design(args) -> int:
    model_path, config_path, out = Path(args.model), Path(args.config), Path(args.out)
    model = TaskModel.from_dict(json.loads(model_path.read_text(encoding="utf-8")))
    config_raw = json.loads(config_path.read_text(encoding="utf-8"))
    cfg = DesignConfig.from_dict(config_raw)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    outcome = search(model, cfg)
    result = outcome.assessment
    payload = {
        "design": cfg.design.value,
        "solution": outcome.solution.to_dict(),
        "score": result.score.to_dict(),
        "p_matrix": result.p_matrix.tolist() if result.p_matrix is not None else None,
        "u_max_certified_n_per_kg": result.u_max,
        "dp_max_used_m": result.dp_max_used,
        "iterations": outcome.n_iterations,
        "converged": outcome.converged,
        "trace": [entry.to_dict() for entry in outcome.trace],
    }
    _dump_json(payload, out)
    _write_manifest(out, "design", [model_path, config_path], cfg.seed, config_raw)
    print(f"design {cfg.design.value}: f_s={result.score.f_s:.4f} after "
          f"{outcome.n_iterations} evaluations -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model_path, ctrl_path = Path(args.model), Path(args.controller)
    out = Path(args.out)
    model = TaskModel.from_dict(json.loads(model_path.read_text(encoding="utf-8")))
    ctrl = json.loads(ctrl_path.read_text(encoding="utf-8"))
    sol = ControllerSolution.from_dict(ctrl["solution"])
    inputs = [model_path, ctrl_path]
    if args.forces:
        schedule = ForceSchedule.from_dict(
            json.loads(Path(args.forces).read_text(encoding="utf-8")))
        inputs.append(Path(args.forces))
    else:
        schedule = ForceSchedule()
    out.mkdir(parents=True, exist_ok=True)

    profile = build_profile(model, sol)
    run = simulate(model, profile, sol, schedule, ts=args.ts)
    run.write_csv(out / "series.csv")
    run.write_metrics_json(out / "metrics.json")

    if args.baseline_k is not None:
        k_base = sol.k_max if args.baseline_k == "auto" else float(args.baseline_k)
        base_sol = sol if sol.k_min <= k_base <= sol.k_max else \
            ControllerSolution(k_max=max(k_base, sol.k_max), k_min=min(k_base, sol.k_min),
                               d=sol.d, h=sol.h)
        base_run = simulate(model, float(k_base), base_sol, schedule, ts=args.ts)
        base_run.write_csv(out / "baseline_series.csv")
        base_run.write_metrics_json(out / "baseline_metrics.json")
        _dump_json(compare(run, base_run), out / "comparison.json")

    _write_manifest(out, "simulate", inputs, None)
    print(f"simulation written to {out}/ "
          f"(max|e|={run.metrics['max_abs_error_m']:.4g} m, "
          f"max|u|={run.metrics['max_abs_effort_n_per_kg']:.4g} N/kg)")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    rows = []
    for run_id, run_dir in enumerate(args.runs):
        run_dir = Path(run_dir)
        metrics_path = run_dir / "metrics.json"
        if not metrics_path.exists():
            print(f"error: {metrics_path} not found", file=sys.stderr)
            return EXIT_USAGE
        metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
        series_head = (run_dir / "series.csv").exists()
        comparison = None
        if (run_dir / "comparison.json").exists():
            comparison = json.loads((run_dir / "comparison.json").read_text(encoding="utf-8"))
        rows.append({
            "run_id": run_id,
            "run_dir": str(run_dir),
            "has_series": series_head,
            "metrics": metrics,
            "comparison": comparison,
        })
    _dump_json({"runs": rows}, out)
    csv_path = out.with_suffix(".csv")
    with csv_path.open("w", encoding="utf-8") as fh:
        fh.write("run_id,run_dir,max_abs_error_m,max_abs_effort_n_per_kg,"
                 "accumulated_force_ns,reduction_pct\n")
        for row in rows:
            m = row["metrics"]
            red = row["comparison"]["reduction_pct"] if row["comparison"] else ""
            fh.write(f"{row['run_id']},{row['run_dir']},{m['max_abs_error_m']!r},"
                     f"{m['max_abs_effort_n_per_kg']!r},{m['accumulated_force_ns']!r},{red}\n")
    print(f"report over {len(rows)} runs -> {out} and {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vicdesign",
        description="Learn task compliance from demonstrations, certify controller "
                    "gains via matrix-inequality conditions, and simulate the loop.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_learn = sub.add_parser("learn", help="fit the task model from demonstration CSVs")
    p_learn.add_argument("--demos", nargs="+", required=True,
                         help="demonstration CSV paths or glob patterns")
    p_learn.add_argument("--period", type=float, required=True,
                         help="common sampling period in seconds")
    p_learn.add_argument("--axis", default="x", help="axis label of this corpus")
    p_learn.add_argument("--out", required=True, help="output model JSON path")
    p_learn.add_argument("--max-em-iters", type=int, default=50)
    p_learn.add_argument("--seed", type=int, default=0)
    p_learn.set_defaults(func=cmd_learn)

    p_design = sub.add_parser("design", help="search for a certified controller solution")
    p_design.add_argument("--model", required=True)
    p_design.add_argument("--config", required=True, help="design config JSON")
    p_design.add_argument("--out", required=True, help="output controller JSON path")
    p_design.add_argument("--seed", type=int, default=None,
                          help="override the config seed")
    p_design.set_defaults(func=cmd_design)

    p_sim = sub.add_parser("simulate", help="closed-loop run along the learned task")
    p_sim.add_argument("--model", required=True)
    p_sim.add_argument("--controller", required=True)
    p_sim.add_argument("--forces", default=None, help="force schedule JSON")
    p_sim.add_argument("--out", required=True, help="output run directory")
    p_sim.add_argument("--ts", type=float, default=1e-3, help="control period in seconds")
    p_sim.add_argument("--baseline-k", default=None,
                       help="also run a constant-stiffness baseline ('auto' = k_max)")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="aggregate metrics over run directories")
    p_rep.add_argument("--runs", nargs="+", required=True)
    p_rep.add_argument("--out", required=True, help="output report JSON path")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        return args.func(args)
    except SearchError as exc:
        _failure_marker(out, f"infeasible: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except VicDesignError as exc:
        _failure_marker(out, str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_FAILURE
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        _failure_marker(out, f"{type(exc).__name__}: {exc}")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
