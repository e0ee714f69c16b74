"""Command-line entry point: ``critprm <subcommand> [flags]``.

Any flag may also come from ``--config file.json`` (keys use the long flag
name with dashes or underscores); explicit flags win. ``bench`` is the
exception: its ``--config`` is the benchmark description itself.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from critprm import __version__
from critprm.errors import PlannerError

SUBCOMMANDS = ("gen-envs", "build-prm", "build-dataset", "train", "plan", "bench", "selftest")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def parse_query(text: str):
    """``x0,y0:gx,gy:r`` -> (start, goal centre, goal radius)."""
    try:
        start, goal, radius = text.split(":")
        return np.array(_floats(start)), np.array(_floats(goal)), float(radius)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad query {text!r}; expected x0,y0:gx,gy:r") from None


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file supplying default flag values")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    p = argparse.ArgumentParser(prog="critprm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"critprm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-envs", parents=[common], help="generate narrow-passage environments")
    g.add_argument("--dim", type=int, default=2, choices=(2, 3))
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--walls", type=int, default=3)
    g.add_argument("--gaps", type=int, default=1)
    g.add_argument("--gap-width", type=float, default=0.03)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default="envs")

    b = sub.add_parser("build-prm", parents=[common], help="build a uniform radius PRM")
    b.add_argument("--env", required=True)
    b.add_argument("--n", type=int, default=500)
    b.add_argument("--gamma", type=float, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)

    d = sub.add_parser("build-dataset", parents=[common], help="label roadmap nodes with criticality")
    d.add_argument("--envs-dir", required=True)
    d.add_argument("--n", type=int, default=500)
    d.add_argument("--m", type=int, default=50)
    d.add_argument("--per-env", type=int, default=None)
    d.add_argument("--gamma", type=float, default=None)
    d.add_argument("--no-smoothing", action="store_true")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)

    t = sub.add_parser("train", parents=[common], help="train the criticality regressor")
    t.add_argument("--dataset", required=True)
    t.add_argument("--arch", default="128,64", help="hidden widths, or full widths input,...,1")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--dropout", type=float, default=0.1)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out-model", required=True)

    q = sub.add_parser("plan", parents=[common], help="build a roadmap and answer one query")
    q.add_argument("--env", required=True)
    q.add_argument("--model", default=None)
    q.add_argument("--method", default="critical", choices=("uniform", "hybrid", "critical", "critical-local"))
    q.add_argument("--n", type=int, default=200)
    q.add_argument("--lambda", dest="lam", type=float, default=2.0)
    q.add_argument("--Gamma", dest="gamma_oversample", type=float, default=10.0)
    q.add_argument("--gamma", dest="gamma_radius", type=float, default=None)
    q.add_argument("--radius-cap", type=float, default=None)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--query", type=parse_query, required=True)
    q.add_argument("--out", default=None)

    r = sub.add_parser("bench", help="run the method comparison")
    r.add_argument("--config", required=True, help="benchmark JSON (BenchConfig fields)")
    r.add_argument("--threads", type=int, default=None, help="override the config's worker count")
    r.add_argument("--model", default=None, help="override the config's model_path")
    r.add_argument("--out-records", default="records.csv")
    r.add_argument("--out-curves", default="curves.csv")
    r.add_argument("--no-amortize", action="store_true", help="charge the full build time to every problem")

    sub.add_parser("selftest", help="run oracle-equivalence and gradient checks")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    subparsers = parser._subparsers._group_actions[0].choices
    required = {(name, a.dest) for name, sp in subparsers.items() for a in sp._actions if a.required}
    # first pass only locates the subcommand and its config file; required
    # flags may still come from that file
    for sp in subparsers.values():
        for a in sp._actions:
            a.required = False
    args = parser.parse_args(argv)
    defaults = {}
    if args.command != "bench" and getattr(args, "config", None):
        sub = subparsers[args.command]
        dests = {a.dest for a in sub._actions}
        data = json.loads(Path(args.config).read_text())
        for key, value in data.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest == "lambda":
                dest = "lam"
            elif dest == "Gamma":
                dest = "gamma_oversample"
            if dest not in dests:
                parser.error(f"unknown key {key!r} in {args.config}")
            if dest == "query" and isinstance(value, str):
                value = parse_query(value)
            defaults[dest] = value
        sub.set_defaults(**defaults)
    for name, sp in subparsers.items():
        for a in sp._actions:
            a.required = (name, a.dest) in required and not (name == args.command and a.dest in defaults)
    # explicit flags override the file
    return parser.parse_args(argv)


def _cmd_gen_envs(a) -> int:
    from critprm.env import generate_narrow_passage

    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(a.count):
        seed = a.seed + i
        env = generate_narrow_passage(a.dim, a.walls, a.gaps, a.gap_width, seed)
        env.save(out / f"env_{seed:06d}.json")
    print(f"wrote {a.count} environments to {out}")
    return 0


def _cmd_build_prm(a) -> int:
    from critprm.env import Environment
    from critprm.roadmap import RoadmapConfig, build_prm

    env = Environment.load(a.env)
    rm = build_prm(env, RoadmapConfig(n=a.n, gamma=a.gamma), np.random.default_rng(a.seed))
    rm.save(a.out, env_ref=str(a.env))
    print(f"{rm.n} nodes, {rm.num_edges} edges -> {a.out}")
    return 0


def _load_envs(directory):
    from critprm.env import Environment

    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise PlannerError(f"no environment files in {directory}")
    return [Environment.load(p) for p in paths]


def _cmd_build_dataset(a) -> int:
    from critprm.centrality import CentralityConfig, build_dataset
    from critprm.roadmap import RoadmapConfig

    envs = _load_envs(a.envs_dir)
    ds = build_dataset(
        envs,
        RoadmapConfig(n=a.n, gamma=a.gamma),
        CentralityConfig(m=a.m, smoothing=not a.no_smoothing, seed=a.seed),
        a.per_env,
        np.random.default_rng(a.seed),
        workers=max(1, a.threads),
    )
    ds.save(a.out)
    print(f"{len(ds)} samples ({ds.critical_fraction:.0%} critical) -> {a.out}")
    return 0


def _cmd_train(a) -> int:
    from critprm.centrality import Dataset
    from critprm.learner import TrainConfig, train

    ds = Dataset.load(a.dataset)
    widths = [int(v) for v in str(a.arch).split(",") if v]
    arch = widths if widths[0] == ds.patches.shape[1] and widths[-1] == 1 else [ds.patches.shape[1], *widths, 1]
    cfg = TrainConfig(
        epochs=a.epochs,
        batch_size=a.batch,
        learning_rate=a.lr,
        momentum=a.momentum,
        dropout_rate=a.dropout,
        validation_fraction=a.val_fraction,
        seed=a.seed,
    )
    model, report = train(ds, cfg, arch)
    model.save(a.out_model)
    val = report.val_loss[-1] if report.val_loss else math.nan
    print(
        f"arch {arch}: train loss {report.train_loss[-1]:.4f}, "
        f"val loss {val:.4f} (constant baseline {report.baseline_val_loss:.4f}) -> {a.out_model}"
    )
    return 0


def _cmd_plan(a) -> int:
    from critprm.cprm import CriticalPrmConfig, PlanProblem, build_roadmap, plan
    from critprm.env import Environment, point_free
    from critprm.errors import InfeasibleQueryError
    from critprm.learner import MlpModel

    env = Environment.load(a.env)
    start, goal, radius = a.query
    if len(start) != env.dim or len(goal) != env.dim:
        raise PlannerError(f"query coordinates must have {env.dim} components")
    if not point_free(env, goal):
        raise InfeasibleQueryError("goal region infeasible: goal center in collision")
    model = MlpModel.load(a.model) if a.model else None
    cfg = CriticalPrmConfig(
        n=a.n,
        lam=a.lam,
        gamma_oversample=a.gamma_oversample,
        gamma_radius=a.gamma_radius,
        global_radius_cap=a.radius_cap,
        seed=a.seed,
    )
    rm = build_roadmap(a.method, env, model, cfg)
    res = plan(env, rm, PlanProblem(start, goal, radius))
    timing = {k: rm.timing.get(k, 0.0) for k in ("sample", "predict", "connect")}
    timing["connect"] += res.timing["connect"]
    timing["search"] = res.timing["search"]
    out = {
        "method": a.method,
        "n": rm.n,
        "success": res.success,
        "cost": res.cost if res.success else None,
        "path": list(res.path.node_indices) if res.path else None,
        "waypoints": res.waypoints.tolist() if res.waypoints is not None else None,
        "timing": timing,
    }
    text = json.dumps(out, indent=2)
    if a.out:
        Path(a.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_bench(a) -> int:
    from critprm.bench import BenchConfig, aggregate_curves, run_bench, write_curves, write_records

    cfg = BenchConfig.load(a.config)
    if a.threads is not None:
        cfg.threads = a.threads
    if a.model is not None:
        cfg.model_path = a.model
    records = run_bench(cfg)
    write_records(records, a.out_records)
    curves = aggregate_curves(records, amortize=not a.no_amortize)
    write_curves(curves, a.out_curves)
    for c in curves:
        print(f"{c.method:>15} n={c.n:<6} time={c.mean_time_s:.4f}s success={c.success_rate:.3f} cost={c.mean_cost:.4f}")
    return 0


def _cmd_selftest(a) -> int:
    from critprm import selftest

    return selftest.main()


COMMANDS = {
    "gen-envs": _cmd_gen_envs,
    "build-prm": _cmd_build_prm,
    "build-dataset": _cmd_build_dataset,
    "train": _cmd_train,
    "plan": _cmd_plan,
    "bench": _cmd_bench,
    "selftest": _cmd_selftest,
}


def dispatch(argv=None) -> int:
    """Run one subcommand; 0 on success, 1 on a domain error, 2 on bad usage."""
    parser = _parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (PlannerError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
