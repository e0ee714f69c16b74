"""Benchmark harness: success rate and cost versus wall time per method and n."""

from __future__ import annotations

import csv
import json
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from critprm.cprm import CriticalPrmConfig, PlanProblem, build_roadmap, plan
from critprm.env import Environment, generate_narrow_passage, sample_free
from critprm.errors import InvalidConfigError, PlannerError
from critprm.learner import MlpModel

METHODS = ("uniform", "hybrid", "critical", "critical-local")
RECORD_FIELDS = ["method", "env_seed", "problem_id", "n", "build_time_s", "query_time_s", "success", "cost"]
CURVE_FIELDS = ["method", "n", "mean_time_s", "success_rate", "mean_cost"]


@dataclass
class BenchConfig:
    dim: int = 2
    num_walls: int = 3
    gaps_per_wall: int = 1
    gap_width: float = 0.03
    num_envs: int = 25
    env_seed: int = 10_000
    methods: list = field(default_factory=lambda: ["uniform", "critical"])
    n_values: list = field(default_factory=lambda: [25, 50, 100, 200, 400, 800])
    problems_per_env: int = 50
    trials: int = 1
    goal_radius: float = 0.02
    lam: float = 2.0
    gamma_oversample: float = 10.0
    gamma_radius: Optional[float] = None
    model_path: Optional[str] = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if list(self.n_values) != sorted(self.n_values):
            raise InvalidConfigError("n_values must be sorted ascending")
        if self.num_walls < 0:
            raise InvalidConfigError("num_walls must be >= 0")
        if self.problems_per_env < 1:
            raise InvalidConfigError("problems_per_env must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise InvalidConfigError(f"unknown methods {sorted(bad)}")

    @property
    def env_seeds(self) -> list[int]:
        return [self.env_seed + i for i in range(self.num_envs)]

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown bench config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class BenchRecord:
    method: str
    env_seed: int
    problem_id: int
    n: int
    build_time_s: float
    query_time_s: float
    success: int
    cost: float


@dataclass
class CurvePoint:
    method: str
    n: int
    mean_time_s: float
    success_rate: float
    mean_cost: float  # nan when nothing succeeded


def make_problems(env: Environment, count: int, goal_radius: float, seed: int) -> list[PlanProblem]:
    """Random free (start, goal-centre) pairs; identical for every method."""
    rng = np.random.default_rng([seed, env.seed])
    return [PlanProblem(sample_free(env, rng), sample_free(env, rng), goal_radius) for _ in range(count)]


def _roadmap_seed(cfg: BenchConfig, env_seed: int, n: int) -> int:
    return int(np.random.default_rng([cfg.seed, env_seed, n]).integers(2**31))


def _run_cell(args) -> list[BenchRecord]:
    cfg, env, problems, method, n, model = args
    pcfg = CriticalPrmConfig(
        n=n,
        lam=cfg.lam,
        gamma_oversample=cfg.gamma_oversample,
        gamma_radius=cfg.gamma_radius,
        seed=_roadmap_seed(cfg, env.seed, n),
    )
    build_t = 0.0
    query_t = np.zeros(len(problems))
    results = None
    try:
        for _ in range(cfg.trials):
            t0 = time.perf_counter()
            rm = build_roadmap(method, env, model, pcfg)
            build_t += time.perf_counter() - t0
            results = []
            for i, prob in enumerate(problems):
                t0 = time.perf_counter()
                results.append(plan(env, rm, prob))
                query_t[i] += time.perf_counter() - t0
    except PlannerError:
        results = None
    out = []
    for i in range(len(problems)):
        ok = results is not None and results[i].success
        out.append(
            BenchRecord(
                method=method,
                env_seed=env.seed,
                problem_id=i,
                n=n,
                build_time_s=build_t / cfg.trials,
                query_time_s=float(query_t[i]) / cfg.trials,
                success=int(ok),
                cost=results[i].cost if ok else math.inf,
            )
        )
    return out


def make_env(cfg: BenchConfig, env_seed: int) -> Environment:
    """A narrow-passage instance, or the empty box when ``num_walls`` is 0."""
    if cfg.num_walls == 0:
        return Environment.from_boxes(cfg.dim, [], seed=env_seed)
    return generate_narrow_passage(cfg.dim, cfg.num_walls, cfg.gaps_per_wall, cfg.gap_width, env_seed)


def run_bench(cfg: BenchConfig, model: Optional[MlpModel] = None) -> list[BenchRecord]:
    """Every (env, method, n) cell builds one roadmap and answers all problems on it."""
    if model is None and cfg.model_path and any(m.startswith("critical") for m in cfg.methods):
        model = MlpModel.load(cfg.model_path)
    cells = []
    for es in cfg.env_seeds:
        env = make_env(cfg, es)
        problems = make_problems(env, cfg.problems_per_env, cfg.goal_radius, cfg.seed)
        for method in cfg.methods:
            for n in cfg.n_values:
                cells.append((cfg, env, problems, method, n, model))
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(_run_cell, cells))
    else:
        parts = [_run_cell(c) for c in cells]
    return [r for part in parts for r in part]


def aggregate_curves(records: Sequence[BenchRecord], amortize: bool = True) -> list[CurvePoint]:
    """One point per (method, n).

    With ``amortize`` the build time of a roadmap is split evenly over the
    problems answered on it (the multi-query view); otherwise every problem
    is charged the full build.
    """
    shared = defaultdict(int)
    for r in records:
        shared[(r.method, r.n, r.env_seed)] += 1
    groups = defaultdict(list)
    for r in records:
        groups[(r.method, r.n)].append(r)
    out = []
    for (method, n), rows in groups.items():
        times = [
            r.build_time_s / (shared[(r.method, r.n, r.env_seed)] if amortize else 1) + r.query_time_s
            for r in rows
        ]
        costs = [r.cost for r in rows if r.success]
        out.append(
            CurvePoint(
                method=method,
                n=n,
                mean_time_s=float(np.mean(times)),
                success_rate=float(np.mean([r.success for r in rows])),
                mean_cost=float(np.mean(costs)) if costs else math.nan,
            )
        )
    order = {m: i for i, m in enumerate(METHODS)}
    out.sort(key=lambda p: (order.get(p.method, len(order)), p.method, p.n))
    return out


def write_records(records: Sequence[BenchRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([r.method, r.env_seed, r.problem_id, r.n, repr(r.build_time_s), repr(r.query_time_s), r.success, repr(r.cost)])


def read_records(path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        BenchRecord(
            method=row["method"],
            env_seed=int(row["env_seed"]),
            problem_id=int(row["problem_id"]),
            n=int(row["n"]),
            build_time_s=float(row["build_time_s"]),
            query_time_s=float(row["query_time_s"]),
            success=int(row["success"]),
            cost=float(row["cost"]),
        )
        for row in rows
    ]


def write_curves(curves: Sequence[CurvePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_FIELDS)
        for c in curves:
            cost = "" if math.isnan(c.mean_cost) else repr(c.mean_cost)
            w.writerow([c.method, c.n, repr(c.mean_time_s), repr(c.success_rate), cost])
