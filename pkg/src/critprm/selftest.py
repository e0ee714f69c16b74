"""Quick self-verification run by ``critprm selftest``."""

from __future__ import annotations

import sys
import time

import numpy as np

from critprm import oracles
from critprm.centrality import CentralityConfig, betweenness, build_dataset
from critprm.env import Environment, generate_narrow_passage, sample_free_many
from critprm.learner import gradient_check, init_model
from critprm.roadmap import RoadmapConfig, build_prm, roadmap_from_states, shortest_path_tree


def random_geometric_roadmap(rng: np.random.Generator, max_nodes: int = 30):
    n = int(rng.integers(5, max_nodes + 1))
    if rng.random() < 0.5:
        env = Environment.from_boxes(2, [])
    else:
        env = generate_narrow_passage(2, 1, 1, 0.1, int(rng.integers(1 << 30)))
    pts = sample_free_many(env, rng, n)
    return env, roadmap_from_states(env, pts, float(rng.uniform(0.25, 0.6)))


def check_centrality_oracle(graphs: int = 20, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    for _ in range(graphs):
        env, rm = random_geometric_roadmap(rng)
        got = betweenness(env, rm, CentralityConfig(m=rm.n, smoothing=False, seed=int(rng.integers(1 << 30))))
        want = oracles.brute_force_interior_counts(rm.n, rm.edges, rm.costs, range(rm.n))
        if not np.array_equal(np.rint(got.scores * rm.n).astype(np.int64), want):
            return False
    return True


def check_dijkstra_oracle(graphs: int = 20, seed: int = 1) -> bool:
    rng = np.random.default_rng(seed)
    for _ in range(graphs):
        env, rm = random_geometric_roadmap(rng)
        s = int(rng.integers(rm.n))
        _, dist = shortest_path_tree(rm, s)
        if dist.tolist() != oracles.bellman_ford(rm.n, rm.edges, rm.costs, s):
            return False
    return True


def check_gradients(models: int = 20, seed: int = 2) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(models):
        width = int(rng.integers(3, 12))
        arch = [width] + [int(rng.integers(2, 10)) for _ in range(int(rng.integers(1, 3)))] + [1]
        model = init_model(arch, rng)
        for b in model.biases:
            b[:] = rng.normal(0, 0.1, size=b.shape)
        x = rng.integers(0, 2, size=(8, width)).astype(float)
        labels = np.where(rng.random(8) < 0.5, 0.0, rng.exponential(5.0, size=8))
        worst = max(worst, gradient_check(model, x, labels, num_params=50, seed=i))
    return worst


def check_smoothing_empty(seed: int = 3) -> bool:
    env = Environment.from_boxes(2, [])
    rm = build_prm(env, RoadmapConfig(120), np.random.default_rng(seed))
    s = betweenness(env, rm, CentralityConfig(m=rm.n, smoothing=True, seed=seed))
    return bool(np.all(s.scores == 0))


def check_dataset_balance(seed: int = 4) -> bool:
    envs = [generate_narrow_passage(2, 2, 1, 0.04, seed + i) for i in range(3)]
    ds = build_dataset(envs, RoadmapConfig(200), CentralityConfig(m=20), None, np.random.default_rng(seed))
    crit = int((ds.labels > 0).sum())
    return crit * 2 == len(ds) and len(ds) > 0


def main(out=None) -> int:
    out = sys.stdout if out is None else out
    checks = [
        ("betweenness equals brute-force interior counts (m = n, no smoothing)", check_centrality_oracle),
        ("dijkstra distances equal bellman-ford", check_dijkstra_oracle),
        ("gradient check max relative error < 1e-5", lambda: check_gradients() < 1e-5),
        ("smoothed criticality is zero in an empty workspace", check_smoothing_empty),
        ("dataset is exactly 50/50 critical/non-critical", check_dataset_balance),
    ]
    failed = 0
    for name, fn in checks:
        t0 = time.perf_counter()
        ok = bool(fn())
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({time.perf_counter() - t0:.2f}s)", file=out)
    return 1 if failed else 0
