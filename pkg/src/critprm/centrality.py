"""Criticality labels from sampled, shortcut-smoothed betweenness centrality.

Each of ``m`` random sources solves a one-to-all shortest-path problem. Every
reconstructed path is optionally shortcut (a waypoint whose neighbours see
each other is dropped), and the surviving interior waypoints each earn one
increment. Scores are increments divided by ``m``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from critprm.env import Environment, local_patches, segment_free
from critprm.errors import EmptyDatasetError, InvalidConfigError
from critprm.roadmap import Roadmap, RoadmapConfig, build_prm, dijkstra, shortcut_indices


@dataclass(frozen=True)
class CentralityConfig:
    m: int
    smoothing: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise InvalidConfigError(f"m must be >= 1, got {self.m}")


@dataclass
class CentralityScores:
    scores: np.ndarray
    m: int
    # number of interior increments handed out; equals scores.sum() * m
    increments: int


def _subtree_counts(pred: np.ndarray, dist: np.ndarray, source: int) -> np.ndarray:
    # interior count of v = number of proper descendants of v in the tree
    n = len(pred)
    counts = np.zeros(n, dtype=np.int64)
    reach = np.flatnonzero(np.isfinite(dist))
    # tree depth breaks distance ties from zero-length edges: children first
    depth = np.zeros(n, dtype=np.int64)
    anc = np.where(pred >= 0, pred, -1)
    while (anc >= 0).any():
        live = anc >= 0
        depth += live
        anc = np.where(live, pred[np.maximum(anc, 0)], -1)
    for v in reach[np.lexsort((-depth[reach], -dist[reach]))].tolist():
        p = pred[v]
        if p >= 0:
            counts[p] += counts[v] + 1
    counts[source] = 0
    return counts


def betweenness(env: Environment, rm: Roadmap, cfg: CentralityConfig) -> CentralityScores:
    n = rm.n
    counts = np.zeros(n, dtype=np.int64)
    if n == 0:
        return CentralityScores(np.zeros(0), cfg.m, 0)
    if cfg.m > n:
        raise InvalidConfigError(f"m={cfg.m} exceeds node count {n}")
    rng = np.random.default_rng(cfg.seed)
    sources = rng.choice(n, size=cfg.m, replace=False)
    adj = rm.adjacency
    nodes = rm.nodes
    cache: dict[tuple[int, int], bool] = {}

    def visible(i: int, j: int) -> bool:
        key = (i, j) if i < j else (j, i)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = segment_free(env, nodes[i], nodes[j])
        return hit

    for s in sources.tolist():
        pred, dist = dijkstra(adj, s)
        if not cfg.smoothing:
            counts += _subtree_counts(pred, dist, s)
            continue
        pred_l = pred.tolist()
        for t in np.flatnonzero(np.isfinite(dist)).tolist():
            if t == s or pred_l[t] == s:
                continue
            path = [t]
            while pred_l[path[-1]] >= 0:
                path.append(pred_l[path[-1]])
            path.reverse()
            kept = shortcut_indices(path, visible)
            for v in kept[1:-1]:
                counts[v] += 1
    total = int(counts.sum())
    return CentralityScores(counts / cfg.m, cfg.m, total)


@dataclass
class Dataset:
    patches: np.ndarray
    labels: np.ndarray
    env_seeds: np.ndarray
    node_indices: np.ndarray

    def __len__(self):
        return len(self.labels)

    @property
    def critical_fraction(self) -> float:
        return float(np.mean(self.labels > 0)) if len(self) else math.nan

    def split(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.patches[idx], self.labels[idx], self.env_seeds[idx], self.node_indices[idx])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for p, y, s, i in zip(self.patches, self.labels.tolist(), self.env_seeds.tolist(), self.node_indices.tolist()):
                row = {
                    "patch": "".join("1" if v else "0" for v in p.tolist()),
                    "label": y,
                    "env_seed": s,
                    "node_index": i,
                }
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def load(cls, path) -> "Dataset":
        patches, labels, seeds, idx = [], [], [], []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            bits = row["patch"]
            patches.append([int(c) for c in bits] if isinstance(bits, str) else list(bits))
            labels.append(float(row["label"]))
            seeds.append(int(row["env_seed"]))
            idx.append(int(row["node_index"]))
        return cls(
            np.array(patches, dtype=np.uint8),
            np.array(labels, dtype=float),
            np.array(seeds, dtype=np.int64),
            np.array(idx, dtype=np.int64),
        )


def label_environment(
    env: Environment,
    rm_cfg: RoadmapConfig,
    cent_cfg: CentralityConfig,
    per_env_nodes: Optional[int],
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build one PRM, score it, and return ``(patches, labels, node_indices)``."""
    rng = np.random.default_rng(seed)
    rm = build_prm(env, rm_cfg, rng)
    cfg = CentralityConfig(m=min(cent_cfg.m, rm.n), smoothing=cent_cfg.smoothing, seed=int(rng.integers(2**31)))
    scores = betweenness(env, rm, cfg).scores
    idx = np.arange(rm.n)
    if per_env_nodes is not None and per_env_nodes < rm.n:
        idx = np.sort(rng.choice(rm.n, size=per_env_nodes, replace=False))
    patches = local_patches(env, rm.nodes[idx]).astype(np.uint8)
    return patches, scores[idx], idx


def _label_job(args):
    return label_environment(*args)


def build_dataset(
    envs: Sequence[Environment],
    rm_cfg: RoadmapConfig,
    cent_cfg: CentralityConfig,
    per_env_nodes: Optional[int],
    rng: np.random.Generator,
    workers: int = 1,
) -> Dataset:
    """Label every environment, then balance critical and zero-score rows 50/50.

    The majority class is subsampled (never oversampled) to the minority size.
    """
    if not envs:
        raise EmptyDatasetError("no environments given")
    seeds = rng.integers(2**31, size=len(envs)).tolist()
    jobs = [(env, rm_cfg, cent_cfg, per_env_nodes, s) for env, s in zip(envs, seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_label_job, jobs))
    else:
        parts = [_label_job(j) for j in jobs]

    patches = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    node_idx = np.concatenate([p[2] for p in parts])
    env_seeds = np.concatenate([np.full(len(p[1]), env.seed) for p, env in zip(parts, envs)])

    crit = np.flatnonzero(labels > 0)
    zero = np.flatnonzero(labels == 0)
    keep = min(len(crit), len(zero))
    if keep == 0:
        raise EmptyDatasetError(
            f"cannot balance: {len(crit)} critical and {len(zero)} zero-score samples"
        )
    if len(crit) > keep:
        crit = np.sort(rng.choice(crit, size=keep, replace=False))
    if len(zero) > keep:
        zero = np.sort(rng.choice(zero, size=keep, replace=False))
    order = rng.permutation(np.concatenate([crit, zero]))
    return Dataset(patches[order], labels[order], env_seeds[order], node_idx[order])
