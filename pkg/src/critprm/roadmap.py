"""Radius-connected probabilistic roadmaps, Dijkstra search and shortcutting."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path as FilePath
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from critprm.env import Environment, sample_free_many, segment_free, segments_free
from critprm.errors import InvalidConfigError


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def default_gamma(dim: int) -> float:
    """PRM* radius constant with 10% slack, free-space volume bounded by 1."""
    return 1.1 * 2 * (1 + 1 / dim) ** (1 / dim) * (1 / unit_ball_volume(dim)) ** (1 / dim)


@dataclass(frozen=True)
class RoadmapConfig:
    n: int
    gamma: Optional[float] = None
    radius_override: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise InvalidConfigError(f"n must be >= 2, got {self.n}")
        if self.gamma is not None and self.gamma <= 0:
            raise InvalidConfigError(f"gamma must be > 0, got {self.gamma}")


def connection_radius(cfg: RoadmapConfig, dim: int) -> float:
    if cfg.radius_override is not None:
        return float(cfg.radius_override)
    gamma = default_gamma(dim) if cfg.gamma is None else cfg.gamma
    return gamma * (math.log(cfg.n) / cfg.n) ** (1 / dim)


@dataclass(frozen=True)
class Path:
    node_indices: tuple
    cost: float

    def __len__(self):
        return len(self.node_indices)


@dataclass(eq=False)
class Roadmap:
    """Undirected roadmap. ``edges`` holds ``i < j`` pairs, ``costs`` their lengths."""

    nodes: np.ndarray
    edges: np.ndarray
    costs: np.ndarray
    flags: np.ndarray = field(default=None)
    # wall-clock seconds per build phase, filled by the builders
    timing: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.costs = np.asarray(self.costs, dtype=float).reshape(-1)
        if self.flags is None:
            self.flags = np.zeros(len(self.nodes), dtype=bool)
        self.flags = np.asarray(self.flags, dtype=bool)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for (i, j), w in zip(self.edges.tolist(), self.costs.tolist()):
            adj[i].append((j, w))
            adj[j].append((i, w))
        return adj

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def edge_cost(self, i: int, j: int) -> Optional[float]:
        for v, w in self.adjacency[i]:
            if v == j:
                return w
        return None

    def to_dict(self, env_ref: str = "") -> dict:
        return {
            "env_ref": env_ref,
            "nodes": self.nodes.tolist(),
            "edges": [[i, j, w] for (i, j), w in zip(self.edges.tolist(), self.costs.tolist())],
            "flags": self.flags.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Roadmap":
        edges = data["edges"]
        return cls(
            nodes=np.array(data["nodes"], dtype=float),
            edges=np.array([[e[0], e[1]] for e in edges], dtype=np.int64).reshape(-1, 2),
            costs=np.array([e[2] for e in edges], dtype=float),
            flags=np.array(data.get("flags", [0] * len(data["nodes"])), dtype=bool),
        )

    def save(self, path, env_ref: str = "") -> None:
        FilePath(path).write_text(json.dumps(self.to_dict(env_ref)) + "\n")

    @classmethod
    def load(cls, path) -> "Roadmap":
        return cls.from_dict(json.loads(FilePath(path).read_text()))


def radius_pairs(points: np.ndarray, radius: float) -> np.ndarray:
    """All ``i < j`` pairs with ``|p_i - p_j| <= radius``, lexicographically sorted."""
    if len(points) < 2:
        return np.empty((0, 2), dtype=np.int64)
    pairs = cKDTree(points).query_pairs(radius * (1 + 1e-9), output_type="ndarray").astype(np.int64)
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    # kd-tree rounding differs from the direct norm at the boundary; widen then filter
    d = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
    pairs = pairs[d <= radius]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def free_edges(env: Environment, points: np.ndarray, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        return pairs.reshape(0, 2), np.empty(0)
    a, b = points[pairs[:, 0]], points[pairs[:, 1]]
    ok = segments_free(env, a, b)
    pairs = pairs[ok]
    costs = np.linalg.norm(points[pairs[:, 1]] - points[pairs[:, 0]], axis=1)
    return pairs, costs


def roadmap_from_states(env: Environment, states: np.ndarray, radius: float) -> Roadmap:
    states = np.asarray(states, dtype=float)
    edges, costs = free_edges(env, states, radius_pairs(states, radius))
    return Roadmap(nodes=states, edges=edges, costs=costs)


def build_prm(env: Environment, cfg: RoadmapConfig, rng: np.random.Generator) -> Roadmap:
    states = sample_free_many(env, rng, cfg.n)
    return roadmap_from_states(env, states, connection_radius(cfg, env.dim))


def dijkstra(
    adjacency: Sequence[Sequence[tuple[int, float]]],
    source: int,
    target: Optional[int] = None,
    extra: Optional[dict] = None,
    n: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One-to-all Dijkstra; equal-cost ties go to the smaller predecessor index.

    ``extra`` maps a node to additional outgoing ``(v, w)`` arcs and ``n``
    widens the node range beyond ``adjacency``, so queries can attach
    temporary nodes without copying the roadmap. Stops early once ``target``
    is settled. Returns ``(pred, dist)`` with ``pred = -1`` for the source and
    unreached nodes.
    """
    base = len(adjacency)
    n = base if n is None else n
    extra = extra or {}
    dist = [math.inf] * n
    pred = [-1] * n
    done = [False] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == target:
            break
        arcs = adjacency[u] if u < base else ()
        more = extra.get(u)
        if more:
            arcs = list(arcs) + more
        for v, w in arcs:
            if done[v]:
                continue
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
            elif nd == dist[v] and u < pred[v]:
                pred[v] = u
    return np.array(pred, dtype=np.int64), np.array(dist)


def shortest_path_tree(rm: Roadmap, source: int) -> tuple[np.ndarray, np.ndarray]:
    return dijkstra(rm.adjacency, source)


def tree_path(pred, target: int) -> list[int]:
    out = [int(target)]
    while pred[out[-1]] >= 0:
        out.append(int(pred[out[-1]]))
    out.reverse()
    return out


def shortest_path(rm: Roadmap, source: int, target: int) -> Optional[Path]:
    """Minimum-cost path, or ``None`` when ``target`` is unreachable."""
    pred, dist = dijkstra(rm.adjacency, source, target)
    if not math.isfinite(dist[target]):
        return None
    return Path(tuple(tree_path(pred, target)), float(dist[target]))


def shortcut_indices(indices: Sequence[int], is_free: Callable[[int, int], bool]) -> list[int]:
    """Drop interior waypoints whose neighbours see each other, to a fixpoint.

    Each pass scans left to right; after a removal the same left anchor is
    retried against its new successor.
    """
    out = list(indices)
    changed = True
    while changed and len(out) > 2:
        changed = False
        i = 0
        while i + 2 < len(out):
            if is_free(out[i], out[i + 2]):
                del out[i + 1]
                changed = True
            else:
                i += 1
    return out


def waypoint_cost(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def shortcut_path(env: Environment, rm: Roadmap, p: Path) -> Path:
    nodes = rm.nodes
    kept = shortcut_indices(p.node_indices, lambda i, j: segment_free(env, nodes[i], nodes[j]))
    return Path(tuple(kept), waypoint_cost(nodes[kept]))
