"""Critical PRM: a locally connected uniform bed plus globally connected hubs.

Also hosts the uniform and hybrid-sampling baselines, the local-only
ablation, and the multi-query planner shared by all of them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from critprm.env import (
    Environment,
    MAX_REJECTIONS,
    local_patches,
    point_free,
    points_free,
    sample_free_many,
    segments_free,
)
from critprm.errors import InfeasibleQueryError, InvalidConfigError, ShapeMismatchError
from critprm.learner import MlpModel, predict_criticality
from critprm.roadmap import (
    Path,
    Roadmap,
    RoadmapConfig,
    connection_radius,
    dijkstra,
    radius_pairs,
    free_edges,
    tree_path,
)

HYBRID_WEIGHTS = (0.4, 0.3, 0.3)
HYBRID_SIGMA = 0.05


@dataclass(frozen=True)
class CriticalPrmConfig:
    n: int
    lam: float = 2.0
    gamma_oversample: float = 10.0
    gamma_radius: Optional[float] = None
    global_radius_cap: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidConfigError(f"n must be >= 2, got {self.n}")
        if self.lam <= 0:
            raise InvalidConfigError("lambda must be > 0")
        if self.gamma_oversample < 1:
            raise InvalidConfigError("Gamma must be >= 1")
        if self.lam * math.log(self.n) >= self.n:
            raise InvalidConfigError(f"lambda*ln(n) = {self.lam * math.log(self.n):.3f} >= n = {self.n}")

    @property
    def roadmap_config(self) -> RoadmapConfig:
        return RoadmapConfig(n=self.n, gamma=self.gamma_radius)


def critical_count(n: int, lam: float) -> int:
    """``round(lam * ln n)`` with halves rounded up, at least 1."""
    return max(1, int(math.floor(lam * math.log(n) + 0.5)))


def proportional_draw(weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` distinct indices, each step proportional to the remaining weight.

    Once no positive weight is left the rest are drawn uniformly from the
    unchosen indices.
    """
    w = np.asarray(weights, dtype=float).copy()
    w[~np.isfinite(w) | (w < 0)] = 0.0
    taken = np.zeros(len(w), dtype=bool)
    out = []
    for _ in range(min(k, len(w))):
        total = w.sum()
        if total > 0:
            cum = np.cumsum(w)
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, len(w) - 1)
            while w[idx] == 0.0:
                idx -= 1
        else:
            idx = int(rng.choice(np.flatnonzero(~taken)))
        out.append(idx)
        taken[idx] = True
        w[idx] = 0.0
    return np.array(out, dtype=np.int64)


def _unique_predict(model: MlpModel, patches: np.ndarray) -> np.ndarray:
    """Score each distinct patch once; open space repeats the all-free patch."""
    packed = np.packbits(patches.astype(np.uint8), axis=1)
    keys = np.ascontiguousarray(packed).view(np.dtype((np.void, packed.shape[1]))).ravel()
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return predict_criticality(model, patches[first])[inverse.ravel()]


def select_critical(
    env: Environment, model: MlpModel, cfg: CriticalPrmConfig, rng: np.random.Generator, timing: Optional[dict] = None
) -> np.ndarray:
    """Score ``Gamma * n`` free candidates and keep ``k`` in proportion to score."""
    if model.input_size != env.patch_size:
        raise ShapeMismatchError(f"model input {model.input_size} != patch size {env.patch_size}")
    timing = {} if timing is None else timing
    t0 = time.perf_counter()
    candidates = sample_free_many(env, rng, int(round(cfg.gamma_oversample * cfg.n)))
    t1 = time.perf_counter()
    scores = _unique_predict(model, local_patches(env, candidates))
    chosen = proportional_draw(scores, critical_count(cfg.n, cfg.lam), rng)
    timing["sample"] = timing.get("sample", 0.0) + (t1 - t0)
    timing["predict"] = timing.get("predict", 0.0) + (time.perf_counter() - t1)
    return candidates[chosen]


def add_critical_samples(
    env: Environment, rm: Roadmap, critical: np.ndarray, radius_cap: Optional[float] = None
) -> Roadmap:
    """Append ``critical`` states and connect each to every other node it sees.

    Existing nodes and edges are kept unchanged, so every distance in the
    result is at most the corresponding distance in ``rm``.
    """
    critical = np.asarray(critical, dtype=float).reshape(-1, env.dim)
    n0, k = rm.n, len(critical)
    nodes = np.concatenate([rm.nodes, critical])
    ci = np.repeat(np.arange(n0, n0 + k), n0 + k)
    cj = np.tile(np.arange(n0 + k), k)
    # every unordered pair touching a critical node, exactly once
    keep = (cj < n0) | (cj > ci)
    pairs = np.stack([np.minimum(ci, cj)[keep], np.maximum(ci, cj)[keep]], axis=1)
    if radius_cap is not None:
        d = np.linalg.norm(nodes[pairs[:, 0]] - nodes[pairs[:, 1]], axis=1)
        pairs = pairs[d <= radius_cap]
    new_edges, new_costs = free_edges(env, nodes, pairs)
    edges = np.concatenate([rm.edges, new_edges])
    costs = np.concatenate([rm.costs, new_costs])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    flags = np.concatenate([rm.flags, np.ones(k, dtype=bool)])
    return Roadmap(nodes=nodes, edges=edges[order], costs=costs[order], flags=flags, timing=dict(rm.timing))


def _critical_nodes(env, model, cfg):
    rng = np.random.default_rng(cfg.seed)
    timing: dict = {}
    critical = select_critical(env, model, cfg, rng, timing)
    t0 = time.perf_counter()
    uniform = sample_free_many(env, rng, cfg.n - len(critical))
    timing["sample"] += time.perf_counter() - t0
    return uniform, critical, timing


def build_critical_prm(env: Environment, model: MlpModel, cfg: CriticalPrmConfig) -> Roadmap:
    """Nodes ``0..n-k-1`` are uniform and radius-connected; the last ``k`` are critical hubs."""
    uniform, critical, timing = _critical_nodes(env, model, cfg)
    t0 = time.perf_counter()
    r = connection_radius(cfg.roadmap_config, env.dim)
    edges, costs = free_edges(env, uniform, radius_pairs(uniform, r))
    base = Roadmap(nodes=uniform, edges=edges, costs=costs)
    rm = add_critical_samples(env, base, critical, cfg.global_radius_cap)
    timing["connect"] = time.perf_counter() - t0
    rm.timing = timing
    return rm


def build_critical_local_prm(env: Environment, model: MlpModel, cfg: CriticalPrmConfig) -> Roadmap:
    """Same nodes as :func:`build_critical_prm`, but every node uses the ``r_n`` radius."""
    uniform, critical, timing = _critical_nodes(env, model, cfg)
    t0 = time.perf_counter()
    nodes = np.concatenate([uniform, critical])
    r = connection_radius(cfg.roadmap_config, env.dim)
    edges, costs = free_edges(env, nodes, radius_pairs(nodes, r))
    flags = np.zeros(len(nodes), dtype=bool)
    flags[len(uniform):] = True
    timing["connect"] = time.perf_counter() - t0
    return Roadmap(nodes=nodes, edges=edges, costs=costs, flags=flags, timing=timing)


def build_uniform_prm(env: Environment, cfg: CriticalPrmConfig) -> Roadmap:
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    nodes = sample_free_many(env, rng, cfg.n)
    t1 = time.perf_counter()
    edges, costs = free_edges(env, nodes, radius_pairs(nodes, connection_radius(cfg.roadmap_config, env.dim)))
    timing = {"sample": t1 - t0, "predict": 0.0, "connect": time.perf_counter() - t1}
    return Roadmap(nodes=nodes, edges=edges, costs=costs, timing=timing)


def _in_bounds(pts: np.ndarray) -> np.ndarray:
    return np.all((pts >= 0.0) & (pts <= 1.0), axis=1)


def _gaussian_batch(env, rng, size):
    x = rng.random((size, env.dim))
    y = x + rng.normal(0.0, HYBRID_SIGMA, size=(size, env.dim))
    ok = _in_bounds(y)
    fx = points_free(env, x)
    fy = np.zeros(size, dtype=bool)
    fy[ok] = points_free(env, y[ok])
    valid = ok & (fx != fy)
    return np.where(fx[:, None], x, y), valid


def _bridge_batch(env, rng, size):
    x = rng.random((size, env.dim))
    y = x + rng.normal(0.0, HYBRID_SIGMA, size=(size, env.dim))
    ok = _in_bounds(y)
    blocked = ~points_free(env, x)
    blocked[ok] &= ~points_free(env, y[ok])
    mid = 0.5 * (x + y)
    valid = ok & blocked
    valid[valid] = points_free(env, mid[valid])
    return mid, valid


def _component_samples(env, rng, count, batch_fn):
    """``count`` samples from ``batch_fn``; uniform once it stalls for ``MAX_REJECTIONS`` tries."""
    out = []
    run = 0
    block = 4096
    while len(out) < count:
        pts, valid = batch_fn(env, rng, block)
        idx = np.flatnonzero(valid)
        if len(idx) == 0:
            run += block
            if run >= MAX_REJECTIONS:
                break
            continue
        run = block - 1 - idx[-1]
        out.extend(pts[idx[: count - len(out)]])
    got = np.array(out, dtype=float).reshape(-1, env.dim)
    if len(got) < count:
        got = np.concatenate([got, sample_free_many(env, rng, count - len(got))])
    return got


def hybrid_samples(env: Environment, rng: np.random.Generator, count: int) -> np.ndarray:
    """Mixture of uniform, Gaussian obstacle-boundary and bridge-test samples."""
    comp = rng.choice(3, size=count, p=HYBRID_WEIGHTS)
    out = np.empty((count, env.dim))
    out[comp == 0] = sample_free_many(env, rng, int((comp == 0).sum()))
    for c, fn in ((1, _gaussian_batch), (2, _bridge_batch)):
        want = int((comp == c).sum())
        if len(env.lo) == 0:
            # neither component can fire without obstacles
            out[comp == c] = sample_free_many(env, rng, want)
        else:
            out[comp == c] = _component_samples(env, rng, want, fn)
    return out


def build_hybrid_prm(env: Environment, cfg: CriticalPrmConfig) -> Roadmap:
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    nodes = hybrid_samples(env, rng, cfg.n)
    t1 = time.perf_counter()
    edges, costs = free_edges(env, nodes, radius_pairs(nodes, connection_radius(cfg.roadmap_config, env.dim)))
    timing = {"sample": t1 - t0, "predict": 0.0, "connect": time.perf_counter() - t1}
    return Roadmap(nodes=nodes, edges=edges, costs=costs, timing=timing)


BUILDERS = {
    "uniform": lambda env, model, cfg: build_uniform_prm(env, cfg),
    "hybrid": lambda env, model, cfg: build_hybrid_prm(env, cfg),
    "critical": build_critical_prm,
    "critical-local": build_critical_local_prm,
}


def build_roadmap(method: str, env: Environment, model: Optional[MlpModel], cfg: CriticalPrmConfig) -> Roadmap:
    try:
        builder = BUILDERS[method]
    except KeyError:
        raise InvalidConfigError(f"unknown method {method!r}; choose from {sorted(BUILDERS)}") from None
    if method.startswith("critical") and model is None:
        raise InvalidConfigError(f"method {method!r} needs a trained model")
    return builder(env, model, cfg)


@dataclass(frozen=True)
class PlanProblem:
    x_init: np.ndarray
    goal_center: np.ndarray
    goal_radius: float

    def __post_init__(self):
        if not self.goal_radius > 0:
            raise InvalidConfigError("goal_radius must be > 0")


@dataclass
class PlanResult:
    """``path`` indexes roadmap nodes, with ``n`` for the start and ``n + 1`` for the goal centre.

    ``cost`` is the length travelled until the path first enters the goal ball.
    """

    path: Optional[Path]
    waypoints: Optional[np.ndarray]
    cost: float
    success: bool
    timing: dict = field(default_factory=dict)


def _entry_length(u: np.ndarray, v: np.ndarray, center: np.ndarray, radius: float) -> float:
    """Distance along segment ``u -> v`` until it first enters the goal ball (``v`` inside)."""
    d = v - u
    f = u - center
    c = float(f @ f) - radius * radius
    if c <= 0:
        return 0.0
    a = float(d @ d)
    b = float(f @ d)
    disc = max(b * b - a * c, 0.0)
    t = (-b - math.sqrt(disc)) / a
    return min(max(t, 0.0), 1.0) * math.sqrt(a)


def plan(env: Environment, rm: Roadmap, prob: PlanProblem) -> PlanResult:
    """Attach start and goal globally, then run Dijkstra to the goal ball.

    Roadmap nodes inside the ball count as terminals too. The roadmap itself
    is never modified.
    """
    x0 = np.asarray(prob.x_init, dtype=float)
    gc = np.asarray(prob.goal_center, dtype=float)
    r = float(prob.goal_radius)
    if not point_free(env, x0):
        raise InfeasibleQueryError("initial state in collision")
    if not point_free(env, gc):
        raise InfeasibleQueryError("goal region infeasible: goal center in collision")

    t0 = time.perf_counter()
    n = rm.n
    start, sink = n, n + 1
    nodes = rm.nodes
    all_pts = np.concatenate([nodes, x0[None]])
    to_goal = segments_free(env, all_pts, np.broadcast_to(gc, all_pts.shape))
    from_start = segments_free(env, np.broadcast_to(x0, nodes.shape), nodes) if n else np.zeros(0, bool)
    in_ball = np.linalg.norm(nodes - gc, axis=1) <= r if n else np.zeros(0, bool)

    # best arc into the goal ball from each node, with the terminal it aims at
    best: dict[int, tuple[float, int]] = {}

    def offer(u: int, cost: float, term: int) -> None:
        if u not in best or cost < best[u][0]:
            best[u] = (cost, term)

    for u in np.flatnonzero(to_goal).tolist():
        offer(u, _entry_length(all_pts[u], gc, gc, r), -1)
    for v in np.flatnonzero(in_ball).tolist():
        offer(v, 0.0, v)
        for u, _ in rm.adjacency[v]:
            offer(u, _entry_length(nodes[u], nodes[v], gc, r), v)
        if from_start[v]:
            offer(start, _entry_length(x0, nodes[v], gc, r), v)

    extra: dict[int, list] = {}
    vis = np.flatnonzero(from_start)
    lengths = np.linalg.norm(nodes[vis] - x0, axis=1)
    extra[start] = list(zip(vis.tolist(), lengths.tolist()))
    for u, (cost, _) in best.items():
        extra.setdefault(u, []).append((sink, cost))
    t1 = time.perf_counter()

    pred, dist = dijkstra(rm.adjacency, start, target=sink, extra=extra, n=n + 2)
    t2 = time.perf_counter()
    timing = {"connect": t1 - t0, "search": t2 - t1}
    if not math.isfinite(dist[sink]):
        return PlanResult(None, None, math.inf, False, timing)

    chain = tree_path(pred, sink)[:-1]
    last = chain[-1]
    term = best[last][1]
    if term == -1:
        chain.append(n + 1)
    elif term != last:
        chain.append(term)
    pts = np.array([x0 if i == start else gc if i == n + 1 else nodes[i] for i in chain])
    cost = float(dist[sink])
    return PlanResult(Path(tuple(chain), cost), pts, cost, True, timing)
