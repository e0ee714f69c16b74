"""Slow reference computations used to cross-check the fast paths.

Nothing here calls into the Dijkstra, betweenness or backprop code it is
meant to verify.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


def bellman_ford(n: int, edges, costs, source: int) -> list[float]:
    """Distances by relaxation to a fixpoint; same ``d[u] + w`` arithmetic as Dijkstra."""
    dist = [math.inf] * n
    dist[source] = 0.0
    arcs = []
    for (i, j), w in zip(np.asarray(edges).tolist(), np.asarray(costs).tolist()):
        arcs.append((i, j, w))
        arcs.append((j, i, w))
    for _ in range(n):
        changed = False
        for u, v, w in arcs:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            break
    return dist


def canonical_predecessors(n: int, edges, costs, dist) -> list[int]:
    """Smallest-index neighbour ``u`` with ``dist[u] + w == dist[v]``."""
    pred = [-1] * n
    for (i, j), w in zip(np.asarray(edges).tolist(), np.asarray(costs).tolist()):
        for u, v in ((i, j), (j, i)):
            if math.isfinite(dist[u]) and dist[u] + w == dist[v] and dist[v] > 0:
                if pred[v] < 0 or u < pred[v]:
                    pred[v] = u
    return pred


def brute_force_interior_counts(n: int, edges, costs, sources) -> np.ndarray:
    """Walk every ordered (source, destination) path and count its interior nodes."""
    counts = np.zeros(n, dtype=np.int64)
    for s in sources:
        dist = bellman_ford(n, edges, costs, s)
        pred = canonical_predecessors(n, edges, costs, dist)
        for t in range(n):
            if t == s or not math.isfinite(dist[t]):
                continue
            v = pred[t]
            while v != s:
                counts[v] += 1
                v = pred[v]
    return counts


def min_cost_by_enumeration(n: int, edges, costs, source: int, target: int) -> float:
    """Cheapest simple path by exhaustive DFS; for graphs of about ten nodes."""
    adj = [[] for _ in range(n)]
    for (i, j), w in zip(np.asarray(edges).tolist(), np.asarray(costs).tolist()):
        adj[i].append((j, w))
        adj[j].append((i, w))
    best = math.inf
    stack = [(source, 0.0, 1 << source)]
    while stack:
        u, c, seen = stack.pop()
        if u == target:
            best = min(best, c)
            continue
        for v, w in adj[u]:
            if not seen >> v & 1:
                stack.append((v, c + w, seen | 1 << v))
    return 0.0 if source == target else best


def mlp_forward_loop(layer_sizes, weights, biases, x) -> float:
    """Scalar-loop forward pass of a rectifier MLP."""
    h = [float(v) for v in x]
    last = len(weights) - 1
    for l in range(len(weights)):
        w = weights[l]
        out = []
        for j in range(layer_sizes[l + 1]):
            acc = float(biases[l][j])
            for i in range(layer_sizes[l]):
                acc += h[i] * float(w[i][j])
            out.append(acc if l == last else max(acc, 0.0))
        h = out
    return h[0]


def grid_shortest_cost(env, start, goal_center, goal_radius, resolution: int = 201) -> float:
    """8-connected lattice Dijkstra to the goal ball.

    Lattice moves must pass the exact segment test, and the start/goal are
    attached to their nearest free lattice vertex by a straight segment.
    """
    from critprm.env import points_free, segments_free

    axis = np.linspace(0.0, 1.0, resolution)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    free = points_free(env, pts).reshape(resolution, resolution)
    moves = [(1, 0), (0, 1), (1, 1), (1, -1)]
    adj: dict[int, list] = {}
    for dx, dy in moves:
        ii, jj = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
        ni, nj = ii + dx, jj + dy
        ok = (ni >= 0) & (ni < resolution) & (nj >= 0) & (nj < resolution)
        a = np.stack([ii[ok], jj[ok]], 1)
        b = np.stack([ni[ok], nj[ok]], 1)
        both = free[a[:, 0], a[:, 1]] & free[b[:, 0], b[:, 1]]
        a, b = a[both], b[both]
        ok2 = segments_free(env, axis[a], axis[b])
        a, b = a[ok2], b[ok2]
        w = math.hypot(dx, dy) / (resolution - 1)
        for (i0, j0), (i1, j1) in zip(a.tolist(), b.tolist()):
            u, v = i0 * resolution + j0, i1 * resolution + j1
            adj.setdefault(u, []).append((v, w))
            adj.setdefault(v, []).append((u, w))
    start = np.asarray(start, float)
    center = np.asarray(goal_center, float)
    free_idx = np.flatnonzero(free.ravel())
    d0 = np.linalg.norm(pts[free_idx] - start, axis=1)
    src = -1
    dist = {src: 0.0}
    heap = [(0.0, src)]
    # start attaches to every free vertex within two cells it can see directly
    near = free_idx[d0 <= 2.0 / (resolution - 1)]
    vis = segments_free(env, np.broadcast_to(start, (len(near), 2)), pts[near])
    start_arcs = [(int(v), float(np.linalg.norm(pts[v] - start))) for v in near[vis]]
    best = math.inf
    if segments_free(env, start[None], center[None])[0]:
        best = max(float(np.linalg.norm(center - start)) - goal_radius, 0.0)
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf) or d >= best:
            continue
        p = start if u == src else pts[u]
        gap = float(np.linalg.norm(p - center)) - goal_radius
        if gap <= 0:
            best = min(best, d)
            continue
        arcs = start_arcs if u == src else adj.get(u, [])
        for v, w in arcs:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return best
