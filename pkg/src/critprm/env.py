"""Box-obstacle workspaces in the unit hypercube.

Holds the environment type, the narrow-passage generator, exact collision
queries, free-space samplers and local occupancy patches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from critprm.errors import (
    DimensionMismatchError,
    InfeasibleGeometryError,
    SamplingExhaustedError,
)

RASTER_RESOLUTION = {2: 100, 3: 36}
PATCH_SIDE = {2: 10, 3: 12}
WALL_THICKNESS = 0.04
MIN_WALL_SEPARATION = 0.15
MAX_WALL_ATTEMPTS = 1000
MAX_REJECTIONS = 100_000

_SEGMENT_CHUNK = 20_000


def _rasterize(dim: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    res = RASTER_RESOLUTION[dim]
    centers = (np.arange(res) + 0.5) / res
    grids = np.meshgrid(*([centers] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    occ = ~_points_free(lo, hi, pts)
    return occ.reshape((res,) * dim).astype(np.uint8)


def _points_free(lo: np.ndarray, hi: np.ndarray, pts: np.ndarray) -> np.ndarray:
    if len(lo) == 0:
        return np.ones(len(pts), dtype=bool)
    inside = np.ones((len(pts), len(lo)), dtype=bool)
    for ax in range(pts.shape[1]):
        p = pts[:, ax : ax + 1]
        inside &= (p >= lo[None, :, ax]) & (p <= hi[None, :, ax])
    return ~inside.any(axis=1)


@dataclass(frozen=True, eq=False)
class Environment:
    """Axis-aligned box obstacles in ``[0, 1]^dim`` plus their occupancy raster.

    Boxes are closed: a point on a box face is in collision.
    """

    dim: int
    lo: np.ndarray
    hi: np.ndarray
    raster: np.ndarray = field(repr=False)
    seed: int = 0

    @classmethod
    def from_boxes(cls, dim: int, boxes, seed: int = 0) -> "Environment":
        if dim not in RASTER_RESOLUTION:
            raise DimensionMismatchError(f"dim must be 2 or 3, got {dim}")
        boxes = list(boxes)
        lo = np.array([b[0] for b in boxes], dtype=float).reshape(-1, dim)
        hi = np.array([b[1] for b in boxes], dtype=float).reshape(-1, dim)
        if np.any(lo < 0) or np.any(hi > 1) or np.any(lo >= hi):
            raise InfeasibleGeometryError("boxes must lie in the unit cube with min < max")
        lo.setflags(write=False)
        hi.setflags(write=False)
        raster = _rasterize(dim, lo, hi)
        raster.setflags(write=False)
        return cls(dim=dim, lo=lo, hi=hi, raster=raster, seed=seed)

    @property
    def boxes(self) -> list[tuple[tuple[float, ...], tuple[float, ...]]]:
        return [(tuple(a), tuple(b)) for a, b in zip(self.lo.tolist(), self.hi.tolist())]

    @property
    def resolution(self) -> int:
        return RASTER_RESOLUTION[self.dim]

    @property
    def patch_size(self) -> int:
        return PATCH_SIDE[self.dim] ** self.dim

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "seed": self.seed,
            "obstacles": [{"min": list(a), "max": list(b)} for a, b in self.boxes],
            "raster_shape": list(self.raster.shape),
            "raster": rle_encode(self.raster.ravel()),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Environment":
        boxes = [(o["min"], o["max"]) for o in data["obstacles"]]
        env = cls.from_boxes(int(data["dim"]), boxes, seed=int(data.get("seed", 0)))
        if "raster" in data:
            stored = rle_decode(data["raster"], int(np.prod(data["raster_shape"])))
            if not np.array_equal(stored, env.raster.ravel()):
                raise InfeasibleGeometryError("stored raster disagrees with obstacle boxes")
        return env

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Environment":
        return cls.from_dict(json.loads(Path(path).read_text()))


def rle_encode(bits: np.ndarray) -> str:
    """Comma-separated run lengths, alternating 0-runs and 1-runs, starting with 0."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return ""
    change = np.flatnonzero(np.diff(bits)) + 1
    bounds = np.concatenate([[0], change, [bits.size]])
    runs = np.diff(bounds).tolist()
    if bits[0] == 1:
        runs = [0] + runs
    return ",".join(str(r) for r in runs)


def rle_decode(text: str, size: int) -> np.ndarray:
    runs = [int(t) for t in text.split(",")] if text else []
    out = np.zeros(sum(runs), dtype=np.uint8)
    pos = 0
    for i, r in enumerate(runs):
        if i % 2:
            out[pos : pos + r] = 1
        pos += r
    if out.size != size:
        raise ValueError(f"run lengths cover {out.size} cells, expected {size}")
    return out


def _gap_intervals(num_gaps: int, width: float, rng: np.random.Generator) -> list[tuple[float, float]]:
    gaps = []
    for j in range(num_gaps):
        c = rng.uniform(j / num_gaps + width / 2, (j + 1) / num_gaps - width / 2)
        gaps.append((c - width / 2, c + width / 2))
    return gaps


def _complement(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out, prev = [], 0.0
    for a, b in intervals:
        out.append((prev, a))
        prev = b
    out.append((prev, 1.0))
    return [(a, b) for a, b in out if b > a]


def generate_narrow_passage(
    dim: int, num_walls: int, gaps_per_wall: int, gap_width: float, seed: int
) -> Environment:
    """Random walls perpendicular to the first axis, each pierced by gaps.

    Wall centres are rejection-sampled to keep ``MIN_WALL_SEPARATION`` from
    each other and from the boundary. Each wall gets one gap per equal stratum
    of the second axis; in 3D a gap is a square hole whose third coordinate is
    uniform.
    """
    if dim not in RASTER_RESOLUTION:
        raise DimensionMismatchError(f"dim must be 2 or 3, got {dim}")
    if num_walls < 1 or gaps_per_wall < 1:
        raise InfeasibleGeometryError("need at least one wall and one gap per wall")
    if not 0 < gap_width < 1 / (2 * gaps_per_wall):
        raise InfeasibleGeometryError(
            f"gap_width {gap_width} outside (0, {1 / (2 * gaps_per_wall):.4g})"
        )
    rng = np.random.default_rng(seed)
    for _ in range(MAX_WALL_ATTEMPTS):
        xs = np.sort(rng.uniform(0.0, 1.0, num_walls))
        seps = np.diff(np.concatenate([[0.0], xs, [1.0]]))
        if seps.min() >= MIN_WALL_SEPARATION:
            break
    else:
        raise InfeasibleGeometryError(
            f"could not place {num_walls} walls with separation {MIN_WALL_SEPARATION}"
        )

    half = WALL_THICKNESS / 2
    boxes = []
    for x in xs:
        x0, x1 = float(x - half), float(x + half)
        gaps = _gap_intervals(gaps_per_wall, gap_width, rng)
        for a, b in _complement(gaps):
            lo = [x0, a] + [0.0] * (dim - 2)
            hi = [x1, b] + [1.0] * (dim - 2)
            boxes.append((lo, hi))
        if dim == 3:
            for a, b in gaps:
                c = rng.uniform(gap_width / 2, 1 - gap_width / 2)
                for za, zb in _complement([(c - gap_width / 2, c + gap_width / 2)]):
                    boxes.append(([x0, a, za], [x1, b, zb]))
    return Environment.from_boxes(dim, boxes, seed=seed)


def _check_dim(env: Environment, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != env.dim:
        raise DimensionMismatchError(f"state has {x.shape[-1]} coords, env has dim {env.dim}")
    return x


def points_free(env: Environment, pts) -> np.ndarray:
    pts = _check_dim(env, pts).reshape(-1, env.dim)
    return _points_free(env.lo, env.hi, pts)


def point_free(env: Environment, x) -> bool:
    return bool(points_free(env, x)[0])


def segment_free(env: Environment, a, b) -> bool:
    """Exact slab test of segment ``a``-``b`` against every closed box."""
    a = _check_dim(env, a).tolist()
    b = _check_dim(env, b).tolist()
    d = [bb - aa for aa, bb in zip(a, b)]
    for lo, hi in zip(env.lo.tolist(), env.hi.tolist()):
        t0, t1 = 0.0, 1.0
        for ax in range(env.dim):
            if d[ax] == 0.0:
                if a[ax] < lo[ax] or a[ax] > hi[ax]:
                    break
                continue
            ta = (lo[ax] - a[ax]) / d[ax]
            tb = (hi[ax] - a[ax]) / d[ax]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                break
        else:
            return False
    return True


def segments_free(env: Environment, a, b) -> np.ndarray:
    """Vectorized :func:`segment_free` over rows of ``a`` and ``b``."""
    a = _check_dim(env, a).reshape(-1, env.dim)
    b = _check_dim(env, b).reshape(-1, env.dim)
    out = np.ones(len(a), dtype=bool)
    if len(env.lo) == 0:
        return out
    for s in range(0, len(a), _SEGMENT_CHUNK):
        out[s : s + _SEGMENT_CHUNK] = _segments_free_chunk(
            env.lo, env.hi, a[s : s + _SEGMENT_CHUNK], b[s : s + _SEGMENT_CHUNK]
        )
    return out


def _segments_free_chunk(lo, hi, a, b) -> np.ndarray:
    t0 = np.zeros((len(a), len(lo)))
    t1 = np.ones((len(a), len(lo)))
    for ax in range(a.shape[1]):
        p = a[:, ax : ax + 1]
        d = (b - a)[:, ax : ax + 1]
        flat = d == 0.0
        safe = np.where(flat, 1.0, d)
        with np.errstate(over="ignore"):  # subnormal d: +-inf is the right slab bound
            ta = (lo[None, :, ax] - p) / safe
            tb = (hi[None, :, ax] - p) / safe
        tmin = np.minimum(ta, tb)
        tmax = np.maximum(ta, tb)
        inside = (p >= lo[None, :, ax]) & (p <= hi[None, :, ax])
        tmin = np.where(flat, np.where(inside, -np.inf, np.inf), tmin)
        tmax = np.where(flat, np.where(inside, np.inf, -np.inf), tmax)
        t0 = np.maximum(t0, tmin)
        t1 = np.minimum(t1, tmax)
    return ~(t0 <= t1).any(axis=1)


def distance_to_obstacles(env: Environment, pts) -> np.ndarray:
    """Euclidean distance from each point to the nearest box (0 inside a box)."""
    pts = _check_dim(env, pts).reshape(-1, env.dim)
    if len(env.lo) == 0:
        return np.full(len(pts), np.inf)
    gap = np.maximum(env.lo[None] - pts[:, None], 0.0) + np.maximum(pts[:, None] - env.hi[None], 0.0)
    return np.sqrt((gap**2).sum(axis=2)).min(axis=1)


def sample_free(env: Environment, rng: np.random.Generator) -> np.ndarray:
    for _ in range(MAX_REJECTIONS):
        x = rng.random(env.dim)
        if point_free(env, x):
            return x
    raise SamplingExhaustedError(f"{MAX_REJECTIONS} consecutive rejections")


def sample_free_many(env: Environment, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` uniform free states, drawn in blocks for speed.

    Gives a different stream than repeated :func:`sample_free` calls but is
    equally deterministic in the generator state.
    """
    out = np.empty((count, env.dim))
    got = 0
    run = 0
    while got < count:
        block = max(64, int(1.3 * (count - got)) + 16)
        pts = rng.random((block, env.dim))
        ok = _points_free(env.lo, env.hi, pts)
        idx = np.flatnonzero(ok)
        if len(idx) == 0:
            run += block
        else:
            if run + idx[0] >= MAX_REJECTIONS:
                break
            run = block - 1 - idx[-1]
        take = idx[: count - got]
        out[got : got + len(take)] = pts[take]
        got += len(take)
        if run >= MAX_REJECTIONS:
            break
    if got < count:
        raise SamplingExhaustedError(f"{MAX_REJECTIONS} consecutive rejections")
    return out


def cell_index(env: Environment, pts) -> np.ndarray:
    pts = _check_dim(env, pts).reshape(-1, env.dim)
    res = env.resolution
    return np.clip(np.floor(pts * res).astype(int), 0, res - 1)


def local_patches(env: Environment, pts) -> np.ndarray:
    """Flattened occupancy windows centred on each point's raster cell.

    The window has side 10 (2D) or 12 (3D) with the point's cell at index
    ``side // 2`` along every axis; cells outside the workspace read as 1.
    """
    side = PATCH_SIDE[env.dim]
    idx = cell_index(env, pts)
    padded = np.pad(env.raster, side, mode="constant", constant_values=1)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (side,) * env.dim)
    start = idx - side // 2 + side
    sel = windows[tuple(start[:, ax] for ax in range(env.dim))]
    return sel.reshape(len(idx), -1).astype(np.float64)


def local_patch(env: Environment, x) -> np.ndarray:
    return local_patches(env, x)[0]
