import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critprm.env import (
    Environment,
    distance_to_obstacles,
    generate_narrow_passage,
    local_patch,
    local_patches,
    point_free,
    points_free,
    rle_decode,
    rle_encode,
    sample_free,
    sample_free_many,
    segment_free,
    segments_free,
)
from critprm.errors import DimensionMismatchError, InfeasibleGeometryError, SamplingExhaustedError

BAR = Environment.from_boxes(2, [([0.4, 0.0], [0.6, 1.0])])
GAP = Environment.from_boxes(2, [([0.4, 0.0], [0.6, 0.45]), ([0.4, 0.55], [0.6, 1.0])])
EMPTY = Environment.from_boxes(2, [])

unit = st.floats(0.0, 1.0, allow_nan=False)
point2 = st.tuples(unit, unit)


def test_one_gap_splits_wall_in_two():
    env = generate_narrow_passage(2, 1, 1, 0.05, seed=7)
    assert len(env.boxes) == 2


def test_three_walls_two_gaps():
    env = generate_narrow_passage(2, 3, 2, 0.02, seed=1)
    assert len(env.boxes) == 9
    res = env.resolution
    for x in sorted({b[0][0] for b in env.boxes}):
        col = env.raster[int((x + 0.02) * res)]
        runs = np.diff(np.concatenate([[1], col, [1]]).astype(int))
        starts, ends = np.flatnonzero(runs == -1), np.flatnonzero(runs == 1)
        assert len(starts) == 2
        # a 0.02-wide gap holds one to three cell centres at 0.01 spacing
        assert all(1 <= e - s <= 3 for s, e in zip(starts, ends))


@pytest.mark.parametrize("gaps,width", [(1, 0.5), (1, 0.6), (2, 0.25), (1, 0.0)])
def test_gap_width_bound(gaps, width):
    with pytest.raises(InfeasibleGeometryError):
        generate_narrow_passage(2, 1, gaps, width, seed=0)


def test_wide_single_gap_is_allowed():
    env = generate_narrow_passage(2, 1, 1, 0.4, seed=0)
    assert len(env.boxes) in (1, 2)


def test_too_many_walls():
    with pytest.raises(InfeasibleGeometryError):
        generate_narrow_passage(2, 7, 1, 0.03, seed=0)


@pytest.mark.parametrize("dim", [2, 3])
def test_generator_invariants(dim):
    env = generate_narrow_passage(dim, 3, 2, 0.05, seed=11)
    assert np.all(env.lo >= 0) and np.all(env.hi <= 1) and np.all(env.lo < env.hi)
    assert env.raster.shape == (env.resolution,) * dim
    assert env.raster.min() == 0
    centers = (np.argwhere(np.ones_like(env.raster)) + 0.5) / env.resolution
    assert np.array_equal(env.raster.ravel() == 1, ~points_free(env, centers))
    xs = sorted({round(b[0][0] + 0.02, 12) for b in env.boxes})
    assert np.diff([0.0, *xs, 1.0]).min() >= 0.15


def test_3d_walls_have_holes():
    env = generate_narrow_passage(3, 2, 1, 0.06, seed=3)
    # each wall: one slab beside the hole stratum pieces plus two around the hole
    assert len(env.boxes) == 2 * (2 + 2)
    x = env.boxes[0][0][0] + 0.02
    plane = env.raster[int(x * env.resolution)]
    assert 0 < (plane == 0).sum() < plane.size


def test_generator_is_deterministic():
    a = generate_narrow_passage(2, 3, 2, 0.03, seed=5)
    b = generate_narrow_passage(2, 3, 2, 0.03, seed=5)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != generate_narrow_passage(2, 3, 2, 0.03, seed=6).to_dict()


def test_point_free():
    assert not point_free(BAR, [0.5, 0.5])
    assert point_free(BAR, [0.1, 0.5])
    assert not point_free(BAR, [0.4, 0.5])
    with pytest.raises(DimensionMismatchError):
        point_free(BAR, [0.1, 0.5, 0.5])


def test_segment_free_examples():
    assert segment_free(GAP, [0.2, 0.5], [0.8, 0.5])
    assert not segment_free(GAP, [0.2, 0.2], [0.8, 0.2])
    assert segment_free(GAP, [0.1, 0.1], [0.1, 0.1])
    with pytest.raises(DimensionMismatchError):
        segment_free(GAP, [0.1, 0.1], [0.1, 0.1, 0.1])


def test_segment_grazing_face_is_blocked():
    assert not segment_free(GAP, [0.2, 0.45], [0.8, 0.45])
    assert segment_free(GAP, [0.2, 0.4500001], [0.8, 0.4500001])


@settings(max_examples=300, deadline=None)
@given(point2, point2)
def test_segment_symmetric_and_matches_vectorized(a, b):
    env = generate_narrow_passage(2, 2, 2, 0.08, seed=4)
    fwd = segment_free(env, a, b)
    assert fwd == segment_free(env, b, a)
    assert fwd == bool(segments_free(env, np.array([a]), np.array([b]))[0])
    if fwd:
        assert point_free(env, (np.array(a) + np.array(b)) / 2)


def test_free_segments_are_free_everywhere():
    env = generate_narrow_passage(2, 3, 1, 0.05, seed=2)
    rng = np.random.default_rng(0)
    a = rng.random((400, 2))
    b = a + rng.normal(0, 0.2, size=a.shape).clip(-1, 1)
    b = b.clip(0, 1)
    ok = segments_free(env, a, b)
    assert ok.any() and (~ok).any()
    i = np.flatnonzero(ok)[0]
    tau = rng.random(10_000)[:, None]
    assert points_free(env, a[i] + tau * (b[i] - a[i])).all()
    for j in np.flatnonzero(ok)[:50]:
        tau = rng.random(200)[:, None]
        assert points_free(env, a[j] + tau * (b[j] - a[j])).all()


def test_segments_free_3d_axis_parallel():
    env = Environment.from_boxes(3, [([0.4, 0.4, 0.4], [0.6, 0.6, 0.6])])
    a = np.array([[0.5, 0.5, 0.0], [0.1, 0.1, 0.0], [0.5, 0.5, 0.5]])
    b = np.array([[0.5, 0.5, 1.0], [0.1, 0.1, 1.0], [0.5, 0.5, 0.5]])
    assert segments_free(env, a, b).tolist() == [False, True, False]


def test_sample_free_empty_returns_first_draw():
    rng = np.random.default_rng(3)
    first = np.random.default_rng(3).random(2)
    assert np.array_equal(sample_free(EMPTY, rng), first)


def test_sample_free_respects_obstacle():
    env = Environment.from_boxes(2, [([0.0, 0.0], [1.0, 0.9])])
    rng = np.random.default_rng(0)
    ys = [sample_free(env, rng)[1] for _ in range(1000)]
    assert min(ys) > 0.9
    assert (sample_free_many(env, rng, 1000)[:, 1] > 0.9).all()


def test_sample_free_exhausted():
    full = Environment.from_boxes(2, [([0.0, 0.0], [1.0, 1.0])])
    with pytest.raises(SamplingExhaustedError):
        sample_free(full, np.random.default_rng(0))
    with pytest.raises(SamplingExhaustedError):
        sample_free_many(full, np.random.default_rng(0), 3)


def test_sample_free_many_deterministic():
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=1)
    a = sample_free_many(env, np.random.default_rng(8), 500)
    b = sample_free_many(env, np.random.default_rng(8), 500)
    assert np.array_equal(a, b)
    assert points_free(env, a).all()


def _patch_oracle(env, x):
    side = {2: 10, 3: 12}[env.dim]
    res = env.resolution
    c = [min(int(v * res), res - 1) for v in x]
    out = []
    for offs in np.ndindex(*(side,) * env.dim):
        cell = [ci - side // 2 + o for ci, o in zip(c, offs)]
        if all(0 <= k < res for k in cell):
            out.append(env.raster[tuple(cell)])
        else:
            out.append(1)
    return np.array(out, dtype=float)


def test_patch_empty_center():
    assert np.array_equal(local_patch(EMPTY, [0.5, 0.5]), np.zeros(100))


def test_patch_corner_padding():
    p = local_patch(EMPTY, [0.005, 0.005])
    assert p.sum() == 100 - 5 * 5
    assert np.array_equal(p, _patch_oracle(EMPTY, [0.005, 0.005]))
    grid = p.reshape(10, 10)
    assert grid[:5].all() and grid[:, :5].all() and not grid[5:, 5:].any()


def test_patch_full_box():
    full = Environment.from_boxes(2, [([0.0, 0.0], [1.0, 1.0])])
    assert np.array_equal(local_patch(full, [0.5, 0.5]), np.ones(100))


@pytest.mark.parametrize("dim", [2, 3])
def test_patches_match_oracle(dim):
    env = generate_narrow_passage(dim, 2, 1, 0.1, seed=9)
    rng = np.random.default_rng(1)
    pts = np.concatenate([rng.random((30, dim)), np.eye(dim), np.zeros((1, dim)), np.ones((1, dim))])
    got = local_patches(env, pts)
    assert got.shape == (len(pts), env.patch_size)
    for x, row in zip(pts, got):
        assert np.array_equal(row, _patch_oracle(env, x))


def test_patch_orientation():
    env = Environment.from_boxes(2, [([0.0, 0.0], [0.5, 1.0])])
    grid = local_patch(env, [0.52, 0.5]).reshape(10, 10)
    # first axis is x: rows below index 3 sit left of x = 0.5
    assert grid[:3].all() and not grid[3:].any()


def test_patch_same_cell_same_patch():
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=1)
    a = local_patch(env, [0.4312, 0.5071])
    b = local_patch(env, [0.4388, 0.5009])
    assert np.array_equal(a, b)


def test_distance_to_obstacles():
    d = distance_to_obstacles(BAR, [[0.1, 0.5], [0.5, 0.5], [0.65, 0.2]])
    assert d == pytest.approx([0.3, 0.0, 0.05])


def test_json_roundtrip(tmp_path):
    env = generate_narrow_passage(3, 2, 2, 0.05, seed=13)
    env.save(tmp_path / "e.json")
    back = Environment.load(tmp_path / "e.json")
    assert back.to_dict() == env.to_dict()
    assert np.array_equal(back.raster, env.raster)


@given(st.lists(st.integers(0, 1), max_size=200))
def test_rle_roundtrip(bits):
    arr = np.array(bits, dtype=np.uint8)
    assert np.array_equal(rle_decode(rle_encode(arr), len(arr)), arr)
