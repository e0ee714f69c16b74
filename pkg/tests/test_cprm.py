import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critprm import oracles
from critprm.cprm import (
    CriticalPrmConfig,
    PlanProblem,
    add_critical_samples,
    build_critical_local_prm,
    build_critical_prm,
    build_hybrid_prm,
    build_roadmap,
    build_uniform_prm,
    critical_count,
    hybrid_samples,
    plan,
    proportional_draw,
)
from critprm.env import (
    Environment,
    distance_to_obstacles,
    generate_narrow_passage,
    sample_free,
    sample_free_many,
    segments_free,
)
from critprm.errors import InfeasibleQueryError, InvalidConfigError, ShapeMismatchError
from critprm.learner import zero_model
from critprm.roadmap import RoadmapConfig, build_prm, connection_radius

EMPTY = Environment.from_boxes(2, [])
WALL = Environment.from_boxes(2, [([0.45, 0.0], [0.55, 1.0])])
# 8-connected lattice paths are at most this factor longer than the continuous optimum
OCTILE_STRETCH = 1 / math.cos(math.pi / 8)


def test_critical_count():
    assert critical_count(1000, 2.0) == 14
    assert critical_count(3, 0.1) == 1
    assert critical_count(50, 2.0) == 8


def test_config_rejects_too_many_critical():
    with pytest.raises(InvalidConfigError):
        CriticalPrmConfig(n=3, lam=3.0)
    with pytest.raises(InvalidConfigError):
        CriticalPrmConfig(n=1)


def test_proportional_draw_respects_zero_weights():
    rng = np.random.default_rng(0)
    w = np.array([0.0, 1.0, 0.0, 3.0, 0.0])
    for _ in range(50):
        got = proportional_draw(w, 2, rng)
        assert sorted(got.tolist()) == [1, 3]


def test_proportional_draw_frequencies():
    rng = np.random.default_rng(1)
    w = np.array([1.0, 2.0, 7.0])
    firsts = np.array([proportional_draw(w, 1, rng)[0] for _ in range(20_000)])
    freq = np.bincount(firsts, minlength=3) / len(firsts)
    assert freq == pytest.approx(w / w.sum(), abs=0.015)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 5, allow_nan=False), min_size=1, max_size=30), st.integers(1, 30), st.integers(0, 999))
def test_proportional_draw_is_distinct(weights, k, seed):
    got = proportional_draw(np.array(weights), k, np.random.default_rng(seed))
    assert len(got) == min(k, len(weights)) == len(set(got.tolist()))
    positive = sum(w > 0 for w in weights)
    # positive-weight indices are exhausted before any zero-weight one
    assert all(weights[i] > 0 for i in got[:positive])


def test_zero_model_falls_back_to_uniform():
    cfg = CriticalPrmConfig(n=1000, seed=2)
    rm = build_critical_prm(EMPTY, zero_model([100, 1]), cfg)
    assert rm.n == 1000 and rm.flags.sum() == 14
    assert np.array_equal(np.flatnonzero(rm.flags), np.arange(986, 1000))


def test_model_shape_must_match_patch():
    with pytest.raises(ShapeMismatchError):
        build_critical_prm(EMPTY, zero_model([1728, 1]), CriticalPrmConfig(n=50))


def test_unknown_method_and_missing_model():
    with pytest.raises(InvalidConfigError):
        build_roadmap("rrt", EMPTY, None, CriticalPrmConfig(n=50))
    with pytest.raises(InvalidConfigError):
        build_roadmap("critical", EMPTY, None, CriticalPrmConfig(n=50))


def test_empty_env_critical_nodes_are_global():
    rm = build_critical_prm(EMPTY, zero_model([100, 1]), CriticalPrmConfig(n=50, seed=3))
    deg = rm.degree()
    assert rm.flags.sum() == 8
    assert (deg[rm.flags] == 49).all()


def test_local_variant_shares_nodes_and_drops_edges():
    model = zero_model([100, 1])
    cfg = CriticalPrmConfig(n=50, seed=3)
    g = build_critical_prm(EMPTY, model, cfg)
    l = build_critical_local_prm(EMPTY, model, cfg)
    assert np.array_equal(g.nodes, l.nodes) and np.array_equal(g.flags, l.flags)
    assert {tuple(e) for e in l.edges.tolist()} <= {tuple(e) for e in g.edges.tolist()}
    assert connection_radius(cfg.roadmap_config, 2) < math.sqrt(2)
    assert (l.degree()[l.flags] < 49).all()


@pytest.mark.parametrize("seed", range(3))
def test_hierarchy_well_formed(model, seed):
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=50 + seed)
    rm = build_critical_prm(env, model, CriticalPrmConfig(n=200, seed=seed))
    assert rm.n == 200
    assert segments_free(env, rm.nodes[rm.edges[:, 0]], rm.nodes[rm.edges[:, 1]]).all()
    nbrs = [set(j for j, _ in a) for a in rm.adjacency]
    for c in np.flatnonzero(rm.flags):
        others = np.delete(np.arange(rm.n), c)
        visible = segments_free(env, np.broadcast_to(rm.nodes[c], (len(others), 2)), rm.nodes[others])
        assert nbrs[c] == set(others[visible].tolist())
    r = connection_radius(RoadmapConfig(200), 2)
    plain = ~rm.flags
    for i, j in rm.edges.tolist():
        if plain[i] and plain[j]:
            assert np.linalg.norm(rm.nodes[i] - rm.nodes[j]) <= r


def test_radius_cap_limits_global_edges():
    cfg = CriticalPrmConfig(n=100, seed=1, global_radius_cap=0.3)
    rm = build_critical_prm(EMPTY, zero_model([100, 1]), cfg)
    crit = rm.flags[rm.edges].any(axis=1)
    lengths = np.linalg.norm(rm.nodes[rm.edges[:, 0]] - rm.nodes[rm.edges[:, 1]], axis=1)
    assert (lengths[crit] <= 0.3).all()


def test_builders_are_deterministic(model):
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=60)
    cfg = CriticalPrmConfig(n=150, seed=4)
    for method in ("uniform", "hybrid", "critical", "critical-local"):
        a = build_roadmap(method, env, model, cfg)
        b = build_roadmap(method, env, model, cfg)
        assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.edges, b.edges), method
        assert a.n == 150


def test_critical_nodes_sit_near_walls(model):
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=61)
    crit, unif = [], []
    for seed in range(10):
        rm = build_critical_prm(env, model, CriticalPrmConfig(n=300, seed=seed))
        d = distance_to_obstacles(env, rm.nodes)
        crit.extend(d[rm.flags])
        unif.extend(d[~rm.flags])
    assert np.median(crit) < 0.5 * np.median(unif)


def test_hybrid_empty_env_is_uniform():
    a = hybrid_samples(EMPTY, np.random.default_rng(0), 4000)
    assert a.shape == (4000, 2)
    assert (a >= 0).all() and (a <= 1).all()
    # mean and spread of a uniform square
    assert a.mean(axis=0) == pytest.approx([0.5, 0.5], abs=0.02)
    assert a.var(axis=0) == pytest.approx([1 / 12, 1 / 12], abs=0.005)


def test_hybrid_concentrates_near_obstacles():
    env = Environment.from_boxes(2, [([0.45, 0.0], [0.55, 0.7])])
    rng = np.random.default_rng(1)
    hyb = distance_to_obstacles(env, hybrid_samples(env, rng, 5000))
    uni = distance_to_obstacles(env, sample_free_many(env, rng, 5000))
    near_h, near_u = (hyb <= 0.05).mean(), (uni <= 0.05).mean()
    assert near_h >= 0.10
    assert near_h > 1.5 * near_u
    assert (hyb > 0).all()


def test_hybrid_stalled_component_falls_back():
    # the whole box blocks but a sliver: Gaussian pairs almost never straddle a surface
    env = Environment.from_boxes(2, [([0.0, 0.0], [1.0, 0.999])])
    pts = hybrid_samples(env, np.random.default_rng(2), 20)
    assert (pts[:, 1] > 0.999).all()


def test_hybrid_roadmap_edges_free():
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=62)
    rm = build_hybrid_prm(env, CriticalPrmConfig(n=300, seed=0))
    assert rm.n == 300
    assert segments_free(env, rm.nodes[rm.edges[:, 0]], rm.nodes[rm.edges[:, 1]]).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_plan_empty_env_cost(seed):
    rng = np.random.default_rng(seed)
    rm = build_uniform_prm(EMPTY, CriticalPrmConfig(n=int(rng.integers(2, 200)), seed=seed))
    x0, gc = rng.random(2), rng.random(2)
    r = 0.02
    res = plan(EMPTY, rm, PlanProblem(x0, gc, r))
    assert res.success
    assert res.cost == pytest.approx(max(np.linalg.norm(x0 - gc) - r, 0.0), abs=1e-12)
    assert res.path.node_indices[0] == rm.n


def test_plan_solid_wall_fails():
    rm = build_uniform_prm(WALL, CriticalPrmConfig(n=300, seed=0))
    res = plan(WALL, rm, PlanProblem(np.array([0.2, 0.5]), np.array([0.8, 0.5]), 0.02))
    assert not res.success and math.isinf(res.cost) and res.path is None


def test_plan_infeasible_queries():
    rm = build_uniform_prm(WALL, CriticalPrmConfig(n=50, seed=0))
    with pytest.raises(InfeasibleQueryError, match="initial state"):
        plan(WALL, rm, PlanProblem(np.array([0.5, 0.5]), np.array([0.8, 0.5]), 0.02))
    with pytest.raises(InfeasibleQueryError, match="goal region infeasible"):
        plan(WALL, rm, PlanProblem(np.array([0.2, 0.5]), np.array([0.5, 0.5]), 0.02))
    with pytest.raises(InvalidConfigError):
        PlanProblem(np.array([0.2, 0.5]), np.array([0.8, 0.5]), 0.0)


def test_plan_start_inside_goal():
    rm = build_uniform_prm(EMPTY, CriticalPrmConfig(n=20, seed=0))
    res = plan(EMPTY, rm, PlanProblem(np.array([0.5, 0.5]), np.array([0.51, 0.5]), 0.02))
    assert res.success and res.cost == 0.0


def test_plan_does_not_mutate_roadmap():
    env = generate_narrow_passage(2, 3, 1, 0.05, seed=63)
    rm = build_uniform_prm(env, CriticalPrmConfig(n=300, seed=0))
    nodes, edges, costs = rm.nodes.copy(), rm.edges.copy(), rm.costs.copy()
    adj = [list(a) for a in rm.adjacency]
    rng = np.random.default_rng(0)
    for _ in range(5):
        plan(env, rm, PlanProblem(sample_free(env, rng), sample_free(env, rng), 0.02))
    assert np.array_equal(rm.nodes, nodes) and np.array_equal(rm.edges, edges) and np.array_equal(rm.costs, costs)
    assert [list(a) for a in rm.adjacency] == adj


def test_plan_path_is_collision_free(model):
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=64)
    rm = build_critical_prm(env, model, CriticalPrmConfig(n=400, seed=1))
    rng = np.random.default_rng(2)
    solved = 0
    for _ in range(10):
        prob = PlanProblem(sample_free(env, rng), sample_free(env, rng), 0.02)
        res = plan(env, rm, prob)
        if not res.success:
            continue
        solved += 1
        w = res.waypoints
        assert np.array_equal(w[0], prob.x_init)
        assert segments_free(env, w[:-1], w[1:]).all()
        assert np.linalg.norm(w[-1] - prob.goal_center) <= prob.goal_radius + 1e-12
        length = np.linalg.norm(np.diff(w, axis=0), axis=1).sum()
        assert res.cost <= length + 1e-12
        assert res.cost >= np.linalg.norm(prob.x_init - prob.goal_center) - prob.goal_radius - 1e-12
    assert solved >= 5


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1])
def test_plan_within_grid_oracle_bounds(model, seed):
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=70 + seed)
    rm = build_critical_prm(env, model, CriticalPrmConfig(n=2000, seed=seed))
    rng = np.random.default_rng(seed)
    x0 = np.array([0.02, rng.uniform(0.1, 0.9)])
    gc = np.array([0.98, rng.uniform(0.1, 0.9)])
    res = plan(env, rm, PlanProblem(x0, gc, 0.02))
    grid = oracles.grid_shortest_cost(env, x0, gc, 0.02)
    assert res.success and math.isfinite(grid)
    # optimum lies in [grid / stretch - one cell diagonal, grid]
    lower = grid / OCTILE_STRETCH - math.sqrt(2) / 200
    assert lower <= res.cost <= 1.5 * lower


def test_adding_critical_samples_never_hurts(model):
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=65)
    base = build_prm(env, RoadmapConfig(150), np.random.default_rng(0))
    crit = sample_free_many(env, np.random.default_rng(1), 10)
    more = add_critical_samples(env, base, crit)
    assert more.n == 160 and more.flags.sum() == 10
    assert {tuple(e) for e in base.edges.tolist()} <= {tuple(e) for e in more.edges.tolist()}
    rng = np.random.default_rng(2)
    for _ in range(20):
        prob = PlanProblem(sample_free(env, rng), sample_free(env, rng), 0.02)
        assert plan(env, more, prob).cost <= plan(env, base, prob).cost


def test_edge_count_scales_like_n_log_n(model):
    ns = np.array([200, 400, 800, 1600])
    env = generate_narrow_passage(2, 3, 1, 0.03, seed=66)
    counts = [build_critical_local_prm(env, model, CriticalPrmConfig(n=int(n), seed=0)).num_edges for n in ns]
    slope = np.polyfit(np.log(ns * np.log(ns)), np.log(counts), 1)[0]
    assert 0.9 <= slope <= 1.3


def test_deduplicated_scoring_matches_direct(model):
    from critprm.cprm import _unique_predict
    from critprm.env import local_patches
    from critprm.learner import predict_criticality

    env = generate_narrow_passage(2, 3, 1, 0.03, seed=67)
    patches = local_patches(env, sample_free_many(env, np.random.default_rng(0), 3000))
    np.testing.assert_allclose(_unique_predict(model, patches), predict_criticality(model, patches), rtol=1e-12, atol=0)
