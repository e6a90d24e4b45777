import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwarl.dynamics import Pose, RobotLimits, VelocityPair, feasible_window, rollout_arc, window_grid
from dwarl.observation import (C_COL, C_GA, CostMatrices, ObservationConfig, build_matrices, dump_block,
                               goal_cost, load_block, normalize, observe, obstacle_cost, sort_block)
from dwarl.world import ObstacleHistory, ScanResult

L = RobotLimits()
GOLDEN = Path(__file__).parent / "data" / "golden_block.json"


def _history(point_sets, n=None, poses=None):
    h = ObstacleHistory(n or len(point_sets))
    for t, pts in enumerate(point_sets):
        pose = poses[t] if poses else Pose(0, 0)
        h = h.push(ScanResult(t, np.asarray(pts, dtype=float).reshape(-1, 2), pose))
    return h


def _oracle_distance(pose, v, w, points, samples=10):
    if len(points) == 0:
        return math.inf
    best = math.inf
    for p in rollout_arc(pose, VelocityPair(v, w), L.dt, samples):
        for q in points:
            best = min(best, math.hypot(p.x - q[0], p.y - q[1]))
    return best


def test_constants():
    assert C_COL == 40 and C_GA == 2.5


@pytest.mark.parametrize("d, expected", [(0.1, 40.0), (0.5, 2.0), (math.inf, 0.0), (0.2, 5.0)])
def test_obstacle_cost(d, expected):
    assert obstacle_cost(d, 0.2) == pytest.approx(expected)


def test_goal_cost():
    assert goal_cost((1.0, 0.0), (4.0, 4.0)) == pytest.approx(12.5)
    assert goal_cost((4.0, 4.0), (4.0, 4.0)) == 0.0
    assert goal_cost((0.0, 0.0), (2.0, 0.0), c_ga=1.0) == pytest.approx(2.0)


def test_build_matrices_shapes_and_single_scan():
    cfg = ObservationConfig(k=3, n=4)
    vf = window_grid(feasible_window(VelocityPair(0.3, 0.0), L), 3)
    pts = [[0.5, 0.1], [1.0, -0.3]]
    m = build_matrices(vf, _history([pts] * 4), Pose(0, 0, 0), (3.0, 0.0), L, cfg)
    for mat in (m.lin_mat, m.ang_mat, m.oc_mat, m.gc_mat):
        assert mat.shape == (9, 4)
    # static world: all columns equal
    assert np.all(m.oc_mat == m.oc_mat[:, :1])
    single = build_matrices(vf, _history([pts]), Pose(0, 0, 0), (3.0, 0.0), L, ObservationConfig(k=3, n=1))
    expect = [obstacle_cost(_oracle_distance(Pose(0, 0, 0), v, w, pts), L.radius) for v, w in vf]
    assert single.oc_mat[:, 0] == pytest.approx(expect, rel=1e-12)


def test_build_matrices_rejects_mismatch():
    cfg = ObservationConfig(k=3, n=2)
    with pytest.raises(ValueError):
        build_matrices(np.zeros((4, 2)), _history([[]] * 2), Pose(0, 0), (1, 0), L, cfg)
    with pytest.raises(ValueError):
        build_matrices(np.zeros((9, 2)), _history([[]] * 3), Pose(0, 0), (1, 0), L, cfg)


def _matrices(tc):
    tc = np.asarray(tc, dtype=float)
    k2 = len(tc)
    vel = np.column_stack([np.arange(k2) * 0.1, -np.arange(k2) * 0.2])
    z = np.zeros((k2, 2))
    return CostMatrices(vel, np.repeat(vel[:, :1], 2, 1), np.repeat(vel[:, 1:], 2, 1), z, z + tc[:, None], tc)


def test_sort_block_examples():
    b = sort_block(_matrices([5.0, 2.0, 9.0]))
    assert b.sort_perm.tolist() == [1, 0, 2]
    assert b.data[:, 0, 3].tolist() == [2.0, 5.0, 9.0]
    assert b.data[:, 0, 0] == pytest.approx([0.1, 0.0, 0.2])
    assert sort_block(_matrices([1.0] * 4)).sort_perm.tolist() == [0, 1, 2, 3]
    three = sort_block(_matrices([5.0, 2.0, 9.0]), channels=3)
    assert three.data.shape == (3, 2, 3)


def test_full_size_block_best_first():
    cfg = ObservationConfig()
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, (40, 2))
    pose, goal, cur = Pose(0.1, -0.2, 0.4), (3.0, 2.0), VelocityPair(0.3, 0.5)
    block = observe(pose, cur, _history([pts] * 10), goal, L, cfg)
    assert block.data.shape == (100, 10, 4)
    vf = window_grid(feasible_window(cur, L), 10)
    tc = [obstacle_cost(_oracle_distance(pose, v, w, pts), L.radius)
          + goal_cost(rollout_arc(pose, VelocityPair(v, w), L.dt, 2)[-1].xy, goal) for v, w in vf]
    best = int(np.argmin(tc))
    assert (block.action_map[0].v, block.action_map[0].w) == pytest.approx(tuple(vf[best]))


def _random_state(rng, k=None, n=None):
    k = k or int(rng.integers(2, 8))
    n = n or int(rng.integers(1, 6))
    cur = VelocityPair(rng.uniform(0, 0.65), rng.uniform(-3.14, 3.14))
    pose = Pose(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
    sets = [rng.uniform(-4, 4, (int(rng.integers(0, 30)), 2)) for _ in range(n)]
    return cur, pose, _history(sets), tuple(rng.uniform(-6, 6, 2)), ObservationConfig(k=k, n=n)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_block_properties(seed):
    rng = np.random.default_rng(seed)
    cur, pose, hist, goal, cfg = _random_state(rng)
    block = observe(pose, cur, hist, goal, L, cfg)
    acts = block.actions
    # channel alignment
    assert np.array_equal(block.data[:, 0, 0], acts[:, 0])
    assert np.array_equal(block.data[:, 0, 1], acts[:, 1])
    # sortedness against an independent recompute
    newest = hist.newest.points
    tc = np.array([obstacle_cost(_oracle_distance(pose, v, w, newest), L.radius)
                   + goal_cost(rollout_arc(pose, VelocityPair(v, w), L.dt, 2)[-1].xy, goal) for v, w in acts])
    assert np.all(np.diff(tc) >= -1e-9)
    # goal cost constant over time
    assert np.all(block.data[:, :, 3] == block.data[:, :1, 3])
    # window membership
    assert np.all(np.abs(acts[:, 0] - cur.v) <= L.v_acc * L.dt + 1e-9)
    assert np.all(np.abs(acts[:, 1] - cur.w) <= L.w_acc * L.dt + 1e-9)
    # collision rows
    for i, (v, w) in enumerate(acts):
        if _oracle_distance(pose, v, w, newest) < L.radius:
            assert block.data[i, -1, 2] >= C_COL


def test_normalize_range_and_layout():
    rng = np.random.default_rng(5)
    cur, pose, hist, goal, cfg = _random_state(rng, k=4, n=3)
    block = observe(pose, cur, hist, goal, L, cfg)
    x = normalize(block, L)
    assert x.shape == (4, 16, 3) and x.dtype == np.float32
    assert np.all(np.abs(x) <= 1.0)
    assert x[0] == pytest.approx(block.data[..., 0] / 0.65)


def test_historical_pose_switch():
    pts = [[1.0, 0.0]]
    poses = [Pose(-1.0, 0.0), Pose(0.0, 0.0)]
    hist = _history([pts, pts], poses=poses)
    vf = np.array([[0.0, 0.0]] * 4)
    cur = build_matrices(vf, hist, Pose(0, 0), (2, 0), L, ObservationConfig(k=2, n=2))
    old = build_matrices(vf, hist, Pose(0, 0), (2, 0), L, ObservationConfig(k=2, n=2, history_pose="historical"))
    assert cur.oc_mat[0].tolist() == [1.0, 1.0]
    assert old.oc_mat[0].tolist() == [0.5, 1.0]


def _golden_block():
    pts_a = [[1.2, 0.3], [1.0, -0.5], [2.5, 1.0], [0.3, 0.25]]
    pts_b = [[1.1, 0.3], [0.9, -0.5], [2.4, 1.0]]
    hist = _history([pts_a, pts_b, pts_b])
    return observe(Pose(0.0, 0.0, 0.3), VelocityPair(0.25, -0.4), hist, (4.0, 1.0), L,
                   ObservationConfig(k=3, n=3))


def test_golden_dump(tmp_path):
    block = _golden_block()
    out = tmp_path / "block.json"
    dump_block(block, out)
    assert out.read_text() == GOLDEN.read_text()
    back = load_block(GOLDEN)
    assert np.array_equal(back.data, block.data)
    assert back.action_map == block.action_map
