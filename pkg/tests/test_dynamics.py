import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwarl.dynamics import (Pose, RobotLimits, VelocityPair, VelocityWindow, admissible, admissible_mask,
                            arc_clearances, arc_endpoints, clip_to_window, discretize_window,
                            dist_to_obstacles, end_point, feasible_window, rollout_arc, window_grid,
                            window_violations, wrap_angle)

L = RobotLimits()


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert Pose(0, 0, 7.0).theta == pytest.approx(7.0 - 2 * math.pi)


def test_limits_validation():
    with pytest.raises(ValueError):
        RobotLimits(v_min=1.0, v_max=0.5)
    with pytest.raises(ValueError):
        RobotLimits(dt=0.0)
    with pytest.raises(ValueError):
        VelocityPair(float("nan"), 0.0)


@pytest.mark.parametrize("cmd, expected", [
    ((1.0, 0.0), (1.0, 0.0, 0.0)),
    ((0.0, 1.0), (0.0, 0.0, 1.0)),
    ((1.0, math.pi / 2), (2 / math.pi, 2 / math.pi, math.pi / 2)),
])
def test_rollout_endpoints(cmd, expected):
    poses = rollout_arc(Pose(0, 0, 0), VelocityPair(*cmd), 1.0, 5)
    assert len(poses) == 5
    last = poses[-1]
    assert (last.x, last.y, last.theta) == pytest.approx(expected, abs=1e-12)
    assert poses[0] == Pose(0, 0, 0)
    e = end_point(Pose(0, 0, 0), VelocityPair(*cmd), 1.0)
    assert (e.x, e.y, e.theta) == pytest.approx(expected, abs=1e-12)


def test_rollout_rejects_bad_args():
    with pytest.raises(ValueError):
        rollout_arc(Pose(0, 0), VelocityPair(1, 0), 0.0, 5)
    with pytest.raises(ValueError):
        rollout_arc(Pose(0, 0), VelocityPair(1, 0), 1.0, 1)


def test_arc_continuity_near_zero_w():
    pose = Pose(0.3, -1.2, 0.7)
    a = arc_endpoints(pose, 0.6, 1e-8, 0.9)[0]
    b = arc_endpoints(pose, 0.6, 0.0, 0.9)[0]
    assert np.linalg.norm(a[:2] - b[:2]) < 1e-6


def test_arc_matches_numerical_integration():
    pose = Pose(1.0, 2.0, -0.4)
    v, w, T = 0.55, -1.7, 0.8
    x, y, th = pose.x, pose.y, pose.theta
    h = T / 20000
    for _ in range(20000):
        # midpoint rule
        thm = th + 0.5 * w * h
        x += v * math.cos(thm) * h
        y += v * math.sin(thm) * h
        th += w * h
    end = arc_endpoints(pose, v, w, T)[0]
    assert end[:2] == pytest.approx([x, y], abs=1e-9)
    assert end[2] == pytest.approx(wrap_angle(th))


@pytest.mark.parametrize("v_a, lin", [(0.3, (0.2, 0.4)), (0.05, (0.0, 0.15))])
def test_feasible_window_linear(v_a, lin):
    win = feasible_window(VelocityPair(v_a, 0.0), L)
    assert win.lin == pytest.approx(lin)


def test_feasible_window_angular_clip():
    win = feasible_window(VelocityPair(0.0, 3.0), L)
    assert win.ang == pytest.approx((2.6, 3.14))


def test_discretize_window_examples():
    win = VelocityWindow((0.2, 0.4), (-0.4, 0.4))
    pairs = discretize_window(win, 3)
    assert len(pairs) == 9
    assert sorted({round(p.v, 12) for p in pairs}) == pytest.approx([0.2, 0.3, 0.4])
    # linear outer, angular inner
    assert [(p.v, p.w) for p in pairs[:3]] == pytest.approx([(0.2, -0.4), (0.2, 0.0), (0.2, 0.4)])
    flat = discretize_window(VelocityWindow((0.3, 0.3), (-0.1, 0.1)), 3)
    assert all(p.v == 0.3 for p in flat)
    assert len(discretize_window(win, 10)) == 100
    with pytest.raises(ValueError):
        window_grid(win, 1)


def test_clip_to_window():
    win = VelocityWindow((0.1, 0.2), (-0.5, 0.5))
    assert clip_to_window(VelocityPair(0.5, -2.0), win) == VelocityPair(0.2, -0.5)


def test_dist_to_obstacles_examples():
    assert dist_to_obstacles(Pose(0, 0, 0), VelocityPair(1, 0), [[1.0, 0.0]], L) == pytest.approx(0.8)
    assert math.isinf(dist_to_obstacles(Pose(0, 0, 0), VelocityPair(1, 0), np.zeros((0, 2)), L))
    lim = RobotLimits(dt=1.0, w_max=3.14)
    d = dist_to_obstacles(Pose(0, 0, 0), VelocityPair(1, math.pi / 2), [[2 / math.pi, 2 / math.pi]], lim)
    assert d == pytest.approx(0.0, abs=1e-12)


def test_admissible_examples():
    assert admissible(VelocityPair(0.5, 0.0), 0.5, L)
    assert not admissible(VelocityPair(0.8, 0.0), 0.5, L)
    assert admissible(VelocityPair(0.0, 0.0), 0.0, L)
    assert not admissible(VelocityPair(0.01, 0.0), 0.0, L)
    assert not admissible(VelocityPair(0.0, -0.01), 0.0, L)
    assert admissible(VelocityPair(0.65, 3.0), math.inf, L)
    with pytest.raises(ValueError):
        admissible(VelocityPair(0, 0), -1.0, L)


def test_admissible_mask_agrees_with_scalar():
    rng = np.random.default_rng(3)
    vel = np.column_stack([rng.uniform(0, 0.65, 200), rng.uniform(-3.14, 3.14, 200)])
    d = rng.uniform(0, 1.5, 200)
    d[::17] = np.inf
    mask = admissible_mask(vel, d, L)
    expect = [admissible(VelocityPair(*p), x, L) for p, x in zip(vel, d)]
    assert mask.tolist() == expect


def test_window_violations():
    # w jumps of 2 rad/s against a 0.4 rad/s step budget
    cmds = np.array([[0.0, 2.0], [0.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    prev = np.array([[0.0, 0.0], [0.0, 2.0], [0.0, 0.0], [0.0, 2.0]])
    assert window_violations(cmds, prev, L).all()
    ok = np.array([[0.1, 0.4], [0.2, 0.8]])
    assert not window_violations(ok, np.array([[0.0, 0.0], [0.1, 0.4]]), L).any()


states = st.tuples(st.floats(0.0, 0.65), st.floats(-3.14, 3.14), st.integers(2, 12))


@settings(max_examples=200, deadline=None)
@given(states)
def test_grid_membership(state):
    v, w, k = state
    win = feasible_window(VelocityPair(v, w), L)
    grid = window_grid(win, k)
    assert np.all(np.abs(grid[:, 0] - v) <= L.v_acc * L.dt + 1e-9)
    assert np.all(np.abs(grid[:, 1] - w) <= L.w_acc * L.dt + 1e-9)
    assert np.all((grid[:, 0] >= L.v_min) & (grid[:, 0] <= L.v_max))
    assert np.all((grid[:, 1] >= L.w_min) & (grid[:, 1] <= L.w_max))
    assert not window_violations(grid, np.tile([v, w], (len(grid), 1)), L).any()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_distance_monotone_in_point_set(seed):
    rng = np.random.default_rng(seed)
    pose = Pose(*rng.uniform(-1, 1, 2), rng.uniform(-3, 3))
    vel = np.column_stack([rng.uniform(0, 0.65, 8), rng.uniform(-3, 3, 8)])
    pts = rng.uniform(-3, 3, (20, 2))
    more = np.vstack([pts, rng.uniform(-3, 3, (5, 2))])
    a = arc_clearances(pose, vel, pts, 0.2)
    b = arc_clearances(pose, vel, more, 0.2)
    assert np.all(b <= a)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_sampling_refinement_bound(seed):
    rng = np.random.default_rng(seed)
    pose = Pose(0, 0, rng.uniform(-3, 3))
    v, w = rng.uniform(0, 0.65), rng.uniform(-3.14, 3.14)
    pts = rng.uniform(-1, 1, (30, 2))
    d10 = arc_clearances(pose, [[v, w]], pts, L.dt, 10)[0]
    d20 = arc_clearances(pose, [[v, w]], pts, L.dt, 20)[0]
    assert abs(d10 - d20) <= v * L.dt / 10 + 1e-12
