import math

import numpy as np
import pytest

from dwarl.dwa import DWAConfig, emergency_stop, heading_score, objective, plan, select
from dwarl.dynamics import Pose, RobotLimits, VelocityPair, feasible_window, window_grid
from oracles import brute_force_dwa

L = RobotLimits()


def _state(rng):
    pose = Pose(*rng.uniform(-1, 1, 2), rng.uniform(-math.pi, math.pi))
    current = VelocityPair(rng.uniform(0, 0.65), rng.uniform(-3.14, 3.14))
    points = pose.xy + rng.uniform(-2.5, 2.5, (int(rng.integers(0, 25)), 2))
    goal = rng.uniform(-6, 6, 2)
    return pose, current, points, goal


def test_plan_matches_brute_force():
    cfg = DWAConfig(k=6)
    rng = np.random.default_rng(42)
    for _ in range(60):
        pose, current, points, goal = _state(rng)
        got = plan(pose, current, points, goal, L, cfg)
        want = brute_force_dwa(pose, current, points, goal, L, cfg)
        if want is None:
            assert got == emergency_stop(current, L)
        else:
            assert (got.v, got.w) == pytest.approx(want, abs=1e-12)


def test_heading_score():
    assert heading_score(Pose(0, 0, 0), VelocityPair(0, 0), (5, 0), 1.0) == pytest.approx(1.0)
    assert heading_score(Pose(0, 0, 0), VelocityPair(0, 0), (-5, 0), 1.0) == pytest.approx(0.0)


def test_select_ties_prefer_small_turn():
    vel = np.array([[0.1, 0.5], [0.1, -0.2], [0.1, 0.2]])
    scores = np.array([1.0, 1.0, 1.0])
    assert select(scores, np.ones(3, bool), vel) == 1
    assert select(scores, np.zeros(3, bool), vel) is None


def test_emergency_stop():
    assert emergency_stop(VelocityPair(0.05, 0.1), L) == VelocityPair(0.0, 0.0)
    stop = emergency_stop(VelocityPair(0.6, 3.0), L)
    assert (stop.v, stop.w) == pytest.approx((0.5, 2.6))


def test_plan_stays_in_window_and_drives_to_goal():
    cur = VelocityPair(0.0, 0.0)
    cmd = plan(Pose(0, 0, 0), cur, np.zeros((0, 2)), (5.0, 0.0), L)
    assert feasible_window(cur, L).contains(cmd)
    # even k: the grid has no w = 0, so the straightest pair is +-0.4/9
    assert cmd.v == pytest.approx(0.1) and abs(cmd.w) == pytest.approx(0.4 / 9)


def test_objective_blocks_inadmissible():
    pose = Pose(0, 0, 0)
    vel = window_grid(feasible_window(VelocityPair(0.6, 0.0), L), 5)
    _, ok = objective(pose, vel, np.array([[0.45, 0.0]]), (5, 0), L, DWAConfig(k=5))
    fast_straight = (vel[:, 0] > 0.5) & (np.abs(vel[:, 1]) < 1e-9)
    assert not ok[fast_straight].any()


def test_config_validation():
    with pytest.raises(ValueError):
        DWAConfig(alpha=-1)
    with pytest.raises(ValueError):
        DWAConfig(alpha=0, beta=0, gamma=0)
