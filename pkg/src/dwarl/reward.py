"""Shaped navigation reward with red/green steering zones around moving obstacles."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .dynamics import Pose
from .world import Segment

ZONE_RED = "R"
ZONE_GREEN = "G"
STATIC_SPEED = 1e-6


@dataclass(frozen=True)
class RewardConfig:
    r_goal: float = 2000.0
    r_collision: float = -2000.0
    r_proximity: float = 10.0
    r_spatial: float = 25.0
    r_dcollision: float = 30.0
    progress_gain: float = 2.5
    goal_radius: float = 0.3
    collision_radius: float = 0.5
    steer_radius: float = 2.0
    sensor_range: float = 4.0
    # Disabling this drops the +|b_t| r_spatial term for green-zone obstacles.
    positive_reinforcement: bool = True
    # Wall segments are scenery, not obstacles, for the danger term unless enabled.
    danger_walls: bool = False

    def __post_init__(self):
        for name in ("r_goal", "r_proximity", "r_spatial", "r_dcollision", "goal_radius",
                     "collision_radius", "steer_radius", "sensor_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.r_collision < 0:
            raise ValueError("r_collision must be negative")


@dataclass(frozen=True)
class ZoneAssessment:
    d_t: float
    b_t: float
    zone: str | None


@dataclass(frozen=True)
class RewardBreakdown:
    goal: float = 0.0
    collision: float = 0.0
    steering: float = 0.0
    danger: float = 0.0
    total: float = 0.0

    @classmethod
    def term_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls) if f.name != "total")


def classify_zone(p_rob, p_obs, v_obs, cfg: RewardConfig = RewardConfig()) -> ZoneAssessment:
    """Signed offset of the robot along the obstacle's heading, and the zone it implies.

    Ahead of a moving obstacle (b_t > 0) is the red zone, behind it the green
    zone; static or distant obstacles get no zone.
    """
    p_rob = np.asarray(p_rob, dtype=float)
    p_obs = np.asarray(p_obs, dtype=float)
    v_obs = np.asarray(v_obs, dtype=float)
    rel = p_rob - p_obs
    d_t = float(math.hypot(rel[0], rel[1]))
    speed = float(math.hypot(v_obs[0], v_obs[1]))
    if speed < STATIC_SPEED:
        return ZoneAssessment(d_t, 0.0, None)
    b_t = float(rel @ (v_obs / speed))
    zone = None
    if d_t < cfg.steer_radius:
        if b_t > 0:
            zone = ZONE_RED
        elif b_t < 0:
            zone = ZONE_GREEN
    return ZoneAssessment(d_t, b_t, zone)


def steering_reward(assessments: Iterable[ZoneAssessment], cfg: RewardConfig = RewardConfig()) -> float:
    total = 0.0
    for a in assessments:
        if a.zone == ZONE_RED:
            total += -abs(a.b_t) * cfg.r_spatial - cfg.r_proximity / a.d_t
        elif a.zone == ZONE_GREEN and cfg.positive_reinforcement:
            total += abs(a.b_t) * cfg.r_spatial
    return total


def danger_reward(assessments: Iterable[ZoneAssessment], cfg: RewardConfig = RewardConfig()) -> float:
    return -sum(cfg.r_dcollision / a.d_t for a in assessments
                if a.d_t <= cfg.sensor_range and a.d_t > 0)


def step_reward(prev_pose: Pose, new_pose: Pose, goal, assessments: Sequence[ZoneAssessment],
                collision: bool, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    goal = np.asarray(goal, dtype=float)
    d_new = float(np.linalg.norm(new_pose.xy - goal))
    d_prev = float(np.linalg.norm(prev_pose.xy - goal))
    r_g = cfg.r_goal if d_new < cfg.goal_radius else -cfg.progress_gain * (d_new - d_prev)
    r_c = cfg.r_collision if collision else 0.0
    r_s = steering_reward(assessments, cfg)
    r_d = danger_reward(assessments, cfg)
    return RewardBreakdown(goal=r_g, collision=r_c, steering=r_s, danger=r_d,
                           total=r_g + r_c + r_s + r_d)


def check_prop1(p_rob, v_rob, p_obs, v_obs) -> float:
    """Rate of change of the robot-obstacle distance under constant velocities."""
    dp = np.asarray(p_rob, dtype=float) - np.asarray(p_obs, dtype=float)
    dv = np.asarray(v_rob, dtype=float) - np.asarray(v_obs, dtype=float)
    d = math.hypot(dp[0], dp[1])
    if d == 0.0:
        raise ValueError("robot and obstacle coincide; distance derivative undefined")
    return float(dp[0] * dv[0] + dp[1] * dv[1]) / d


def assess_obstacles(p_rob, obstacles, cfg: RewardConfig = RewardConfig()) -> list[ZoneAssessment]:
    """Zone assessments for every world obstacle within sensor range, using true velocities."""
    p_rob = np.asarray(p_rob, dtype=float)
    out = []
    for obs in obstacles:
        if not cfg.danger_walls and isinstance(obs.shape, Segment):
            continue
        ref = obs.reference_point(p_rob)
        a = classify_zone(p_rob, ref, obs.velocity, cfg)
        if 0 < a.d_t <= cfg.sensor_range:
            out.append(a)
    return out


def estimate_velocities(prev_points: np.ndarray, curr_points: np.ndarray, dt: float,
                        gate: float = 0.5, cluster_gap: float = 0.3) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cluster the newest scan and difference cluster centroids against the previous scan.

    Returns ``(centroid, velocity)`` per current cluster; clusters without a
    previous centroid inside ``gate`` get zero velocity.
    """
    now = _clusters(curr_points, cluster_gap)
    before = _clusters(prev_points, cluster_gap)
    out = []
    for c in now:
        if before:
            dists = [np.linalg.norm(c - b) for b in before]
            j = int(np.argmin(dists))
            v = (c - before[j]) / dt if dists[j] < gate else np.zeros(2)
        else:
            v = np.zeros(2)
        out.append((c, v))
    return out


def _clusters(points: np.ndarray, gap: float) -> list[np.ndarray]:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return []
    groups = [[points[0]]]
    for p in points[1:]:
        if np.linalg.norm(p - groups[-1][-1]) <= gap:
            groups[-1].append(p)
        else:
            groups.append([p])
    if len(groups) > 1 and np.linalg.norm(groups[0][0] - groups[-1][-1]) <= gap:
        groups[0] = groups.pop() + groups[0]
    return [np.mean(g, axis=0) for g in groups]


def assess_estimated(p_rob, history_scans, dt: float, cfg: RewardConfig = RewardConfig()) -> list[ZoneAssessment]:
    """Assessments from scan clusters with finite-difference velocities (no ground truth)."""
    if len(history_scans) < 2:
        return []
    prev, curr = history_scans[-2], history_scans[-1]
    if curr is prev:
        return []
    out = []
    for centroid, vel in estimate_velocities(prev.points, curr.points, dt):
        a = classify_zone(p_rob, centroid, vel, cfg)
        if 0 < a.d_t <= cfg.sensor_range:
            out.append(a)
    return out
