"""Classic dynamic-window planner, used as the comparison baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import (DEFAULT_ARC_SAMPLES, Pose, RobotLimits, VelocityPair, admissible_mask,
                       arc_clearances, arc_endpoints, feasible_window, window_grid, wrap_angle)

SCORE_TIE = 1e-12


@dataclass(frozen=True)
class DWAConfig:
    alpha: float = 0.8
    beta: float = 0.1
    gamma: float = 0.1
    k: int = 10
    dist_cap: float = 2.0
    horizon: float = 1.0  # lookahead (s) for heading and clearance arcs
    arc_samples: int = DEFAULT_ARC_SAMPLES
    sigma: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        weights = (self.alpha, self.beta, self.gamma)
        if min(weights) < 0 or max(weights) == 0:
            raise ValueError("weights must be non-negative and not all zero")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


def heading_scores(pose: Pose, velocities: np.ndarray, goal, dt: float) -> np.ndarray:
    """1 - |bearing error at the arc endpoint| / pi, per velocity pair."""
    ends = arc_endpoints(pose, velocities[:, 0], velocities[:, 1], dt)
    goal = np.asarray(goal, dtype=float)
    bearing = np.arctan2(goal[1] - ends[:, 1], goal[0] - ends[:, 0])
    err = np.abs(wrap_angle(bearing - ends[:, 2]))
    return 1.0 - err / math.pi


def heading_score(pose: Pose, cmd: VelocityPair, goal, dt: float) -> float:
    return float(heading_scores(pose, np.array([[cmd.v, cmd.w]]), goal, dt)[0])


def clearance(distances: np.ndarray, limits: RobotLimits) -> np.ndarray:
    """Free distance left between the footprint and the nearest obstacle point."""
    return np.maximum(np.asarray(distances, dtype=float) - limits.radius, 0.0)


def objective(pose: Pose, velocities: np.ndarray, points, goal, limits: RobotLimits,
              cfg: DWAConfig = DWAConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Scores and admissibility for each candidate pair."""
    dist = arc_clearances(pose, velocities, points, cfg.horizon, cfg.arc_samples)
    free = clearance(dist, limits)
    ok = admissible_mask(velocities, free, limits)
    score = (cfg.alpha * heading_scores(pose, velocities, goal, cfg.horizon)
             + cfg.beta * np.minimum(free, cfg.dist_cap) / cfg.dist_cap
             + cfg.gamma * velocities[:, 0] / limits.v_scale)
    if cfg.sigma is not None:
        score = cfg.sigma(score)
    return score, ok


def select(scores: np.ndarray, ok: np.ndarray, velocities: np.ndarray) -> int | None:
    """Index of the best admissible pair; ties go to lower |w| then lower index."""
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return None
    best = scores[idx].max()
    tied = idx[scores[idx] >= best - SCORE_TIE]
    absw = np.abs(velocities[tied, 1])
    return int(tied[np.flatnonzero(absw == absw.min())[0]])


def emergency_stop(current: VelocityPair, limits: RobotLimits) -> VelocityPair:
    """Reachable command closest to standstill (exactly (0, 0) when reachable)."""
    win = feasible_window(current, limits)
    return VelocityPair(min(max(0.0, win.lin[0]), win.lin[1]), min(max(0.0, win.ang[0]), win.ang[1]))


def plan(pose: Pose, current: VelocityPair, scan_points, goal, limits: RobotLimits,
         cfg: DWAConfig = DWAConfig()) -> VelocityPair:
    velocities = window_grid(feasible_window(current, limits), cfg.k)
    scores, ok = objective(pose, velocities, scan_points, goal, limits, cfg)
    i = select(scores, ok, velocities)
    if i is None:
        return emergency_stop(current, limits)
    return VelocityPair(float(velocities[i, 0]), float(velocities[i, 1]))
