"""Differential-drive kinematics and the acceleration-limited velocity window."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

WINDOW_EPS = 1e-9
DEFAULT_ARC_SAMPLES = 10


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(theta, dtype=float), 2.0 * math.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class RobotLimits:
    """Velocity caps, acceleration limits, footprint and control period.

    Defaults follow a Turtlebot2-class base (angular caps and acceleration
    of +-3.14 rad/s and 2 rad/s^2).
    """

    v_min: float = 0.0
    v_max: float = 0.65
    w_min: float = -3.14
    w_max: float = 3.14
    v_acc: float = 0.5
    w_acc: float = 2.0
    radius: float = 0.2
    dt: float = 0.2

    def __post_init__(self):
        if not self.v_min <= self.v_max:
            raise ValueError(f"v_min {self.v_min} exceeds v_max {self.v_max}")
        if not self.w_min < self.w_max:
            raise ValueError(f"w_min {self.w_min} must be below w_max {self.w_max}")
        for name in ("v_acc", "w_acc", "radius", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def v_scale(self) -> float:
        return max(abs(self.v_min), abs(self.v_max)) or 1.0

    @property
    def w_scale(self) -> float:
        return max(abs(self.w_min), abs(self.w_max))


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class VelocityPair:
    v: float
    w: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.w)):
            raise ValueError(f"non-finite velocity command ({self.v}, {self.w})")


@dataclass(frozen=True)
class VelocityWindow:
    """Closed intervals of reachable linear and angular velocities."""

    lin: tuple[float, float]
    ang: tuple[float, float]

    def contains(self, cmd: VelocityPair, eps: float = WINDOW_EPS) -> bool:
        return (self.lin[0] - eps <= cmd.v <= self.lin[1] + eps
                and self.ang[0] - eps <= cmd.w <= self.ang[1] + eps)


def arc_positions(pose: Pose, v, w, times) -> np.ndarray:
    """Positions along constant-(v, w) arcs.

    ``v`` and ``w`` broadcast against each other (shape ``(N,)``), ``times``
    has shape ``(S,)``; the result has shape ``(N, S, 2)``. Uses the
    sinc form of the closed-form arc so that w -> 0 needs no special case.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))[:, None]
    w = np.atleast_1d(np.asarray(w, dtype=float))[:, None]
    t = np.asarray(times, dtype=float)[None, :]
    dtheta = w * t
    # sin(d)/d and (1 - cos d)/d
    s1 = np.sinc(dtheta / math.pi)
    s2 = 0.5 * dtheta * np.sinc(dtheta / (2.0 * math.pi)) ** 2
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dist = v * t
    x = pose.x + dist * (c * s1 - s * s2)
    y = pose.y + dist * (s * s1 + c * s2)
    return np.stack(np.broadcast_arrays(x, y), axis=-1)


def arc_endpoints(pose: Pose, v, w, duration: float) -> np.ndarray:
    """Endpoints ``(N, 3)`` as (x, y, theta) of arcs run for ``duration``."""
    xy = arc_positions(pose, v, w, [duration])[:, 0, :]
    w = np.broadcast_to(np.atleast_1d(np.asarray(w, dtype=float)), (xy.shape[0],))
    theta = wrap_angle(pose.theta + w * duration)
    return np.column_stack([xy, np.atleast_1d(theta)])


def rollout_arc(pose: Pose, cmd: VelocityPair, duration: float, samples: int) -> list[Pose]:
    """Poses at ``samples`` evenly spaced times over ``[0, duration]``."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    if samples < 2:
        raise ValueError("need at least two samples")
    times = np.linspace(0.0, duration, samples)
    xy = arc_positions(pose, cmd.v, cmd.w, times)[0]
    return [Pose(float(px), float(py), pose.theta + cmd.w * t)
            for (px, py), t in zip(xy, times)]


def end_point(pose: Pose, cmd: VelocityPair, duration: float) -> Pose:
    x, y, theta = arc_endpoints(pose, cmd.v, cmd.w, duration)[0]
    return Pose(float(x), float(y), float(theta))


def feasible_window(current: VelocityPair, limits: RobotLimits) -> VelocityWindow:
    """Velocities reachable within one control period, clipped to the caps.

    A current velocity outside the caps is first clamped onto them so the
    window is never empty.
    """
    v_a = min(max(current.v, limits.v_min), limits.v_max)
    w_a = min(max(current.w, limits.w_min), limits.w_max)
    dv = limits.v_acc * limits.dt
    dw = limits.w_acc * limits.dt
    lin = (max(v_a - dv, limits.v_min), min(v_a + dv, limits.v_max))
    ang = (max(w_a - dw, limits.w_min), min(w_a + dw, limits.w_max))
    return VelocityWindow(lin, ang)


def discretize_window(window: VelocityWindow, k: int) -> list[VelocityPair]:
    """k x k grid over the window, linear velocity outer, angular inner."""
    grid = window_grid(window, k)
    return [VelocityPair(float(v), float(w)) for v, w in grid]


def window_grid(window: VelocityWindow, k: int) -> np.ndarray:
    """Array form of :func:`discretize_window`, shape ``(k*k, 2)``."""
    if k < 2:
        raise ValueError("k must be at least 2")
    lin = np.linspace(window.lin[0], window.lin[1], k)
    ang = np.linspace(window.ang[0], window.ang[1], k)
    return np.column_stack([np.repeat(lin, k), np.tile(ang, k)])


def clip_to_window(cmd: VelocityPair, window: VelocityWindow) -> VelocityPair:
    return VelocityPair(min(max(cmd.v, window.lin[0]), window.lin[1]),
                        min(max(cmd.w, window.ang[0]), window.ang[1]))


def _min_point_distance(samples: np.ndarray, points: np.ndarray) -> np.ndarray:
    # samples (N, S, 2), points (M, 2) -> (N,)
    dist, _ = cKDTree(points).query(samples.reshape(-1, 2))
    return dist.reshape(samples.shape[:2]).min(axis=1)


def arc_clearances(pose: Pose, velocities: np.ndarray, points, duration: float,
                   samples: int = DEFAULT_ARC_SAMPLES) -> np.ndarray:
    """Nearest obstacle-point distance along each arc in ``velocities`` (N, 2).

    Returns ``inf`` for every arc when the point set is empty.
    """
    velocities = np.asarray(velocities, dtype=float).reshape(-1, 2)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return np.full(len(velocities), np.inf)
    times = np.linspace(0.0, duration, samples)
    traj = arc_positions(pose, velocities[:, 0], velocities[:, 1], times)
    return _min_point_distance(traj, points)


def dist_to_obstacles(pose: Pose, cmd: VelocityPair, obstacle_points,
                      limits: RobotLimits, samples: int = DEFAULT_ARC_SAMPLES) -> float:
    """Closest approach to any obstacle point while following ``cmd`` for one period."""
    return float(arc_clearances(pose, [[cmd.v, cmd.w]], obstacle_points, limits.dt, samples)[0])


def admissible(cmd: VelocityPair, distance: float, limits: RobotLimits) -> bool:
    """Braking test: the robot can stop within ``distance`` at its deceleration limits.

    The angular bound compares |w| against sqrt(2 * distance * w_acc), mixing
    units exactly as the classic formulation does.
    """
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if math.isinf(distance):
        return True
    return (cmd.v <= math.sqrt(2.0 * distance * limits.v_acc)
            and abs(cmd.w) <= math.sqrt(2.0 * distance * limits.w_acc))


def admissible_mask(velocities: np.ndarray, distances: np.ndarray, limits: RobotLimits) -> np.ndarray:
    velocities = np.asarray(velocities, dtype=float).reshape(-1, 2)
    d = np.asarray(distances, dtype=float)
    with np.errstate(invalid="ignore"):
        v_ok = velocities[:, 0] <= np.sqrt(2.0 * d * limits.v_acc)
        w_ok = np.abs(velocities[:, 1]) <= np.sqrt(2.0 * d * limits.w_acc)
    return np.isinf(d) | (v_ok & w_ok)


def window_violations(commands: Sequence[VelocityPair] | np.ndarray,
                      executed_before: Iterable[VelocityPair] | np.ndarray,
                      limits: RobotLimits, eps: float = WINDOW_EPS) -> np.ndarray:
    """Boolean per step: command outside the window implied by the previous executed velocity."""
    cmds = np.asarray([[c.v, c.w] for c in commands] if not isinstance(commands, np.ndarray) else commands,
                      dtype=float).reshape(-1, 2)
    prev = np.asarray([[c.v, c.w] for c in executed_before]
                      if not isinstance(executed_before, np.ndarray) else executed_before,
                      dtype=float).reshape(-1, 2)
    v_a = np.clip(prev[:, 0], limits.v_min, limits.v_max)
    w_a = np.clip(prev[:, 1], limits.w_min, limits.w_max)
    dv, dw = limits.v_acc * limits.dt, limits.w_acc * limits.dt
    lin_lo = np.maximum(v_a - dv, limits.v_min)
    lin_hi = np.minimum(v_a + dv, limits.v_max)
    ang_lo = np.maximum(w_a - dw, limits.w_min)
    ang_hi = np.minimum(w_a + dw, limits.w_max)
    inside = ((cmds[:, 0] >= lin_lo - eps) & (cmds[:, 0] <= lin_hi + eps)
              & (cmds[:, 1] >= ang_lo - eps) & (cmds[:, 1] <= ang_hi + eps))
    return ~inside
