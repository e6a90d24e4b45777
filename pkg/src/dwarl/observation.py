"""Sorted (k^2 x n x channels) observation block and the matching action map."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (DEFAULT_ARC_SAMPLES, Pose, RobotLimits, VelocityPair, arc_clearances,
                       arc_endpoints, feasible_window, window_grid)
from .world import ObstacleHistory

C_COL = 40.0
C_GA = 2.5


@dataclass(frozen=True)
class ObservationConfig:
    k: int = 10
    n: int = 10
    c_col: float = C_COL
    c_ga: float = C_GA
    arc_samples: int = DEFAULT_ARC_SAMPLES
    channels: int = 4
    # "current": past obstacle sets are evaluated from the robot's current pose;
    # "historical": from the pose the robot had when each scan was taken.
    history_pose: str = "current"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.channels not in (3, 4):
            raise ValueError("channels must be 3 or 4")
        if self.history_pose not in ("current", "historical"):
            raise ValueError("history_pose must be 'current' or 'historical'")

    @property
    def actions(self) -> int:
        return self.k * self.k


def obstacle_cost(distance, robot_radius: float, c_col: float = C_COL):
    """c_col inside the footprint, 1/distance outside, 0 when nothing was seen."""
    d = np.asarray(distance, dtype=float)
    with np.errstate(divide="ignore"):
        cost = np.where(d < robot_radius, c_col, 1.0 / d)
    cost = np.where(np.isinf(d), 0.0, cost)
    return float(cost) if cost.ndim == 0 else cost


def goal_cost(endpoint, goal, c_ga: float = C_GA):
    diff = np.asarray(endpoint, dtype=float)[..., :2] - np.asarray(goal, dtype=float)
    cost = np.linalg.norm(diff, axis=-1) * c_ga
    return float(cost) if np.ndim(cost) == 0 else cost


@dataclass(frozen=True)
class CostMatrices:
    velocities: np.ndarray  # (k^2, 2), pre-sort order
    lin_mat: np.ndarray
    ang_mat: np.ndarray
    oc_mat: np.ndarray
    gc_mat: np.ndarray
    tc_vec: np.ndarray


@dataclass(frozen=True)
class ObservationBlock:
    data: np.ndarray  # (k^2, n, channels)
    action_map: tuple[VelocityPair, ...]
    sort_perm: np.ndarray
    tc: np.ndarray  # sorted total costs

    @property
    def actions(self) -> np.ndarray:
        return np.array([[a.v, a.w] for a in self.action_map])


def build_matrices(vf, history: ObstacleHistory, pose: Pose, goal, limits: RobotLimits,
                   cfg: ObservationConfig = ObservationConfig()) -> CostMatrices:
    velocities = np.asarray([[p.v, p.w] for p in vf] if not isinstance(vf, np.ndarray) else vf,
                            dtype=float).reshape(-1, 2)
    if len(velocities) != cfg.actions:
        raise ValueError(f"expected {cfg.actions} velocity pairs, got {len(velocities)}")
    if len(history) != cfg.n:
        raise ValueError(f"expected history of length {cfg.n}, got {len(history)}")
    n = cfg.n
    oc = np.empty((len(velocities), n))
    cache: dict[int, np.ndarray] = {}
    for j, scan in enumerate(history.scans):
        origin = pose if cfg.history_pose == "current" else scan.pose
        key = id(scan)
        if key not in cache or cfg.history_pose == "historical":
            dist = arc_clearances(origin, velocities, scan.points, limits.dt, cfg.arc_samples)
            cache[key] = obstacle_cost(dist, limits.radius, cfg.c_col)
        oc[:, j] = cache[key]
    ends = arc_endpoints(pose, velocities[:, 0], velocities[:, 1], limits.dt)
    gc = goal_cost(ends, goal, cfg.c_ga)
    return CostMatrices(
        velocities=velocities,
        lin_mat=np.repeat(velocities[:, :1], n, axis=1),
        ang_mat=np.repeat(velocities[:, 1:], n, axis=1),
        oc_mat=oc,
        gc_mat=np.repeat(np.asarray(gc)[:, None], n, axis=1),
        tc_vec=oc[:, -1] + gc,
    )


def sort_block(m: CostMatrices, channels: int = 4) -> ObservationBlock:
    """Reorder every channel by ascending current total cost (best action first)."""
    perm = np.argsort(m.tc_vec, kind="stable")
    if channels == 4:
        stack = [m.lin_mat, m.ang_mat, m.oc_mat, m.gc_mat]
    else:
        stack = [m.lin_mat, m.ang_mat, m.oc_mat + m.gc_mat]
    data = np.stack([c[perm] for c in stack], axis=-1)
    vel = m.velocities[perm]
    return ObservationBlock(data=data,
                            action_map=tuple(VelocityPair(float(v), float(w)) for v, w in vel),
                            sort_perm=perm, tc=m.tc_vec[perm])


def observe(pose: Pose, current: VelocityPair, history: ObstacleHistory, goal, limits: RobotLimits,
            cfg: ObservationConfig = ObservationConfig()) -> ObservationBlock:
    """Feasible set from the current velocity, cost matrices, then sort."""
    vf = window_grid(feasible_window(current, limits), cfg.k)
    return sort_block(build_matrices(vf, history, pose, goal, limits, cfg), cfg.channels)


def normalize(block: ObservationBlock, limits: RobotLimits, c_col: float = C_COL) -> np.ndarray:
    """Channels-first float32 copy scaled into [-1, 1] for the network."""
    data = block.data
    out = np.empty((data.shape[2], data.shape[0], data.shape[1]), dtype=np.float32)
    out[0] = data[..., 0] / limits.v_scale
    out[1] = data[..., 1] / limits.w_scale
    for c in range(2, data.shape[2]):
        out[c] = np.clip(data[..., c] / c_col, 0.0, 1.0)
    return out


def _encode(x: float):
    return x if math.isfinite(x) else repr(x)


def dump_block(block: ObservationBlock, path: str | Path) -> None:
    """Write a block as indented JSON (floats in repr form) for golden comparisons."""
    payload = {
        "shape": list(block.data.shape),
        "sort_perm": [int(i) for i in block.sort_perm],
        "action_map": [[a.v, a.w] for a in block.action_map],
        "tc": [_encode(float(x)) for x in block.tc],
        "data": [[[_encode(float(x)) for x in col] for col in row] for row in block.data],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_block(path: str | Path) -> ObservationBlock:
    raw = json.loads(Path(path).read_text())
    data = np.array(raw["data"], dtype=float).reshape(raw["shape"])
    return ObservationBlock(data=data,
                            action_map=tuple(VelocityPair(v, w) for v, w in raw["action_map"]),
                            sort_perm=np.array(raw["sort_perm"], dtype=int),
                            tc=np.array(raw["tc"], dtype=float))


def stack_blocks(blocks: Sequence[ObservationBlock], limits: RobotLimits, c_col: float = C_COL) -> np.ndarray:
    return np.stack([normalize(b, limits, c_col) for b in blocks])
