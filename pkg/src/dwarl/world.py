"""Deterministic 2-D scenario simulator: walls, discs, scripted walkers, planar lidar."""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .dynamics import Pose, RobotLimits, VelocityPair, arc_endpoints, clip_to_window, feasible_window

GOAL_RADIUS = 0.3
COLLISION_RADIUS = 0.5
BUILTIN_SCENARIOS = ("zigzag-static", "occluded-ped", "sparse-dynamic", "dense-dynamic", "empty-arena")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ScenarioError(f"disc radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Segment:
    a: tuple[float, float]
    b: tuple[float, float]


@dataclass(frozen=True)
class Walker:
    """Constant-speed motion along a polyline; ``s`` is the arc length travelled."""

    path: tuple[tuple[float, float], ...]
    speed: float
    loop: bool = True
    s: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ScenarioError("walker speed must be non-negative")
        if len(self.path) < 1:
            raise ScenarioError("walker needs at least one waypoint")

    @property
    def _vertices(self) -> np.ndarray:
        pts = np.asarray(self.path, dtype=float)
        if self.loop and len(pts) > 1:
            pts = np.vstack([pts, pts[:1]])
        return pts

    @property
    def length(self) -> float:
        pts = self._vertices
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1))) if len(pts) > 1 else 0.0

    @functools.cached_property
    def _located(self) -> tuple[np.ndarray, np.ndarray]:
        # walkers are immutable, so position and velocity are computed once per instance
        return self._locate()

    def _locate(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self._vertices
        total = self.length
        if total == 0.0:
            return pts[0].copy(), np.zeros(2)
        s = self.s % total if self.loop else min(self.s, total)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        for i, length in enumerate(seg):
            if length == 0.0:
                continue
            if s <= length or i == len(seg) - 1:
                u = (pts[i + 1] - pts[i]) / length
                frac = min(s, length)
                moving = self.loop or self.s < total
                return pts[i] + u * frac, (u * self.speed if moving else np.zeros(2))
            s -= length
        return pts[-1].copy(), np.zeros(2)

    def position(self) -> np.ndarray:
        return self._located[0].copy()

    def velocity(self) -> np.ndarray:
        return self._located[1].copy()

    def advanced(self, dt: float) -> "Walker":
        return dataclasses.replace(self, s=self.s + self.speed * dt)


@dataclass(frozen=True)
class Obstacle:
    shape: Disc | Segment
    motion: Walker | None = None
    jitter: float | None = None

    def __post_init__(self):
        if self.motion is not None and not isinstance(self.shape, Disc):
            raise ScenarioError("only disc obstacles can walk")

    @property
    def center(self) -> np.ndarray:
        if self.motion is not None:
            return self.motion.position()
        if isinstance(self.shape, Disc):
            return np.asarray(self.shape.center, dtype=float)
        return 0.5 * (np.asarray(self.shape.a, dtype=float) + np.asarray(self.shape.b, dtype=float))

    @property
    def velocity(self) -> np.ndarray:
        return self.motion.velocity() if self.motion is not None else np.zeros(2)

    @property
    def is_dynamic(self) -> bool:
        return self.motion is not None and self.motion.speed > 0

    def reference_point(self, p: np.ndarray) -> np.ndarray:
        """Center for discs, closest point for wall segments."""
        if isinstance(self.shape, Disc):
            return self.center
        return closest_point_on_segment(p, np.asarray(self.shape.a), np.asarray(self.shape.b))

    def boundary_distance(self, p: np.ndarray) -> float:
        if isinstance(self.shape, Disc):
            return max(0.0, float(np.linalg.norm(p - self.center)) - self.shape.radius)
        return float(np.linalg.norm(p - self.reference_point(p)))


def closest_point_on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a.astype(float)
    t = min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
    return a + t * ab


def point_polyline_distance(p, vertices) -> float:
    pts = np.asarray(vertices, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(pts) == 1:
        return float(np.linalg.norm(p - pts[0]))
    return min(float(np.linalg.norm(p - closest_point_on_segment(p, a, b)))
               for a, b in zip(pts[:-1], pts[1:]))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to realise a trial; see ``scenarios/*.yaml`` for the schema."""

    name: str
    arena: tuple[float, float, float, float]
    start: Pose
    goal: tuple[float, float]
    obstacles: tuple[Obstacle, ...] = ()
    route: tuple[tuple[float, float], ...] = ()
    jitter: float = 1.0
    walker_phase: bool = True
    random_heading: bool = False
    goal_ring: tuple[float, float] | None = None
    max_steps: int = 500
    route_radius: float = 1.0
    seed: int = 0
    robot: dict[str, float] = field(default_factory=dict)
    overrides: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        xmin, xmax, ymin, ymax = self.arena
        if not (xmin < xmax and ymin < ymax):
            raise ScenarioError(f"{self.name}: malformed arena {self.arena}")
        for label, (x, y) in (("start", (self.start.x, self.start.y)), ("goal", self.goal)):
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                raise ScenarioError(f"{self.name}: {label} ({x}, {y}) lies outside the arena")
        if self.route_radius <= GOAL_RADIUS:
            raise ScenarioError("route_radius must exceed the goal radius")
        if self.max_steps < 1:
            raise ScenarioError("max_steps must be positive")

    def inside(self, p) -> bool:
        xmin, xmax, ymin, ymax = self.arena
        return xmin <= p[0] <= xmax and ymin <= p[1] <= ymax


@dataclass(frozen=True)
class ScanResult:
    timestamp: int
    points: np.ndarray
    pose: Pose


@dataclass(frozen=True)
class WorldState:
    t: int
    pose: Pose
    velocity: VelocityPair
    obstacles: tuple[Obstacle, ...]
    goal: tuple[float, float]
    targets: tuple[tuple[float, float], ...]
    collided: bool = False
    reached_goal: bool = False

    @property
    def target(self) -> np.ndarray:
        """Current local target: next route waypoint, or the goal."""
        return np.asarray(self.targets[0] if self.targets else self.goal, dtype=float)


# --------------------------------------------------------------------------- loading

def _pair(value, what: str) -> tuple[float, float]:
    try:
        x, y = (float(c) for c in value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what}: expected [x, y], got {value!r}") from exc
    return (x, y)


def scenario_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    try:
        name = str(data["name"])
        arena = tuple(float(c) for c in data["arena"])
        start = [float(c) for c in data["start"]]
        goal = _pair(data["goal"], "goal")
    except KeyError as exc:
        raise ScenarioError(f"scenario is missing required key {exc.args[0]!r}") from None
    if len(arena) != 4:
        raise ScenarioError("arena must be [xmin, xmax, ymin, ymax]")
    obstacles: list[Obstacle] = []
    for wall in data.get("walls", []) or []:
        a, b = wall
        obstacles.append(Obstacle(Segment(_pair(a, "wall"), _pair(b, "wall"))))
    for disc in data.get("discs", []) or []:
        obstacles.append(Obstacle(Disc(_pair(disc["center"], "disc"), float(disc.get("radius", 0.3))),
                                  jitter=disc.get("jitter")))
    for w in data.get("walkers", []) or []:
        center = _pair(w["center"], "walker")
        waypoints = [_pair(p, "walker waypoint") for p in w.get("waypoints", [])]
        if not waypoints:
            raise ScenarioError("walker waypoint list must be nonempty")
        motion = Walker(path=(center, *waypoints), speed=float(w.get("speed", 0.5)),
                        loop=bool(w.get("loop", True)))
        obstacles.append(Obstacle(Disc(center, float(w.get("radius", 0.3))), motion, jitter=w.get("jitter")))
    rnd = data.get("randomization", {}) or {}
    ring = rnd.get("goal_ring")
    return ScenarioConfig(
        name=name,
        arena=arena,  # type: ignore[arg-type]
        start=Pose(*start),
        goal=goal,
        obstacles=tuple(obstacles),
        route=tuple(_pair(p, "route") for p in data.get("route", []) or []),
        jitter=float(rnd.get("jitter", 1.0)),
        walker_phase=bool(rnd.get("walker_phase", True)),
        random_heading=bool(rnd.get("random_heading", False)),
        goal_ring=None if ring is None else (float(ring[0]), float(ring[1])),
        max_steps=int(data.get("max_steps", 500)),
        route_radius=float(data.get("route_radius", 1.0)),
        seed=int(data.get("seed", 0)),
        robot={k: float(v) for k, v in (data.get("robot", {}) or {}).items()},
        overrides=dict(data.get("overrides", {}) or {}),
    )


def load_scenario(path_or_name: str | Path) -> ScenarioConfig:
    """Load a scenario file, or one of the bundled scenarios by name."""
    path = Path(path_or_name)
    if path.suffix not in (".yaml", ".yml") and str(path_or_name) in BUILTIN_SCENARIOS:
        text = resources.files("dwarl.scenarios").joinpath(f"{path_or_name}.yaml").read_text()
    else:
        if not path.is_file():
            raise FileNotFoundError(f"scenario file not found: {path}")
        text = path.read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ScenarioError(f"{path_or_name}: scenario must be a mapping")
    return scenario_from_dict(data)


def limits_for(scenario: ScenarioConfig, base: RobotLimits | None = None) -> RobotLimits:
    base = base or RobotLimits()
    return dataclasses.replace(base, **scenario.robot) if scenario.robot else base


# --------------------------------------------------------------------------- trials

def realize(scenario: ScenarioConfig, seed: int) -> WorldState:
    """Initial world state for one trial; the seed fully determines the draw."""
    rng = np.random.default_rng(seed)
    start = scenario.start
    if scenario.random_heading:
        start = Pose(start.x, start.y, rng.uniform(-math.pi, math.pi))
    goal = scenario.goal
    if scenario.goal_ring is not None:
        for _ in range(100):
            r = rng.uniform(*scenario.goal_ring)
            phi = rng.uniform(-math.pi, math.pi)
            cand = (start.x + r * math.cos(phi), start.y + r * math.sin(phi))
            if scenario.inside(cand):
                goal = cand
                break
    keep_clear = [np.array([start.x, start.y]), np.asarray(goal)]
    obstacles = []
    for obs in scenario.obstacles:
        obstacles.append(_jittered(obs, scenario, rng, keep_clear))
    return WorldState(t=0, pose=start, velocity=VelocityPair(0.0, 0.0), obstacles=tuple(obstacles),
                      goal=goal, targets=tuple(scenario.route))


def _jittered(obs: Obstacle, scenario: ScenarioConfig, rng: np.random.Generator,
              keep_clear: Sequence[np.ndarray]) -> Obstacle:
    amount = scenario.jitter if obs.jitter is None else float(obs.jitter)
    if isinstance(obs.shape, Segment):
        return obs
    radius = obs.shape.radius
    for _ in range(50):
        offset = rng.uniform(-amount, amount, size=2) if amount > 0 else np.zeros(2)
        if obs.motion is None:
            c = np.asarray(obs.shape.center) + offset
            if all(np.linalg.norm(c - p) > radius + 1.0 for p in keep_clear):
                return dataclasses.replace(obs, shape=Disc((float(c[0]), float(c[1])), radius))
        else:
            path = tuple((float(x + offset[0]), float(y + offset[1])) for x, y in obs.motion.path)
            walker = dataclasses.replace(obs.motion, path=path)
            if scenario.walker_phase and walker.length > 0:
                walker = dataclasses.replace(walker, s=float(rng.uniform(0.0, walker.length)))
            p = walker.position()
            if all(np.linalg.norm(p - q) > radius + 1.0 for q in keep_clear[:1]):
                return dataclasses.replace(obs, motion=walker, shape=Disc((float(p[0]), float(p[1])), radius))
    return obs


def collision(pose: Pose, obstacles: Sequence[Obstacle], limits: RobotLimits,
              collision_radius: float = COLLISION_RADIUS) -> bool:
    """Contact test: footprint overlap with anything, or a walker center closer than ``collision_radius``."""
    p = pose.xy
    for obs in obstacles:
        if obs.boundary_distance(p) < limits.radius:
            return True
        if obs.motion is not None and np.linalg.norm(p - obs.center) < collision_radius:
            return True
    return False


def step_world(state: WorldState, command: VelocityPair, limits: RobotLimits,
               scenario: ScenarioConfig | None = None,
               collision_radius: float = COLLISION_RADIUS, goal_radius: float = GOAL_RADIUS) -> WorldState:
    """Advance walkers and the robot by one control period.

    The robot executes ``command`` clipped to what its acceleration limits
    allow from the current velocity; commands already inside the window are
    executed exactly.
    """
    dt = limits.dt
    executed = clip_to_window(command, feasible_window(state.velocity, limits))
    x, y, theta = arc_endpoints(state.pose, executed.v, executed.w, dt)[0]
    pose = Pose(float(x), float(y), float(theta))
    obstacles = tuple(
        dataclasses.replace(o, motion=o.motion.advanced(dt)) if o.motion is not None else o
        for o in state.obstacles
    )
    targets = state.targets
    route_radius = scenario.route_radius if scenario is not None else 1.0
    while targets and np.linalg.norm(pose.xy - np.asarray(targets[0])) < route_radius:
        targets = targets[1:]
    hit = collision(pose, obstacles, limits, collision_radius)
    if scenario is not None and not scenario.inside((pose.x, pose.y)):
        hit = True
    reached = not targets and float(np.linalg.norm(pose.xy - np.asarray(state.goal))) < goal_radius
    return WorldState(t=state.t + 1, pose=pose, velocity=executed, obstacles=obstacles, goal=state.goal,
                      targets=targets, collided=hit, reached_goal=reached)


# --------------------------------------------------------------------------- sensing

def sense(state: WorldState, beam_count: int = 180, max_range: float = 4.0,
          noise_sigma: float = 0.0, rng: np.random.Generator | None = None) -> ScanResult:
    """Ray-cast evenly spaced beams (beam 0 along the heading) into the odometry frame."""
    if beam_count < 1:
        raise ValueError("beam_count must be at least 1")
    angles = state.pose.theta + 2.0 * math.pi * np.arange(beam_count) / beam_count
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    ranges = cast_rays(state.pose.xy, dirs, state.obstacles)
    if noise_sigma > 0:
        rng = rng or np.random.default_rng()
        noise = rng.normal(0.0, noise_sigma, size=beam_count)
        ranges = np.where(np.isfinite(ranges), np.maximum(ranges + noise, 0.0), ranges)
    hit = ranges <= max_range
    points = state.pose.xy + dirs[hit] * ranges[hit, None]
    return ScanResult(timestamp=state.t, points=points, pose=state.pose)


def cast_rays(origin: np.ndarray, dirs: np.ndarray, obstacles: Sequence[Obstacle]) -> np.ndarray:
    """First-hit range per unit direction (``inf`` when nothing is hit)."""
    best = np.full(len(dirs), np.inf)
    discs = [o for o in obstacles if isinstance(o.shape, Disc)]
    segs = [o.shape for o in obstacles if isinstance(o.shape, Segment)]
    if discs:
        centers = np.array([o.center for o in discs])
        radii = np.array([o.shape.radius for o in discs])
        oc = centers - origin                                 # (D, 2)
        b = dirs @ oc.T                                       # (B, D)
        c = np.sum(oc * oc, axis=1) - radii ** 2              # (D,)
        disc_ = b * b - c[None, :]
        with np.errstate(invalid="ignore"):
            root = np.sqrt(disc_)
        t_near = b - root
        t_far = b + root
        t = np.where(t_near >= 0, t_near, np.where(t_far >= 0, t_far, np.inf))
        t = np.where(disc_ >= 0, t, np.inf)
        best = np.minimum(best, t.min(axis=1))
    if segs:
        a = np.array([s.a for s in segs], dtype=float)
        e = np.array([s.b for s in segs], dtype=float) - a
        ao = a - origin                                       # (S, 2)
        denom = dirs[:, 0:1] * e[None, :, 1] - dirs[:, 1:2] * e[None, :, 0]  # cross(d, e)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ao[None, :, 0] * e[None, :, 1] - ao[None, :, 1] * e[None, :, 0]) / denom
            u = (ao[None, :, 0] * dirs[:, 1:2] - ao[None, :, 1] * dirs[:, 0:1]) / denom
        ok = (np.abs(denom) > 1e-12) & (t >= 0) & (u >= 0) & (u <= 1)
        best = np.minimum(best, np.where(ok, t, np.inf).min(axis=1))
    return best


# --------------------------------------------------------------------------- history

@dataclass(frozen=True)
class ObstacleHistory:
    """The last ``n`` scans, oldest first. Before ``n`` scans exist the oldest is repeated."""

    n: int
    scans: tuple[ScanResult, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("history depth must be at least 1")

    def __len__(self) -> int:
        return len(self.scans)

    @property
    def newest(self) -> ScanResult:
        return self.scans[-1]

    def push(self, scan: ScanResult) -> "ObstacleHistory":
        if not self.scans:
            return dataclasses.replace(self, scans=(scan,) * self.n)
        if scan.timestamp <= self.scans[-1].timestamp:
            raise ValueError(f"scan timestamp {scan.timestamp} is not newer than {self.scans[-1].timestamp}")
        return dataclasses.replace(self, scans=self.scans[1:] + (scan,))


def push_history(history: ObstacleHistory, scan: ScanResult) -> ObstacleHistory:
    return history.push(scan)
