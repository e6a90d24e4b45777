"""Navigation episode: world + sensor + obstacle history + reward, one step per control period."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import RobotLimits, VelocityPair
from .observation import ObservationBlock, ObservationConfig, observe
from .reward import RewardBreakdown, RewardConfig, assess_estimated, assess_obstacles, step_reward
from .world import ObstacleHistory, ScanResult, ScenarioConfig, WorldState, realize, sense, step_world

SUCCESS = "success"
COLLISION = "collision"
TIMEOUT = "timeout"


@dataclass(frozen=True)
class SensorConfig:
    beams: int = 180
    max_range: float = 4.0
    noise_sigma: float = 0.0


@dataclass
class StepResult:
    reward: RewardBreakdown
    done: bool
    outcome: str | None
    command: VelocityPair
    executed: VelocityPair


@dataclass
class NavEnv:
    """Single robot in an isolated world instance.

    ``zone_velocity`` selects where obstacle velocities for the steering
    reward come from: ``"truth"`` (simulator) or ``"estimated"`` (scan
    clusters differenced across the last two scans).
    """

    scenario: ScenarioConfig
    limits: RobotLimits = field(default_factory=RobotLimits)
    obs_cfg: ObservationConfig = field(default_factory=ObservationConfig)
    reward_cfg: RewardConfig = field(default_factory=RewardConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    zone_velocity: str = "truth"

    state: WorldState = field(init=False)
    history: ObstacleHistory = field(init=False)
    scan: ScanResult = field(init=False)
    _rng: np.random.Generator = field(init=False)
    _block: ObservationBlock | None = field(init=False, default=None)

    def reset(self, seed: int) -> "NavEnv":
        self.state = realize(self.scenario, seed)
        self._rng = np.random.default_rng([seed, 1])
        self.history = ObstacleHistory(self.obs_cfg.n)
        self._sense()
        return self

    def _sense(self) -> None:
        self.scan = sense(self.state, self.sensor.beams, self.sensor.max_range,
                          self.sensor.noise_sigma, self._rng)
        self.history = self.history.push(self.scan)
        self._block = None

    @property
    def steps(self) -> int:
        return self.state.t

    def observation(self) -> ObservationBlock:
        if self._block is None:
            self._block = observe(self.state.pose, self.state.velocity, self.history,
                                  self.state.target, self.limits, self.obs_cfg)
        return self._block

    def step(self, command: VelocityPair) -> StepResult:
        prev = self.state
        new = step_world(prev, command, self.limits, self.scenario,
                         self.reward_cfg.collision_radius, self.reward_cfg.goal_radius)
        self.state = new
        self._sense()
        if self.zone_velocity == "truth":
            zones = assess_obstacles(new.pose.xy, new.obstacles, self.reward_cfg)
        else:
            zones = assess_estimated(new.pose.xy, self.history.scans, self.limits.dt, self.reward_cfg)
        # Progress is measured against the target that was active before the step;
        # only the final goal pays r_goal.
        goal = np.asarray(prev.goal) if new.reached_goal else prev.target
        reward = step_reward(prev.pose, new.pose, goal, zones, new.collided, self.reward_cfg)
        if prev.targets and not new.reached_goal and reward.goal == self.reward_cfg.r_goal:
            reward = _without_goal_bonus(reward, prev, new, self.reward_cfg)
        outcome = None
        if new.collided:
            outcome = COLLISION
        elif new.reached_goal:
            outcome = SUCCESS
        elif new.t >= self.scenario.max_steps:
            outcome = TIMEOUT
        return StepResult(reward=reward, done=outcome is not None, outcome=outcome,
                          command=command, executed=new.velocity)


def _without_goal_bonus(reward: RewardBreakdown, prev: WorldState, new: WorldState,
                        cfg: RewardConfig) -> RewardBreakdown:
    target = prev.target
    progress = -cfg.progress_gain * (float(np.linalg.norm(new.pose.xy - target))
                                     - float(np.linalg.norm(prev.pose.xy - target)))
    return RewardBreakdown(goal=progress, collision=reward.collision, steering=reward.steering,
                           danger=reward.danger,
                           total=progress + reward.collision + reward.steering + reward.danger)
