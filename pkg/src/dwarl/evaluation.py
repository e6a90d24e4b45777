"""Trial batteries, navigation metrics, and dynamics-violation analysis."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .dwa import DWAConfig, plan
from .dynamics import RobotLimits, VelocityPair, feasible_window, window_violations
from .env import SUCCESS, NavEnv, SensorConfig
from .observation import ObservationConfig
from .policy import CONTINUOUS, PolicyNet, act, act_continuous, squash
from .reward import RewardConfig
from .world import ScenarioConfig


class Planner(Protocol):
    name: str

    def reset(self, seed: int) -> None: ...

    def command(self, env: NavEnv) -> VelocityPair: ...


@dataclass
class DWAPlanner:
    limits: RobotLimits
    cfg: DWAConfig = field(default_factory=DWAConfig)
    name: str = "dwa"

    def reset(self, seed: int) -> None:
        pass

    def command(self, env: NavEnv) -> VelocityPair:
        s = env.state
        return plan(s.pose, s.velocity, env.scan.points, s.target, self.limits, self.cfg)


@dataclass
class PolicyPlanner:
    """Discrete policy acting through the sorted action map."""

    policy: PolicyNet
    limits: RobotLimits
    mode: str = "greedy"
    name: str = "dwa-rl"
    _rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng([seed, 7])

    def command(self, env: NavEnv) -> VelocityPair:
        block = env.observation()
        index, _, _ = act(self.policy, block, self.limits, self.mode, self._rng)
        return block.action_map[index]


@dataclass
class RandomPlanner:
    """Uniformly random index into the action map."""

    name: str = "random"
    _rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng([seed, 11])

    def command(self, env: NavEnv) -> VelocityPair:
        block = env.observation()
        return block.action_map[int(self._rng.integers(len(block.action_map)))]


@dataclass
class UnconstrainedPlanner:
    """Continuous-output policy clipped only to the absolute velocity caps."""

    policy: PolicyNet
    limits: RobotLimits
    mode: str = "sample"
    name: str = "unconstrained"
    _rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)

    def __post_init__(self):
        if self.policy.spec.kind != CONTINUOUS:
            raise ValueError("unconstrained planner needs a continuous-output policy")

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng([seed, 13])

    def command(self, env: NavEnv) -> VelocityPair:
        raw, _, _ = act_continuous(self.policy, env.observation(), self.limits, self.mode, self._rng)
        return squash(raw, self.limits)


@dataclass
class EpisodeRecord:
    scenario: str
    seed: int
    commands: np.ndarray      # (T, 2) commanded (v, w)
    executed: np.ndarray      # (T + 1, 2) executed velocities, row 0 is the initial velocity
    windows: np.ndarray       # (T, 4) lin_lo, lin_hi, ang_lo, ang_hi before each command
    poses: np.ndarray         # (T + 1, 3)
    rewards: np.ndarray       # (T,)
    outcome: str
    dt: float

    @property
    def steps(self) -> int:
        return len(self.commands)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.poses[:, :2], axis=0), axis=1)))

    @property
    def elapsed(self) -> float:
        return self.steps * self.dt

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS


def run_episode(planner: Planner, env: NavEnv, seed: int) -> EpisodeRecord:
    env.reset(seed)
    planner.reset(seed)
    limits = env.limits
    s = env.state
    commands, windows, rewards = [], [], []
    executed = [(s.velocity.v, s.velocity.w)]
    poses = [(s.pose.x, s.pose.y, s.pose.theta)]
    outcome = None
    while outcome is None:
        win = feasible_window(env.state.velocity, limits)
        cmd = planner.command(env)
        result = env.step(cmd)
        s = env.state
        commands.append((cmd.v, cmd.w))
        windows.append((*win.lin, *win.ang))
        executed.append((s.velocity.v, s.velocity.w))
        poses.append((s.pose.x, s.pose.y, s.pose.theta))
        rewards.append(result.reward.total)
        outcome = result.outcome
    return EpisodeRecord(scenario=env.scenario.name, seed=seed, commands=np.array(commands),
                         executed=np.array(executed), windows=np.array(windows), poses=np.array(poses),
                         rewards=np.array(rewards), outcome=outcome, dt=limits.dt)


def violation_flags(record: EpisodeRecord, limits: RobotLimits) -> np.ndarray:
    return window_violations(record.commands, record.executed[:-1], limits)


def violation_rate(record: EpisodeRecord, limits: RobotLimits) -> float:
    """Fraction of commands outside the window implied by the previous executed velocity."""
    if record.steps < 1:
        raise ValueError("record has no steps")
    return float(np.mean(violation_flags(record, limits)))


@dataclass
class MetricsReport:
    planner: str
    scenario: str
    records: list[EpisodeRecord]
    limits: RobotLimits

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> list[EpisodeRecord]:
        return [r for r in self.records if r.success]

    @property
    def success_rate(self) -> float:
        return len(self.successes) / self.trials

    @property
    def avg_length(self) -> float:
        s = self.successes
        return float(np.mean([r.length for r in s])) if s else math.nan

    @property
    def avg_velocity(self) -> float:
        s = self.successes
        return float(np.mean([r.length / r.elapsed for r in s])) if s else math.nan

    @property
    def violation_rate(self) -> float:
        flags = np.concatenate([violation_flags(r, self.limits) for r in self.records])
        return float(np.mean(flags))

    @property
    def total_steps(self) -> int:
        return sum(r.steps for r in self.records)

    def rows(self) -> list[dict]:
        rows = []
        for i, r in enumerate(self.records):
            rows.append({"kind": "trial", "planner": self.planner, "scenario": self.scenario, "trial": i,
                         "seed": r.seed, "outcome": r.outcome, "steps": r.steps, "length_m": r.length,
                         "time_s": r.elapsed, "velocity_mps": r.length / r.elapsed,
                         "violation_rate": violation_rate(r, self.limits), "reward": float(r.rewards.sum())})
        rows.append(self.summary_row())
        return rows

    def summary_row(self) -> dict:
        return {"kind": "summary", "planner": self.planner, "scenario": self.scenario, "trial": self.trials,
                "seed": "", "outcome": f"success_rate={self.success_rate!r}", "steps": self.total_steps,
                "length_m": self.avg_length, "time_s": "", "velocity_mps": self.avg_velocity,
                "violation_rate": self.violation_rate, "reward": ""}


REPORT_FIELDS = ("kind", "planner", "scenario", "trial", "seed", "outcome", "steps", "length_m", "time_s",
                 "velocity_mps", "violation_rate", "reward")


def _fmt(value):
    return repr(value) if isinstance(value, float) else value


def write_report(reports: Iterable[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for report in reports:
            for row in report.rows():
                writer.writerow({k: _fmt(v) for k, v in row.items()})


def write_trajectory(record: EpisodeRecord, path: str | Path) -> None:
    """Per-step dump: step, x, y, theta, v, w, reward (state after each command)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "x", "y", "theta", "v", "w", "reward"])
        for t in range(record.steps):
            x, y, th = record.poses[t + 1]
            v, w = record.commands[t]
            writer.writerow([t, *(_fmt(float(c)) for c in (x, y, th, v, w, record.rewards[t]))])


def make_env(scenario: ScenarioConfig, limits: RobotLimits = RobotLimits(),
             obs_cfg: ObservationConfig = ObservationConfig(), reward_cfg: RewardConfig = RewardConfig(),
             sensor: SensorConfig = SensorConfig()) -> NavEnv:
    return NavEnv(scenario, limits, obs_cfg, reward_cfg, sensor)


def trial_seed(base_seed: int, trial: int) -> int:
    return base_seed + trial


def run_trials(planner: Planner, env: NavEnv, trials: int, base_seed: int) -> MetricsReport:
    """Run ``trials`` episodes with seeds base_seed, base_seed + 1, ..."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    records = [run_episode(planner, env, trial_seed(base_seed, i)) for i in range(trials)]
    return MetricsReport(planner.name, env.scenario.name, records, env.limits)


def compare(planners: Sequence[Planner], scenarios: Sequence[ScenarioConfig], trials: int, base_seed: int,
            limits: RobotLimits = RobotLimits(), obs_cfg: ObservationConfig = ObservationConfig(),
            reward_cfg: RewardConfig = RewardConfig(), sensor: SensorConfig = SensorConfig()
            ) -> list[MetricsReport]:
    reports = []
    for scenario in scenarios:
        env = make_env(scenario, limits, obs_cfg, reward_cfg, sensor)
        for planner in planners:
            reports.append(run_trials(planner, env, trials, base_seed))
    return reports


# --------------------------------------------------------------------------- ablations

@dataclass(frozen=True)
class AblationArm:
    ablation: str
    arm: str
    obs_cfg: ObservationConfig
    reward_cfg: RewardConfig
    checkpoint: str | None = None


def ablation_arms(obs_cfg: ObservationConfig = ObservationConfig(),
                  reward_cfg: RewardConfig = RewardConfig()) -> list[AblationArm]:
    """The two standard ablations: positive reinforcement on/off and 4 vs 3 channels."""
    return [
        AblationArm("reward", "pr-on", obs_cfg, dataclasses.replace(reward_cfg, positive_reinforcement=True)),
        AblationArm("reward", "pr-off", obs_cfg, dataclasses.replace(reward_cfg, positive_reinforcement=False)),
        AblationArm("observation", "4-channel", dataclasses.replace(obs_cfg, channels=4), reward_cfg),
        AblationArm("observation", "3-channel", dataclasses.replace(obs_cfg, channels=3), reward_cfg),
    ]


@dataclass
class AblationResult:
    arm: AblationArm
    report: MetricsReport


ABLATION_FIELDS = ("ablation", "arm", "scenario", "trials", "success_rate", "length_m", "velocity_mps",
                   "violation_rate")


def ablation_suite(arms: Sequence[AblationArm], policies: dict, scenarios: Sequence[ScenarioConfig],
                   trials: int, base_seed: int, limits: RobotLimits = RobotLimits(),
                   sensor: SensorConfig = SensorConfig()) -> list[AblationResult]:
    """Evaluate each arm's policy (keyed by arm name) on every scenario, same seeds for all arms.

    Each arm gets its own environment since the observation layout or the
    reward differs between arms.
    """
    results = []
    for arm in arms:
        planner = PolicyPlanner(policies[arm.arm], limits, name=arm.arm)
        for scenario in scenarios:
            env = make_env(scenario, limits, arm.obs_cfg, arm.reward_cfg, sensor)
            results.append(AblationResult(arm, run_trials(planner, env, trials, base_seed)))
    return results


def write_ablation(results: Iterable[AblationResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ABLATION_FIELDS)
        writer.writeheader()
        for res in results:
            rep = res.report
            writer.writerow({k: _fmt(v) for k, v in {
                "ablation": res.arm.ablation, "arm": res.arm.arm, "scenario": rep.scenario,
                "trials": rep.trials, "success_rate": rep.success_rate, "length_m": rep.avg_length,
                "velocity_mps": rep.avg_velocity, "violation_rate": rep.violation_rate}.items()})
