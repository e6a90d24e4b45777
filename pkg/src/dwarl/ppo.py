"""PPO training over lockstep rollout workers, each driving its own world instance."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .dynamics import RobotLimits
from .env import COLLISION, SUCCESS, TIMEOUT, NavEnv, SensorConfig
from .observation import ObservationConfig, normalize
from .policy import (CONTINUOUS, DISCRETE, PolicyNet, PolicySpec, build_policy, sample_categorical,
                     save_checkpoint, squash)
from .reward import RewardConfig
from .world import ScenarioConfig

log = logging.getLogger(__name__)

CURVE_FIELDS = ("step", "update", "worker", "episode", "episode_reward", "episode_length", "outcome",
                "policy_loss", "value_loss", "entropy")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    workers: int = 4
    steps_per_update: int = 2048
    epochs: int = 4
    minibatch: int = 256
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    reward_scale: float = 0.01
    total_steps: int = 300_000
    seed: int = 0
    checkpoint_every: int = 10

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if self.workers < 1 or self.steps_per_update < 1 or self.epochs < 1 or self.minibatch < 1:
            raise ValueError("workers, steps_per_update, epochs and minibatch must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


def gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Generalised advantage estimates and returns for one worker's trajectory.

    ``dones[t]`` marks that the episode ended at step t, so nothing is
    bootstrapped across it; ``last_value`` bootstraps the final step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not len(rewards) == len(values) == len(dones):
        raise ValueError("rewards, values and dones must have equal length")
    adv = np.zeros(len(rewards))
    running = 0.0
    for t in reversed(range(len(rewards))):
        nonterminal = 1.0 - dones[t]
        next_value = last_value if t == len(rewards) - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    returns = adv + values
    return returns - values, returns


def log_prob(policy: PolicyNet, obs: torch.Tensor, actions: torch.Tensor):
    dist, value = policy.distribution(obs)
    lp = dist.log_prob(actions)
    ent = dist.entropy()
    if policy.spec.kind == CONTINUOUS:
        lp, ent = lp.sum(-1), ent.sum(-1)
    return lp, ent, value


def clipped_surrogate(policy: PolicyNet, obs: torch.Tensor, actions: torch.Tensor, old_logp: torch.Tensor,
                      advantages: torch.Tensor, clip: float) -> torch.Tensor:
    """Negated PPO clipped objective (a loss to minimise)."""
    lp, _, _ = log_prob(policy, obs, actions)
    ratio = torch.exp(lp - old_logp)
    surr = torch.minimum(ratio * advantages, torch.clamp(ratio, 1 - clip, 1 + clip) * advantages)
    return -surr.mean()


def ppo_losses(policy: PolicyNet, obs, actions, old_logp, advantages, returns, cfg: TrainConfig):
    lp, ent, value = log_prob(policy, obs, actions)
    ratio = torch.exp(lp - old_logp)
    surr = torch.minimum(ratio * advantages, torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip) * advantages)
    pg = -surr.mean()
    vf = ((value - returns) ** 2).mean()
    entropy = ent.mean()
    return pg, vf, entropy


@dataclass
class TrainResult:
    policy: PolicyNet
    curve: list[dict] = field(default_factory=list)
    steps: int = 0
    updates: int = 0

    def episode_rewards(self) -> np.ndarray:
        return np.array([row["episode_reward"] for row in self.curve], dtype=float)


def write_curve(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


class _Worker:
    def __init__(self, index: int, env: NavEnv, seed: int):
        self.index = index
        self.env = env
        self.seed = seed
        self.episode = 0
        self.episode_reward = 0.0
        self.env.reset(self._episode_seed())

    def _episode_seed(self) -> int:
        return int(np.random.SeedSequence([self.seed, self.index, self.episode]).generate_state(1)[0])

    def next_episode(self) -> None:
        self.episode += 1
        self.episode_reward = 0.0
        self.env.reset(self._episode_seed())


def train(scenarios: Sequence[ScenarioConfig], cfg: TrainConfig = TrainConfig(),
          limits: RobotLimits = RobotLimits(), obs_cfg: ObservationConfig = ObservationConfig(),
          reward_cfg: RewardConfig = RewardConfig(), sensor: SensorConfig = SensorConfig(),
          kind: str = DISCRETE, spec: PolicySpec | None = None, out_dir: str | Path | None = None,
          policy: PolicyNet | None = None) -> TrainResult:
    """Run PPO; worker i trains in ``scenarios[i % len(scenarios)]``."""
    if not scenarios:
        raise ValueError("need at least one scenario")
    spec = spec or PolicySpec(actions=obs_cfg.actions, n=obs_cfg.n, channels=obs_cfg.channels, kind=kind)
    policy = policy or build_policy(spec, seed=cfg.seed)
    optimizer = torch.optim.Adam(policy.parameters(), lr=cfg.lr, eps=1e-5)
    rng = np.random.default_rng(cfg.seed)
    workers = [_Worker(i, NavEnv(scenarios[i % len(scenarios)], limits, obs_cfg, reward_cfg, sensor), cfg.seed)
               for i in range(cfg.workers)]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = TrainResult(policy)
    losses = {"policy_loss": math.nan, "value_loss": math.nan, "entropy": math.nan}
    dtype = next(policy.parameters()).dtype
    W = cfg.workers
    started = time.perf_counter()
    while result.steps < cfg.total_steps:
        T = min(cfg.steps_per_update, math.ceil((cfg.total_steps - result.steps) / W))
        obs_buf = np.zeros((W, T, *spec.input_shape), dtype=np.float32)
        act_buf = np.zeros((W, T) if kind == DISCRETE else (W, T, 2))
        logp_buf = np.zeros((W, T))
        val_buf = np.zeros((W, T))
        rew_buf = np.zeros((W, T))
        done_buf = np.zeros((W, T))
        for t in range(T):
            blocks = [w.env.observation() for w in workers]
            for i, b in enumerate(blocks):
                obs_buf[i, t] = normalize(b, limits, obs_cfg.c_col)
            with torch.no_grad():
                head, value = policy(torch.as_tensor(obs_buf[:, t], dtype=dtype))
            head = head.double().numpy()
            val_buf[:, t] = value.double().numpy()
            for i, w in enumerate(workers):
                if kind == DISCRETE:
                    logp_all = head[i] - np.logaddexp.reduce(head[i])
                    a = sample_categorical(np.exp(logp_all), rng)
                    act_buf[i, t] = a
                    logp_buf[i, t] = logp_all[a]
                    cmd = blocks[i].action_map[a]
                else:
                    std = np.exp(policy.log_std.detach().double().numpy())
                    raw = head[i] + std * rng.standard_normal(2)
                    act_buf[i, t] = raw
                    logp_buf[i, t] = np.sum(-0.5 * ((raw - head[i]) / std) ** 2 - np.log(std)
                                            - 0.5 * math.log(2 * math.pi))
                    cmd = squash(raw, limits)
                step = w.env.step(cmd)
                rew_buf[i, t] = step.reward.total * cfg.reward_scale
                done_buf[i, t] = float(step.done)
                w.episode_reward += step.reward.total
                if step.outcome == TIMEOUT:
                    # truncation, not a terminal state: bootstrap from the value where it stopped
                    final = normalize(w.env.observation(), limits, obs_cfg.c_col)[None]
                    with torch.no_grad():
                        rew_buf[i, t] += cfg.gamma * float(policy(torch.as_tensor(final, dtype=dtype))[1][0])
                if step.done:
                    result.curve.append({
                        "step": result.steps + (t + 1) * W, "update": result.updates, "worker": i,
                        "episode": w.episode, "episode_reward": w.episode_reward,
                        "episode_length": w.env.steps, "outcome": step.outcome, **losses})
                    w.next_episode()
        with torch.no_grad():
            last = torch.as_tensor(np.stack([normalize(w.env.observation(), limits, obs_cfg.c_col)
                                             for w in workers]), dtype=dtype)
            last_val = policy(last)[1].double().numpy()
        adv = np.zeros((W, T))
        ret = np.zeros((W, T))
        for i in range(W):
            adv[i], ret[i] = gae(rew_buf[i], val_buf[i], done_buf[i], cfg.gamma, cfg.lam, last_val[i])
        result.steps += W * T
        losses = _update(policy, optimizer, cfg, rng, obs_buf.reshape(W * T, *spec.input_shape),
                         act_buf.reshape(W * T, *act_buf.shape[2:]), logp_buf.ravel(), adv.ravel(),
                         ret.ravel(), dtype)
        result.updates += 1
        recent = result.curve[-20:]
        outcomes = "/".join(str(sum(r["outcome"] == o for r in recent)) for o in (SUCCESS, COLLISION, TIMEOUT))
        log.info("update %d steps %d mean_ep_reward %.1f s/c/t %s pg %.4f vf %.4f ent %.3f (%.0fs)",
                 result.updates, result.steps, np.mean([r["episode_reward"] for r in recent]) if recent
                 else float("nan"), outcomes, losses["policy_loss"], losses["value_loss"], losses["entropy"],
                 time.perf_counter() - started)
        if out is not None and result.updates % cfg.checkpoint_every == 0:
            save_checkpoint(policy, out / "policy.ckpt", _extra(cfg, obs_cfg, limits, result))
    if out is not None:
        save_checkpoint(policy, out / "policy.ckpt", _extra(cfg, obs_cfg, limits, result))
        write_curve(result.curve, out / "training_curve.csv")
    return result


def _extra(cfg: TrainConfig, obs_cfg: ObservationConfig, limits: RobotLimits, result: TrainResult) -> dict:
    return {"train": asdict(cfg), "observation": asdict(obs_cfg), "limits": asdict(limits),
            "steps": result.steps, "updates": result.updates}


def _update(policy: PolicyNet, optimizer, cfg: TrainConfig, rng: np.random.Generator, obs, actions,
            old_logp, adv, ret, dtype) -> dict:
    obs_t = torch.as_tensor(obs, dtype=dtype)
    act_t = torch.as_tensor(actions, dtype=torch.long if policy.spec.kind == DISCRETE else dtype)
    logp_t = torch.as_tensor(old_logp, dtype=dtype)
    adv_t = torch.as_tensor(adv, dtype=dtype)
    ret_t = torch.as_tensor(ret, dtype=dtype)
    size = len(obs)
    stats = {"policy_loss": [], "value_loss": [], "entropy": []}
    for _ in range(cfg.epochs):
        order = rng.permutation(size)
        for start in range(0, size, cfg.minibatch):
            idx = torch.as_tensor(order[start:start + cfg.minibatch])
            a = adv_t[idx]
            if len(idx) > 1:
                a = (a - a.mean()) / (a.std() + 1e-8)
            pg, vf, ent = ppo_losses(policy, obs_t[idx], act_t[idx], logp_t[idx], a, ret_t[idx], cfg)
            loss = pg + cfg.vf_coef * vf - cfg.ent_coef * ent
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss.item()}")
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(policy.parameters(), cfg.max_grad_norm)
            optimizer.step()
            if not all(torch.all(torch.isfinite(p)) for p in policy.parameters()):
                raise TrainingDiverged("non-finite parameters after an optimizer step")
            stats["policy_loss"].append(pg.item())
            stats["value_loss"].append(vf.item())
            stats["entropy"].append(ent.item())
    return {k: float(np.mean(v)) for k, v in stats.items()}
