"""Figure rendering for reports: velocity-vs-window traces, trajectories, training curves."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

from .dynamics import RobotLimits  # noqa: E402
from .world import Disc, Segment, ScenarioConfig  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "font.size": 9,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_velocities(record, limits: RobotLimits, path: str | Path) -> Path:
    """Commanded v and w against the attainable window at each step; violations marked."""
    from .evaluation import violation_flags

    t = np.arange(record.steps) * record.dt
    bad = violation_flags(record, limits)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        for ax, col, lo, hi, label, unit in ((axes[0], 0, 0, 1, "v", "m/s"), (axes[1], 1, 2, 3, "w", "rad/s")):
            ax.fill_between(t, record.windows[:, lo], record.windows[:, hi], step="post",
                            color="tab:green", alpha=0.25, label="attainable window")
            ax.step(t, record.commands[:, col], where="post", color="k", lw=1.0, label="command")
            if bad.any():
                ax.plot(t[bad], record.commands[bad, col], "rx", ms=4, label="outside window")
            ax.set_ylabel(f"{label} ({unit})")
        axes[0].set_title(f"{record.scenario} seed {record.seed}: {record.outcome}")
        axes[0].legend(loc="upper right")
        axes[1].set_xlabel("time (s)")
        return _save(fig, path)


def plot_trajectory(records: Sequence, scenario: ScenarioConfig, path: str | Path) -> Path:
    """Robot paths over the scenario's nominal layout."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 6))
        for obs in scenario.obstacles:
            if isinstance(obs.shape, Segment):
                (ax0, ay0), (bx, by) = obs.shape.a, obs.shape.b
                ax.plot([ax0, bx], [ay0, by], color="0.3", lw=2)
            elif isinstance(obs.shape, Disc):
                ax.add_patch(Circle(obs.shape.center, obs.shape.radius,
                                    color="tab:orange" if obs.motion is not None else "0.5", alpha=0.6))
        colors = {"success": "tab:blue", "collision": "tab:red", "timeout": "tab:purple"}
        for r in records:
            ax.plot(r.poses[:, 0], r.poses[:, 1], lw=0.9, color=colors.get(r.outcome, "k"), alpha=0.7)
        ax.plot(*scenario.start.xy, "ks", ms=5)
        ax.plot(*scenario.goal, "g*", ms=12)
        xmin, xmax, ymin, ymax = scenario.arena
        ax.set_xlim(xmin, xmax)
        ax.set_ylim(ymin, ymax)
        ax.set_aspect("equal")
        ax.set_title(scenario.name)
        return _save(fig, path)


def moving_average(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return x
    window = max(1, min(window, len(x)))
    c = np.cumsum(np.insert(x, 0, 0.0))
    out = np.empty(len(x))
    out[window - 1:] = (c[window:] - c[:-window]) / window
    out[:window - 1] = c[1:window] / np.arange(1, window)
    return out


def plot_training_curve(curve: Sequence[dict], path: str | Path, window: int = 20) -> Path:
    steps = np.array([row["step"] for row in curve], dtype=float)
    rewards = np.array([row["episode_reward"] for row in curve], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(steps, rewards, ".", ms=2, color="0.6", label="episode")
        ax.plot(steps, moving_average(rewards, window), color="tab:blue", label=f"moving avg ({window})")
        ax.set_xlabel("environment steps")
        ax.set_ylabel("episode reward")
        ax.legend()
        return _save(fig, path)


def plot_success(reports: Sequence, path: str | Path) -> Path:
    """Grouped bars of success rate per scenario and planner."""
    scenarios = list(dict.fromkeys(r.scenario for r in reports))
    planners = list(dict.fromkeys(r.planner for r in reports))
    rates = {(r.planner, r.scenario): r.success_rate for r in reports}
    width = 0.8 / max(1, len(planners))
    x = np.arange(len(scenarios))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.6 * len(scenarios) + 2, 3.5))
        for j, p in enumerate(planners):
            ax.bar(x + j * width, [rates.get((p, s), np.nan) for s in scenarios], width, label=p)
        ax.set_xticks(x + width * (len(planners) - 1) / 2)
        ax.set_xticklabels(scenarios)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("success rate")
        ax.legend()
        return _save(fig, path)
