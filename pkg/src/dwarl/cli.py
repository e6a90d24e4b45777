"""Command-line entry point: train, eval, compare, ablate, dump-obs.

Configuration is resolved in three layers: built-in defaults, then the
``robot`` and ``overrides`` sections of the scenario file, then flags given
on the command line.  Every run writes ``manifest.json`` next to its
outputs with the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import time
import typing
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .dwa import DWAConfig
from .dynamics import RobotLimits
from .env import NavEnv, SensorConfig
from .evaluation import (DWAPlanner, PolicyPlanner, RandomPlanner, UnconstrainedPlanner, ablation_arms,
                         ablation_suite, compare, write_ablation, write_report, write_trajectory)
from .observation import ObservationConfig, dump_block
from .policy import CONTINUOUS, DISCRETE, CheckpointError, PolicySpec, load_checkpoint
from .ppo import TrainConfig, TrainingDiverged, train
from .reward import RewardConfig
from .world import BUILTIN_SCENARIOS, ScenarioConfig, ScenarioError, limits_for, load_scenario

log = logging.getLogger("dwarl")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_CHECKPOINT = 5
EXIT_DIVERGED = 6

OUTPUT_ENV = "DWARL_OUTPUT_DIR"
DEFAULT_OUTPUT = "dwarl-runs"
BENCHMARK = ("zigzag-static", "occluded-ped", "sparse-dynamic", "dense-dynamic")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors through our exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- config plumbing

def _coerce(value: str, hint, where: str):
    origin = typing.get_origin(hint)
    if hint is bool or hint == "bool":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {value!r}")
    try:
        if hint in (int, "int"):
            return int(value)
        if hint in (float, "float"):
            return float(value)
    except ValueError:
        raise ConfigError(f"{where}: expected {hint if isinstance(hint, str) else hint.__name__}, "
                          f"got {value!r}") from None
    if origin is tuple or hint in ("tuple[int, ...]",):
        return tuple(int(v) for v in value.split(","))
    return value


def apply_overrides(cfg, pairs: dict, section: str):
    """dataclasses.replace with type checking; ``pairs`` values may be strings or typed."""
    if not pairs:
        return cfg
    hints = typing.get_type_hints(type(cfg))
    names = {f.name for f in dataclasses.fields(cfg) if f.init}
    changes = {}
    for key, value in pairs.items():
        if key not in names:
            raise ConfigError(f"{section}: unknown setting {key!r} (valid: {', '.join(sorted(names))})")
        hint = hints[key]
        if isinstance(value, str) and hint is not str:
            value = _coerce(value, hint, f"{section}.{key}")
        elif hint in (float,) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif hint is int and not (isinstance(value, int) and not isinstance(value, bool)):
            raise ConfigError(f"{section}.{key}: expected int, got {value!r}")
        changes[key] = value
    try:
        return dataclasses.replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _pairs(items: list[str] | None, flag: str) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"{flag} expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


@dataclasses.dataclass
class Resolved:
    scenarios: list[ScenarioConfig]
    scenario_sources: list[str]
    limits: RobotLimits
    obs: ObservationConfig
    reward: RewardConfig
    sensor: SensorConfig
    dwa: DWAConfig
    ppo: TrainConfig


def _load_scenarios(names: list[str]) -> tuple[list[ScenarioConfig], list[str]]:
    scenarios, sources = [], []
    for name in names:
        scenarios.append(load_scenario(name))
        sources.append(name if name in BUILTIN_SCENARIOS else str(Path(name).resolve()))
    return scenarios, sources


def resolve(args) -> Resolved:
    names = getattr(args, "scenario", None) or list(BENCHMARK)
    if isinstance(names, str):
        names = [names]
    scenarios, sources = _load_scenarios(names)
    first = scenarios[0]
    file_over = first.overrides
    unknown = set(file_over) - {"observation", "reward", "sensor", "dwa", "ppo"}
    if unknown:
        raise ConfigError(f"{first.name}: unknown overrides section(s) {sorted(unknown)}")

    try:
        limits = limits_for(first)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{first.name}: robot: {exc}") from None
    obs = apply_overrides(ObservationConfig(), file_over.get("observation", {}), "observation")
    reward = apply_overrides(RewardConfig(), file_over.get("reward", {}), "reward")
    sensor = apply_overrides(SensorConfig(), file_over.get("sensor", {}), "sensor")
    dwa = apply_overrides(DWAConfig(), file_over.get("dwa", {}), "dwa")
    ppo = apply_overrides(TrainConfig(), file_over.get("ppo", {}), "ppo")

    cli_obs = {k: v for k, v in (("k", args.k), ("n", args.n), ("channels", args.channels)) if v is not None}
    obs = apply_overrides(obs, cli_obs, "observation")
    if args.dt is not None:
        limits = apply_overrides(limits, {"dt": args.dt}, "robot")
    limits = apply_overrides(limits, _pairs(args.robot, "--robot"), "robot")
    reward = apply_overrides(reward, _pairs(args.reward, "--reward"), "reward")
    ppo_cli = _pairs(getattr(args, "ppo", None), "--ppo")
    if args.command in ("train", "ablate") and args.steps is not None:
        ppo_cli["total_steps"] = args.steps
    if getattr(args, "workers", None) is not None:
        ppo_cli["workers"] = args.workers
    ppo_cli["seed"] = args.seed
    try:
        ppo = apply_overrides(ppo, ppo_cli, "ppo")
    except ConfigError as exc:
        if "total_steps" in str(exc):
            raise ConfigError("--steps must be > 0") from None
        raise
    dwa = dataclasses.replace(dwa, k=obs.k)
    return Resolved(scenarios, sources, limits, obs, reward, sensor, dwa, ppo)


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not callable(getattr(obj, f.name))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _file_digest(path: str) -> str | None:
    p = Path(path)
    return hashlib.sha256(p.read_bytes()).hexdigest() if p.is_file() else None


def write_manifest(out: Path, args, cfg: Resolved, extra: dict | None = None) -> Path:
    manifest = {
        "command": args.command,
        "argv": list(args.argv),
        "seed": args.seed,
        "scenarios": [{"name": s.name, "source": src, "sha256": _file_digest(src)}
                      for s, src in zip(cfg.scenarios, cfg.scenario_sources)],
        "config": {"robot": _jsonable(cfg.limits), "observation": _jsonable(cfg.obs),
                   "reward": _jsonable(cfg.reward), "sensor": _jsonable(cfg.sensor),
                   "dwa": _jsonable(cfg.dwa), "ppo": _jsonable(cfg.ppo)},
        "options": {k: _jsonable(v) for k, v in sorted(vars(args).items())
                    if k not in ("argv", "func") and not callable(v)},
        "versions": {"dwarl": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "torch": torch.__version__},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    manifest.update(extra or {})
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def _policy(path: str, cfg: Resolved, kind: str = DISCRETE):
    expect = PolicySpec(actions=cfg.obs.actions, n=cfg.obs.n, channels=cfg.obs.channels, kind=kind)
    policy, _ = load_checkpoint(_existing(path), expect=expect)
    return policy


def _planner(args, cfg: Resolved):
    if args.planner == "dwa":
        return DWAPlanner(cfg.limits, cfg.dwa)
    if args.planner == "random":
        return RandomPlanner()
    if not args.checkpoint:
        raise ConfigError(f"--planner {args.planner} needs --checkpoint")
    if args.planner == "dwa-rl":
        return PolicyPlanner(_policy(args.checkpoint, cfg), cfg.limits, mode=args.mode)
    return UnconstrainedPlanner(_policy(args.checkpoint, cfg, CONTINUOUS), cfg.limits, mode=args.mode)


# --------------------------------------------------------------------------- subcommands

def cmd_train(args, cfg: Resolved, out: Path) -> None:
    kind = CONTINUOUS if args.kind == "continuous" else DISCRETE
    init = _policy(args.init, cfg, kind) if args.init else None
    write_manifest(out, args, cfg)
    result = train(cfg.scenarios, cfg.ppo, cfg.limits, cfg.obs, cfg.reward, cfg.sensor, kind=kind,
                   out_dir=out, policy=init)
    print(f"trained {result.steps} steps in {result.updates} updates; "
          f"checkpoint {out / 'policy.ckpt'}; curve {out / 'training_curve.csv'}")
    if args.figures:
        from .plotting import plot_training_curve
        print(f"figure {plot_training_curve(result.curve, out / 'figures' / 'training_curve.png')}")


def _figures_for(reports, cfg: Resolved, out: Path) -> None:
    from .plotting import plot_success, plot_trajectory, plot_velocities
    fig_dir = out / "figures"
    by_name = {s.name: s for s in cfg.scenarios}
    for rep in reports:
        stem = f"{rep.planner}_{rep.scenario}"
        plot_trajectory(rep.records, by_name[rep.scenario], fig_dir / f"{stem}_paths.png")
        plot_velocities(rep.records[0], cfg.limits, fig_dir / f"{stem}_velocity.png")
    plot_success(reports, fig_dir / "success.png")
    print(f"figures in {fig_dir}")


def _print_summary(reports) -> None:
    for rep in reports:
        print(f"{rep.planner:>14} {rep.scenario:>16}  success {rep.success_rate:.2f}  "
              f"length {rep.avg_length:.2f} m  velocity {rep.avg_velocity:.3f} m/s  "
              f"violations {rep.violation_rate:.3f}")


def cmd_eval(args, cfg: Resolved, out: Path) -> None:
    planner = _planner(args, cfg)
    write_manifest(out, args, cfg)
    reports = compare([planner], cfg.scenarios, args.trials, args.seed, cfg.limits, cfg.obs, cfg.reward,
                      cfg.sensor)
    path = out / "metrics.csv"
    write_report(reports, path)
    if args.trajectories:
        traj_dir = out / "trajectories"
        traj_dir.mkdir(exist_ok=True)
        for rep in reports:
            for i, rec in enumerate(rep.records):
                write_trajectory(rec, traj_dir / f"{rep.planner}_{rep.scenario}_{i:03d}.csv")
    _print_summary(reports)
    print(f"metrics {path}")
    if args.figures:
        _figures_for(reports, cfg, out)


def cmd_compare(args, cfg: Resolved, out: Path) -> None:
    planners = [DWAPlanner(cfg.limits, cfg.dwa)]
    if args.checkpoint:
        planners.append(PolicyPlanner(_policy(args.checkpoint, cfg), cfg.limits))
    if args.unconstrained:
        planners.append(UnconstrainedPlanner(_policy(args.unconstrained, cfg, CONTINUOUS), cfg.limits))
    write_manifest(out, args, cfg)
    reports = compare(planners, cfg.scenarios, args.trials, args.seed, cfg.limits, cfg.obs, cfg.reward,
                      cfg.sensor)
    write_report(reports, out / "comparison.csv")
    _print_summary(reports)
    print(f"metrics {out / 'comparison.csv'}")
    if args.figures:
        _figures_for(reports, cfg, out)


def cmd_ablate(args, cfg: Resolved, out: Path) -> None:
    given = {"pr-on": args.pr_on, "pr-off": args.pr_off, "4-channel": args.four, "3-channel": args.three}
    arms = ablation_arms(cfg.obs, cfg.reward)
    write_manifest(out, args, cfg)
    policies = {}
    for arm in arms:
        expect_cfg = dataclasses.replace(cfg, obs=arm.obs_cfg, reward=arm.reward_cfg)
        if given[arm.arm]:
            policies[arm.arm] = _policy(given[arm.arm], expect_cfg)
            continue
        if args.steps is None:
            raise ConfigError(f"no checkpoint for arm {arm.arm}; pass it or give --steps to train one")
        log.info("training arm %s", arm.arm)
        res = train(cfg.scenarios, cfg.ppo, cfg.limits, arm.obs_cfg, arm.reward_cfg, cfg.sensor,
                    out_dir=out / arm.arm)
        policies[arm.arm] = res.policy
    results = ablation_suite(arms, policies, cfg.scenarios, args.trials, args.seed, cfg.limits, cfg.sensor)
    write_ablation(results, out / "ablation.csv")
    for res in results:
        rep = res.report
        print(f"{res.arm.ablation:>12} {res.arm.arm:>10} {rep.scenario:>16}  success {rep.success_rate:.2f}")
    print(f"report {out / 'ablation.csv'}")
    if args.figures:
        from .plotting import plot_success
        reps = [dataclasses.replace(r.report, planner=r.arm.arm) for r in results]
        print(f"figure {plot_success(reps, out / 'figures' / 'ablation_success.png')}")


def cmd_dump_obs(args, cfg: Resolved, out: Path) -> None:
    env = NavEnv(cfg.scenarios[0], cfg.limits, cfg.obs, cfg.reward, cfg.sensor)
    env.reset(args.seed)
    planner = DWAPlanner(cfg.limits, cfg.dwa)
    write_manifest(out, args, cfg)
    dump_dir = out / "observations"
    dump_dir.mkdir(exist_ok=True)
    rows = []
    for t in range(args.steps + 1):
        block = env.observation()
        dump_block(block, dump_dir / f"obs_{t:04d}.json")
        s = env.state
        rows.append({"step": t, "x": s.pose.x, "y": s.pose.y, "theta": s.pose.theta,
                     "v": s.velocity.v, "w": s.velocity.w, "best_v": block.action_map[0].v,
                     "best_w": block.action_map[0].w, "best_tc": float(block.tc[0])})
        if t == args.steps:
            break
        if env.step(planner.command(env)).done:
            break
    with open(out / "observations.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    print(f"dumped {len(rows)} observation blocks to {dump_dir}")


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    common.add_argument("--k", type=int, help="window discretization per axis")
    common.add_argument("--n", type=int, help="obstacle history length")
    common.add_argument("--channels", type=int, choices=(3, 4), help="observation channels")
    common.add_argument("--dt", type=float, help="control period in seconds")
    common.add_argument("--robot", action="append", metavar="KEY=VALUE", help="robot limit override")
    common.add_argument("--reward", action="append", metavar="KEY=VALUE", help="reward constant override")
    common.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSVs")
    common.add_argument("-v", "--verbose", action="store_true")

    scen_help = f"bundled name ({', '.join(BUILTIN_SCENARIOS)}) or YAML path"
    p = _Parser(prog="dwarl", description="Dynamic-window navigation with a learned action selector.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="train a policy with PPO")
    t.add_argument("--scenario", action="append", help=f"{scen_help}; repeat to spread workers")
    t.add_argument("--steps", type=int, help="total environment steps")
    t.add_argument("--workers", type=int, help="parallel rollout workers")
    t.add_argument("--kind", choices=("discrete", "continuous"), default="discrete",
                   help="continuous trains the unconstrained ablation policy")
    t.add_argument("--ppo", action="append", metavar="KEY=VALUE", help="PPO setting override")
    t.add_argument("--init", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="run a trial battery for one planner")
    e.add_argument("--planner", choices=("dwa", "dwa-rl", "unconstrained", "random"), required=True)
    e.add_argument("--scenario", action="append", help=scen_help)
    e.add_argument("--checkpoint", help="policy checkpoint for dwa-rl / unconstrained")
    e.add_argument("--trials", type=int, default=50)
    e.add_argument("--mode", choices=("greedy", "sample"), default=None,
                   help="action selection (default greedy for dwa-rl, sample for unconstrained)")
    e.add_argument("--trajectories", action="store_true", help="dump per-episode trajectory CSVs")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", parents=[common], help="DWA vs learned planners across scenarios")
    c.add_argument("--scenario", action="append", help=f"{scen_help} (default: the four benchmarks)")
    c.add_argument("--checkpoint", help="DWA-RL checkpoint")
    c.add_argument("--unconstrained", help="continuous-output checkpoint for the unconstrained arm")
    c.add_argument("--trials", type=int, default=50)
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("ablate", parents=[common], help="reward and observation ablations")
    a.add_argument("--scenario", action="append", help=f"{scen_help} (default: the four benchmarks)")
    a.add_argument("--pr-on", help="checkpoint trained with positive reinforcement")
    a.add_argument("--pr-off", help="checkpoint trained without positive reinforcement")
    a.add_argument("--four", help="checkpoint with the 4-channel observation")
    a.add_argument("--three", help="checkpoint with the 3-channel observation")
    a.add_argument("--steps", type=int, help="train missing arms for this many steps")
    a.add_argument("--ppo", action="append", metavar="KEY=VALUE", help="PPO setting override")
    a.add_argument("--trials", type=int, default=50)
    a.set_defaults(func=cmd_ablate)

    d = sub.add_parser("dump-obs", parents=[common], help="export observation blocks along a DWA rollout")
    d.add_argument("--scenario", help=scen_help, default="zigzag-static")
    d.add_argument("--steps", type=int, default=10, help="control steps to roll out")
    d.set_defaults(func=cmd_dump_obs)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help / --version exit 0, parse errors exit with the usage code
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if getattr(args, "trials", 1) < 1:
            raise ConfigError("--trials must be at least 1")
        if args.command == "dump-obs" and args.steps < 0:
            raise ConfigError("--steps must be non-negative")
        if args.command == "eval" and args.mode is None:
            args.mode = "sample" if args.planner == "unconstrained" else "greedy"
        cfg = resolve(args)
        out = _out_dir(args)
        args.func(args, cfg, out)
    except FileNotFoundError as exc:
        print(f"dwarl: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except CheckpointError as exc:
        print(f"dwarl: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (ConfigError, ScenarioError) as exc:
        print(f"dwarl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"dwarl: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"dwarl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
