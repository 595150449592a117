"""Command-line entry point.

Subcommands: ``train``, ``eval``, ``compare-methods``, ``compare-planner``,
``oracle``. Settings resolve in three layers: built-in defaults, then a
``--config`` file of ``key = value`` lines (keys mirror the flag names,
plus an optional ``[layout]`` section of ``agent.N = r,c`` and
``gem.N = r,c`` entries), then explicit flags. Every run echoes its fully
resolved settings to ``config.txt`` in the output directory, in the same
format the config file uses.

Exit codes: 0 on success, 2 for usage errors (the offending flag is
named), 1 for runtime failures such as missing or malformed files.
"""

from __future__ import annotations

import re
import statistics
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from .environment import ConfigError, FixedLayout, GridConfig, Layout, Position, RandomLayout
from .harness import (
    NOT_REACHED,
    ParseError,
    RunConfig,
    compare_methods,
    compare_planner,
    evaluate,
    read_qtable,
    run_and_save,
    value_iteration_oracle,
    write_metrics,
    write_plot_script,
    write_qtable,
    write_summary,
)
from .learner import ControllerMode, Hyperparams, Method


class UsageError(ValueError):
    """Bad flag or flag combination; message names the culprit."""


_DEFAULTS = {
    "method": "q-options",
    "planner": "on",
    "grid": "11x11",
    "agents": 2,
    "gems": 3,
    "episodes": 6000,
    "steps": 1000,
    "noop-reward": 0,
    "alpha": 0.1,
    "gamma": 0.95,
    "eps-start": 1.0,
    "eps-end": 0.05,
    "eps-decay-frac": 0.8,
    "seed": 0,
    "runs": 10,
    "random-layout": False,
}

_CONVERTERS = {
    "method": str,
    "planner": str,
    "grid": str,
    "agents": int,
    "gems": int,
    "episodes": int,
    "steps": int,
    "noop-reward": int,
    "alpha": float,
    "gamma": float,
    "eps-start": float,
    "eps-end": float,
    "eps-decay-frac": float,
    "seed": int,
    "runs": int,
    "random-layout": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


@dataclass
class Settings:
    values: dict
    layout: Optional[Layout]

    def __getitem__(self, key):
        return self.values[key]


@dataclass
class TrainCmd:
    run: RunConfig


@dataclass
class EvalCmd:
    qtable: Path
    run: RunConfig
    method_flag: Optional[str]
    planner_flag: Optional[str]
    seed_flag: Optional[int]


@dataclass
class CompareMethodsCmd:
    run: RunConfig


@dataclass
class ComparePlannerCmd:
    run: RunConfig


@dataclass
class OracleCmd:
    grid: GridConfig
    task: str
    gamma: float
    out: Path


CliCommand = Union[TrainCmd, EvalCmd, CompareMethodsCmd, ComparePlannerCmd, OracleCmd]


def _parse_position(text: str) -> Position:
    r, _, c = text.partition(",")
    return (int(r.strip()), int(c.strip()))


def read_config_file(path: Path) -> tuple[dict, Optional[FixedLayout]]:
    """Parse the flat key=value format with its [layout] section."""
    values: dict = {}
    agents: dict[int, Position] = {}
    gems: dict[int, Position] = {}
    in_layout = False
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line == "[layout]":
                in_layout = True
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            try:
                if in_layout:
                    kind, _, index = key.partition(".")
                    if kind == "agent":
                        agents[int(index)] = _parse_position(value)
                    elif kind == "gem":
                        gems[int(index)] = _parse_position(value)
                    else:
                        raise ValueError(f"unknown layout entry {key!r}")
                else:
                    if key not in _CONVERTERS:
                        raise ValueError(f"unknown setting {key!r}")
                    values[key] = _CONVERTERS[key](value)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    layout = None
    if agents or gems:
        layout = FixedLayout(
            agents=tuple(agents[i] for i in sorted(agents)),
            gems=tuple(gems[i] for i in sorted(gems)),
        )
    return values, layout


def _require(condition: bool, flag: str, message: str) -> None:
    if not condition:
        raise UsageError(f"{flag}: {message}")


def _resolve_settings(args) -> Settings:
    file_values: dict = {}
    layout: Optional[Layout] = None
    if args.config is not None:
        file_values, layout = read_config_file(Path(args.config))
    values = dict(_DEFAULTS)
    values.update(file_values)
    for key in _DEFAULTS:
        flag_value = getattr(args, key.replace("-", "_"), None)
        if flag_value is not None and flag_value is not False:
            values[key] = flag_value

    match = re.fullmatch(r"(\d+)x(\d+)", values["grid"])
    _require(match is not None, "--grid", f"expected WxH, got {values['grid']!r}")
    width, height = int(match.group(1)), int(match.group(2))
    _require(width >= 3 and height >= 3, "--grid", f"grid must be at least 3x3, got {values['grid']}")
    _require(values["agents"] >= 1, "--agents", "need at least one agent")
    _require(values["gems"] >= 1, "--gems", "need at least one gem")
    _require(values["episodes"] >= 1, "--episodes", "must be >= 1")
    _require(values["steps"] >= 1, "--steps", "must be >= 1")
    _require(values["runs"] >= 1, "--runs", "must be >= 1")
    _require(values["noop-reward"] in (0, -1), "--noop-reward", "must be 0 or -1")
    _require(0.0 < values["alpha"] <= 1.0, "--alpha", "must be in (0, 1]")
    _require(0.0 <= values["gamma"] <= 1.0, "--gamma", "must be in [0, 1]")
    _require(0.0 <= values["eps-start"] <= 1.0, "--eps-start", "must be in [0, 1]")
    _require(0.0 <= values["eps-end"] <= values["eps-start"], "--eps-end", "must be in [0, eps-start]")
    _require(0.0 <= values["eps-decay-frac"] <= 1.0, "--eps-decay-frac", "must be in [0, 1]")
    _require(values["method"] in ("random", "q", "q-options"), "--method", f"unknown method {values['method']!r}")
    _require(values["planner"] in ("on", "off"), "--planner", "must be on or off")

    values["grid-size"] = (width, height)
    if layout is None and values["random-layout"]:
        layout = RandomLayout()
    return Settings(values, layout)


def _build_run_config(settings: Settings, out: Optional[str]) -> RunConfig:
    v = settings.values
    width, height = v["grid-size"]
    try:
        grid = GridConfig(
            width=width,
            height=height,
            num_agents=v["agents"],
            num_gems=v["gems"],
            step_limit=v["steps"],
            layout=settings.layout,
            noop_reward=v["noop-reward"],
        )
        hyper = Hyperparams(
            alpha=v["alpha"],
            gamma=v["gamma"],
            eps_start=v["eps-start"],
            eps_end=v["eps-end"],
            eps_decay_fraction=v["eps-decay-frac"],
            seed=v["seed"],
        )
        mode = ControllerMode(Method(v["method"]), v["planner"] == "on")
        return RunConfig(
            grid=grid,
            mode=mode,
            hyper=hyper,
            episodes=v["episodes"],
            eval_runs=v["runs"],
            output_dir=Path(out) if out is not None else None,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def write_config_echo(cfg: RunConfig, path: Path) -> None:
    lines = [
        f"method = {cfg.mode.method.value}",
        f"planner = {'on' if cfg.mode.planner_enabled else 'off'}",
        f"grid = {cfg.grid.width}x{cfg.grid.height}",
        f"agents = {cfg.grid.num_agents}",
        f"gems = {cfg.grid.num_gems}",
        f"episodes = {cfg.episodes}",
        f"steps = {cfg.grid.step_limit}",
        f"noop-reward = {cfg.grid.noop_reward}",
        f"alpha = {cfg.hyper.alpha!r}",
        f"gamma = {cfg.hyper.gamma!r}",
        f"eps-start = {cfg.hyper.eps_start!r}",
        f"eps-end = {cfg.hyper.eps_end!r}",
        f"eps-decay-frac = {cfg.hyper.eps_decay_fraction!r}",
        f"seed = {cfg.hyper.seed}",
        f"runs = {cfg.eval_runs}",
    ]
    layout = cfg.grid.layout
    if isinstance(layout, RandomLayout):
        lines.append("random-layout = true")
    else:
        lines.append("")
        lines.append("[layout]")
        for i, pos in enumerate(layout.agents):
            lines.append(f"agent.{i} = {pos[0]},{pos[1]}")
        for i, pos in enumerate(layout.gems):
            lines.append(f"gem.{i} = {pos[0]},{pos[1]}")
    path.write_text("\n".join(lines) + "\n")


def _build_parser():
    import argparse

    parser = argparse.ArgumentParser(
        prog="bankworld",
        description="Multi-agent gem-collection gridworld: train and compare tabular learners.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_out=True):
        p.add_argument("--config", help="config file; flags override its values")
        p.add_argument("--method", choices=["random", "q", "q-options"])
        p.add_argument("--planner", choices=["on", "off"])
        p.add_argument("--grid", help="grid size as WxH, e.g. 11x11")
        p.add_argument("--agents", type=int)
        p.add_argument("--gems", type=int)
        p.add_argument("--episodes", type=int)
        p.add_argument("--steps", type=int, help="step limit per episode")
        p.add_argument("--runs", type=int, help="greedy evaluation runs")
        p.add_argument("--noop-reward", type=int, choices=[0, -1])
        p.add_argument("--alpha", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--eps-start", type=float)
        p.add_argument("--eps-end", type=float)
        p.add_argument("--eps-decay-frac", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--random-layout", action="store_true", default=None)
        if with_out:
            p.add_argument("--out", required=True, help="output directory for run artifacts")

    p_train = sub.add_parser("train", help="train one method and save its tables")
    add_common(p_train)

    p_eval = sub.add_parser("eval", help="replay greedy episodes from saved tables")
    add_common(p_eval)
    p_eval.add_argument("--qtable", required=True, help="q-table file written by train")

    p_cm = sub.add_parser("compare-methods", help="random vs flat vs options under one seed")
    add_common(p_cm)

    p_cp = sub.add_parser("compare-planner", help="options learning with planner on vs off")
    add_common(p_cp)

    p_oracle = sub.add_parser("oracle", help="solve one sub-task exactly and save its Q map")
    p_oracle.add_argument("--config", help="config file; flags override its values")
    p_oracle.add_argument("--grid")
    p_oracle.add_argument("--agents", type=int)
    p_oracle.add_argument("--gems", type=int)
    p_oracle.add_argument("--steps", type=int)
    p_oracle.add_argument("--noop-reward", type=int, choices=[0, -1])
    p_oracle.add_argument("--gamma", type=float)
    p_oracle.add_argument("--seed", type=int)
    p_oracle.add_argument("--task", required=True, choices=["pickup", "drop"])
    p_oracle.add_argument("--out", required=True, help="output file for the Q map")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> CliCommand:
    """Resolve argv (plus any config file) into a validated command."""
    args = _build_parser().parse_args(argv)
    settings = _resolve_settings(args)
    if args.command == "train":
        return TrainCmd(_build_run_config(settings, args.out))
    if args.command == "eval":
        return EvalCmd(
            Path(args.qtable),
            _build_run_config(settings, args.out),
            args.method,
            args.planner,
            args.seed,
        )
    if args.command == "compare-methods":
        return CompareMethodsCmd(_build_run_config(settings, args.out))
    if args.command == "compare-planner":
        run = _build_run_config(settings, args.out)
        if run.mode.method is not Method.OPTIONS:
            raise UsageError("--method: planner comparison requires q-options")
        return ComparePlannerCmd(run)
    if args.command == "oracle":
        run = _build_run_config(settings, None)
        gamma = args.gamma if args.gamma is not None else settings["gamma"]
        return OracleCmd(run.grid, args.task, gamma, Path(args.out))
    raise UsageError(f"unknown command {args.command!r}")


def _final_mean(records, window=100) -> float:
    tail = records[-window:]
    return statistics.fmean(r.total_reward for r in tail)


def _run_train(cmd: TrainCmd) -> None:
    out = Path(cmd.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_echo(cmd.run, out / "config.txt")
    result = run_and_save(cmd.run)
    print(
        f"trained {cmd.run.mode.method.value} for {cmd.run.episodes} episodes;"
        f" trailing mean reward {_final_mean(result.records):.1f}; artifacts in {out}"
    )


def _run_eval(cmd: EvalCmd) -> None:
    mode, hyper, tables = read_qtable(cmd.qtable)
    if cmd.method_flag is not None and cmd.method_flag != mode.method.value:
        raise ConfigError(
            f"q-table was trained with method {mode.method.value}, not {cmd.method_flag}"
        )
    if cmd.planner_flag is not None and (cmd.planner_flag == "on") != mode.planner_enabled:
        raise ConfigError("q-table planner setting does not match --planner")
    if cmd.seed_flag is not None:
        hyper = replace(hyper, seed=cmd.seed_flag)
    cfg = replace(cmd.run, mode=mode, hyper=hyper)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_echo(cfg, out / "config.txt")
    records = evaluate(tables, cfg)
    write_metrics(records, out / "metrics.csv")
    write_plot_script(out / "metrics.csv")
    rewards = [r.total_reward for r in records]
    std = statistics.stdev(rewards) if len(rewards) > 1 else 0.0
    print(
        f"eval {mode.method.value}: mean reward {statistics.fmean(rewards):.1f}"
        f" (std {std:.1f}) over {len(records)} greedy runs; artifacts in {out}"
    )


def _print_summary(rows) -> None:
    print("method      planner  mean_eval  std_eval  episodes_to_threshold")
    for row in rows:
        reached = NOT_REACHED if row.episodes_to_threshold is None else row.episodes_to_threshold
        print(
            f"{row.method:<11} {row.planner:<8} {row.mean_eval_reward:>9.1f}"
            f" {row.std_eval_reward:>9.1f}  {reached}"
        )


def _run_compare(cmd, compare) -> None:
    out = Path(cmd.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_echo(cmd.run, out / "config.txt")
    rows = compare(cmd.run, out_dir=out)
    write_summary(rows, out / "summary.csv")
    _print_summary(rows)
    print(f"summary written to {out / 'summary.csv'}")


def _run_oracle(cmd: OracleCmd) -> None:
    table = value_iteration_oracle(cmd.grid, cmd.task, cmd.gamma)
    cmd.out.parent.mkdir(parents=True, exist_ok=True)
    write_qtable(
        {cmd.task: table},
        cmd.out,
        ControllerMode(Method.OPTIONS, planner_enabled=True),
        Hyperparams(gamma=cmd.gamma),
    )
    print(f"exact {cmd.task} Q map ({len(table)} entries) written to {cmd.out}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        command = parse_args(argv)
    except SystemExit as exc:  # argparse already reported the problem
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if isinstance(command, TrainCmd):
            _run_train(command)
        elif isinstance(command, EvalCmd):
            _run_eval(command)
        elif isinstance(command, CompareMethodsCmd):
            _run_compare(command, compare_methods)
        elif isinstance(command, ComparePlannerCmd):
            _run_compare(command, compare_planner)
        else:
            _run_oracle(command)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
