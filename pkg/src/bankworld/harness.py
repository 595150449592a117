"""Training and evaluation loops, exact solver, metrics, persistence.

A run is fully determined by its config: every random draw traces back
to the single run seed. Training anneals exploration per the schedule in
`learner.epsilon_at`; evaluation replays greedy episodes with derived
seeds (run seed + run index) and never writes to the tables.

`value_iteration_oracle` solves a single sub-task (fetch or deposit)
exactly over its enumerated projected state space; transitions are
deterministic, so sweeps converge to the literal fixed point and the
sweep loop exits when nothing changes. The oracle doubles as the
reference for "optimal episode return", obtained by rolling its greedy
policy through a real episode.
"""

from __future__ import annotations

import csv
import os
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .abstraction import (
    AbstractState,
    DropState,
    PickupState,
    parse_state,
    serialize_state,
)
from .environment import (
    ACTIONS,
    Action,
    ConfigError,
    Dropped,
    GridConfig,
    is_terminal,
    reset,
)
from .learner import (
    DROP_TABLE,
    PICKUP_TABLE,
    ControllerMode,
    Hyperparams,
    Method,
    QTable,
    controller_step,
    epsilon_at,
    fresh_tables,
)
from .planner import Assignment

ORACLE_PAIR_LIMIT = 1_000_000
THRESHOLD_WINDOW = 50
NOT_REACHED = "not-reached"


class ParseError(ValueError):
    """Malformed metrics or Q-table file; message carries the line."""


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig
    mode: ControllerMode
    hyper: Hyperparams
    episodes: int
    eval_runs: int = 10
    output_dir: Optional[Path] = None

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.eval_runs < 1:
            raise ConfigError("eval_runs must be >= 1")


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    total_reward: int
    steps_used: int
    gems_dropped: int
    epsilon: float


@dataclass
class TrainResult:
    tables: dict[str, QTable]
    records: list[EpisodeRecord]
    planner_calls: int = 0


def _episode_seed(run_seed: int, episode: int) -> int:
    # Mode-independent so all comparison arms see identical resets.
    return run_seed * 1_000_003 + episode


def _run_episode(
    grid: GridConfig,
    mode: ControllerMode,
    tables: dict[str, QTable],
    h: Hyperparams,
    epsilon: float,
    rng: random.Random,
    reset_seed: int,
    episode: int,
    learn: bool,
    stats: Optional[dict] = None,
) -> EpisodeRecord:
    state = reset(grid, reset_seed)
    assignment = Assignment.empty()
    total = 0
    while not is_terminal(state, grid):
        state, assignment, outcomes = controller_step(
            state, grid, mode, tables, assignment, epsilon, h, rng, learn, stats
        )
        for outcome in outcomes:
            total += outcome.reward
    dropped = sum(1 for g in state.gems if type(g) is Dropped)
    recorded_eps = 1.0 if mode.method is Method.RANDOM else epsilon
    return EpisodeRecord(episode, total, state.step, dropped, recorded_eps)


def train(cfg: RunConfig) -> TrainResult:
    """Run the full training budget and return tables plus the log.

    Random-policy runs learn nothing and return empty tables; their
    records carry epsilon 1.0 (every action is a uniform draw).
    """
    tables = fresh_tables(cfg.mode)
    rng = random.Random(cfg.hyper.seed)
    stats = {"planner_calls": 0}
    records = []
    for episode in range(cfg.episodes):
        eps = epsilon_at(episode, cfg.episodes, cfg.hyper)
        records.append(
            _run_episode(
                cfg.grid,
                cfg.mode,
                tables,
                cfg.hyper,
                eps,
                rng,
                _episode_seed(cfg.hyper.seed, episode),
                episode,
                learn=True,
                stats=stats,
            )
        )
    return TrainResult(tables, records, stats["planner_calls"])


def evaluate(tables: dict[str, QTable], cfg: RunConfig) -> list[EpisodeRecord]:
    """Greedy test episodes, one per eval run, seeds seed+0..seed+n-1.

    Tables are read-only here; a mode/table mismatch is rejected.
    """
    if set(tables) != set(cfg.mode.table_keys()):
        raise ConfigError(
            f"tables {sorted(tables)} do not match mode {cfg.mode.method.value}"
        )
    records = []
    for run in range(cfg.eval_runs):
        seed = cfg.hyper.seed + run
        records.append(
            _run_episode(
                cfg.grid,
                cfg.mode,
                tables,
                cfg.hyper,
                0.0,
                random.Random(seed),
                seed,
                run,
                learn=False,
            )
        )
    return records


# --------------------------- exact solver ---------------------------


class SubtaskMDP:
    """Deterministic single-agent model of one sub-task.

    Mirrors `environment.step_agent` exactly on the projected states:
    fetch runs over (agent position, gem position) pairs and ends on
    pickup; deposit runs over agent positions and ends at the bank.
    """

    PICKUP = "pickup"
    DROP = "drop"

    def __init__(self, grid: GridConfig, task: str):
        if task not in (self.PICKUP, self.DROP):
            raise ConfigError(f"unknown sub-task {task!r}")
        self.grid = grid
        self.task = task

    def states(self) -> list[AbstractState]:
        g = self.grid
        cells = [(r, c) for r in range(g.height) for c in range(g.width)]
        if self.task == self.DROP:
            return [DropState(p) for p in cells]
        return [
            PickupState(p, q) for p in cells for q in cells if q != g.bank
        ]

    def step(self, s: AbstractState, a: Action) -> tuple[Optional[AbstractState], int, bool]:
        g = self.grid
        r, c = s.agent_pos
        dr, dc = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))[a]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < g.height and 0 <= nc < g.width):
            return s, -5, False
        if dr == 0 and dc == 0:
            return s, g.noop_reward, False
        pos = (nr, nc)
        if self.task == self.PICKUP:
            if pos == s.gem_pos:
                return None, 50, True
            return PickupState(pos, s.gem_pos), -1, False
        if pos == g.bank:
            return None, 500, True
        return DropState(pos), -1, False


def value_iteration_oracle(
    grid: GridConfig, task: str, gamma: float = 0.95, tol: float = 1e-9
) -> QTable:
    """Exact action values for one sub-task by repeated Bellman sweeps.

    Refuses instances beyond `ORACLE_PAIR_LIMIT` state-action pairs.
    """
    mdp = SubtaskMDP(grid, task)
    states = mdp.states()
    if len(states) * 5 > ORACLE_PAIR_LIMIT:
        raise ConfigError(
            f"{len(states) * 5} state-action pairs exceed the oracle limit"
        )
    transitions = [
        (s, [mdp.step(s, a) for a in ACTIONS]) for s in states
    ]
    q = QTable()
    rows = {s: q.row(s) for s in states}
    while True:
        delta = 0.0
        for s, outcomes in transitions:
            row = rows[s]
            for a, (s_next, reward, terminal) in enumerate(outcomes):
                target = reward if terminal else reward + gamma * max(rows[s_next])
                change = abs(target - row[a])
                if change > delta:
                    delta = change
                row[a] = target
        if delta < tol:
            return q


def greedy_subtask_return(
    q: QTable, mdp: SubtaskMDP, start: AbstractState, gamma: float
) -> float:
    """Discounted return of the greedy rollout from ``start``.

    Accumulated back-to-front so the arithmetic matches the Bellman
    recursion float-for-float; a rollout that fails to finish within the
    state-space diameter's worth of slack returns -inf.
    """
    rewards = []
    s = start
    limit = 5 * (mdp.grid.width * mdp.grid.height + 10)
    for _ in range(limit):
        s, reward, terminal = mdp.step(s, q.best_action(s))
        rewards.append(reward)
        if terminal:
            ret = 0.0
            for r in reversed(rewards):
                ret = r + gamma * ret
            return ret
    return float("-inf")


def oracle_episode_return(grid: GridConfig, gamma: float = 0.95) -> int:
    """Total reward of one greedy episode driven by the exact solver.

    This is the planner-mode optimum used as the basis for the
    learning-speed threshold.
    """
    tables = {
        PICKUP_TABLE: value_iteration_oracle(grid, SubtaskMDP.PICKUP, gamma),
        DROP_TABLE: value_iteration_oracle(grid, SubtaskMDP.DROP, gamma),
    }
    mode = ControllerMode(Method.OPTIONS, planner_enabled=True)
    record = _run_episode(
        grid, mode, tables, Hyperparams(gamma=gamma), 0.0, random.Random(0), 0, 0, learn=False
    )
    return record.total_reward


# --------------------------- experiment suites ---------------------------


@dataclass(frozen=True)
class SummaryRow:
    method: str
    planner: str
    mean_eval_reward: float
    std_eval_reward: float
    episodes_to_threshold: Optional[int]


def episodes_to_threshold(
    records: Sequence[EpisodeRecord], threshold: float, window: int = THRESHOLD_WINDOW
) -> Optional[int]:
    """First episode whose trailing-window mean reward meets the
    threshold, or None when it never does."""
    if len(records) < window:
        return None
    running = sum(r.total_reward for r in records[:window])
    if running / window >= threshold:
        return records[window - 1].episode
    for i in range(window, len(records)):
        running += records[i].total_reward - records[i - window].total_reward
        if running / window >= threshold:
            return records[i].episode
    return None


def _arm_worker(cfg: RunConfig) -> tuple[list[EpisodeRecord], list[EpisodeRecord], int]:
    result = train(cfg)
    eval_records = evaluate(result.tables, cfg)
    return result.records, eval_records, result.planner_calls


def _pool_size(n_arms: int) -> int:
    raw = os.environ.get("MACOPT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = n_arms
    return max(1, min(n, n_arms))


def _run_arms(configs: list[RunConfig]) -> list[tuple[list[EpisodeRecord], list[EpisodeRecord], int]]:
    workers = _pool_size(len(configs))
    if workers == 1:
        return [_arm_worker(cfg) for cfg in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_arm_worker, configs))


def _summary_row(
    method: Method,
    planner_enabled: bool,
    train_records: Sequence[EpisodeRecord],
    eval_records: Sequence[EpisodeRecord],
    threshold: float,
) -> SummaryRow:
    rewards = [r.total_reward for r in eval_records]
    mean = statistics.fmean(rewards)
    std = statistics.stdev(rewards) if len(rewards) > 1 else 0.0
    return SummaryRow(
        method=method.value,
        planner="on" if planner_enabled else "off",
        mean_eval_reward=mean,
        std_eval_reward=std,
        episodes_to_threshold=episodes_to_threshold(train_records, threshold),
    )


def _write_arm_artifacts(out_dir: Optional[Path], labels, results) -> None:
    if out_dir is None:
        return
    for label, (train_recs, eval_recs, _) in zip(labels, results):
        arm_dir = Path(out_dir) / label
        arm_dir.mkdir(parents=True, exist_ok=True)
        write_metrics(train_recs, arm_dir / "metrics.csv")
        write_metrics(eval_recs, arm_dir / "eval_metrics.csv")
        write_plot_script(arm_dir / "metrics.csv")


def compare_methods(
    base: RunConfig, threshold: Optional[float] = None, out_dir: Optional[Path] = None
) -> list[SummaryRow]:
    """Train and test random, flat, and options learning under one grid
    and seed; returns one summary row per method."""
    if threshold is None:
        threshold = 0.8 * oracle_episode_return(base.grid, base.hyper.gamma)
    methods = [Method.RANDOM, Method.FLAT, Method.OPTIONS]
    configs = [
        replace(base, mode=ControllerMode(m, base.mode.planner_enabled)) for m in methods
    ]
    results = _run_arms(configs)
    _write_arm_artifacts(out_dir, [m.value for m in methods], results)
    return [
        _summary_row(m, base.mode.planner_enabled, train_recs, eval_recs, threshold)
        for m, (train_recs, eval_recs, _) in zip(methods, results)
    ]


def compare_planner(
    base: RunConfig, threshold: Optional[float] = None, out_dir: Optional[Path] = None
) -> list[SummaryRow]:
    """Options learning with the planner on versus off, same budget.

    The planner-off arm must never consult the planner; that is checked
    here rather than trusted.
    """
    if base.mode.method is not Method.OPTIONS:
        raise ConfigError("planner comparison runs options mode only")
    if threshold is None:
        threshold = 0.8 * oracle_episode_return(base.grid, base.hyper.gamma)
    configs = [
        replace(base, mode=ControllerMode(Method.OPTIONS, planner_enabled=True)),
        replace(base, mode=ControllerMode(Method.OPTIONS, planner_enabled=False)),
    ]
    results = _run_arms(configs)
    off_calls = results[1][2]
    if off_calls != 0:
        raise AssertionError(f"planner consulted {off_calls} times with planner off")
    _write_arm_artifacts(out_dir, ["planner-on", "planner-off"], results)
    return [
        _summary_row(Method.OPTIONS, enabled, train_recs, eval_recs, threshold)
        for enabled, (train_recs, eval_recs, _) in zip((True, False), results)
    ]


# --------------------------- persistence ---------------------------

METRICS_HEADER = ["episode", "total_reward", "steps_used", "gems_dropped", "epsilon"]
SUMMARY_HEADER = [
    "method",
    "planner",
    "mean_eval_reward",
    "std_eval_reward",
    "episodes_to_threshold",
]


def write_metrics(records: Sequence[EpisodeRecord], path: Path) -> None:
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(METRICS_HEADER)
        for r in records:
            out.writerow([r.episode, r.total_reward, r.steps_used, r.gems_dropped, repr(r.epsilon)])


def write_summary(rows: Sequence[SummaryRow], path: Path) -> None:
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(SUMMARY_HEADER)
        for row in rows:
            reached = NOT_REACHED if row.episodes_to_threshold is None else row.episodes_to_threshold
            out.writerow(
                [row.method, row.planner, repr(row.mean_eval_reward), repr(row.std_eval_reward), reached]
            )


def _hyper_header(mode: ControllerMode, hyper: Hyperparams) -> str:
    decay = "none" if hyper.alpha_visit_decay is None else repr(hyper.alpha_visit_decay)
    return (
        f"# mode={mode.method.value} planner={'on' if mode.planner_enabled else 'off'}"
        f" alpha={hyper.alpha!r} gamma={hyper.gamma!r}"
        f" eps_start={hyper.eps_start!r} eps_end={hyper.eps_end!r}"
        f" eps_decay_fraction={hyper.eps_decay_fraction!r}"
        f" alpha_visit_decay={decay} seed={hyper.seed}"
    )


def write_qtable(
    tables: dict[str, QTable], path: Path, mode: ControllerMode, hyper: Hyperparams
) -> None:
    """One file for all tables: a header line with the run settings,
    then per-table sections of ``state,action,value`` records, sorted
    for byte-stable output."""
    lines = [_hyper_header(mode, hyper)]
    for key in sorted(tables):
        lines.append(f"# option={key}")
        records = [
            f"{serialize_state(s)},{a},{value!r}" for s, a, value in tables[key].items()
        ]
        lines.extend(sorted(records))
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def _parse_header(line: str, path: Path) -> tuple[ControllerMode, Hyperparams]:
    pairs = {}
    for token in line.lstrip("#").split():
        key, _, value = token.partition("=")
        pairs[key] = value
    try:
        mode = ControllerMode(Method(pairs["mode"]), pairs["planner"] == "on")
        decay = pairs.get("alpha_visit_decay", "none")
        hyper = Hyperparams(
            alpha=float(pairs["alpha"]),
            gamma=float(pairs["gamma"]),
            eps_start=float(pairs["eps_start"]),
            eps_end=float(pairs["eps_end"]),
            eps_decay_fraction=float(pairs["eps_decay_fraction"]),
            seed=int(pairs["seed"]),
            alpha_visit_decay=None if decay == "none" else float(decay),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}:1: bad header ({exc})") from None
    return mode, hyper


def read_qtable(path: Path) -> tuple[ControllerMode, Hyperparams, dict[str, QTable]]:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParseError(f"{path}:1: missing header line")
    mode, hyper = _parse_header(lines[0], path)
    tables: dict[str, QTable] = {}
    current: Optional[QTable] = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("# option="):
            key = line.partition("=")[2].strip()
            current = tables.setdefault(key, QTable())
            continue
        if current is None:
            raise ParseError(f"{path}:{lineno}: record before any option section")
        try:
            head, action_text, value_text = line.rsplit(",", 2)
            state = parse_state(head)
            action = int(action_text)
            value = float(value_text)
            if not 0 <= action < 5:
                raise ValueError(f"action index {action} out of range")
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        current.row(state)[action] = value
    return mode, hyper, tables


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot total reward per episode from {csv_name} (same directory)."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "{csv_name}", newline="") as f:
    rows = list(csv.DictReader(f))
episodes = [int(r["episode"]) for r in rows]
rewards = [float(r["total_reward"]) for r in rows]

fig, ax = plt.subplots(figsize=(8, 4.5))
ax.plot(episodes, rewards, linewidth=0.8)
ax.set_xlabel("episode")
ax.set_ylabel("total reward")
ax.set_title("Reward per episode")
fig.tight_layout()
out = here / "reward_vs_episode.png"
fig.savefig(out, dpi=150)
print(f"wrote {{out}}")
'''


def write_plot_script(metrics_path: Path) -> Path:
    """Drop a standalone plotting script next to a metrics CSV."""
    metrics_path = Path(metrics_path)
    script = metrics_path.parent / "plot_metrics.py"
    with open(script, "w", newline="") as f:
        f.write(_PLOT_TEMPLATE.format(csv_name=metrics_path.name))
    return script


def run_and_save(cfg: RunConfig) -> TrainResult:
    """Train, then write metrics, tables, and the plot script to the
    run's output directory."""
    if cfg.output_dir is None:
        raise ConfigError("run config has no output directory")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg)
    write_metrics(result.records, out / "metrics.csv")
    write_qtable(result.tables, out / "qtable.csv", cfg.mode, cfg.hyper)
    write_plot_script(out / "metrics.csv")
    return result
