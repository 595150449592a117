"""Acceptance suite: the package's exit criteria, one test per criterion.

Each test prints one `ACCEPTANCE <name>: PASS|FAIL` line. Desk scale is
7x7 with a centered bank, 2 agents, 2 gems, fixed corner layout, 2000
episodes of up to 300 steps, default hyperparameters, seeds 1..5 (see
conftest.desk_config).
"""

import random
import statistics

from bankworld.abstraction import NoPlannerState, PickupState
from bankworld.environment import (
    ACTIONS,
    Action,
    CarriedBy,
    Dropped,
    Event,
    GridConfig,
    OnGrid,
    RandomLayout,
    advance_step,
    carried_gem,
    is_terminal,
    reset,
    step_agent,
)
from bankworld.harness import (
    DROP_TABLE,
    PICKUP_TABLE,
    RunConfig,
    SubtaskMDP,
    episodes_to_threshold,
    evaluate,
    greedy_subtask_return,
    oracle_episode_return,
    train,
    value_iteration_oracle,
)
from bankworld.learner import (
    ControllerMode,
    Hyperparams,
    Method,
    controller_step,
    fresh_tables,
)
from bankworld.planner import Assignment

from conftest import desk_grid

SEEDS = (1, 2, 3, 4, 5)


def report(name: str, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'} ({detail})")


def eval_mean(eval_records) -> float:
    return statistics.fmean(r.total_reward for r in eval_records)


class TestMethodOrdering:
    def test_options_beat_flat_beat_random(self, desk_runs):
        means = {}
        for seed in SEEDS:
            for method in (Method.RANDOM, Method.FLAT, Method.OPTIONS):
                _, eval_records, _ = desk_runs(seed, method)
                means[(seed, method)] = eval_mean(eval_records)
        lines = []
        ok = True
        for seed in SEEDS:
            rand = means[(seed, Method.RANDOM)]
            flat = means[(seed, Method.FLAT)]
            opts = means[(seed, Method.OPTIONS)]
            seed_ok = opts > flat > rand and opts - rand >= 300
            ok = ok and seed_ok
            lines.append(
                f"seed {seed}: options {opts:.1f}, flat {flat:.1f}, random {rand:.1f}"
            )
        detail = "; ".join(lines)
        report("method-ordering", ok, detail)
        for seed in SEEDS:
            rand = means[(seed, Method.RANDOM)]
            flat = means[(seed, Method.FLAT)]
            opts = means[(seed, Method.OPTIONS)]
            assert opts - rand >= 300, f"seed {seed}: options {opts} vs random {rand}"
            assert opts > flat > rand, (
                f"seed {seed}: expected options > flat > random,"
                f" got {opts:.1f} / {flat:.1f} / {rand:.1f}"
            )


class TestPlannerAblation:
    def test_planner_reaches_threshold_sooner(self, desk_runs):
        threshold = 0.8 * oracle_episode_return(desk_grid())
        wins = 0
        lines = []
        for seed in SEEDS:
            on_result, _, _ = desk_runs(seed, Method.OPTIONS, planner=True)
            off_result, _, _ = desk_runs(seed, Method.OPTIONS, planner=False)
            assert off_result.planner_calls == 0
            on = episodes_to_threshold(on_result.records, threshold)
            off = episodes_to_threshold(off_result.records, threshold)
            assert on is not None, f"seed {seed}: planner-on never reached {threshold}"
            if off is not None:
                assert off <= 4 * on, f"seed {seed}: planner-off needed {off} > 4x{on}"
            if off is None or on < off:
                wins += 1
            lines.append(f"seed {seed}: on {on}, off {'not-reached' if off is None else off}")
        detail = f"threshold {threshold:.1f}; " + "; ".join(lines)
        report("planner-ablation", wins >= 4, detail)
        assert wins >= 4, detail


def train_subtasks_to_convergence(grid: GridConfig, total_steps: int):
    """Persistent-exploration training on the 3x3 instance: epsilon 0.2,
    step size 1/(1 + visits/100), planner on, options tables."""
    mode = ControllerMode(Method.OPTIONS, planner_enabled=True)
    tables = fresh_tables(mode)
    h = Hyperparams(eps_start=0.2, eps_end=0.2, alpha_visit_decay=100.0, seed=0)
    rng = random.Random(0)
    steps = 0
    episode = 0
    while steps < total_steps:
        state = reset(grid, episode)
        assignment = Assignment.empty()
        while not is_terminal(state, grid) and steps < total_steps:
            state, assignment, _ = controller_step(
                state, grid, mode, tables, assignment, 0.2, h, rng
            )
            steps += grid.num_agents
        episode += 1
    return tables


class TestOracleEquivalence:
    def test_q_learning_matches_exact_solver(self):
        grid = GridConfig(3, 3, 1, 1, 100, layout=RandomLayout())
        gamma = 0.95
        tables = train_subtasks_to_convergence(grid, total_steps=200_000)
        oracles = {
            PICKUP_TABLE: value_iteration_oracle(grid, SubtaskMDP.PICKUP, gamma),
            DROP_TABLE: value_iteration_oracle(grid, SubtaskMDP.DROP, gamma),
        }

        worst = 0.0
        checked = 0
        for key in (PICKUP_TABLE, DROP_TABLE):
            for s, a, value in tables[key].items():
                if tables[key].visits[s][a] == 0:
                    continue
                worst = max(worst, abs(value - oracles[key].get(s, a)))
                checked += 1
        # every decision state must actually have been visited
        bank = grid.bank
        cells = [(r, c) for r in range(3) for c in range(3)]
        expected_pickup = {
            PickupState(p, g) for p in cells for g in cells if g != bank and p != g
        }
        assert expected_pickup <= set(tables[PICKUP_TABLE].rows)
        assert len(tables[DROP_TABLE].rows) >= len(cells) - 1
        assert checked >= 300

        rollout_ok = True
        for task, key in ((SubtaskMDP.PICKUP, PICKUP_TABLE), (SubtaskMDP.DROP, DROP_TABLE)):
            mdp = SubtaskMDP(grid, task)
            for start in list(tables[key].rows)[:20]:
                learned = greedy_subtask_return(tables[key], mdp, start, gamma)
                rollout_ok = rollout_ok and learned == oracles[key].best_value(start)

        passed = worst <= 1e-2 and rollout_ok
        report(
            "oracle-equivalence",
            passed,
            f"max |q - q*| {worst:.2e} over {checked} visited pairs; exact rollouts {rollout_ok}",
        )
        assert worst <= 1e-2
        assert rollout_ok


class TestRewardConformance:
    def test_fuzzed_trajectories_stay_in_reward_alphabet(self):
        grid = GridConfig(5, 5, 2, 3, 80, layout=RandomLayout())
        rng = random.Random(2024)
        allowed = {-5, -1, 0, 50, 500}
        seen = set()
        steps = 0
        episode = 0
        while steps < 100_000:
            state = reset(grid, episode)
            episode += 1
            while not is_terminal(state, grid) and steps < 100_000:
                agent = rng.randrange(grid.num_agents)
                action = ACTIONS[rng.randrange(5)]
                next_state, outcome = step_agent(state, grid, agent, action)
                steps += 1
                seen.add(outcome.reward)
                assert outcome.reward in allowed
                assert (outcome.reward == -5) == (outcome.event is Event.ILLEGAL)
                assert (outcome.reward == 50) == (outcome.event is Event.ACQUIRED)
                assert (outcome.reward == 500) == (outcome.event is Event.DROPPED)
                if outcome.event is Event.ILLEGAL:
                    assert next_state.agent_positions == state.agent_positions
                state = advance_step(next_state)
        report(
            "reward-conformance",
            True,
            f"{steps} fuzzed steps; rewards observed {sorted(seen)}",
        )
        assert {-5, -1, 50, 500} <= seen


def fuzz_config(rng: random.Random) -> RunConfig:
    width = rng.randint(3, 8)
    height = rng.randint(3, 8)
    agents = rng.randint(1, 3)
    gems = rng.randint(1, min(3, width * height - agents - 1))
    method = rng.choice([Method.RANDOM, Method.FLAT, Method.OPTIONS])
    planner = rng.random() < 0.7
    layout = RandomLayout() if rng.random() < 0.7 else None
    grid = GridConfig(width, height, agents, gems, rng.randint(15, 40),
                      layout=layout, noop_reward=rng.choice([0, -1]))
    hyper = Hyperparams(seed=rng.randint(0, 10_000))
    return RunConfig(grid, ControllerMode(method, planner), hyper,
                     episodes=2, eval_runs=2)


def run_checked_training(cfg: RunConfig):
    """Training loop that validates state and allocation invariants after
    every controller step; returns (records-ish trace, tables)."""
    tables = fresh_tables(cfg.mode)
    rng = random.Random(cfg.hyper.seed)
    trace = []
    for episode in range(cfg.episodes):
        state = reset(cfg.grid, cfg.hyper.seed * 1_000_003 + episode)
        assignment = Assignment.empty()
        while not is_terminal(state, cfg.grid):
            state, assignment, outcomes = controller_step(
                state, cfg.grid, cfg.mode, tables, assignment, 0.5,
                cfg.hyper, rng,
            )
            kinds = [type(g) for g in state.gems]
            assert kinds.count(OnGrid) + kinds.count(CarriedBy) + kinds.count(Dropped) == cfg.grid.num_gems
            carriers = [g.agent for g in state.gems if type(g) is CarriedBy]
            assert len(carriers) == len(set(carriers))
            assert len(set(assignment.agent_to_gem.values())) == len(assignment.agent_to_gem)
            assert {g: a for a, g in assignment.agent_to_gem.items()} == dict(assignment.gem_to_agent)
            for gem, agent in assignment.gem_to_agent.items():
                assert type(state.gems[gem]) is not Dropped
                if type(state.gems[gem]) is CarriedBy:
                    assert state.gems[gem].agent == agent
            trace.append((state, tuple(outcomes)))
    return trace, tables


class TestInvariantSuite:
    def test_hundred_fuzzed_configurations(self):
        rng = random.Random(99)
        for case in range(100):
            cfg = fuzz_config(rng)
            trace_a, tables_a = run_checked_training(cfg)
            trace_b, tables_b = run_checked_training(cfg)
            assert trace_a == trace_b, f"case {case}: nondeterministic trajectories"
            assert tables_a == tables_b, f"case {case}: nondeterministic tables"
            rows_before = {k: {s: list(r) for s, r in t.rows.items()} for k, t in tables_a.items()}
            evaluate(tables_a, cfg)
            assert {k: t.rows for k, t in tables_a.items()} == rows_before, (
                f"case {case}: evaluation mutated tables"
            )
        report("invariant-suite", True, "100 fuzzed configurations green")


class TestNoOpEconomics:
    def test_spare_agent_parks_on_noop(self):
        grid = GridConfig(7, 7, 3, 2, 300, noop_reward=0)
        cfg = RunConfig(grid, ControllerMode(Method.OPTIONS, True),
                        Hyperparams(seed=1), episodes=600, eval_runs=1)
        result = train(cfg)

        state = reset(grid, 0)
        assignment = Assignment.empty()
        rng = random.Random(0)
        idle_steps = 0
        forced_noops = 0
        while not is_terminal(state, grid):
            before = state
            idle_agents = [
                i for i in range(grid.num_agents)
                if carried_gem(before, i) is None and i not in assignment.agent_to_gem
            ]
            state, assignment, outcomes = controller_step(
                state, grid, cfg.mode, result.tables, assignment, 0.0,
                cfg.hyper, rng, learn=False,
            )
            # agents idle *after* the in-step allocation refresh
            still_idle = [i for i in idle_agents if i not in assignment.agent_to_gem
                          and carried_gem(state, i) is None]
            for i in still_idle:
                idle_steps += 1
                if (outcomes[i].event is Event.IDLE
                        and state.agent_positions[i] == before.agent_positions[i]):
                    forced_noops += 1
        assert idle_steps > 0
        passed = forced_noops == idle_steps

        # Reported, not gated: with no planner, greedy action at visited
        # nothing-left-to-do states should mostly settle on NoOp.
        off_cfg = RunConfig(grid, ControllerMode(Method.OPTIONS, False),
                            Hyperparams(seed=1), episodes=600, eval_runs=1)
        off = train(off_cfg)
        idle_states = [
            s for s in off.tables[PICKUP_TABLE].rows
            if isinstance(s, NoPlannerState) and not s.carrying
            and all(cell is None for cell in s.gem_cells)
        ]
        noop_share = (
            sum(1 for s in idle_states
                if off.tables[PICKUP_TABLE].best_action(s) is Action.NOOP)
            / len(idle_states)
            if idle_states else float("nan")
        )
        report(
            "noop-economics",
            passed,
            f"{forced_noops}/{idle_steps} idle steps were forced NoOp;"
            f" no-planner greedy NoOp share at exhausted states: {noop_share:.0%}"
            f" of {len(idle_states)} visited (reported, not gated)",
        )
        assert passed
