"""Shared desk-scale runs.

The acceptance suite and a few harness tests train at the same desk
scale (7x7, centered bank, 2 agents, 2 gems, 2000 episodes of up to 300
steps, default hyperparameters). Runs are cached per (seed, method,
planner) for the session so each combination trains exactly once.
"""

import pytest

from bankworld.environment import GridConfig
from bankworld.harness import RunConfig, evaluate, train
from bankworld.learner import ControllerMode, Hyperparams, Method


def desk_grid() -> GridConfig:
    # default_layout(7, 7, 2, 2): agents (0,0),(6,6); gems (0,6),(6,0)
    return GridConfig(width=7, height=7, num_agents=2, num_gems=2, step_limit=300)


def desk_config(seed: int, method: Method, planner: bool) -> RunConfig:
    return RunConfig(
        grid=desk_grid(),
        mode=ControllerMode(method, planner_enabled=planner),
        hyper=Hyperparams(seed=seed),
        episodes=2000,
        eval_runs=10,
    )


@pytest.fixture(scope="session")
def desk_runs():
    cache = {}

    def get(seed: int, method: Method, planner: bool = True):
        key = (seed, method, planner)
        if key not in cache:
            cfg = desk_config(seed, method, planner)
            result = train(cfg)
            eval_records = evaluate(result.tables, cfg)
            cache[key] = (result, eval_records, cfg)
        return cache[key]

    return get
