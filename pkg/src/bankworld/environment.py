"""Grid environment: geometry, multi-agent state, transitions, rewards.

Dynamics
--------
- The grid is ``height x width`` with 0-based ``(row, col)`` cells; the
  bank sits at an interior cell (grid center by default).
- Five primitive actions, indexed 0..4: Up, Down, Left, Right, NoOp.
  Up decreases the row, Down increases it, Left/Right move the column.
- An action that would leave the grid is illegal: the agent stays put
  and receives -5.
- Acquisition and deposit are automatic on cell entry. A legal move onto
  the cell of an eligible on-grid gem while empty-handed picks it up
  (+50); a legal move onto the bank while carrying deposits the gem
  (+500). There is no explicit pickup/drop action, and NoOp never
  triggers either event.
- Every other legal move costs -1; NoOp yields the configured no-op
  reward (0 by default, -1 optional).
- Agents may share cells; there are no collisions. One agent moves per
  `step_agent` call, and the episode step counter advances separately
  via `advance_step`.

Eligibility: when a planner allocation is in effect, `step_agent` is
called with ``assigned_gem`` and only that gem can be picked up. With
``assigned_gem=None`` (planner-off mode) any on-grid gem on the entered
cell is eligible, lowest gem index first.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import NamedTuple, Optional, Union

Position = tuple[int, int]

REWARD_ILLEGAL = -5
REWARD_STEP = -1
REWARD_PICKUP = 50
REWARD_DEPOSIT = 500


class ConfigError(ValueError):
    """Invalid grid, layout, or run configuration."""


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    NOOP = 4


ACTIONS = tuple(Action)

# (row delta, col delta) per action index
_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


class Event(Enum):
    ILLEGAL = "illegal"
    ACQUIRED = "acquired"
    DROPPED = "dropped"
    MOVED = "moved"
    IDLE = "idle"


@dataclass(frozen=True)
class OnGrid:
    pos: Position


@dataclass(frozen=True)
class CarriedBy:
    agent: int


@dataclass(frozen=True)
class Dropped:
    pass


GemStatus = Union[OnGrid, CarriedBy, Dropped]


@dataclass(frozen=True)
class FixedLayout:
    """Explicit agent and gem start positions, reused every episode."""

    agents: tuple[Position, ...]
    gems: tuple[Position, ...]


@dataclass(frozen=True)
class RandomLayout:
    """Seeded per-episode placement at distinct non-bank cells."""


Layout = Union[FixedLayout, RandomLayout]


class WorldState(NamedTuple):
    agent_positions: tuple[Position, ...]
    gems: tuple[GemStatus, ...]
    step: int


class StepOutcome(NamedTuple):
    reward: int
    event: Event
    gem: Optional[int] = None


def default_layout(width: int, height: int, num_agents: int, num_gems: int) -> FixedLayout:
    """Deterministic placement: agents at corners, gems at the remaining
    corners and edge midpoints, skipping the bank and occupied cells.

    On 11x11 with 2 agents and 3 gems this yields agents (0,0),(10,10)
    and gems (0,10),(10,0),(5,0).
    """
    bank = ((height - 1) // 2, (width - 1) // 2)
    mid_r, mid_c = (height - 1) // 2, (width - 1) // 2
    agent_candidates = [
        (0, 0), (height - 1, width - 1), (0, width - 1), (height - 1, 0),
    ]
    gem_candidates = [
        (0, width - 1), (height - 1, 0), (mid_r, 0), (0, mid_c),
        (height - 1, mid_c), (mid_r, width - 1),
    ]
    used: set[Position] = {bank}
    agents: list[Position] = []
    for pos in agent_candidates + [(r, c) for r in range(height) for c in range(width)]:
        if len(agents) == num_agents:
            break
        if pos not in used:
            agents.append(pos)
            used.add(pos)
    gems: list[Position] = []
    for pos in gem_candidates + [(r, c) for r in range(height) for c in range(width)]:
        if len(gems) == num_gems:
            break
        if pos not in used:
            gems.append(pos)
            used.add(pos)
    if len(agents) < num_agents or len(gems) < num_gems:
        raise ConfigError("grid too small for the requested agents and gems")
    return FixedLayout(agents=tuple(agents), gems=tuple(gems))


@dataclass(frozen=True)
class GridConfig:
    """Static description of one problem instance.

    ``bank=None`` resolves to the grid center. ``layout=None`` resolves
    to `default_layout`. ``noop_reward`` must be 0 or -1.
    """

    width: int
    height: int
    num_agents: int
    num_gems: int
    step_limit: int
    bank: Optional[Position] = None
    layout: Optional[Layout] = None
    noop_reward: int = 0

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise ConfigError(f"grid must be at least 3x3, got {self.width}x{self.height}")
        if self.num_agents < 1:
            raise ConfigError("need at least one agent")
        if self.num_gems < 1:
            raise ConfigError("need at least one gem")
        if self.step_limit < 1:
            raise ConfigError("step limit must be positive")
        if self.noop_reward not in (0, -1):
            raise ConfigError(f"noop reward must be 0 or -1, got {self.noop_reward}")
        if self.bank is None:
            object.__setattr__(self, "bank", ((self.height - 1) // 2, (self.width - 1) // 2))
        br, bc = self.bank
        if not (1 <= br < self.height - 1 and 1 <= bc < self.width - 1):
            raise ConfigError(f"bank {self.bank} must be strictly inside the grid")
        if self.layout is None:
            object.__setattr__(
                self,
                "layout",
                default_layout(self.width, self.height, self.num_agents, self.num_gems),
            )
        if isinstance(self.layout, FixedLayout):
            self._check_fixed(self.layout)
        elif isinstance(self.layout, RandomLayout):
            if self.width * self.height - 1 < self.num_agents + self.num_gems:
                raise ConfigError("grid too small for random placement")

    def _check_fixed(self, layout: FixedLayout) -> None:
        if len(layout.agents) != self.num_agents:
            raise ConfigError(
                f"layout has {len(layout.agents)} agents, config wants {self.num_agents}"
            )
        if len(layout.gems) != self.num_gems:
            raise ConfigError(
                f"layout has {len(layout.gems)} gems, config wants {self.num_gems}"
            )
        for pos in layout.agents + layout.gems:
            r, c = pos
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ConfigError(f"layout position {pos} out of bounds")
        if len(set(layout.gems)) != len(layout.gems):
            raise ConfigError("gem positions must be distinct")
        if self.bank in layout.gems:
            raise ConfigError(f"gem may not start on the bank {self.bank}")


def reset(config: GridConfig, seed: int) -> WorldState:
    """Start-of-episode state: per the fixed layout, or seeded distinct
    non-bank cells under `RandomLayout`. Same config and seed always
    produce the same state.
    """
    layout = config.layout
    if isinstance(layout, FixedLayout):
        agents = layout.agents
        gem_positions = layout.gems
    else:
        cells = [
            (r, c)
            for r in range(config.height)
            for c in range(config.width)
            if (r, c) != config.bank
        ]
        picked = random.Random(seed).sample(cells, config.num_agents + config.num_gems)
        agents = tuple(picked[: config.num_agents])
        gem_positions = tuple(picked[config.num_agents:])
    return WorldState(
        agent_positions=tuple(agents),
        gems=tuple(OnGrid(pos) for pos in gem_positions),
        step=0,
    )


def is_legal(state: WorldState, config: GridConfig, agent: int, action: Action) -> bool:
    """True iff the action keeps the agent on the grid. NoOp always is."""
    r, c = state.agent_positions[agent]
    dr, dc = _DELTAS[action]
    return 0 <= r + dr < config.height and 0 <= c + dc < config.width


def carried_gem(state: WorldState, agent: int) -> Optional[int]:
    """Index of the gem the agent carries, or None."""
    for j, status in enumerate(state.gems):
        if type(status) is CarriedBy and status.agent == agent:
            return j
    return None


def step_agent(
    state: WorldState,
    config: GridConfig,
    agent: int,
    action: Action,
    assigned_gem: Optional[int] = None,
) -> tuple[WorldState, StepOutcome]:
    """Move one agent and settle pickup/deposit per the dynamics above.

    ``assigned_gem`` restricts pickup eligibility to that gem; None means
    planner-off mode where any on-grid gem on the entered cell counts.
    The step counter is untouched; callers advance it once per timestep.
    """
    if assigned_gem is not None and type(state.gems[assigned_gem]) is Dropped:
        raise ValueError(f"gem {assigned_gem} is already deposited")
    r, c = state.agent_positions[agent]
    dr, dc = _DELTAS[action]
    nr, nc = r + dr, c + dc
    if not (0 <= nr < config.height and 0 <= nc < config.width):
        return state, StepOutcome(REWARD_ILLEGAL, Event.ILLEGAL)
    if dr == 0 and dc == 0:
        return state, StepOutcome(config.noop_reward, Event.IDLE)

    new_pos = (nr, nc)
    positions = state.agent_positions[:agent] + (new_pos,) + state.agent_positions[agent + 1:]
    holding = carried_gem(state, agent)

    if holding is None:
        target = None
        if assigned_gem is not None:
            status = state.gems[assigned_gem]
            if type(status) is OnGrid and status.pos == new_pos:
                target = assigned_gem
        else:
            for j, status in enumerate(state.gems):
                if type(status) is OnGrid and status.pos == new_pos:
                    target = j
                    break
        if target is not None:
            gems = state.gems[:target] + (CarriedBy(agent),) + state.gems[target + 1:]
            return (
                WorldState(positions, gems, state.step),
                StepOutcome(REWARD_PICKUP, Event.ACQUIRED, target),
            )
    elif new_pos == config.bank:
        gems = state.gems[:holding] + (Dropped(),) + state.gems[holding + 1:]
        return (
            WorldState(positions, gems, state.step),
            StepOutcome(REWARD_DEPOSIT, Event.DROPPED, holding),
        )

    return WorldState(positions, state.gems, state.step), StepOutcome(REWARD_STEP, Event.MOVED)


def advance_step(state: WorldState) -> WorldState:
    """Bump the episode step counter by one."""
    return state._replace(step=state.step + 1)


def is_terminal(state: WorldState, config: GridConfig) -> bool:
    """True iff every gem is deposited or the step limit is reached."""
    if state.step >= config.step_limit:
        return True
    return all(type(g) is Dropped for g in state.gems)
