"""Foraging Games world: placement, dynamics, message routing and observations.

A world holds two agents and two items on a small grid. In ScoreG both agents must
pick up the higher-score item together; in TemporalG they must pick up both items in
the order they spawned. Each agent only sees the score of its own assigned item, so
success depends on the messages the agents exchange.

Example:
    >>> from fglab.models.env import EnvConfig
    >>> world, observations = new_episode(EnvConfig(), seed=7)
    >>> delivered = route_messages(world, (3, 1))
    >>> result = step(world, (Action.PICKUP, Action.LEFT))
"""

from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from enum import IntEnum
from enum import StrEnum
from fglab.errors import EpisodeFinishedError
from fglab.errors import PlacementError
from fglab.manifest import atomic_write_text
from fglab.models.env import EnvConfig
from fglab.models.env import Game
from fglab.models.env import ScoreSplit
import logging
import numpy as np
from pathlib import Path
from pydantic import BaseModel


logger = logging.getLogger(__name__)

Cell = tuple[int, int]

SEED_MASK = 0xFFFFFFFFFFFFFFFF

# occupancy codes
EMPTY = 0.0
ITEM = 1.0 / 3.0
WALL = 2.0 / 3.0
PARTNER = 1.0

MAX_SCORE = 250.0
FREEZE_STEPS = 6
PLACEMENT_ATTEMPTS = 100

SCORE_SETS: dict[ScoreSplit, np.ndarray] = {
    ScoreSplit.TRAIN: np.arange(5, 251, 5),
    ScoreSplit.TEST: np.array([s for s in range(2, 249, 2) if s % 10 != 0]),
    ScoreSplit.HIGH: np.arange(160, 241, 2),
}


class Action(IntEnum):
    """Per-agent actions."""

    LEFT = 0
    RIGHT = 1
    UP = 2
    DOWN = 3
    PICKUP = 4


N_ACTIONS = len(Action)

MOVES: dict[Action, Cell] = {
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
}


class Outcome(StrEnum):
    """Episode status."""

    ONGOING = "ongoing"
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass
class Item:
    """One item on the grid.

    Attributes:
        pos: (row, col).
        score: Item score (ScoreG), 0 in TemporalG.
        spawn_time: Step at which the item appears (TemporalG), 0 in ScoreG.
        alive: False once picked up.
        picked_order: Index in the pickup sequence once picked up.
    """

    pos: Cell
    score: int = 0
    spawn_time: int = 0
    alive: bool = True
    picked_order: int | None = None


@dataclass
class World:
    """Full state of one episode.

    Attributes:
        cfg: World configuration.
        t: Steps elapsed.
        agents: Agent positions.
        items: The two items; agent i is assigned item i.
        obstacles: Impassable cells.
        rng: Generator the episode was laid out with.
        inbox: Tokens delivered to each agent by the latest routing.
        done: Whether the episode has ended.
        outcome: Episode status.
        first_adjacent_step: Step index at which the agents were first 4-adjacent.
        trace: Per-step records for JSON-lines export.
    """

    cfg: EnvConfig
    agents: list[Cell]
    items: list[Item]
    obstacles: frozenset[Cell]
    rng: np.random.Generator
    t: int = 0
    inbox: tuple[int, int] = (0, 0)
    done: bool = False
    outcome: Outcome = Outcome.ONGOING
    first_adjacent_step: int | None = None
    trace: list["TraceStep"] = field(default_factory=list)

    def occupied(self) -> set[Cell]:
        """Cells holding an agent, an alive item or an obstacle."""
        cells = set(self.agents) | set(self.obstacles)
        cells.update(item.pos for item in self.items if item.alive)
        return cells

    def item_visible(self, item: Item) -> bool:
        """Whether an item is on the grid at the current step."""
        return item.alive and item.spawn_time <= self.t

    def in_bounds(self, cell: Cell) -> bool:
        """Whether a cell lies inside the grid."""
        return 0 <= cell[0] < self.cfg.grid_h and 0 <= cell[1] < self.cfg.grid_w


@dataclass(frozen=True)
class Observation:
    """What one agent perceives at one step.

    Attributes:
        grid: 3x3xC receptive field (occupancy, plus score for ScoreG).
        pos: Normalized (row, col) in [0, 1].
        msg_in: Token delivered by the partner.
    """

    grid: np.ndarray
    pos: np.ndarray
    msg_in: int


@dataclass(frozen=True)
class StepInfo:
    """Episode bookkeeping returned with each step.

    Attributes:
        length: Steps elapsed.
        success: Whether the episode ended in success.
        pickup_order: Indices of items picked up so far, in order.
    """

    length: int
    success: bool
    pickup_order: tuple[int, ...]


@dataclass(frozen=True)
class StepResult:
    """Result of one environment step.

    Attributes:
        obs: Both agents' observations after the step.
        reward: Shared reward.
        done: Whether the episode ended.
        outcome: Episode status after the step.
        info: Episode bookkeeping.
    """

    obs: tuple[Observation, Observation]
    reward: float
    done: bool
    outcome: Outcome
    info: StepInfo


class TraceStep(BaseModel):
    """One line of an episode trace."""

    t: int
    positions: list[list[int]]
    actions: list[int]
    delivered: list[int]
    reward: float


def sample_score_pair(rng: np.random.Generator, split: ScoreSplit) -> tuple[int, int]:
    """Draw two distinct scores uniformly without replacement from a score set.

    Args:
        rng: Random generator.
        split: Score set to draw from.

    Returns:
        Two distinct scores.
    """
    values = SCORE_SETS[split]
    first, second = rng.choice(len(values), size=2, replace=False)
    return int(values[first]), int(values[second])


def central_cells(cfg: EnvConfig) -> list[Cell]:
    """The 3x3 block of cells around the grid center, row-major."""
    r0, c0 = cfg.grid_h // 2 - 1, cfg.grid_w // 2 - 1
    return [(r0 + dr, c0 + dc) for dr in range(3) for dc in range(3)]


def field_cells(world: World, center: Cell) -> list[Cell]:
    """In-bounds cells of the 3x3 receptive field around ``center``, row-major."""
    cells = [(center[0] + dr, center[1] + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]
    return [c for c in cells if world.in_bounds(c)]


def adjacent(a: Cell, b: Cell) -> bool:
    """Whether two cells share an edge."""
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def place_obstacles(world: World, n: int, rng: np.random.Generator) -> World:
    """Block ``n`` free cells of the central 3x3 region.

    Args:
        world: World with agents and items already placed.
        n: Number of obstacles (0-4).
        rng: Random generator.

    Returns:
        The same world with obstacles set.

    Raises:
        PlacementError: If fewer than ``n`` central cells are free.
    """
    if n == 0:
        return world
    taken = world.occupied()
    free = [c for c in central_cells(world.cfg) if c not in taken]
    if len(free) < n:
        raise PlacementError(f"{n} obstacles requested but only {len(free)} central cells are free")
    picks = rng.choice(len(free), size=n, replace=False)
    world.obstacles = frozenset(free[int(i)] for i in picks)
    return world


def _choose(rng: np.random.Generator, cells: Sequence[Cell]) -> Cell:
    if not cells:
        raise PlacementError("no free cell for placement")
    return cells[int(rng.integers(len(cells)))]


def _layout_scoreg(cfg: EnvConfig, rng: np.random.Generator) -> World:
    h, w = cfg.grid_h, cfg.grid_w
    scores = sample_score_pair(rng, cfg.score_split)
    items = [
        Item(pos=(0, int(rng.integers(w))), score=scores[0]),
        Item(pos=(h - 1, int(rng.integers(w))), score=scores[1]),
    ]
    taken = {item.pos for item in items}
    agents: list[Cell] = []
    for rows in ((0, 1), (h - 2, h - 1)):
        cells = [(r, c) for r in rows for c in range(w) if (r, c) not in taken]
        cell = _choose(rng, cells)
        agents.append(cell)
        taken.add(cell)
    return World(cfg=cfg, agents=agents, items=items, obstacles=frozenset(), rng=rng)


def _layout_temporalg(cfg: EnvConfig, rng: np.random.Generator) -> World:
    h, w = cfg.grid_h, cfg.grid_w
    spawn = rng.choice(FREEZE_STEPS, size=2, replace=False) + 1
    world = World(cfg=cfg, agents=[], items=[], obstacles=frozenset(), rng=rng)
    for _ in range(PLACEMENT_ATTEMPTS):
        world.agents = [(int(rng.integers(h)), 0), (int(rng.integers(h)), w - 1)]
        taken = set(world.agents)
        items: list[Item] = []
        for i in (0, 1):
            cells = [
                c
                for c in field_cells(world, world.agents[i])
                if c[0] != h // 2 and c not in taken
            ]
            if not cells:
                break
            cell = _choose(rng, cells)
            taken.add(cell)
            items.append(Item(pos=cell, spawn_time=int(spawn[i])))
        if len(items) == 2:
            world.items = items
            return world
        logger.debug("TemporalG item placement failed, resampling agent rows")
    raise PlacementError(f"no TemporalG layout found on a {h}x{w} grid")


def new_episode(cfg: EnvConfig, seed: int) -> tuple[World, tuple[Observation, Observation]]:
    """Lay out a fresh episode.

    ScoreG: item 0 in the top row and item 1 in the bottom row with distinct scores,
    agent 0 in the top two rows and agent 1 in the bottom two. TemporalG: agents on
    opposite side columns, each item inside its agent's receptive field off the center
    row, distinct spawn times in 1..6.

    Args:
        cfg: World configuration.
        seed: Any integer; reduced to 64 bits.

    Returns:
        The world and both agents' initial observations.

    Raises:
        PlacementError: If no valid layout is found.
    """
    rng = np.random.default_rng(seed & SEED_MASK)
    layout = _layout_scoreg if cfg.game == Game.SCOREG else _layout_temporalg
    for attempt in range(PLACEMENT_ATTEMPTS):
        world = layout(cfg, rng)
        try:
            place_obstacles(world, cfg.n_obstacles, rng)
        except PlacementError:
            logger.debug("Obstacle placement failed (attempt %d), resampling layout", attempt)
            continue
        return world, (observe(world, 0), observe(world, 1))
    raise PlacementError(
        f"no layout with {cfg.n_obstacles} obstacles found after {PLACEMENT_ATTEMPTS} attempts"
    )


def route_messages(world: World, sent: tuple[int, int]) -> tuple[int, int]:
    """Deliver the tokens both agents sent this step.

    Agent i receives what agent j sent. TemporalG only delivers between 4-adjacent
    agents; out of range, and with communication disabled, token 0 is delivered.
    The delivered pair becomes the agents' next ``msg_in``.

    Args:
        world: The world.
        sent: Tokens sent by agent 0 and agent 1.

    Returns:
        Tokens delivered to agent 0 and agent 1.
    """
    near = adjacent(world.agents[0], world.agents[1])
    if near and world.first_adjacent_step is None:
        world.first_adjacent_step = world.t
    if not world.cfg.communication_enabled:
        delivered = (0, 0)
    elif world.cfg.game == Game.TEMPORALG and not near:
        delivered = (0, 0)
    else:
        delivered = (int(sent[1]), int(sent[0]))
    world.inbox = delivered
    return delivered


def observe(world: World, agent: int) -> Observation:
    """Build one agent's observation.

    Args:
        world: The world.
        agent: Agent index (0 or 1).

    Returns:
        The 3x3 receptive field clipped at the walls, the normalized position and the
        latest delivered token.
    """
    cfg = world.cfg
    grid = np.zeros((3, 3, cfg.channels), dtype=np.float32)
    row, col = world.agents[agent]
    partner = world.agents[1 - agent]
    items = {item.pos: (k, item) for k, item in enumerate(world.items) if world.item_visible(item)}
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            cell = (row + dr, col + dc)
            out = grid[dr + 1, dc + 1]
            if not world.in_bounds(cell) or cell in world.obstacles:
                out[0] = WALL
            elif cell in items:
                k, item = items[cell]
                out[0] = ITEM
                if cfg.game == Game.SCOREG and k == agent:
                    out[1] = item.score / MAX_SCORE
            elif cell == partner and cfg.partner_visible:
                out[0] = PARTNER
    pos = np.array([row / (cfg.grid_h - 1), col / (cfg.grid_w - 1)], dtype=np.float32)
    return Observation(grid=grid, pos=pos, msg_in=world.inbox[agent])


def _resolve_moves(world: World, actions: tuple[Action, Action]) -> list[Cell]:
    """Two-phase propose/commit movement.

    Equal destinations cancel both moves, swaps are blocked, and moving into the
    partner's cell succeeds only if the partner's own move succeeds.
    """
    blocked = set(world.obstacles) | {item.pos for item in world.items if item.alive}
    current = list(world.agents)
    dest = list(current)
    moving = [False, False]
    for i, action in enumerate(actions):
        delta = MOVES.get(Action(action))
        if delta is None:
            continue
        cell = (current[i][0] + delta[0], current[i][1] + delta[1])
        if world.in_bounds(cell) and cell not in blocked:
            dest[i], moving[i] = cell, True

    if all(moving) and (dest[0] == dest[1] or (dest[0] == current[1] and dest[1] == current[0])):
        return current
    for _ in range(2):
        for i in (0, 1):
            j = 1 - i
            if moving[i] and dest[i] == current[j] and not moving[j]:
                dest[i], moving[i] = current[i], False
    return dest


def _pickup_target(world: World) -> int:
    alive = [k for k, item in enumerate(world.items) if item.alive]
    if world.cfg.game == Game.SCOREG:
        return max(alive, key=lambda k: world.items[k].score)
    return min(alive, key=lambda k: world.items[k].spawn_time)


def _resolve_pickups(world: World, actions: tuple[Action, Action]) -> Outcome:
    registered: list[set[int]] = [set(), set()]
    for i, action in enumerate(actions):
        if action != Action.PICKUP:
            continue
        registered[i] = {
            k
            for k, item in enumerate(world.items)
            if world.item_visible(item) and adjacent(world.agents[i], item.pos)
        }
    if not registered[0] and not registered[1]:
        return Outcome.ONGOING

    target = _pickup_target(world)
    if target not in registered[0] or target not in registered[1]:
        return Outcome.FAILURE

    picked = sum(1 for item in world.items if not item.alive)
    world.items[target].alive = False
    world.items[target].picked_order = picked
    if world.cfg.game == Game.SCOREG or all(not item.alive for item in world.items):
        return Outcome.SUCCESS
    return Outcome.ONGOING


def terminal_reward(outcome: Outcome, t: int, t_max: int) -> float:
    """Shared reward for a step that ends with ``outcome`` after ``t`` steps.

    Args:
        outcome: Episode status after the step.
        t: Steps elapsed.
        t_max: Step limit.

    Returns:
        ``1 + (t_max - t) / t_max`` on success, -1 on failure, 0 otherwise.
    """
    if outcome == Outcome.SUCCESS:
        return 1.0 + (t_max - t) / t_max
    if outcome == Outcome.FAILURE:
        return -1.0
    return 0.0


def step(world: World, actions: tuple[int, int]) -> StepResult:
    """Advance the world by one step.

    Args:
        world: The world; mutated in place.
        actions: One action per agent.

    Returns:
        The step result.

    Raises:
        EpisodeFinishedError: If the episode has already ended.
    """
    if world.done:
        raise EpisodeFinishedError("episode is finished; start a new one with new_episode()")

    acts = (Action(actions[0]), Action(actions[1]))
    frozen = world.cfg.game == Game.TEMPORALG and world.t + 1 <= FREEZE_STEPS
    outcome = Outcome.ONGOING
    if not frozen:
        world.agents = _resolve_moves(world, acts)
        outcome = _resolve_pickups(world, acts)
    world.t += 1
    if outcome == Outcome.ONGOING and world.t >= world.cfg.t_max:
        outcome = Outcome.FAILURE

    world.outcome = outcome
    world.done = outcome != Outcome.ONGOING
    reward = terminal_reward(outcome, world.t, world.cfg.t_max)
    world.trace.append(
        TraceStep(
            t=world.t,
            positions=[list(a) for a in world.agents],
            actions=[int(a) for a in acts],
            delivered=list(world.inbox),
            reward=reward,
        )
    )
    picked = [k for k, item in enumerate(world.items) if item.picked_order is not None]
    order = sorted(picked, key=lambda k: world.items[k].picked_order or 0)
    info = StepInfo(
        length=world.t,
        success=outcome == Outcome.SUCCESS,
        pickup_order=tuple(order),
    )
    return StepResult(
        obs=(observe(world, 0), observe(world, 1)),
        reward=reward,
        done=world.done,
        outcome=outcome,
        info=info,
    )


def trace_lines(world: World) -> list[str]:
    """Render the world's trace as JSON lines.

    Args:
        world: A world that has been stepped.

    Returns:
        One JSON object per step.
    """
    return [record.model_dump_json() for record in world.trace]


def write_trace(world: World, path: Path) -> None:
    """Write the world's trace as a JSON-lines file.

    Args:
        world: A world that has been stepped.
        path: Destination file.
    """
    atomic_write_text(path, "".join(f"{line}\n" for line in trace_lines(world)))
