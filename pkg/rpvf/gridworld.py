"""Gridworld generators and conversion of grid layouts to MDPs and state graphs.

Coordinates are (x, y) with (1, 1) the bottom-left cell and (width, height) the
top-right one. Non-wall cells become MDP states, numbered column by column
(x outer, y inner), so on an open N x N grid the state index of (x, y) is
(x - 1) * N + (y - 1).
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from enum import IntEnum, StrEnum
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np
from dotenv import dotenv_values

from rpvf.mdp import TabularMdp
from rpvf.spectral import StateGraph

logger = logging.getLogger(__name__)

Coordinate = tuple[int, int]

DEFAULT_GOAL_REWARD = 10.0
MINE_REWARD_RANGE = (-5, -1)

THREE_ROOM_WIDTH = 60
THREE_ROOM_HEIGHT = 21
THREE_ROOM_WALL_COLUMNS = (21, 41)
THREE_ROOM_DOOR_ROW = 11


class CellKind(StrEnum):
    """Cell kinds, valued by their character in the map format."""

    NORMAL = "."
    WALL = "#"
    GOAL = "G"
    MINE = "M"


class Action(IntEnum):
    UP = 0
    DOWN = 1
    RIGHT = 2
    LEFT = 3


MOVES: dict[Action, Coordinate] = {
    Action.UP: (0, 1),
    Action.DOWN: (0, -1),
    Action.RIGHT: (1, 0),
    Action.LEFT: (-1, 0),
}


class RewardIndexing(StrEnum):
    """Which cell's reward a transition pays."""

    SUCCESSOR = "successor"
    CURRENT = "current"


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Grid layout and per-cell rewards.

    Attributes:
        kinds: (width, height) array of CellKind characters, indexed [x - 1, y - 1]
        rewards: (width, height) cell rewards; walls carry 0
        seed: Generator seed the layout was drawn with, if any
        start: Start marker coordinate, if any
    """

    kinds: np.ndarray
    rewards: np.ndarray
    seed: int | None = None
    start: Coordinate | None = None

    def __post_init__(self) -> None:
        kinds = np.array(self.kinds, dtype="<U1")
        rewards = np.array(self.rewards, dtype=float)
        if kinds.ndim != 2 or kinds.shape != rewards.shape:
            msg = f"Kinds {kinds.shape} and rewards {rewards.shape} must be matching 2-D grids"
            raise ValueError(msg)

        unknown = set(np.unique(kinds)) - {kind.value for kind in CellKind}
        if unknown:
            msg = f"Unknown cell characters: {sorted(unknown)}"
            raise ValueError(msg)
        if not np.isfinite(rewards).all():
            msg = "Cell rewards must be finite"
            raise ValueError(msg)
        if (kinds == CellKind.GOAL).sum() > 1:
            msg = "A grid holds at most one goal"
            raise ValueError(msg)
        if (rewards[kinds == CellKind.WALL] != 0).any():
            msg = "Wall cells cannot carry a reward"
            raise ValueError(msg)
        mine_rewards = rewards[kinds == CellKind.MINE]
        low, high = MINE_REWARD_RANGE
        if ((mine_rewards < low) | (mine_rewards > high)).any():
            msg = f"Mine rewards must lie in [{low}, {high}]"
            raise ValueError(msg)
        if kinds.size - (kinds == CellKind.WALL).sum() == 0:
            msg = "A grid needs at least one non-wall cell"
            raise ValueError(msg)

        kinds.setflags(write=False)
        rewards.setflags(write=False)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "rewards", rewards)
        if self.start is not None:
            start = (int(self.start[0]), int(self.start[1]))
            if start not in self.state_index:
                msg = f"Start {start} is not a non-wall cell of the grid"
                raise ValueError(msg)
            object.__setattr__(self, "start", start)

    def __eq__(self, other: object) -> bool:
        # Layout equality; the seed is provenance only.
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (
            np.array_equal(self.kinds, other.kinds)
            and np.array_equal(self.rewards, other.rewards)
            and self.start == other.start
        )

    @property
    def width(self) -> int:
        return self.kinds.shape[0]

    @property
    def height(self) -> int:
        return self.kinds.shape[1]

    def kind(self, x: int, y: int) -> CellKind:
        return CellKind(self.kinds[x - 1, y - 1])

    def reward(self, x: int, y: int) -> float:
        return float(self.rewards[x - 1, y - 1])

    @cached_property
    def states(self) -> tuple[Coordinate, ...]:
        """Non-wall coordinates in state-index order."""
        return tuple(
            (x, y)
            for x in range(1, self.width + 1)
            for y in range(1, self.height + 1)
            if self.kinds[x - 1, y - 1] != CellKind.WALL
        )

    @cached_property
    def state_index(self) -> dict[Coordinate, int]:
        return {coordinate: index for index, coordinate in enumerate(self.states)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def goal(self) -> Coordinate | None:
        found = np.argwhere(self.kinds == CellKind.GOAL)
        if found.size == 0:
            return None
        return int(found[0][0]) + 1, int(found[0][1]) + 1

    @property
    def state_rewards(self) -> np.ndarray:
        return np.array([self.reward(x, y) for x, y in self.states])

    @property
    def has_walls(self) -> bool:
        return bool((self.kinds == CellKind.WALL).any())

    def cells_of(self, kind: CellKind) -> list[Coordinate]:
        return [(int(x) + 1, int(y) + 1) for x, y in np.argwhere(self.kinds == kind)]


@dataclass(frozen=True, eq=False)
class PotentialFunction:
    """Shaping potential psi, one value per state in state-index order."""

    psi: np.ndarray

    def __post_init__(self) -> None:
        psi = np.array(self.psi, dtype=float)
        if psi.ndim != 1 or not np.isfinite(psi).all():
            msg = "A potential is a finite vector over states"
            raise ValueError(msg)
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return self.psi if dtype is None else self.psi.astype(dtype)

    def __len__(self) -> int:
        return self.psi.size


def _blank(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    return np.full((width, height), CellKind.NORMAL.value, dtype="<U1"), np.zeros(
        (width, height)
    )


def make_open_goal_grid(n: int, goal_reward: float = DEFAULT_GOAL_REWARD) -> GridSpec:
    """N x N grid with a single goal in the top-right corner."""
    if n < 2:
        msg = f"Grid side must be at least 2, got {n}"
        raise ValueError(msg)
    kinds, rewards = _blank(n, n)
    kinds[n - 1, n - 1] = CellKind.GOAL
    rewards[n - 1, n - 1] = goal_reward
    return GridSpec(kinds, rewards)


def _three_room_walls(door_row: int) -> np.ndarray:
    if not 1 <= door_row <= THREE_ROOM_HEIGHT:
        msg = f"Door row must lie in [1, {THREE_ROOM_HEIGHT}], got {door_row}"
        raise ValueError(msg)
    walls = np.zeros((THREE_ROOM_WIDTH, THREE_ROOM_HEIGHT), dtype=bool)
    for column in THREE_ROOM_WALL_COLUMNS:
        walls[column - 1, :] = True
        walls[column - 1, door_row - 1] = False
    return walls


def make_three_room(
    door_row: int = THREE_ROOM_DOOR_ROW, goal_reward: float = DEFAULT_GOAL_REWARD
) -> GridSpec:
    """60 x 21 maze split into three rooms by wall columns with one-cell doors.

    The agent starts top-left of the first room; the goal is bottom-right of the third.
    """
    kinds, rewards = _blank(THREE_ROOM_WIDTH, THREE_ROOM_HEIGHT)
    kinds[_three_room_walls(door_row)] = CellKind.WALL
    kinds[THREE_ROOM_WIDTH - 1, 0] = CellKind.GOAL
    rewards[THREE_ROOM_WIDTH - 1, 0] = goal_reward
    return GridSpec(kinds, rewards, start=(1, THREE_ROOM_HEIGHT))


def make_wall_penalty_grid(penalty: float, door_row: int = THREE_ROOM_DOOR_ROW) -> GridSpec:
    """Unobstructed 60 x 21 grid whose three-room wall cells carry `penalty` instead."""
    if penalty >= 0:
        msg = f"Wall penalty must be negative, got {penalty}"
        raise ValueError(msg)
    kinds, rewards = _blank(THREE_ROOM_WIDTH, THREE_ROOM_HEIGHT)
    rewards[_three_room_walls(door_row)] = penalty
    return GridSpec(kinds, rewards)


def make_mine_grid(
    n: int, n_mines: int, seed: int, goal_reward: float = DEFAULT_GOAL_REWARD
) -> GridSpec:
    """Open goal grid with `n_mines` randomly placed mines.

    Each mine pays an integer reward drawn uniformly from -5..-1 once, at construction.
    """
    if n < 2:
        msg = f"Grid side must be at least 2, got {n}"
        raise ValueError(msg)
    if not 0 <= n_mines <= n * n - 2:
        msg = f"Mine count must lie in [0, {n * n - 2}], got {n_mines}"
        raise ValueError(msg)

    spec = make_open_goal_grid(n, goal_reward)
    kinds, rewards = spec.kinds.copy(), spec.rewards.copy()
    rng = np.random.default_rng(seed)
    candidates = np.arange(n * n - 1)  # column-major indices; the goal is last
    chosen = rng.choice(candidates, size=n_mines, replace=False)
    low, high = MINE_REWARD_RANGE
    penalties = rng.integers(low, high + 1, size=n_mines)
    for cell, penalty in zip(chosen, penalties, strict=True):
        x, y = divmod(int(cell), n)
        kinds[x, y] = CellKind.MINE
        rewards[x, y] = float(penalty)
    logger.debug("Mine grid seed=%s placed mines at %s", seed, sorted(chosen.tolist()))
    return GridSpec(kinds, rewards, seed=seed)


def grid_to_mdp(
    spec: GridSpec,
    alpha: float,
    reward_indexing: RewardIndexing = RewardIndexing.SUCCESSOR,
) -> TabularMdp:
    """Deterministic four-action MDP over the non-wall cells.

    Moves into walls or off the grid leave the state unchanged. The goal self-loops
    under every action and pays its reward on each step spent there.
    """
    index = spec.state_index
    cell_rewards = spec.state_rewards
    goal = spec.goal
    n = spec.n_states

    transitions = np.zeros((len(Action), n, n))
    rewards = np.zeros((n, len(Action)))
    for state, (x, y) in enumerate(spec.states):
        for action in Action:
            if (x, y) == goal:
                target = state
            else:
                dx, dy = MOVES[action]
                target = index.get((x + dx, y + dy), state)
            transitions[action, state, target] = 1.0
            paid = target if reward_indexing is RewardIndexing.SUCCESSOR else state
            rewards[state, action] = cell_rewards[paid]
    return TabularMdp(transitions, rewards, alpha)


def build_state_graph(spec: GridSpec) -> StateGraph:
    """Undirected 4-neighbour graph over non-wall cells, carrying cell rewards."""
    graph = nx.grid_2d_graph(spec.width, spec.height)
    graph.remove_nodes_from((x - 1, y - 1) for x, y in spec.cells_of(CellKind.WALL))
    nodelist = [(x - 1, y - 1) for x, y in spec.states]
    adjacency = nx.to_numpy_array(graph, nodelist=nodelist, dtype=float)
    return StateGraph(adjacency, spec.state_rewards, coordinates=spec.states)


def potential_psi(spec: GridSpec) -> PotentialFunction:
    """psi(x, y) = (x - 1) * N + y on a square grid without walls.

    Numbers the cells 1..N^2 column by column from the bottom-left, so psi grows
    along every up or right move.
    """
    if spec.width != spec.height or spec.has_walls:
        msg = f"Potential needs a square grid without walls, got {spec.width}x{spec.height}"
        raise ValueError(msg)
    n = spec.width
    return PotentialFunction(np.array([(x - 1) * n + y for x, y in spec.states], dtype=float))


def dumps_grid(spec: GridSpec) -> str:
    """Serialise a grid: map rows top first, a blank line, then key=value metadata."""
    rows = [
        "".join(spec.kinds[x, y] for x in range(spec.width))
        for y in reversed(range(spec.height))
    ]
    metadata = [f"width={spec.width}", f"height={spec.height}"]
    if spec.seed is not None:
        metadata.append(f"seed={spec.seed}")
    if spec.start is not None:
        metadata.append(f"start={spec.start[0]},{spec.start[1]}")
    for x in range(1, spec.width + 1):
        for y in range(1, spec.height + 1):
            if spec.reward(x, y) != 0:
                metadata.append(f"reward.{x}.{y}={spec.reward(x, y)!r}")
    return "\n".join(rows) + "\n\n" + "\n".join(metadata) + "\n"


def loads_grid(text: str) -> GridSpec:
    map_block, _, metadata_block = text.partition("\n\n")
    rows = [row for row in map_block.splitlines() if row]
    metadata = dotenv_values(stream=io.StringIO(metadata_block))

    try:
        width, height = int(metadata["width"]), int(metadata["height"])
    except (KeyError, TypeError, ValueError) as err:
        msg = "Grid metadata must declare integer width and height"
        raise ValueError(msg) from err
    if len(rows) != height or any(len(row) != width for row in rows):
        msg = f"Map block does not match declared size {width}x{height}"
        raise ValueError(msg)

    kinds, rewards = _blank(width, height)
    for row_number, row in enumerate(rows):
        y = height - 1 - row_number
        for x, char in enumerate(row):
            kinds[x, y] = char

    seed = start = None
    for key, value in metadata.items():
        if key == "seed":
            seed = int(value)
        elif key == "start":
            sx, sy = value.split(",")
            start = (int(sx), int(sy))
        elif key.startswith("reward."):
            _, x, y = key.split(".")
            rewards[int(x) - 1, int(y) - 1] = float(value)
        elif key not in ("width", "height"):
            logger.warning("Ignoring unknown grid metadata key %s", key)
    return GridSpec(kinds, rewards, seed=seed, start=start)


def save_grid(spec: GridSpec, path: Path | str) -> None:
    Path(path).write_text(dumps_grid(spec))


def load_grid(path: Path | str) -> GridSpec:
    return loads_grid(Path(path).read_text())
