import numpy as np
import pytest

from rpvf.gridworld import (
    MINE_REWARD_RANGE,
    Action,
    CellKind,
    GridSpec,
    RewardIndexing,
    build_state_graph,
    grid_to_mdp,
    load_grid,
    loads_grid,
    make_mine_grid,
    make_open_goal_grid,
    make_three_room,
    make_wall_penalty_grid,
    potential_psi,
    save_grid,
)


def test_open_grid_numbers_states_column_by_column(goal_grid):
    assert goal_grid.n_states == 25
    assert goal_grid.goal == (5, 5)
    for (x, y), index in goal_grid.state_index.items():
        assert index == (x - 1) * 5 + (y - 1)


def test_three_room_layout():
    rooms = make_three_room()
    # Two wall columns of 21 cells, each with one door.
    assert rooms.n_states == 60 * 21 - 2 * 20
    assert rooms.kind(21, 11) is CellKind.NORMAL
    assert rooms.kind(41, 11) is CellKind.NORMAL
    assert rooms.kind(21, 10) is CellKind.WALL
    assert rooms.goal == (60, 1)
    assert rooms.start == (1, 21)


def test_three_room_graph_is_connected_through_the_doors():
    graph = build_state_graph(make_three_room())
    assert graph.is_connected()
    assert graph.n == 1220


def test_three_room_with_missing_door_row_is_rejected():
    with pytest.raises(ValueError, match="Door row"):
        make_three_room(door_row=0)


def test_wall_penalty_grid_keeps_walls_as_states():
    grid = make_wall_penalty_grid(-50.0)
    assert grid.n_states == 60 * 21
    assert not grid.has_walls
    assert grid.goal is None
    assert (grid.state_rewards == -50.0).sum() == 40
    assert grid.reward(21, 11) == 0.0


def test_moves_into_walls_and_edges_stay_put():
    mdp = grid_to_mdp(make_three_room(), 0.9)
    rooms = make_three_room()
    corner = rooms.state_index[(1, 21)]
    assert mdp.transitions[Action.UP, corner, corner] == 1.0
    assert mdp.transitions[Action.LEFT, corner, corner] == 1.0
    beside_wall = rooms.state_index[(20, 5)]
    assert mdp.transitions[Action.RIGHT, beside_wall, beside_wall] == 1.0
    beside_door = rooms.state_index[(20, 11)]
    assert mdp.transitions[Action.RIGHT, beside_door, rooms.state_index[(21, 11)]] == 1.0


def test_goal_self_loops_and_pays_every_step(goal_grid, goal_mdp):
    goal = goal_grid.state_index[goal_grid.goal]
    assert goal in goal_mdp.absorbing_states.tolist()
    assert goal_mdp.rewards[goal].tolist() == [10.0] * 4


def test_reward_indexing(goal_grid):
    below = goal_grid.state_index[(5, 4)]
    successor = grid_to_mdp(goal_grid, 0.9, RewardIndexing.SUCCESSOR)
    current = grid_to_mdp(goal_grid, 0.9, RewardIndexing.CURRENT)
    assert successor.rewards[below, Action.UP] == 10.0
    assert current.rewards[below, Action.UP] == 0.0


def test_mine_grid_is_reproducible_per_seed():
    first = make_mine_grid(5, 5, seed=42)
    again = make_mine_grid(5, 5, seed=42)
    assert first == again
    assert first.seed == 42

    mines = first.cells_of(CellKind.MINE)
    assert len(mines) == 5
    assert first.goal == (5, 5)
    assert (5, 5) not in mines
    low, high = MINE_REWARD_RANGE
    assert all(low <= first.reward(x, y) <= high for x, y in mines)
    assert all(float(first.reward(x, y)).is_integer() for x, y in mines)


def test_mine_grid_rejects_too_many_mines():
    with pytest.raises(ValueError, match="Mine count"):
        make_mine_grid(3, 8, seed=0)


def test_grid_equality_ignores_seed(goal_grid):
    reseeded = GridSpec(goal_grid.kinds, goal_grid.rewards, seed=99)
    assert reseeded == goal_grid


@pytest.mark.parametrize(
    ("kinds", "rewards", "match"),
    [
        ([["X", "."]], [[0.0, 0.0]], "Unknown cell"),
        ([["G", "G"]], [[1.0, 1.0]], "at most one goal"),
        ([["#", "."]], [[-1.0, 0.0]], "Wall cells"),
        ([["M", "."]], [[-9.0, 0.0]], "Mine rewards"),
        ([["#", "#"]], [[0.0, 0.0]], "non-wall"),
    ],
)
def test_grid_validation(kinds, rewards, match):
    with pytest.raises(ValueError, match=match):
        GridSpec(np.array(kinds), np.array(rewards))


def test_state_graph_of_open_grid(goal_grid):
    graph = build_state_graph(goal_grid)
    assert graph.edge_count == 2 * 5 * 4
    assert graph.degrees[goal_grid.state_index[(1, 1)]] == 2
    assert graph.degrees[goal_grid.state_index[(3, 3)]] == 4
    assert graph.state_rewards[goal_grid.state_index[(5, 5)]] == 10.0


def test_potential_numbers_cells_from_bottom_left(goal_grid):
    psi = potential_psi(goal_grid)
    assert len(psi) == 25
    assert psi.psi[goal_grid.state_index[(1, 1)]] == 1.0
    assert psi.psi[goal_grid.state_index[(1, 2)]] == 2.0
    assert psi.psi[goal_grid.state_index[(2, 1)]] == 6.0
    assert psi.psi[goal_grid.state_index[(5, 5)]] == 25.0
    np.testing.assert_array_equal(np.sort(np.asarray(psi)), np.arange(1.0, 26.0))


def test_potential_needs_square_open_grid():
    with pytest.raises(ValueError, match="square grid without walls"):
        potential_psi(make_three_room())


def test_saved_grid_loads_back(tmp_path):
    grid = make_mine_grid(5, 5, seed=3)
    path = tmp_path / "mines.txt"
    save_grid(grid, path)

    loaded = load_grid(path)
    assert loaded == grid
    assert loaded.seed == 3
    assert path.read_text().splitlines()[0] == "".join(
        grid.kinds[x, 4] for x in range(5)
    )


def test_loads_grid_with_start_and_walls():
    text = "..G\n#..\n\nwidth=3\nheight=2\nstart=1,2\nreward.3.2=10.0\n"
    grid = loads_grid(text)
    assert grid.kind(1, 1) is CellKind.WALL
    assert grid.goal == (3, 2)
    assert grid.start == (1, 2)
    assert grid.reward(3, 2) == 10.0
    assert grid.n_states == 5


def test_loads_grid_rejects_size_mismatch():
    with pytest.raises(ValueError, match="does not match"):
        loads_grid("...\n\nwidth=2\nheight=1\n")
