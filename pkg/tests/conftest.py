"""Shared fixtures for the rpvf test suite."""

import os

import networkx as nx
import numpy as np
import pytest

from rpvf.config import ENV_PREFIX
from rpvf.gridworld import grid_to_mdp, make_open_goal_grid
from rpvf.mdp import TabularMdp


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Keep RPVF_* variables from the developer's shell out of every test."""
    for key in list(os.environ):
        if key.upper().startswith(ENV_PREFIX):
            monkeypatch.delenv(key)


@pytest.fixture
def goal_grid():
    return make_open_goal_grid(5)


@pytest.fixture
def goal_mdp(goal_grid):
    return grid_to_mdp(goal_grid, 0.9)


@pytest.fixture
def random_mdp():
    """Factory for dense random MDPs with alpha = 0.9."""

    def build(rng: np.random.Generator, n_states: int, n_actions: int = 3) -> TabularMdp:
        transitions = rng.dirichlet(np.ones(n_states), size=(n_actions, n_states))
        rewards = rng.normal(size=(n_states, n_actions))
        return TabularMdp(transitions, rewards, 0.9)

    return build


@pytest.fixture
def random_connected_graph():
    """Factory for adjacency matrices of connected Erdos-Renyi graphs."""

    def build(rng: np.random.Generator, n: int) -> np.ndarray:
        while True:
            graph = nx.gnp_random_graph(n, 0.3, seed=int(rng.integers(2**31)))
            if nx.is_connected(graph):
                return nx.to_numpy_array(graph, nodelist=range(n))

    return build
