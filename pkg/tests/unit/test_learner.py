import numpy as np
import pytest

from rpvf.config import LearnerConfig
from rpvf.exceptions import CoverageError, SingularSystemError
from rpvf.gridworld import potential_psi
from rpvf.learner import (
    LstdqAccumulator,
    RpiResult,
    Sample,
    SampleSet,
    WeightVector,
    check_coverage,
    collect_covering_samples,
    collect_samples,
    lstdq,
    rpi,
    shape_samples,
)
from rpvf.mdp import (
    Policy,
    exact_policy_evaluation,
    policy_q_function,
    value_iteration,
)
from rpvf.spectral import BasisSet, lift_to_state_action


@pytest.fixture
def exhaustive_samples(goal_mdp):
    """One sample of every state-action pair of a deterministic MDP."""
    n_states, n_actions = goal_mdp.n_states, goal_mdp.n_actions
    states = np.repeat(np.arange(n_states), n_actions)
    actions = np.tile(np.arange(n_actions), n_states)
    next_states = goal_mdp.transitions[actions, states].argmax(axis=1)
    return SampleSet(
        states, actions, goal_mdp.rewards[states, actions], next_states, 0, "exhaustive"
    )


@pytest.fixture
def tabular_config():
    return LearnerConfig(alpha=0.9, k=25)


def test_collect_samples_is_reproducible(goal_mdp):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    first = collect_samples(goal_mdp, uniform, n_episodes=20, horizon=10, seed=4)
    second = collect_samples(goal_mdp, uniform, n_episodes=20, horizon=10, seed=4)
    for column in ("states", "actions", "rewards", "next_states"):
        np.testing.assert_array_equal(getattr(first, column), getattr(second, column))
    assert len(first) == 200
    assert first.behavior == "uniform-random"


def test_collect_samples_stores_whole_episodes(goal_mdp, goal_grid):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    samples = collect_samples(goal_mdp, uniform, n_episodes=5, horizon=8, seed=1)

    for episode in range(5):
        block = slice(episode * 8, (episode + 1) * 8)
        np.testing.assert_array_equal(
            samples.states[block][1:], samples.next_states[block][:-1]
        )
    goal = goal_grid.state_index[goal_grid.goal]
    assert goal not in samples.states[::8].tolist()
    np.testing.assert_array_equal(
        samples.rewards, goal_mdp.rewards[samples.states, samples.actions]
    )


def test_collect_samples_follows_deterministic_behaviour(goal_mdp):
    always_up = Policy.deterministic(np.zeros(goal_mdp.n_states, dtype=int), 4)
    samples = collect_samples(goal_mdp, always_up, n_episodes=3, horizon=4, seed=0)
    assert samples.actions.tolist() == [0] * 12
    assert samples.behavior == "deterministic"


def test_collect_samples_rejects_empty_budget(goal_mdp):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    with pytest.raises(ValueError, match="at least one episode"):
        collect_samples(goal_mdp, uniform, n_episodes=0, horizon=5, seed=0)


def test_default_budget_covers_the_goal_grid(goal_mdp):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    samples = collect_covering_samples(goal_mdp, uniform, 500, 50, seed=0)
    assert (samples.visit_counts(25, 4) > 0).all()


def test_check_coverage_reports_missing_pairs(goal_mdp):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    samples = collect_samples(goal_mdp, uniform, n_episodes=1, horizon=3, seed=0)
    with pytest.raises(CoverageError) as excinfo:
        check_coverage(samples, 25, 4)
    assert excinfo.value.total == 100
    assert excinfo.value.missing >= 97


def test_covering_samples_give_up_after_max_attempts(goal_mdp):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    with pytest.raises(CoverageError):
        collect_covering_samples(goal_mdp, uniform, 1, 2, seed=0, max_attempts=2)


def test_covering_samples_double_the_episodes(goal_mdp):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    samples = collect_covering_samples(goal_mdp, uniform, 5, 50, seed=0, max_attempts=10)
    assert len(samples) % (5 * 50) == 0
    assert (len(samples) // (5 * 50)) & (len(samples) // (5 * 50) - 1) == 0


def test_sample_set_indexing():
    samples = SampleSet.from_samples([Sample(0, 1, 2.0, 3), Sample(3, 0, -1.0, 0)], 9, "manual")
    assert samples[1] == Sample(3, 0, -1.0, 0)
    assert list(samples) == [Sample(0, 1, 2.0, 3), Sample(3, 0, -1.0, 0)]
    assert len(samples.head(1)) == 1


def test_shaped_samples_add_the_potential_difference(goal_mdp, goal_grid):
    uniform = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    samples = collect_samples(goal_mdp, uniform, n_episodes=4, horizon=5, seed=2)
    psi = potential_psi(goal_grid)

    shaped = shape_samples(samples, psi, 0.9)
    expected = samples.rewards + 0.9 * psi.psi[samples.next_states] - psi.psi[samples.states]
    np.testing.assert_allclose(shaped.rewards, expected)
    np.testing.assert_array_equal(shaped.states, samples.states)
    assert shaped.behavior == "uniform-random+shaped"


def test_lstdq_with_indicator_features_is_exact(goal_mdp, exhaustive_samples, tabular_config):
    features = lift_to_state_action(BasisSet.identity(goal_mdp.n_states), goal_mdp.n_actions)
    for seed in range(5):
        policy = Policy.random_deterministic(goal_mdp.n_states, goal_mdp.n_actions, seed)
        weights = lstdq(exhaustive_samples, features, policy, tabular_config)
        np.testing.assert_allclose(
            features.q_values(weights.values),
            policy_q_function(goal_mdp, policy).values,
            atol=1e-6,
            rtol=0,
        )


def test_lstdq_respects_sample_cap(goal_mdp, exhaustive_samples):
    features = lift_to_state_action(BasisSet.identity(goal_mdp.n_states), goal_mdp.n_actions)
    policy = Policy.random_deterministic(goal_mdp.n_states, goal_mdp.n_actions, 0)
    capped = LearnerConfig(alpha=0.9, k=25, big_t=4)
    weights = lstdq(exhaustive_samples, features, policy, capped)
    # Only the four actions of state 0 were seen; every other weight stays at zero.
    assert np.count_nonzero(weights.values) <= 4


def test_lstdq_without_rewards_gives_zero_weights(goal_mdp, exhaustive_samples, tabular_config):
    features = lift_to_state_action(BasisSet.identity(goal_mdp.n_states), goal_mdp.n_actions)
    silent = SampleSet(
        exhaustive_samples.states,
        exhaustive_samples.actions,
        np.zeros(len(exhaustive_samples)),
        exhaustive_samples.next_states,
        0,
        "silent",
    )
    policy = Policy.random_deterministic(goal_mdp.n_states, goal_mdp.n_actions, 3)
    weights = lstdq(silent, features, policy, tabular_config)
    np.testing.assert_array_equal(weights.values, 0.0)


def test_lstdq_ignores_sample_duplication(goal_mdp, exhaustive_samples, tabular_config):
    features = lift_to_state_action(BasisSet.identity(goal_mdp.n_states), goal_mdp.n_actions)
    doubled = SampleSet(
        *(
            np.concatenate([column, column])
            for column in (
                exhaustive_samples.states,
                exhaustive_samples.actions,
                exhaustive_samples.rewards,
                exhaustive_samples.next_states,
            )
        ),
        0,
        "doubled",
    )
    policy = Policy.random_deterministic(goal_mdp.n_states, goal_mdp.n_actions, 2)
    once = lstdq(exhaustive_samples, features, policy, tabular_config)
    twice = lstdq(doubled, features, policy, tabular_config)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-8, rtol=0)


def test_singular_system_falls_back_to_ridge():
    accumulator = LstdqAccumulator.zeros(2)
    accumulator.b_vector += [1.0, 2.0]
    weights = accumulator.solve(ridge=0.5, condition_limit=1e12)
    np.testing.assert_allclose(weights, [2.0, 4.0])


def test_singular_system_without_ridge_raises():
    accumulator = LstdqAccumulator.zeros(2)
    with pytest.raises(SingularSystemError):
        accumulator.solve(ridge=0.0, condition_limit=1e12)


def test_rpi_with_indicator_features_finds_the_optimum(
    goal_mdp, exhaustive_samples, tabular_config
):
    j_star, _, _ = value_iteration(goal_mdp)
    pi0 = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)

    result = rpi(exhaustive_samples, BasisSet.identity(goal_mdp.n_states), pi0, tabular_config)
    assert len(result.trace) <= tabular_config.t
    learned = exact_policy_evaluation(goal_mdp, result.policy)
    np.testing.assert_allclose(learned.values, j_star.values, atol=1e-6)


def test_rpi_is_deterministic(goal_mdp, exhaustive_samples, tabular_config):
    basis = BasisSet.identity(goal_mdp.n_states)
    pi0 = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    first = rpi(exhaustive_samples, basis, pi0, tabular_config)
    second = rpi(exhaustive_samples, basis, pi0, tabular_config)
    np.testing.assert_array_equal(first.policy.actions, second.policy.actions)
    np.testing.assert_array_equal(first.weights.values, second.weights.values)
    assert first.trace == second.trace


def test_rpi_result_convergence_flag():
    policy = Policy.uniform(2, 2)
    weights = WeightVector(np.zeros(4))
    assert RpiResult(policy, weights, (3, 1, 0)).converged
    assert not RpiResult(policy, weights, (3, 1)).converged
    assert not RpiResult(policy, weights, ()).converged


def test_rpi_stops_at_iteration_cap(goal_mdp, exhaustive_samples):
    pi0 = Policy.random_deterministic(goal_mdp.n_states, goal_mdp.n_actions, 1)
    config = LearnerConfig(alpha=0.9, k=25, t=1)
    result = rpi(exhaustive_samples, BasisSet.identity(goal_mdp.n_states), pi0, config)
    assert len(result.trace) == 1


def test_rpi_rejects_mismatched_basis(goal_mdp, exhaustive_samples, tabular_config):
    pi0 = Policy.uniform(goal_mdp.n_states, goal_mdp.n_actions)
    with pytest.raises(ValueError, match="Basis covers"):
        rpi(exhaustive_samples, BasisSet.identity(4), pi0, tabular_config)
