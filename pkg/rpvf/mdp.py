"""Exact tabular MDP machinery.

Everything here is solved exactly (value iteration to a tight tolerance, direct
linear solves for policy evaluation), so these results are the ground truth that
sampled learners are scored against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import scipy.linalg

from rpvf.exceptions import ConvergenceError, SingularSystemError

logger = logging.getLogger(__name__)

STOCHASTIC_ATOL = 1e-12
EVALUATION_RESIDUAL = 1e-10
DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITER = 100_000


def _readonly(array: np.ndarray | list, dtype: type = float) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out


def _check_discount(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        msg = f"Discount must lie strictly inside (0, 1), got {alpha}"
        raise ValueError(msg)


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP.

    Attributes:
        transitions: p_a(s, s') with shape (n_actions, n_states, n_states)
        rewards: expected immediate reward r_a(s) with shape (n_states, n_actions)
        discount: alpha, strictly inside (0, 1)
    """

    transitions: np.ndarray
    rewards: np.ndarray
    discount: float

    def __post_init__(self) -> None:
        transitions = _readonly(self.transitions)
        rewards = _readonly(self.rewards)

        if transitions.ndim != 3 or transitions.shape[1] != transitions.shape[2]:
            msg = (
                "Transitions must have shape (actions, states, states), "
                f"got {transitions.shape}"
            )
            raise ValueError(msg)
        n_actions, n_states, _ = transitions.shape
        if n_actions < 1 or n_states < 1:
            msg = "An MDP needs at least one state and one action"
            raise ValueError(msg)
        if rewards.shape != (n_states, n_actions):
            msg = f"Rewards must have shape {(n_states, n_actions)}, got {rewards.shape}"
            raise ValueError(msg)
        if not np.isfinite(rewards).all():
            msg = "Rewards must be finite"
            raise ValueError(msg)
        if (transitions < 0).any():
            msg = "Transition probabilities must be non-negative"
            raise ValueError(msg)
        row_sums = transitions.sum(axis=2)
        if not np.allclose(row_sums, 1.0, rtol=0.0, atol=STOCHASTIC_ATOL):
            worst = float(np.max(np.abs(row_sums - 1.0)))
            msg = f"Transition rows must sum to 1 (worst deviation {worst:.3e})"
            raise ValueError(msg)
        _check_discount(self.discount)

        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def absorbing_states(self) -> np.ndarray:
        """Indices of states that self-loop with certainty under every action."""
        diagonal = self.transitions[:, np.arange(self.n_states), np.arange(self.n_states)]
        return np.flatnonzero((diagonal == 1.0).all(axis=0))

    def with_rewards(self, rewards: np.ndarray) -> TabularMdp:
        return TabularMdp(self.transitions, rewards, self.discount)


class PolicyKind(StrEnum):
    DETERMINISTIC = "deterministic"
    RANDOMIZED = "randomized"


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary policy stored as a (n_states, n_actions) action distribution.

    Deterministic policies keep exactly one 1 per row.
    """

    probabilities: np.ndarray
    kind: PolicyKind = PolicyKind.RANDOMIZED

    def __post_init__(self) -> None:
        probabilities = _readonly(self.probabilities)
        if probabilities.ndim != 2 or 0 in probabilities.shape:
            msg = f"Policy must be a non-empty (states, actions) matrix, got {probabilities.shape}"
            raise ValueError(msg)
        if (probabilities < 0).any() or not np.allclose(
            probabilities.sum(axis=1), 1.0, rtol=0.0, atol=STOCHASTIC_ATOL
        ):
            msg = "Policy rows must be probability distributions"
            raise ValueError(msg)
        kind = PolicyKind(self.kind)
        if kind is PolicyKind.DETERMINISTIC and not (
            (probabilities == 1.0).sum(axis=1) == 1
        ).all():
            msg = "Deterministic policy rows must be one-hot"
            raise ValueError(msg)
        object.__setattr__(self, "probabilities", probabilities)
        object.__setattr__(self, "kind", kind)

    @classmethod
    def deterministic(cls, actions: np.ndarray | list[int], n_actions: int) -> Policy:
        actions = np.asarray(actions, dtype=int)
        if actions.ndim != 1 or ((actions < 0) | (actions >= n_actions)).any():
            msg = f"Deterministic actions must lie in [0, {n_actions})"
            raise ValueError(msg)
        probabilities = np.zeros((actions.size, n_actions))
        probabilities[np.arange(actions.size), actions] = 1.0
        return cls(probabilities, PolicyKind.DETERMINISTIC)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> Policy:
        return cls(np.full((n_states, n_actions), 1.0 / n_actions), PolicyKind.RANDOMIZED)

    @classmethod
    def random_deterministic(cls, n_states: int, n_actions: int, seed: int) -> Policy:
        rng = np.random.default_rng(seed)
        return cls.deterministic(rng.integers(0, n_actions, size=n_states), n_actions)

    @property
    def n_states(self) -> int:
        return self.probabilities.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probabilities.shape[1]

    @property
    def actions(self) -> np.ndarray:
        """Mode action per state, lowest index on ties."""
        return np.argmax(self.probabilities, axis=1)

    def transition_matrix(self, mdp: TabularMdp) -> np.ndarray:
        """P_pi(s, s') = sum_a pi(s, a) p_a(s, s')."""
        return np.einsum("sa,ast->st", self.probabilities, mdp.transitions)

    def expected_rewards(self, mdp: TabularMdp) -> np.ndarray:
        return (self.probabilities * mdp.rewards).sum(axis=1)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _readonly(self.values)
        if values.ndim != 1 or not np.isfinite(values).all():
            msg = "A value function is a finite vector"
            raise ValueError(msg)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:
        """Sum of J over all states, the score experiments compare."""
        return float(self.values.sum())


@dataclass(frozen=True, eq=False)
class QFunction:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _readonly(self.values)
        if values.ndim != 2 or not np.isfinite(values).all():
            msg = "A Q-function is a finite (states, actions) matrix"
            raise ValueError(msg)
        object.__setattr__(self, "values", values)

    def state_values(self) -> ValueFunction:
        return ValueFunction(self.values.max(axis=1))


def _check_policy(mdp: TabularMdp, policy: Policy) -> None:
    if policy.probabilities.shape != (mdp.n_states, mdp.n_actions):
        msg = (
            f"Policy shape {policy.probabilities.shape} does not match MDP "
            f"({mdp.n_states} states, {mdp.n_actions} actions)"
        )
        raise ValueError(msg)


def bellman_backup(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """One application of the Bellman optimality operator to a Q table."""
    state_values = np.asarray(q, dtype=float).max(axis=1)
    return mdp.rewards + mdp.discount * (mdp.transitions @ state_values).T


def value_iteration(
    mdp: TabularMdp,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[ValueFunction, QFunction, Policy]:
    """Solve the Bellman optimality equation by successive approximation from Q = 0.

    Args:
        mdp: The MDP to solve
        tol: Stop once max |T(Q) - Q| falls to this value
        max_iter: Iteration cap

    Returns:
        Tuple of (J*, Q*, greedy policy in Q*)

    Raises:
        ConvergenceError: if the residual is still above tol after max_iter sweeps
    """
    if tol <= 0:
        msg = f"Tolerance must be positive, got {tol}"
        raise ValueError(msg)

    q = np.zeros((mdp.n_states, mdp.n_actions))
    residual = float("inf")
    for iteration in range(1, max_iter + 1):
        updated = bellman_backup(mdp, q)
        residual = float(np.max(np.abs(updated - q)))
        q = updated
        if residual <= tol:
            logger.debug(
                "Value iteration converged after %d iterations (residual %.3e)",
                iteration,
                residual,
            )
            q_function = QFunction(q)
            return q_function.state_values(), q_function, greedy_policy(q_function)

    raise ConvergenceError(residual, max_iter)


def exact_policy_evaluation(mdp: TabularMdp, policy: Policy) -> ValueFunction:
    """Solve (I - alpha P_pi) J = R_pi directly."""
    _check_policy(mdp, policy)
    system = np.eye(mdp.n_states) - mdp.discount * policy.transition_matrix(mdp)
    rewards = policy.expected_rewards(mdp)
    try:
        values = scipy.linalg.solve(system, rewards)
    except (scipy.linalg.LinAlgError, ValueError) as err:
        raise SingularSystemError(
            "Policy evaluation solve failed", float(np.linalg.cond(system))
        ) from err

    residual = float(np.max(np.abs(system @ values - rewards)))
    if not np.isfinite(values).all() or residual > EVALUATION_RESIDUAL:
        raise SingularSystemError(
            f"Policy evaluation residual {residual:.3e} exceeds {EVALUATION_RESIDUAL}",
            float(np.linalg.cond(system)),
        )
    return ValueFunction(values)


def policy_q_function(mdp: TabularMdp, policy: Policy) -> QFunction:
    """Q^pi(s, a) = r_a(s) + alpha sum_s' p_a(s, s') J^pi(s')."""
    values = exact_policy_evaluation(mdp, policy).values
    return QFunction(mdp.rewards + mdp.discount * (mdp.transitions @ values).T)


def greedy_policy(q: QFunction | np.ndarray) -> Policy:
    """Deterministic argmax policy; ties go to the lowest action index."""
    values = q.values if isinstance(q, QFunction) else np.asarray(q, dtype=float)
    if values.ndim != 2 or not np.isfinite(values).all():
        msg = "Greedy improvement needs a finite (states, actions) table"
        raise ValueError(msg)
    return Policy.deterministic(np.argmax(values, axis=1), values.shape[1])


def optimal_action_sets(q: QFunction | np.ndarray, atol: float = 1e-8) -> np.ndarray:
    """Boolean (states, actions) mask of actions within atol of each row's maximum."""
    values = q.values if isinstance(q, QFunction) else np.asarray(q, dtype=float)
    return values >= values.max(axis=1, keepdims=True) - atol


def shape_mdp(mdp: TabularMdp, psi: np.ndarray) -> TabularMdp:
    """Potential-based shaping in expectation: r_a(s) + alpha E[psi(s')] - psi(s)."""
    potential = np.asarray(psi, dtype=float)
    if potential.shape != (mdp.n_states,) or not np.isfinite(potential).all():
        msg = f"Potential must be a finite vector of length {mdp.n_states}"
        raise ValueError(msg)
    expected_next = (mdp.transitions @ potential).T
    return mdp.with_rewards(
        mdp.rewards + mdp.discount * expected_next - potential[:, np.newaxis]
    )


def spectral_value_expansion(
    p_pi: np.ndarray, rewards: np.ndarray, alpha: float, k: int
) -> ValueFunction:
    """Approximate J = (I - alpha P)^-1 R from the k largest eigenpairs of a symmetric P.

    J ~ sum_i 1 / (1 - alpha lambda_i) phi_i phi_i^T R
    """
    matrix = np.asarray(p_pi, dtype=float)
    reward_vector = np.asarray(rewards, dtype=float)
    n = matrix.shape[0]
    if matrix.shape != (n, n) or reward_vector.shape != (n,):
        msg = (
            "Expected an (n, n) matrix and length-n rewards, "
            f"got {matrix.shape} and {reward_vector.shape}"
        )
        raise ValueError(msg)
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=STOCHASTIC_ATOL):
        msg = "Spectral value expansion only supports symmetric transition matrices"
        raise ValueError(msg)
    if not 1 <= k <= n:
        msg = f"k must lie in [1, {n}], got {k}"
        raise ValueError(msg)
    _check_discount(alpha)

    eigenvalues, eigenvectors = scipy.linalg.eigh(matrix)
    order = np.argsort(-eigenvalues, kind="stable")[:k]
    phi = eigenvectors[:, order]
    coefficients = (phi.T @ reward_vector) / (1.0 - alpha * eigenvalues[order])
    return ValueFunction(phi @ coefficients)
