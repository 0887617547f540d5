"""Sample collection, LSTDQ, representational policy iteration and reward shaping."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from rpvf.config import LearnerConfig
from rpvf.exceptions import CoverageError, SingularSystemError
from rpvf.mdp import Policy, PolicyKind, TabularMdp, greedy_policy
from rpvf.spectral import BasisSet, FeatureMap, lift_to_state_action

logger = logging.getLogger(__name__)

DEFAULT_COVERAGE_ATTEMPTS = 4


@dataclass(frozen=True, slots=True)
class Sample:
    s: int
    a: int
    r: float
    s_next: int


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Ordered experience tuples (s, a, r, s'), stored column-wise."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    seed: int
    behavior: str

    def __post_init__(self) -> None:
        columns = {
            "states": np.array(self.states, dtype=int),
            "actions": np.array(self.actions, dtype=int),
            "rewards": np.array(self.rewards, dtype=float),
            "next_states": np.array(self.next_states, dtype=int),
        }
        sizes = {column.shape for column in columns.values()}
        if len(sizes) != 1 or columns["states"].ndim != 1:
            msg = f"Sample columns must be 1-D and equally long, got shapes {sizes}"
            raise ValueError(msg)
        if not np.isfinite(columns["rewards"]).all():
            msg = "Sample rewards must be finite"
            raise ValueError(msg)
        for name in ("states", "actions", "next_states"):
            if (columns[name] < 0).any():
                msg = f"Sample {name} must be non-negative indices"
                raise ValueError(msg)
        for name, column in columns.items():
            column.setflags(write=False)
            object.__setattr__(self, name, column)

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], seed: int, behavior: str) -> SampleSet:
        rows = list(samples)
        return cls(
            [sample.s for sample in rows],
            [sample.a for sample in rows],
            [sample.r for sample in rows],
            [sample.s_next for sample in rows],
            seed,
            behavior,
        )

    def __len__(self) -> int:
        return self.states.size

    def __getitem__(self, index: int) -> Sample:
        return Sample(
            int(self.states[index]),
            int(self.actions[index]),
            float(self.rewards[index]),
            int(self.next_states[index]),
        )

    def __iter__(self) -> Iterator[Sample]:
        return (self[index] for index in range(len(self)))

    def head(self, count: int) -> SampleSet:
        return replace(
            self,
            states=self.states[:count],
            actions=self.actions[:count],
            rewards=self.rewards[:count],
            next_states=self.next_states[:count],
        )

    def visit_counts(self, n_states: int, n_actions: int) -> np.ndarray:
        counts = np.zeros((n_states, n_actions), dtype=int)
        np.add.at(counts, (self.states, self.actions), 1)
        return counts


@dataclass(frozen=True, eq=False)
class WeightVector:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or not np.isfinite(values).all():
            msg = "Weights must be a finite vector"
            raise ValueError(msg)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass
class LstdqAccumulator:
    """Running A = sum phi (phi - alpha phi')^T and b = sum phi r."""

    a_matrix: np.ndarray
    b_vector: np.ndarray

    @classmethod
    def zeros(cls, dimension: int) -> LstdqAccumulator:
        return cls(np.zeros((dimension, dimension)), np.zeros(dimension))

    def add(
        self,
        features: np.ndarray,
        next_features: np.ndarray,
        rewards: np.ndarray,
        alpha: float,
    ) -> None:
        self.a_matrix += features.T @ (features - alpha * next_features)
        self.b_vector += features.T @ rewards

    def solve(self, ridge: float, condition_limit: float) -> np.ndarray:
        """Solve A w = b, falling back to (A + ridge I) w = b for near-singular A.

        Raises:
            SingularSystemError: if the system cannot be solved even with the ridge
        """
        condition = float(np.linalg.cond(self.a_matrix))
        if np.isfinite(condition) and condition <= condition_limit:
            try:
                return scipy.linalg.solve(self.a_matrix, self.b_vector)
            except scipy.linalg.LinAlgError as err:
                logger.warning("LSTDQ solve failed (%s), retrying with ridge", err)

        logger.warning(
            "LSTDQ system ill-conditioned (condition %.3e), adding ridge %g",
            condition,
            ridge,
        )
        regularized = self.a_matrix + ridge * np.eye(self.b_vector.size)
        try:
            weights = scipy.linalg.solve(regularized, self.b_vector)
        except scipy.linalg.LinAlgError as err:
            raise SingularSystemError("LSTDQ system singular after ridge", condition) from err
        if not np.isfinite(weights).all():
            raise SingularSystemError(
                "LSTDQ weights not finite after ridge", float(np.linalg.cond(regularized))
            )
        return weights


class RpiResult(NamedTuple):
    policy: Policy
    weights: WeightVector
    trace: tuple[int, ...]

    @property
    def converged(self) -> bool:
        """Whether the last improvement step left the policy unchanged."""
        return bool(self.trace) and self.trace[-1] == 0


def _describe(policy: Policy) -> str:
    if policy.kind is PolicyKind.RANDOMIZED and np.all(
        policy.probabilities == policy.probabilities[0, 0]
    ):
        return "uniform-random"
    return f"{policy.kind}"


def _draw(cdf_rows: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row; uniforms lie in (0, 1]."""
    picks = (cdf_rows < uniforms[:, np.newaxis]).sum(axis=1)
    return np.minimum(picks, cdf_rows.shape[1] - 1)


def collect_samples(
    mdp: TabularMdp, behavior: Policy, n_episodes: int, horizon: int, seed: int
) -> SampleSet:
    """Roll out `n_episodes` trajectories of length `horizon` under `behavior`.

    Episodes start uniformly over non-absorbing states and run in lockstep off one
    seeded generator; samples are stored episode by episode.
    """
    if horizon < 1 or n_episodes < 1:
        msg = f"Need at least one episode of length >= 1, got {n_episodes} x {horizon}"
        raise ValueError(msg)
    if behavior.probabilities.shape != (mdp.n_states, mdp.n_actions):
        msg = "Behaviour policy does not match the MDP"
        raise ValueError(msg)

    rng = np.random.default_rng(seed)
    starts = np.setdiff1d(np.arange(mdp.n_states), mdp.absorbing_states)
    if starts.size == 0:
        starts = np.arange(mdp.n_states)
    action_cdf = np.cumsum(behavior.probabilities, axis=1)
    transition_cdf = np.cumsum(mdp.transitions, axis=2)

    states = np.empty((horizon, n_episodes), dtype=int)
    actions = np.empty_like(states)
    next_states = np.empty_like(states)
    state = rng.choice(starts, size=n_episodes)
    for step in range(horizon):
        action = _draw(action_cdf[state], 1.0 - rng.random(n_episodes))
        successor = _draw(transition_cdf[action, state], 1.0 - rng.random(n_episodes))
        states[step], actions[step], next_states[step] = state, action, successor
        state = successor

    states, actions, next_states = states.T.ravel(), actions.T.ravel(), next_states.T.ravel()
    logger.debug("Collected %d samples (seed=%s)", states.size, seed)
    return SampleSet(
        states,
        actions,
        mdp.rewards[states, actions],
        next_states,
        seed,
        _describe(behavior),
    )


def check_coverage(samples: SampleSet, n_states: int, n_actions: int) -> None:
    """Raise CoverageError unless every state-action pair was sampled."""
    counts = samples.visit_counts(n_states, n_actions)
    missing = int((counts == 0).sum())
    if missing:
        raise CoverageError(missing, counts.size)


def collect_covering_samples(
    mdp: TabularMdp,
    behavior: Policy,
    n_episodes: int,
    horizon: int,
    seed: int,
    max_attempts: int = DEFAULT_COVERAGE_ATTEMPTS,
) -> SampleSet:
    """collect_samples, doubling the episode budget until every pair is covered."""
    retrying = Retrying(
        stop=stop_after_attempt(max_attempts),
        retry=retry_if_exception_type(CoverageError),
        reraise=True,
        before_sleep=lambda retry_state: logger.warning(
            "Sample coverage incomplete (%s), doubling episodes (attempt %s)...",
            retry_state.outcome.exception(),
            retry_state.attempt_number,
        ),
    )
    for attempt in retrying:
        with attempt:
            episodes = n_episodes * 2 ** (attempt.retry_state.attempt_number - 1)
            samples = collect_samples(mdp, behavior, episodes, horizon, seed)
            check_coverage(samples, mdp.n_states, mdp.n_actions)
    return samples


def shape_samples(samples: SampleSet, psi: np.ndarray, alpha: float) -> SampleSet:
    """Add the potential-based shaping reward alpha psi(s') - psi(s) to every sample."""
    potential = np.asarray(psi, dtype=float)
    if len(samples) and max(samples.states.max(), samples.next_states.max()) >= potential.size:
        msg = "Potential is not defined on every sampled state"
        raise ValueError(msg)
    shaped = samples.rewards + alpha * potential[samples.next_states] - potential[samples.states]
    return replace(samples, rewards=shaped, behavior=f"{samples.behavior}+shaped")


def lstdq(
    samples: SampleSet, features: FeatureMap, policy: Policy, config: LearnerConfig
) -> WeightVector:
    """Least-squares fixed point of Q^pi over a batch of samples.

    The successor action is the policy's mode action, so randomised policies are
    evaluated through their lowest-index most likely action.
    """
    if len(samples) == 0:
        msg = "LSTDQ needs at least one sample"
        raise ValueError(msg)
    if config.big_t is not None:
        samples = samples.head(config.big_t)

    next_actions = policy.actions[samples.next_states]
    accumulator = LstdqAccumulator.zeros(features.dimension)
    accumulator.add(
        features.batch(samples.states, samples.actions),
        features.batch(samples.next_states, next_actions),
        samples.rewards,
        config.alpha,
    )
    return WeightVector(accumulator.solve(config.ridge, config.condition_limit))


def rpi(
    samples: SampleSet, basis: BasisSet, pi0: Policy, config: LearnerConfig
) -> RpiResult:
    """Representational policy iteration: LSTDQ evaluation plus greedy improvement.

    Stops after config.t iterations or as soon as an improvement step changes no action.
    """
    if basis.n != pi0.n_states:
        msg = f"Basis covers {basis.n} states but the policy covers {pi0.n_states}"
        raise ValueError(msg)
    features = lift_to_state_action(basis, pi0.n_actions)

    policy = pi0
    trace: list[int] = []
    weights = None
    for iteration in range(config.t):
        weights = lstdq(samples, features, policy, config)
        improved = greedy_policy(features.q_values(weights.values))
        changes = int((improved.actions != policy.actions).sum())
        trace.append(changes)
        logger.debug("RPI iteration %d changed %d actions", iteration, changes)
        policy = improved
        if changes == 0:
            break

    result = RpiResult(policy, weights, tuple(trace))
    logger.debug(
        "RPI finished after %d iterations (converged=%s)", len(trace), result.converged
    )
    return result
