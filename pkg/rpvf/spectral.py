"""Similarity and diffusion matrices over state graphs, and eigenvector bases built from them."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import networkx as nx
import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

logger = logging.getLogger(__name__)

COMPLEX_TOLERANCE = 1e-8
TIE_TOLERANCE = 1e-10
CONSTANT_TOLERANCE = 1e-9


class MatrixKind(StrEnum):
    ADJACENCY = "adjacency"
    COMBINATORIAL_LAPLACIAN = "combinatorial-laplacian"
    NORMALIZED_LAPLACIAN = "normalized-laplacian"
    RANDOM_WALK = "random-walk"
    REWARD_DIFFUSION = "reward-diffusion"
    GAUSSIAN_KERNEL = "gaussian-kernel"


LAPLACIAN_KINDS = frozenset({MatrixKind.COMBINATORIAL_LAPLACIAN, MatrixKind.NORMALIZED_LAPLACIAN})
DIFFUSION_KINDS = frozenset({MatrixKind.RANDOM_WALK, MatrixKind.REWARD_DIFFUSION})
DEGREE_NORMALIZED_KINDS = DIFFUSION_KINDS | {MatrixKind.NORMALIZED_LAPLACIAN}


class EigenOrdering(StrEnum):
    ASCENDING = "ascending"
    DESCENDING = "descending"


class ValueScale(StrEnum):
    """How a value profile is rescaled before it is used as kernel data."""

    RAW = "raw"
    MAX = "max"
    SUM = "sum"


@dataclass(frozen=True, eq=False)
class StateGraph:
    """Undirected state graph with a reward per node.

    Attributes:
        adjacency: symmetric 0/1 matrix with zero diagonal
        state_rewards: cell reward of every node
        coordinates: grid coordinate of every node, when the graph came from a grid
    """

    adjacency: np.ndarray
    state_rewards: np.ndarray
    coordinates: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self) -> None:
        adjacency = np.array(self.adjacency, dtype=float)
        rewards = np.array(self.state_rewards, dtype=float)
        n = adjacency.shape[0]
        if adjacency.shape != (n, n) or n == 0:
            msg = f"Adjacency must be a non-empty square matrix, got {adjacency.shape}"
            raise ValueError(msg)
        if not np.array_equal(adjacency, adjacency.T):
            msg = "Adjacency must be symmetric"
            raise ValueError(msg)
        if np.diagonal(adjacency).any():
            msg = "Adjacency must have a zero diagonal"
            raise ValueError(msg)
        if not np.isin(adjacency, (0.0, 1.0)).all():
            msg = "Adjacency entries must be 0 or 1"
            raise ValueError(msg)
        if rewards.shape != (n,) or not np.isfinite(rewards).all():
            msg = f"State rewards must be a finite vector of length {n}"
            raise ValueError(msg)
        if self.coordinates is not None and len(self.coordinates) != n:
            msg = "One coordinate per node is required"
            raise ValueError(msg)
        adjacency.setflags(write=False)
        rewards.setflags(write=False)
        object.__setattr__(self, "adjacency", adjacency)
        object.__setattr__(self, "state_rewards", rewards)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    def is_connected(self) -> bool:
        return nx.is_connected(nx.from_numpy_array(self.adjacency))

    def with_rewards(self, rewards: np.ndarray) -> StateGraph:
        return StateGraph(self.adjacency, rewards, self.coordinates)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    kind: MatrixKind
    data: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            msg = f"Similarity matrix must be square, got {data.shape}"
            raise ValueError(msg)
        data.setflags(write=False)
        object.__setattr__(self, "kind", MatrixKind(self.kind))
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def is_symmetric(self) -> bool:
        """Whether the symmetric eigensolver applies."""
        return self.kind not in DIFFUSION_KINDS or bool(self.params.get("symmetrized"))


@dataclass(frozen=True, eq=False)
class BasisSet:
    """k eigenvector features over n states.

    Columns have unit norm and their largest-magnitude entry is positive.
    """

    phi: np.ndarray
    eigenvalues: np.ndarray
    source_kind: MatrixKind | None
    ordering: EigenOrdering
    warnings: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def identity(cls, n: int) -> BasisSet:
        """Tabular indicator basis, one column per state."""
        return cls(np.eye(n), np.ones(n), None, EigenOrdering.DESCENDING)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Block one-hot lift of state features to state-action features.

    phi(s, a) holds the k features of s in block a and zeros elsewhere.
    """

    state_features: np.ndarray
    n_actions: int

    @property
    def k(self) -> int:
        return self.state_features.shape[1]

    @property
    def n_states(self) -> int:
        return self.state_features.shape[0]

    @property
    def dimension(self) -> int:
        return self.k * self.n_actions

    def __call__(self, state: int, action: int) -> np.ndarray:
        features = np.zeros(self.dimension)
        features[action * self.k : (action + 1) * self.k] = self.state_features[state]
        return features

    def batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Rows phi(states[i], actions[i]) stacked into an (m, dimension) matrix."""
        states = np.asarray(states, dtype=int)
        actions = np.asarray(actions, dtype=int)
        features = np.zeros((states.size, self.dimension))
        columns = actions[:, np.newaxis] * self.k + np.arange(self.k)
        features[np.arange(states.size)[:, np.newaxis], columns] = self.state_features[states]
        return features

    def q_values(self, weights: np.ndarray) -> np.ndarray:
        """Q(s, a) = phi(s, a)^T w for every state and action."""
        return self.state_features @ np.asarray(weights).reshape(self.n_actions, self.k).T


def _require_degrees(graph: StateGraph) -> np.ndarray:
    degrees = graph.degrees
    if (degrees == 0).any():
        isolated = np.flatnonzero(degrees == 0).tolist()
        msg = f"Degree-normalised matrices need every node connected; isolated: {isolated}"
        raise ValueError(msg)
    return degrees


def build_matrix(
    graph: StateGraph, kind: MatrixKind | str, params: Mapping[str, Any] | None = None
) -> SimilarityMatrix:
    """Build A, L = D - A, D^-1/2 L D^-1/2, W = D^-1 A, W_R or a Gaussian kernel."""
    kind = MatrixKind(kind)
    params = dict(params or {})
    adjacency = graph.adjacency

    if kind is MatrixKind.REWARD_DIFFUSION:
        return reward_diffusion_matrix(graph, **params)
    if kind is MatrixKind.GAUSSIAN_KERNEL:
        values = params.pop("values", graph.state_rewards)
        return gaussian_kernel_from_values(values, **params)

    if kind in DEGREE_NORMALIZED_KINDS:
        degrees = _require_degrees(graph)
    else:
        degrees = graph.degrees

    if kind is MatrixKind.ADJACENCY:
        data = adjacency.copy()
    elif kind is MatrixKind.COMBINATORIAL_LAPLACIAN:
        data = np.diag(degrees) - adjacency
    elif kind is MatrixKind.NORMALIZED_LAPLACIAN:
        inv_sqrt = 1.0 / np.sqrt(degrees)
        data = inv_sqrt[:, np.newaxis] * (np.diag(degrees) - adjacency) * inv_sqrt
    else:
        data = adjacency / degrees[:, np.newaxis]
    return SimilarityMatrix(kind, data, params)


def reward_diffusion_matrix(
    graph: StateGraph, beta: float, symmetrized: bool = False
) -> SimilarityMatrix:
    """Softmax diffusion over neighbour rewards.

    W_R(s, s') = exp(beta R(s')) / sum_{s'' ~ s} exp(beta R(s'')) for neighbours s'.
    With `symmetrized`, returns D^-1/2 K D^-1/2 for the edge kernel
    K(s, s') = A(s, s') exp(beta (R(s) + R(s')) / 2) instead. At beta = 0 the two
    forms reduce to D^-1 A and D^-1/2 A D^-1/2 = I - normalised Laplacian.
    """
    if beta < 0:
        msg = f"Beta must be non-negative, got {beta}"
        raise ValueError(msg)
    _require_degrees(graph)
    adjacency = graph.adjacency
    scaled = beta * graph.state_rewards

    if symmetrized:
        node_weights = np.exp(scaled / 2 - np.max(scaled / 2))
        kernel = adjacency * node_weights[:, np.newaxis] * node_weights
        inv_sqrt = 1.0 / np.sqrt(kernel.sum(axis=1))
        data = inv_sqrt[:, np.newaxis] * kernel * inv_sqrt
        return SimilarityMatrix(
            MatrixKind.REWARD_DIFFUSION, data, {"beta": beta, "symmetrized": True}
        )

    neighbours = adjacency > 0
    exponents = np.where(neighbours, scaled[np.newaxis, :], -np.inf)
    exponents = exponents - exponents.max(axis=1, keepdims=True)
    weights = adjacency * np.exp(exponents)
    data = weights / weights.sum(axis=1)[:, np.newaxis]
    return SimilarityMatrix(MatrixKind.REWARD_DIFFUSION, data, {"beta": beta, "symmetrized": False})


def gaussian_kernel_from_values(
    values: np.ndarray, sigma: float, squared: bool = False
) -> SimilarityMatrix:
    """K(i, j) = exp(-|v_i - v_j| / (2 sigma^2)).

    The distance is unsquared by default; `squared` switches to the usual RBF form.
    """
    if sigma <= 0:
        msg = f"Sigma must be positive, got {sigma}"
        raise ValueError(msg)
    points = np.asarray(values, dtype=float).ravel()
    distance = np.abs(points[:, np.newaxis] - points[np.newaxis, :])
    if squared:
        distance = distance**2
    data = np.exp(-distance / (2.0 * sigma**2))
    return SimilarityMatrix(MatrixKind.GAUSSIAN_KERNEL, data, {"sigma": sigma, "squared": squared})


def scale_values(values: np.ndarray, scale: ValueScale | str) -> np.ndarray:
    """Rescale a value profile by its largest magnitude or its total mass.

    An all-zero profile is returned unchanged.
    """
    points = np.asarray(values, dtype=float).ravel()
    scale = ValueScale(scale)
    if scale is ValueScale.RAW:
        return points.copy()
    norm = np.max(np.abs(points)) if scale is ValueScale.MAX else np.sum(np.abs(points))
    if norm == 0:
        return points.copy()
    return points / norm


def _unit_sign_fixed(vectors: np.ndarray) -> np.ndarray:
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    peaks = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[peaks, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _tie_clusters(values: np.ndarray, tol: float) -> list[list[int]]:
    clusters: list[list[int]] = [[0]]
    for position in range(1, values.size):
        if abs(values[position] - values[position - 1]) <= tol:
            clusters[-1].append(position)
        else:
            clusters.append([position])
    return clusters


def top_k_eigenbasis(
    matrix: SimilarityMatrix, k: int, tie_tol: float = TIE_TOLERANCE
) -> BasisSet:
    """Leading k eigenvectors of a similarity matrix.

    Diffusion and kernel kinds keep the largest eigenvalues, Laplacian kinds the
    smallest. Equal eigenvalues (within tie_tol) are ordered by comparing their
    sign-fixed eigenvectors lexicographically, so the output is reproducible
    under multiplicity.
    """
    n = matrix.n
    if not 1 <= k <= n:
        msg = f"k must lie in [1, {n}], got {k}"
        raise ValueError(msg)
    ordering = (
        EigenOrdering.ASCENDING if matrix.kind in LAPLACIAN_KINDS else EigenOrdering.DESCENDING
    )

    if matrix.is_symmetric:
        logger.debug("Symmetric eigensolver on %s matrix (n=%d)", matrix.kind, n)
        eigenvalues, eigenvectors = scipy.linalg.eigh(matrix.data)
    else:
        logger.debug("General eigensolver on %s matrix (n=%d)", matrix.kind, n)
        eigenvalues, eigenvectors = scipy.linalg.eig(matrix.data)

    keys = eigenvalues.real if ordering is EigenOrdering.ASCENDING else -eigenvalues.real
    order = np.argsort(keys, kind="stable")
    values = eigenvalues[order]

    # Extend past k to the end of a tie cluster straddling the cut.
    end = k
    while end < n and abs(values[end].real - values[end - 1].real) <= tie_tol:
        end += 1
    order = order[:end]

    warnings: list[str] = []
    imaginary = np.abs(eigenvalues[order[:k]].imag)
    if (imaginary > COMPLEX_TOLERANCE).any():
        message = (
            f"Dropped imaginary parts up to {imaginary.max():.3e} from the leading "
            f"{k} eigenpairs of the {matrix.kind} matrix"
        )
        logger.warning(message)
        warnings.append(message)

    selected_values = eigenvalues[order].real
    vectors = _unit_sign_fixed(eigenvectors[:, order].real)
    # Eigenvalues inside a cluster agree to tie_tol, so only the vectors are permuted.
    permutation = [
        position
        for cluster in _tie_clusters(selected_values, tie_tol)
        for position in sorted(cluster, key=lambda column: tuple(vectors[:, column]))
    ]
    phi = vectors[:, permutation][:, :k]
    phi.setflags(write=False)
    eigenvalue_vector = selected_values[:k].copy()
    eigenvalue_vector.setflags(write=False)
    return BasisSet(phi, eigenvalue_vector, matrix.kind, ordering, tuple(warnings))


def lift_to_state_action(basis: BasisSet, n_actions: int) -> FeatureMap:
    if n_actions < 1:
        msg = f"Need at least one action, got {n_actions}"
        raise ValueError(msg)
    return FeatureMap(basis.phi, n_actions)


def _is_constant(vector: np.ndarray) -> bool:
    return bool(np.ptp(vector) <= CONSTANT_TOLERANCE * np.max(np.abs(vector)))


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation.

    Numerically constant vectors count as perfectly correlated with each other and
    uncorrelated with anything else.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a_constant, b_constant = _is_constant(a), _is_constant(b)
    if a_constant and b_constant:
        return 1.0
    if a_constant or b_constant:
        return 0.0
    a_centered = a - a.mean()
    b_centered = b - b.mean()
    return float(
        a_centered @ b_centered / (np.linalg.norm(a_centered) * np.linalg.norm(b_centered))
    )


@dataclass(frozen=True)
class MatchedCorrelation:
    """Best sign/permutation matching between two sets of vectors."""

    pairs: tuple[tuple[int, int], ...]
    correlations: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.correlations))

    @property
    def minimum(self) -> float:
        return float(np.min(self.correlations))


def matched_correlation(reference: np.ndarray, candidate: np.ndarray) -> MatchedCorrelation:
    """Match columns of `candidate` to columns of `reference` maximising total |Pearson|.

    Both inputs are (n, p) matrices over the same n points.
    """
    reference = np.asarray(reference, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if reference.shape != candidate.shape:
        msg = f"Shapes differ: {reference.shape} vs {candidate.shape}"
        raise ValueError(msg)
    p = reference.shape[1]
    scores = np.array(
        [[abs(pearson(reference[:, i], candidate[:, j])) for j in range(p)] for i in range(p)]
    )
    rows, columns = linear_sum_assignment(scores, maximize=True)
    return MatchedCorrelation(
        tuple((int(i), int(j)) for i, j in zip(rows, columns, strict=True)),
        tuple(float(scores[i, j]) for i, j in zip(rows, columns, strict=True)),
    )
