"""Seeded random instances for property tests and acceptance sweeps.

Every function takes a ``numpy.random.Generator`` so runs are reproducible
from a single seed.
"""
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from densegame.game_model import AbstractGame, ClassicalGame, DensityProfile, MixedProfile
from densegame.quantum_game import JointRule, OperatorGame, QuantumObject
from densegame.tensor_core import DensityMatrix, SpaceShape, kron_all


def random_classical_game(rng: np.random.Generator, dims: Sequence[int], scale: float = 10.0) -> ClassicalGame:
    dims = tuple(dims)
    return ClassicalGame(tuple(rng.uniform(-scale, scale, size=dims) for _ in dims))


def random_probabilities(rng: np.random.Generator, d: int) -> np.ndarray:
    p = rng.exponential(size=d)
    return p / p.sum()


def random_mixed_profile(rng: np.random.Generator, dims: Sequence[int]) -> MixedProfile:
    return MixedProfile(tuple(random_probabilities(rng, d) for d in dims))


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    if d == 1:
        return np.exp(1j * rng.uniform(0, 2 * np.pi)) * np.ones((1, 1))
    return unitary_group.rvs(d, random_state=rng)


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


def random_density(rng: np.random.Generator, d: int, rank: int | None = None) -> DensityMatrix:
    rank = d if rank is None else rank
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = a @ a.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real)


def random_density_profile(rng: np.random.Generator, dims: Sequence[int]) -> DensityProfile:
    return DensityProfile(tuple(random_density(rng, d) for d in dims))


def random_joint_state(rng: np.random.Generator, shape: SpaceShape) -> DensityMatrix:
    return random_density(rng, shape.total)


def local_unitary(rng: np.random.Generator, dims: Sequence[int]) -> np.ndarray:
    """Kronecker product of independent random unitaries, one per player."""
    return kron_all([random_unitary(rng, d) for d in dims])


def conjugate_game(game: AbstractGame, v: np.ndarray) -> AbstractGame:
    """Same game seen in the basis V: every H^i becomes V H^i V^dagger."""
    ops = []
    for h in game.operators:
        m = v @ h @ v.conj().T
        ops.append(0.5 * (m + m.conj().T))
    return AbstractGame(game.shape, tuple(ops))


def random_operator_game(rng: np.random.Generator, q: int = 2, n_players: int = 2) -> OperatorGame:
    """Ordered-product game on a random object state with random Hermitian payoff scales."""
    return OperatorGame(
        QuantumObject(random_density(rng, q)),
        JointRule.ordered_product(),
        tuple(random_hermitian(rng, q) for _ in range(n_players)),
    )
