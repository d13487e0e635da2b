"""Classical games, their diagonal lift, and every payoff-evaluation path.

Player ``i``'s payoff is ``Tr(rho^S H^i)``; for a classical game ``H^i`` is
the diagonal operator carrying the payoff tensor ``G^i`` under row-major
composite indexing, so the trace reproduces the multilinear expectation.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from densegame.config import DEFAULT_POLICY, NumericPolicy, resolve_policy
from densegame.errors import DimensionMismatchError, InvalidStateError, NonHermitianError, NotDiagonalError
from densegame.tensor_core import (
    ComplexMatrix,
    DensityMatrix,
    SpaceShape,
    as_matrix,
    check_hermitian,
    is_diagonal,
    kron_all,
    offdiagonal_residual,
)

log = logging.getLogger("densegame.game_model")


# =====================================================================
# Games
# =====================================================================
@dataclass(frozen=True, eq=False)
class ClassicalGame:
    """N-player normal-form game given by one real payoff tensor per player."""
    payoffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        tensors = tuple(np.array(g, dtype=float, copy=True) for g in self.payoffs)
        if not tensors:
            raise DimensionMismatchError("a game needs at least one player")
        dims = tensors[0].shape
        if len(dims) != len(tensors):
            raise DimensionMismatchError(
                f"{len(tensors)} players need payoff tensors of order {len(tensors)}, got order {len(dims)}"
            )
        for k, g in enumerate(tensors):
            if g.shape != dims:
                raise DimensionMismatchError(f"payoff tensor {k} has shape {g.shape}, expected {dims}")
            if not np.all(np.isfinite(g)):
                raise InvalidStateError(f"payoff tensor {k} has non-finite entries")
            g.flags.writeable = False
        object.__setattr__(self, "payoffs", tensors)
        # validates the joint-dimension cap
        SpaceShape(dims)

    @property
    def n_players(self) -> int:
        return len(self.payoffs)

    @property
    def dims(self) -> SpaceShape:
        return SpaceShape(self.payoffs[0].shape)

    @classmethod
    def from_bimatrix(cls, a, b) -> "ClassicalGame":
        return cls((np.asarray(a, dtype=float), np.asarray(b, dtype=float)))


@dataclass(frozen=True, eq=False)
class AbstractGame:
    """Hermitian payoff operators H^i on the joint strategy space."""
    shape: SpaceShape
    operators: tuple[ComplexMatrix, ...]
    policy: NumericPolicy = field(default=DEFAULT_POLICY, repr=False, compare=False)

    def __post_init__(self):
        ops = []
        for k, h in enumerate(self.operators):
            m = np.array(as_matrix(h, f"H[{k}]"), copy=True)
            if m.shape != (self.shape.total, self.shape.total):
                raise DimensionMismatchError(
                    f"H[{k}] has shape {m.shape}, expected {self.shape.total}x{self.shape.total}"
                )
            check_hermitian(m, self.policy.hermitian_tol, f"H[{k}]")
            m.flags.writeable = False
            ops.append(m)
        if len(ops) != self.shape.n_players:
            raise DimensionMismatchError(f"{self.shape.n_players} players but {len(ops)} payoff operators")
        object.__setattr__(self, "operators", tuple(ops))

    @property
    def n_players(self) -> int:
        return self.shape.n_players

    def is_diagonal(self, tol: float | None = None) -> bool:
        tol = self.policy.offdiag_tol if tol is None else tol
        return all(is_diagonal(h, tol) for h in self.operators)


# =====================================================================
# Profiles
# =====================================================================
@dataclass(frozen=True, eq=False)
class MixedProfile:
    """One probability vector per player."""
    vectors: tuple[np.ndarray, ...]
    policy: NumericPolicy = field(default=DEFAULT_POLICY, repr=False, compare=False)

    def __post_init__(self):
        vectors = []
        for k, p in enumerate(self.vectors):
            v = np.array(p, dtype=float, copy=True)
            if v.ndim != 1 or v.size == 0:
                raise DimensionMismatchError(f"profile entry {k} must be a non-empty vector")
            if np.any(v < -self.policy.profile_tol) or abs(v.sum() - 1.0) > self.policy.profile_tol:
                raise InvalidStateError(f"profile entry {k} is not a probability vector: {v}")
            v.flags.writeable = False
            vectors.append(v)
        object.__setattr__(self, "vectors", tuple(vectors))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(v.size for v in self.vectors)

    @classmethod
    def uniform(cls, dims: Sequence[int]) -> "MixedProfile":
        return cls(tuple(np.full(d, 1.0 / d) for d in dims))

    @classmethod
    def pure(cls, dims: Sequence[int], choice: Sequence[int]) -> "MixedProfile":
        vectors = []
        for d, c in zip(dims, choice, strict=True):
            v = np.zeros(d)
            v[c] = 1.0
            vectors.append(v)
        return cls(tuple(vectors))


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """One density matrix per player; the joint state is their tensor product."""
    factors: tuple[DensityMatrix, ...]

    def __post_init__(self):
        factors = tuple(f if isinstance(f, DensityMatrix) else DensityMatrix(f) for f in self.factors)
        object.__setattr__(self, "factors", factors)

    @property
    def shape(self) -> SpaceShape:
        return SpaceShape(tuple(f.dim for f in self.factors))

    def joint(self) -> ComplexMatrix:
        return kron_all([f.matrix for f in self.factors])

    def replace(self, i: int, rho: DensityMatrix) -> "DensityProfile":
        factors = list(self.factors)
        factors[i] = rho
        return DensityProfile(tuple(factors))

    def probabilities(self) -> tuple[np.ndarray, ...]:
        return tuple(f.probabilities() for f in self.factors)

    def is_diagonal(self, tol: float | None = None) -> bool:
        return all(is_diagonal(f.matrix, tol) for f in self.factors)

    @classmethod
    def uniform(cls, dims: Sequence[int]) -> "DensityProfile":
        return cls(tuple(DensityMatrix.maximally_mixed(d) for d in dims))


def _check_profile(game: AbstractGame, rho: DensityProfile) -> None:
    if rho.shape.dims != game.shape.dims:
        raise DimensionMismatchError(f"profile dims {rho.shape.dims} do not match game dims {game.shape.dims}")


def real_payoff(value: complex, policy: NumericPolicy, what: str = "payoff") -> float:
    if abs(value.imag) > policy.imag_tol:
        raise NonHermitianError(f"{what} has imaginary part {value.imag:.3e}; payoff operator is not Hermitian")
    return float(value.real)


# =====================================================================
# Lift and payoffs
# =====================================================================
def build_H_from_G(g: ClassicalGame) -> AbstractGame:
    shape = g.dims
    ops = tuple(np.diag(t.reshape(-1)).astype(np.complex128) for t in g.payoffs)
    return AbstractGame(shape, ops)


def diagonal_to_classical(game: AbstractGame) -> ClassicalGame:
    """Read the payoff tensors back from a diagonal abstract game."""
    for k, h in enumerate(game.operators):
        if not is_diagonal(h, game.policy.offdiag_tol):
            raise NotDiagonalError(f"H[{k}] has off-diagonal residual {offdiagonal_residual(h):.3e}")
    return ClassicalGame(tuple(np.real(np.diag(h)).reshape(game.shape.dims) for h in game.operators))


def payoff_classical(g: ClassicalGame, p: MixedProfile, i: int) -> float:
    if p.dims != g.dims.dims:
        raise DimensionMismatchError(f"profile dims {p.dims} do not match game dims {g.dims.dims}")
    g.dims.check_player(i)
    n = g.n_players
    operands = [g.payoffs[i], list(range(n))]
    for k, v in enumerate(p.vectors):
        operands += [v, [k]]
    return float(np.einsum(*operands, []))


def payoff_trace(game: AbstractGame, rho: DensityProfile, i: int, policy: NumericPolicy | None = None) -> float:
    """E^i = Tr(rho^S H^i) with rho^S the tensor product of the factors."""
    policy = resolve_policy(policy)
    _check_profile(game, rho)
    game.shape.check_player(i)
    value = np.einsum("ij,ji->", rho.joint(), game.operators[i])
    return real_payoff(complex(value), policy)


def _contract_opponents(h: ComplexMatrix, shape: SpaceShape, factors: Sequence[ComplexMatrix], i: int) -> ComplexMatrix:
    # H_R[a, b] = sum rho^j[s_j, t_j] H[(.., t_j, .., a, ..), (.., s_j, .., b, ..)]
    n = shape.n_players
    rows = list(range(n))
    cols = list(range(n, 2 * n))
    operands = [h.reshape(shape.dims + shape.dims), rows + cols]
    for j, f in enumerate(factors):
        if j != i:
            operands += [f, [cols[j], rows[j]]]
    return np.einsum(*operands, [rows[i], cols[i]])


def reduced_payoff(game: AbstractGame, rho: DensityProfile, i: int) -> ComplexMatrix:
    """H^i_R = Tr_{-i}((prod_{j != i} rho^j) H^i), contracted factor by factor."""
    _check_profile(game, rho)
    game.shape.check_player(i)
    return _contract_opponents(game.operators[i], game.shape, [f.matrix for f in rho.factors], i)


def payoff_reduced(rho_i: DensityMatrix, h_r, policy: NumericPolicy | None = None) -> float:
    policy = resolve_policy(policy)
    h_r = as_matrix(h_r, "H_R")
    if h_r.shape != rho_i.matrix.shape:
        raise DimensionMismatchError(f"H_R has shape {h_r.shape}, state has dimension {rho_i.dim}")
    check_hermitian(h_r, policy.hermitian_tol, "H_R")
    return real_payoff(complex(np.einsum("ij,ji->", rho_i.matrix, h_r)), policy)


# =====================================================================
# State conversions
# =====================================================================
def mixed_to_density(p: MixedProfile) -> DensityProfile:
    return DensityProfile(tuple(DensityMatrix.from_probabilities(v) for v in p.vectors))


def density_to_mixed(rho: DensityProfile) -> MixedProfile:
    return MixedProfile(rho.probabilities())


def wavefunction_to_mixed(phi, policy: NumericPolicy | None = None) -> MixedProfile:
    """One-player profile p_mu = |phi_mu|^2 for a normalized amplitude vector."""
    policy = resolve_policy(policy)
    phi = np.asarray(phi, dtype=np.complex128)
    norm = float(np.sum(np.abs(phi) ** 2))
    if abs(norm - 1.0) > policy.normalization_tol:
        raise InvalidStateError(f"amplitudes are not normalized (sum |phi|^2 = {norm:.15g})")
    return MixedProfile((np.abs(phi) ** 2 / norm,), policy)


def pure_density(phi, policy: NumericPolicy | None = None) -> DensityMatrix:
    policy = resolve_policy(policy)
    wavefunction_to_mixed(phi, policy)
    return DensityMatrix.pure(phi)


# =====================================================================
# Canonical games
# =====================================================================
def matching_pennies() -> ClassicalGame:
    a = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return ClassicalGame.from_bimatrix(a, -a)


def prisoners_dilemma() -> ClassicalGame:
    a = np.array([[3.0, 0.0], [5.0, 1.0]])
    return ClassicalGame.from_bimatrix(a, a.T)


def coordination_game() -> ClassicalGame:
    a = np.eye(2)
    return ClassicalGame.from_bimatrix(a, a)


def zero_game(dims: Sequence[int]) -> ClassicalGame:
    return ClassicalGame(tuple(np.zeros(tuple(dims)) for _ in dims))
