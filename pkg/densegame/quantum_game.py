"""Operator-level quantum games and their compilation to abstract games.

Players pick operators on a quantum object; a joint rule combines them and
the end state ``L rho0 L^dagger`` is scored by each player's Hermitian payoff
scale. Expanding every operator over an orthonormal operator basis turns the
game into an ordinary abstract game on the space of basis strategies, with

    H^i[S, T] = Tr(P^i L(S) rho0 L(T)^dagger)

for basis tuples S, T. A coefficient vector c then corresponds to the
operator-space density ``outer(conj(c), c)``.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Callable, Sequence

import numpy as np

from densegame.config import DEFAULT_POLICY, NumericPolicy, resolve_policy
from densegame.errors import DimensionMismatchError, InvalidStateError, NonHermitianError
from densegame.game_model import AbstractGame, ClassicalGame, diagonal_to_classical, real_payoff
from densegame.tensor_core import (
    ComplexMatrix,
    DensityMatrix,
    SpaceShape,
    as_matrix,
    check_hermitian,
    is_diagonal,
    kron_all,
    max_commutator,
)

log = logging.getLogger("densegame.quantum_game")

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY_2 = np.eye(2, dtype=np.complex128)

UP = np.array([1.0, 0.0], dtype=np.complex128)
DOWN = np.array([0.0, 1.0], dtype=np.complex128)


# =====================================================================
# Operator bases
# =====================================================================
def operator_basis(q: int) -> tuple[ComplexMatrix, ...]:
    """|mu><nu| for all (mu, nu), row-major."""
    basis = []
    for mu, nu in product(range(q), repeat=2):
        e = np.zeros((q, q), dtype=np.complex128)
        e[mu, nu] = 1.0
        basis.append(e)
    return tuple(basis)


def pauli_basis() -> tuple[ComplexMatrix, ...]:
    return tuple(m / np.sqrt(2.0) for m in (IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z))


def _check_orthonormal(basis: Sequence[ComplexMatrix], what: str, tol: float = 1e-10) -> None:
    stacked = np.array([b.reshape(-1) for b in basis])
    gram = stacked.conj() @ stacked.T
    residual = float(np.max(np.abs(gram - np.eye(len(basis)))))
    if residual > tol:
        raise InvalidStateError(f"{what} is not orthonormal under Tr(U^dagger V) (residual {residual:.3e})")


# =====================================================================
# Domain types
# =====================================================================
@dataclass(frozen=True, eq=False)
class QuantumObject:
    rho0: DensityMatrix

    @property
    def dim(self) -> int:
        return self.rho0.dim


@dataclass(frozen=True, eq=False)
class PlayerOperator:
    matrix: ComplexMatrix

    def __post_init__(self):
        m = np.array(as_matrix(self.matrix, "operator"), copy=True)
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"operator must be square, got {m.shape}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def coefficients(self, basis: Sequence[ComplexMatrix] | None = None) -> np.ndarray:
        basis = operator_basis(self.dim) if basis is None else basis
        return np.array([np.vdot(b, self.matrix) for b in basis])

    @classmethod
    def from_coefficients(cls, c, basis: Sequence[ComplexMatrix]) -> "PlayerOperator":
        c = np.asarray(c, dtype=np.complex128)
        if c.shape != (len(basis),):
            raise DimensionMismatchError(f"{c.size} coefficients for a basis of {len(basis)} operators")
        return cls(np.einsum("k,kab->ab", c, np.array(basis)))

    @classmethod
    def identity(cls, q: int) -> "PlayerOperator":
        return cls(np.eye(q))


class RuleKind(str, Enum):
    ORDERED_PRODUCT = "ordered-product"
    DIRECT_PRODUCT = "direct-product"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class JointRule:
    """How the players' operators combine into one operator on the object.

    ``ordered-product`` applies player 0 first (U = U^{N-1} ... U^0);
    ``direct-product`` is U^0 (x) ... (x) U^{N-1} on a composite object;
    ``custom`` is either a table T[k_0, ..., k_{N-1}] of object operators over
    each player's |mu><nu| basis, or an arbitrary callable.
    """
    kind: RuleKind
    table: np.ndarray | None = None
    func: Callable[[Sequence[ComplexMatrix]], ComplexMatrix] | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.kind is RuleKind.CUSTOM and (self.table is None) == (self.func is None):
            raise ValueError("a custom rule needs exactly one of table or func")
        if self.table is not None:
            object.__setattr__(self, "table", np.asarray(self.table, dtype=np.complex128))

    def apply(self, mats: Sequence[ComplexMatrix]) -> ComplexMatrix:
        mats = [as_matrix(m, f"operator {k}") for k, m in enumerate(mats)]
        if not mats:
            raise DimensionMismatchError("a joint rule needs at least one operator")
        if self.kind is RuleKind.ORDERED_PRODUCT:
            u = mats[0]
            for m in mats[1:]:
                if m.shape != u.shape:
                    raise DimensionMismatchError("ordered-product operators must all act on the object space")
                u = m @ u
            return u
        if self.kind is RuleKind.DIRECT_PRODUCT:
            return kron_all(mats)
        if self.func is not None:
            return as_matrix(self.func(mats), "custom rule output")
        n = len(mats)
        if self.table.ndim != n + 2:
            raise DimensionMismatchError(f"rule table has order {self.table.ndim}, expected {n + 2} for {n} players")
        operands = [self.table, list(range(n + 2))]
        for j, m in enumerate(mats):
            operands += [m.reshape(-1), [j]]
        return np.einsum(*operands, [n, n + 1])

    @classmethod
    def ordered_product(cls) -> "JointRule":
        return cls(RuleKind.ORDERED_PRODUCT)

    @classmethod
    def direct_product(cls) -> "JointRule":
        return cls(RuleKind.DIRECT_PRODUCT)


@dataclass(frozen=True, eq=False)
class OperatorGame:
    obj: QuantumObject
    rule: JointRule
    payoff_scales: tuple[ComplexMatrix, ...]
    player_dims: tuple[int, ...] | None = None
    bases: tuple[tuple[ComplexMatrix, ...], ...] | None = None
    policy: NumericPolicy = field(default=DEFAULT_POLICY, repr=False, compare=False)

    def __post_init__(self):
        q = self.obj.dim
        scales = []
        for k, p in enumerate(self.payoff_scales):
            m = np.array(as_matrix(p, f"P[{k}]"), copy=True)
            if m.shape != (q, q):
                raise DimensionMismatchError(f"P[{k}] has shape {m.shape}, expected {q}x{q}")
            check_hermitian(m, self.policy.equality_tol, f"P[{k}]")
            m.flags.writeable = False
            scales.append(m)
        n = len(scales)
        if n == 0:
            raise DimensionMismatchError("an operator game needs at least one player")
        object.__setattr__(self, "payoff_scales", tuple(scales))

        if self.player_dims is None:
            if self.rule.kind is RuleKind.DIRECT_PRODUCT:
                raise DimensionMismatchError("direct-product games must declare player_dims")
            dims = (q,) * n
        else:
            dims = tuple(int(d) for d in self.player_dims)
        if len(dims) != n:
            raise DimensionMismatchError(f"{len(dims)} player dims for {n} players")
        if self.rule.kind is RuleKind.ORDERED_PRODUCT and any(d != q for d in dims):
            raise DimensionMismatchError("ordered-product players must act on the full object space")
        if self.rule.kind is RuleKind.DIRECT_PRODUCT and int(np.prod(dims)) != q:
            raise DimensionMismatchError(f"player dims {dims} do not multiply to the object dimension {q}")
        object.__setattr__(self, "player_dims", dims)

        bases = tuple(operator_basis(d) for d in dims) if self.bases is None else self.bases
        checked = []
        for j, (basis, d) in enumerate(zip(bases, dims, strict=True)):
            mats = tuple(as_matrix(b, f"basis {j}") for b in basis)
            if not mats or any(b.shape != (d, d) for b in mats):
                raise DimensionMismatchError(f"player {j} basis must be non-empty {d}x{d} operators")
            _check_orthonormal(mats, f"player {j} basis")
            checked.append(mats)
        object.__setattr__(self, "bases", tuple(checked))

    @property
    def n_players(self) -> int:
        return len(self.payoff_scales)

    @property
    def strategy_dims(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.bases)


# =====================================================================
# Operator-level evaluation
# =====================================================================
def operator_inner(u, v) -> complex:
    a = u.matrix if isinstance(u, PlayerOperator) else as_matrix(u)
    b = v.matrix if isinstance(v, PlayerOperator) else as_matrix(v)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"operators have shapes {a.shape} and {b.shape}")
    return complex(np.vdot(a, b))


def _matrices(ops: Sequence) -> list[ComplexMatrix]:
    return [op.matrix if isinstance(op, PlayerOperator) else as_matrix(op) for op in ops]


def end_state(rule: JointRule, ops: Sequence, rho0) -> ComplexMatrix:
    """L(ops) rho0 L(ops)^dagger; trace below 1 for trace-decreasing strategies."""
    rho0 = rho0.matrix if isinstance(rho0, DensityMatrix) else as_matrix(rho0, "rho0")
    u = rule.apply(_matrices(ops))
    if u.shape != rho0.shape:
        raise DimensionMismatchError(f"joint operator has shape {u.shape}, object state has shape {rho0.shape}")
    return u @ rho0 @ u.conj().T


def payoff_operator_level(p, rho_q, policy: NumericPolicy | None = None) -> float:
    policy = resolve_policy(policy)
    p = as_matrix(p, "P")
    rho_q = as_matrix(rho_q, "end state")
    if p.shape != rho_q.shape:
        raise DimensionMismatchError(f"P has shape {p.shape}, end state has shape {rho_q.shape}")
    check_hermitian(p, policy.hermitian_tol, "P")
    return real_payoff(complex(np.einsum("ij,ji->", p, rho_q)), policy)


def is_unitary(u, tol: float = 1e-10) -> bool:
    m = u.matrix if isinstance(u, PlayerOperator) else as_matrix(u)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))) <= tol


def unitary_2x2(xi: float, x: float, y: float, z: float, policy: NumericPolicy | None = None) -> PlayerOperator:
    """xi I + i(x sigma_x + y sigma_y + z sigma_z), unitary iff the squares sum to 1."""
    policy = resolve_policy(policy)
    norm = xi * xi + x * x + y * y + z * z
    if abs(norm - 1.0) > policy.normalization_tol:
        raise InvalidStateError(f"xi^2 + x^2 + y^2 + z^2 = {norm:.15g}, must be 1 for a unitary")
    return PlayerOperator(xi * IDENTITY_2 + 1j * (x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z))


def operator_2x2(xi: complex, x: complex, y: complex, z: complex) -> PlayerOperator:
    return PlayerOperator(xi * IDENTITY_2 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def check_linearity(
    rule: JointRule, player_dims: Sequence[int], rng: np.random.Generator, trials: int = 20
) -> float:
    """Largest violation of L(.., aU + V, ..) = a L(.., U, ..) + L(.., V, ..) over random inputs."""
    worst = 0.0
    for _ in range(trials):
        mats = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for d in player_dims]
        base = rule.apply(mats)
        for j, d in enumerate(player_dims):
            alpha = complex(rng.normal(), rng.normal())
            other = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            combined = list(mats)
            combined[j] = alpha * mats[j] + other
            replaced = list(mats)
            replaced[j] = other
            expected = alpha * base + rule.apply(replaced)
            scale = max(1.0, float(np.max(np.abs(expected))))
            worst = max(worst, float(np.max(np.abs(rule.apply(combined) - expected))) / scale)
    return worst


# =====================================================================
# Compilation to an abstract game
# =====================================================================
def build_abstract(og: OperatorGame) -> AbstractGame:
    shape = SpaceShape(og.strategy_dims)
    joint_ops = np.array([og.rule.apply(list(combo)) for combo in product(*og.bases)])
    q = og.obj.dim
    if joint_ops.shape[1:] != (q, q):
        raise DimensionMismatchError(f"joint rule produces {joint_ops.shape[1:]} operators, object is {q}x{q}")
    evolved = joint_ops @ og.obj.rho0.matrix
    operators = []
    for k, p in enumerate(og.payoff_scales):
        h = np.einsum("ab,sbc,tac->st", p, evolved, joint_ops.conj())
        residual = float(np.max(np.abs(h - h.conj().T)))
        if residual > og.policy.hermitian_tol * max(1.0, float(np.max(np.abs(h)))):
            raise NonHermitianError(f"compiled H[{k}] is not Hermitian (residual {residual:.3e}); check the rule")
        operators.append(0.5 * (h + h.conj().T))
    log.debug(f"Compiled operator game into {shape.total}x{shape.total} payoff operators")
    return AbstractGame(shape, tuple(operators))


def coefficient_density(c) -> ComplexMatrix:
    """Operator-space density of a pure operator strategy with coefficients c."""
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim != 1:
        raise DimensionMismatchError(f"coefficients must be a vector, got shape {c.shape}")
    return np.outer(c.conj(), c)


def _strategy_density(s) -> ComplexMatrix:
    s = np.asarray(s, dtype=np.complex128)
    if s.ndim == 1:
        return coefficient_density(s)
    return as_matrix(s, "operator-space density")


def payoff_abstract(game: AbstractGame, strategies: Sequence, i: int, policy: NumericPolicy | None = None) -> float:
    """Tr(rho H^i) for per-player coefficient vectors or operator-space densities.

    Neither form is renormalized: a unitary has coefficient norm sqrt(Q), and
    non-unitary strategies legitimately give sub-unit weight.
    """
    policy = resolve_policy(policy)
    game.shape.check_player(i)
    mats = [_strategy_density(s) for s in strategies]
    if tuple(m.shape[0] for m in mats) != game.shape.dims:
        raise DimensionMismatchError(
            f"strategy dims {tuple(m.shape[0] for m in mats)} do not match game dims {game.shape.dims}"
        )
    joint = kron_all(mats)
    return real_payoff(complex(np.einsum("ij,ji->", joint, game.operators[i])), policy)


def verify_equivalence(og: OperatorGame, game: AbstractGame, samples: int = 1000, seed: int = 0) -> float:
    """Max payoff gap between the operator game and its compiled form over random strategies."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        coeffs, ops = [], []
        for basis, d in zip(og.bases, og.player_dims):
            c = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
            c *= np.sqrt(d) / np.linalg.norm(c)
            coeffs.append(c)
            ops.append(np.einsum("k,kab->ab", c, np.array(basis)))
        rho_q = end_state(og.rule, ops, og.obj.rho0)
        joint = kron_all([coefficient_density(c) for c in coeffs])
        for i, p in enumerate(og.payoff_scales):
            direct = complex(np.einsum("ij,ji->", p, rho_q)).real
            compiled = complex(np.einsum("ij,ji->", joint, game.operators[i])).real
            worst = max(worst, abs(direct - compiled))
    log.info(f"Equivalence check over {samples} samples: max deviation {worst:.3e}")
    return worst


# =====================================================================
# Classification and sub-games
# =====================================================================
class TaxonomyLabel(str, Enum):
    DIAGONAL = "diagonal"
    CO_DIAGONALIZABLE = "co-diagonalizable"
    GENERAL = "general"


@dataclass(frozen=True)
class Taxonomy:
    label: TaxonomyLabel
    regimes: tuple[str, ...]
    entangled: bool = False

    def __str__(self) -> str:
        return self.label.value


def classify(game: AbstractGame, entangled: bool = False, policy: NumericPolicy | None = None) -> Taxonomy:
    """Diagonal, co-diagonalizable or general; ``entangled`` declares a non-product strategy space."""
    policy = resolve_policy(policy)
    if all(is_diagonal(h, policy.offdiag_tol) for h in game.operators):
        label = TaxonomyLabel.DIAGONAL
        regimes = ("ECG",) if entangled else ("CG", "QCG")
    else:
        if max_commutator(game.operators) <= policy.commute_tol:
            label = TaxonomyLabel.CO_DIAGONALIZABLE
        else:
            label = TaxonomyLabel.GENERAL
        regimes = ("EQG",) if entangled else ("PQG", "QG")
    return Taxonomy(label, regimes, entangled)


def _joint_indices(shape: SpaceShape, subsets: Sequence[Sequence[int]]) -> np.ndarray:
    if len(subsets) != shape.n_players:
        raise DimensionMismatchError(f"{len(subsets)} subsets for {shape.n_players} players")
    for j, s in enumerate(subsets):
        if not s or any(not 0 <= k < shape.dims[j] for k in s):
            raise DimensionMismatchError(f"subset {list(s)} is not a valid strategy set for player {j}")
    return np.array([np.ravel_multi_index(combo, shape.dims) for combo in product(*subsets)])


def restrict_game(game: AbstractGame, subsets: Sequence[Sequence[int]]) -> AbstractGame:
    """Sub-game on the chosen basis strategies of each player."""
    idx = _joint_indices(game.shape, subsets)
    shape = SpaceShape(tuple(len(s) for s in subsets))
    return AbstractGame(shape, tuple(h[np.ix_(idx, idx)] for h in game.operators), game.policy)


def classical_subgame(game: AbstractGame, subsets: Sequence[Sequence[int]]) -> ClassicalGame | None:
    sub = restrict_game(game, subsets)
    return diagonal_to_classical(sub) if sub.is_diagonal() else None


# =====================================================================
# Penny flip
# =====================================================================
def penny_flip() -> OperatorGame:
    """Spin-1/2 coin starting heads-up; player 0 scores +1 for up, player 1 the opposite."""
    p = np.outer(UP, UP) - np.outer(DOWN, DOWN)
    return OperatorGame(
        QuantumObject(DensityMatrix.pure(UP)),
        JointRule.ordered_product(),
        (p, -p),
    )
