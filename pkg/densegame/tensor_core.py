"""Dense complex linear algebra over multi-player state spaces.

Joint spaces are ordered by player declaration: player 0 is the leftmost
Kronecker factor and composite indices are row-major over players.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import linalg as la

from densegame.config import DEFAULT_POLICY, NumericPolicy, get_settings, resolve_policy
from densegame.errors import (
    DiagonalizationError,
    DimensionMismatchError,
    InvalidStateError,
    NonHermitianError,
    NotCommutingError,
    SizeLimitError,
)

log = logging.getLogger("densegame.tensor_core")

ComplexMatrix = np.ndarray


# =====================================================================
# Value types
# =====================================================================
def as_matrix(a, name: str = "matrix") -> ComplexMatrix:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidStateError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class SpaceShape:
    """Per-player space dimensions of a joint space."""
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if any(d < 1 for d in dims):
            raise DimensionMismatchError(f"space dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)
        max_dim = get_settings().MAX_DIM
        if self.total > max_dim:
            raise SizeLimitError(
                f"joint dimension {self.total} exceeds the cap of {max_dim} (set DENSEGAME_MAX_DIM to raise it)"
            )

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    @property
    def n_players(self) -> int:
        return len(self.dims)

    def without(self, i: int) -> "SpaceShape":
        self.check_player(i)
        return SpaceShape(self.dims[:i] + self.dims[i + 1:])

    def check_player(self, i: int) -> None:
        if not 0 <= i < len(self.dims):
            raise DimensionMismatchError(f"player index {i} out of range for {len(self.dims)} players")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix."""
    matrix: ComplexMatrix
    policy: NumericPolicy = field(default=DEFAULT_POLICY, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(as_matrix(self.matrix, "density matrix"), copy=True)
        check_density(m, self.policy)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    @classmethod
    def from_probabilities(cls, p) -> "DensityMatrix":
        return cls(np.diag(np.asarray(p, dtype=float)))

    @classmethod
    def pure(cls, phi) -> "DensityMatrix":
        phi = np.asarray(phi, dtype=np.complex128)
        return cls(np.outer(phi, phi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)


# =====================================================================
# Structural checks
# =====================================================================
def _max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def hermiticity_residual(m) -> float:
    m = np.asarray(m)
    return _max_abs(m - m.conj().T)


def is_hermitian(m, tol: float | None = None) -> bool:
    tol = DEFAULT_POLICY.hermitian_tol if tol is None else tol
    return hermiticity_residual(m) <= tol


def offdiagonal_residual(m) -> float:
    m = np.asarray(m)
    return _max_abs(m - np.diag(np.diag(m)))


def is_diagonal(m, tol: float | None = None) -> bool:
    tol = DEFAULT_POLICY.offdiag_tol if tol is None else tol
    return offdiagonal_residual(m) <= tol


def check_hermitian(m, tol: float, what: str = "operator") -> None:
    residual = hermiticity_residual(m)
    if residual > tol:
        raise NonHermitianError(f"{what} is not Hermitian (max |M - M^dagger| = {residual:.3e})")


def check_density(m, policy: NumericPolicy | None = None) -> None:
    policy = resolve_policy(policy)
    m = np.asarray(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"density matrix must be square, got {m.shape}")
    residual = hermiticity_residual(m)
    if residual > policy.equality_tol:
        raise InvalidStateError(f"density matrix is not Hermitian (residual {residual:.3e})")
    trace = np.trace(m)
    if abs(trace - 1.0) > policy.equality_tol:
        raise InvalidStateError(f"density matrix trace is {trace.real:.15g}, expected 1")
    lowest = float(la.eigvalsh(0.5 * (m + m.conj().T))[0])
    if lowest < policy.psd_floor:
        raise InvalidStateError(f"density matrix is not positive semidefinite (min eigenvalue {lowest:.3e})")


def _check_joint(m: ComplexMatrix, shape: SpaceShape, name: str = "operator") -> None:
    if m.shape != (shape.total, shape.total):
        raise DimensionMismatchError(
            f"{name} has shape {m.shape}, expected {shape.total}x{shape.total} for dims {shape.dims}"
        )


# =====================================================================
# Tensor products and partial traces
# =====================================================================
def kron(a, b) -> ComplexMatrix:
    return np.kron(as_matrix(a, "left factor"), as_matrix(b, "right factor"))


def kron_all(mats: Sequence) -> ComplexMatrix:
    return reduce(kron, mats, np.ones((1, 1), dtype=np.complex128))


def partial_trace_keep(m, shape: SpaceShape, i: int) -> ComplexMatrix:
    """Trace out every factor except player ``i`` (Tr_{-i})."""
    m = as_matrix(m)
    _check_joint(m, shape)
    shape.check_player(i)
    n = shape.n_players
    rows = list(range(n))
    cols = [j if j != i else n + i for j in range(n)]
    t = m.reshape(shape.dims + shape.dims)
    return np.einsum(t, rows + cols, [rows[i], cols[i]])


def trace_in(m, shape: SpaceShape, i: int) -> ComplexMatrix:
    """Trace out player ``i``'s factor only (Tr^i)."""
    m = as_matrix(m)
    _check_joint(m, shape)
    shape.check_player(i)
    n = shape.n_players
    rows = list(range(n))
    cols = [n + j if j != i else i for j in range(n)]
    rest = shape.total // shape.dims[i]
    t = m.reshape(shape.dims + shape.dims)
    out = np.einsum(t, rows + cols, [r for j, r in enumerate(rows) if j != i] + [c for j, c in enumerate(cols) if j != i])
    return out.reshape(rest, rest)


def insert_factor(rest, shape: SpaceShape, rho_i, i: int) -> ComplexMatrix:
    """Joint operator with ``rho_i`` at player ``i`` and ``rest`` on the others."""
    shape.check_player(i)
    rest = as_matrix(rest, "rest")
    rho_i = as_matrix(rho_i, "factor")
    others = shape.without(i)
    _check_joint(rest, others, "rest")
    if rho_i.shape != (shape.dims[i], shape.dims[i]):
        raise DimensionMismatchError(f"factor has shape {rho_i.shape}, expected dimension {shape.dims[i]}")
    n = shape.n_players
    order = [j for j in range(n) if j != i] + [i]
    position = {player: k for k, player in enumerate(order)}
    current = tuple(shape.dims[j] for j in order)
    t = np.kron(rest, rho_i).reshape(current + current)
    axes = [position[k] for k in range(n)] + [n + position[k] for k in range(n)]
    return np.transpose(t, axes).reshape(shape.total, shape.total)


def product_of_marginals(m, shape: SpaceShape) -> ComplexMatrix:
    return kron_all([partial_trace_keep(m, shape, j) for j in range(shape.n_players)])


def is_product_state(m, shape: SpaceShape, tol: float = 1e-10) -> bool:
    return _max_abs(as_matrix(m) - product_of_marginals(m, shape)) <= tol


# =====================================================================
# Hermitian functions
# =====================================================================
def herm_expm(h, beta: float, *, stabilize: bool = False, policy: NumericPolicy | None = None) -> ComplexMatrix:
    """e^{beta H} for Hermitian H.

    With ``stabilize`` the largest exponent is shifted to zero first, so the
    result equals e^{beta H} up to a positive scalar (callers renormalize).
    """
    policy = resolve_policy(policy)
    if not math.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta}")
    h = as_matrix(h, "H")
    if h.shape[0] != h.shape[1]:
        raise DimensionMismatchError(f"H must be square, got {h.shape}")
    check_hermitian(h, policy.hermitian_tol, "H")
    if is_diagonal(h, policy.offdiag_tol):
        exponent = beta * np.real(np.diag(h))
        if stabilize and exponent.size:
            exponent = exponent - exponent.max()
        return np.diag(np.exp(exponent)).astype(np.complex128)
    w, v = la.eigh(0.5 * (h + h.conj().T))
    exponent = beta * w
    if stabilize:
        exponent = exponent - exponent.max()
    return (v * np.exp(exponent)) @ v.conj().T


def commutator(a, b) -> ComplexMatrix:
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"commutator needs square matrices of equal size, got {a.shape} and {b.shape}")
    return a @ b - b @ a


def max_commutator(hs: Sequence) -> float:
    return max((_max_abs(commutator(a, b)) for a, b in combinations(hs, 2)), default=0.0)


def _refine(basis: ComplexMatrix, ops: Sequence[ComplexMatrix], tol: float) -> ComplexMatrix:
    # eigenbasis of ops[0] inside span(basis); degenerate blocks go to ops[1:]
    if not ops or basis.shape[1] == 1:
        return basis
    sub = basis.conj().T @ ops[0] @ basis
    w, v = la.eigh(0.5 * (sub + sub.conj().T))
    vecs = basis @ v
    scale = max(1.0, float(np.max(np.abs(w))))
    blocks = []
    start = 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[k] - w[k - 1] > tol * scale:
            block = vecs[:, start:k]
            if k - start > 1:
                block = _refine(block, ops[1:], tol)
            blocks.append(block)
            start = k
    return np.hstack(blocks)


def simultaneous_diagonalization(hs: Sequence, policy: NumericPolicy | None = None) -> ComplexMatrix:
    """Unitary V with V^dagger H V diagonal for every H in a commuting family.

    Degenerate eigenspaces of one operator are split by the next one.
    """
    policy = resolve_policy(policy)
    mats = [as_matrix(h, f"H[{k}]") for k, h in enumerate(hs)]
    if not mats:
        raise ValueError("no matrices to diagonalize")
    d = mats[0].shape[0]
    for k, m in enumerate(mats):
        if m.shape != (d, d):
            raise DimensionMismatchError(f"H[{k}] has shape {m.shape}, expected {d}x{d}")
        check_hermitian(m, policy.hermitian_tol, f"H[{k}]")
    for (j, a), (k, b) in combinations(enumerate(mats), 2):
        residual = _max_abs(commutator(a, b))
        if residual > policy.commute_tol:
            raise NotCommutingError(f"H[{j}] and H[{k}] do not commute (max |[A,B]| = {residual:.3e})")

    if all(is_diagonal(m, policy.offdiag_tol) for m in mats):
        return np.eye(d, dtype=np.complex128)

    basis = _refine(np.eye(d, dtype=np.complex128), mats, policy.commute_tol)
    for k, m in enumerate(mats):
        residual = offdiagonal_residual(basis.conj().T @ m @ basis)
        if residual > policy.commute_tol:
            raise DiagonalizationError(f"common basis leaves off-diagonal residual {residual:.3e} on H[{k}]")
    log.debug(f"Common eigenbasis found for {len(mats)} operators of dimension {d}")
    return basis
