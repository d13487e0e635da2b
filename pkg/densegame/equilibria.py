"""Nash equilibria in the density-matrix representation.

The fixed-point mapping moves each player's diagonal state toward the pure
strategies that beat the current payoff:

    rho^i' = (rho^i + dE^i) / (1 + Tr dE^i),   dE^i = max(0, H^i_R - E^i I)

and its fixed points are exactly the profiles with dE^i = 0, i.e. Nash
equilibria. The mapping is only defined for diagonal payoff operators;
quantum games reach it through a common eigenbasis (``qne_commuting``).
"""
import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import linalg as la

from densegame.config import NumericPolicy, get_settings, resolve_policy
from densegame.errors import (
    DimensionMismatchError,
    EntangledBasisError,
    NotDiagonalError,
    SizeLimitError,
)
from densegame.game_model import (
    AbstractGame,
    ClassicalGame,
    DensityProfile,
    build_H_from_G,
    payoff_reduced,
    reduced_payoff,
)
from densegame.generators import random_density
from densegame.tensor_core import (
    ComplexMatrix,
    DensityMatrix,
    SpaceShape,
    as_matrix,
    insert_factor,
    is_diagonal,
    kron_all,
    max_commutator,
    offdiagonal_residual,
    partial_trace_keep,
    simultaneous_diagonalization,
    trace_in,
)

log = logging.getLogger("densegame.equilibria")


# =====================================================================
# Result records
# =====================================================================
@dataclass(frozen=True, eq=False)
class NashCertificate:
    profile: DensityProfile
    epsilon: float
    per_player_gain: tuple[float, ...]
    payoffs: tuple[float, ...] = ()

    @property
    def max_gain(self) -> float:
        return max(self.per_player_gain, default=0.0)

    @property
    def valid(self) -> bool:
        return self.max_gain <= self.epsilon


@dataclass(frozen=True, eq=False)
class FixedPointReport:
    final_profile: DensityProfile
    iterations: int
    residual: float
    converged: bool
    delta_E_norm: float
    certificate: NashCertificate | None = None


@dataclass(frozen=True, eq=False)
class JointState:
    """A density matrix on the whole joint space, not necessarily a product."""
    state: DensityMatrix
    shape: SpaceShape

    def __post_init__(self):
        if self.state.dim != self.shape.total:
            raise DimensionMismatchError(
                f"joint state has dimension {self.state.dim}, expected {self.shape.total} for dims {self.shape.dims}"
            )

    @property
    def rho_S(self) -> ComplexMatrix:
        return self.state.matrix

    @classmethod
    def from_profile(cls, rho: DensityProfile) -> "JointState":
        return cls(DensityMatrix(rho.joint()), rho.shape)


# =====================================================================
# Diagonal (classical-mode) machinery
# =====================================================================
def _diagonal_tensors(game: AbstractGame) -> list[np.ndarray]:
    for k, h in enumerate(game.operators):
        if not is_diagonal(h, game.policy.offdiag_tol):
            raise NotDiagonalError(
                f"classical mode needs diagonal payoff operators; H[{k}] has off-diagonal residual "
                f"{offdiagonal_residual(h):.3e}"
            )
    return [np.real(np.diag(h)).reshape(game.shape.dims) for h in game.operators]


def _reduced_diagonal(tensors: Sequence[np.ndarray], vectors: Sequence[np.ndarray], i: int) -> np.ndarray:
    n = len(vectors)
    operands = [tensors[i], list(range(n))]
    for j, v in enumerate(vectors):
        if j != i:
            operands += [v, [j]]
    return np.einsum(*operands, [i])


def _vector_gains(tensors, vectors) -> tuple[list[float], list[float]]:
    gains, payoffs = [], []
    for i, v in enumerate(vectors):
        r = _reduced_diagonal(tensors, vectors, i)
        e = float(v @ r)
        payoffs.append(e)
        gains.append(max(0.0, float(r.max()) - e))
    return gains, payoffs


def _nash_step(tensors, vectors) -> tuple[list[np.ndarray], float]:
    new, delta_norm = [], 0.0
    for i, v in enumerate(vectors):
        r = _reduced_diagonal(tensors, vectors, i)
        gain = np.maximum(0.0, r - float(v @ r))
        total = float(gain.sum())
        delta_norm += total
        moved = (v + gain) / (1.0 + total)
        new.append(moved / moved.sum())
    return new, delta_norm


def _l1(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    return float(sum(np.abs(x - y).sum() for x, y in zip(a, b)))


def _to_profile(vectors: Sequence[np.ndarray]) -> DensityProfile:
    return DensityProfile(tuple(DensityMatrix.from_probabilities(v) for v in vectors))


def _diagonal_vectors(rho: DensityProfile, policy: NumericPolicy) -> list[np.ndarray]:
    if not rho.is_diagonal(policy.offdiag_tol):
        raise NotDiagonalError("classical mode needs a diagonal profile")
    return [np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum() for p in rho.probabilities()]


def _certificate(tensors, vectors, eps: float, epsilon_is_achieved: bool = False) -> NashCertificate:
    gains, payoffs = _vector_gains(tensors, vectors)
    epsilon = max(gains) if epsilon_is_achieved else eps
    return NashCertificate(_to_profile(vectors), epsilon, tuple(gains), tuple(payoffs))


# =====================================================================
# Fixed-point mapping
# =====================================================================
def delta_E(h_r, e: float, policy: NumericPolicy | None = None) -> ComplexMatrix:
    """Entrywise max(0, H_R - E I) for a diagonal reduced payoff matrix."""
    policy = resolve_policy(policy)
    h_r = as_matrix(h_r, "H_R")
    if not is_diagonal(h_r, policy.offdiag_tol):
        raise NotDiagonalError(f"H_R has off-diagonal residual {offdiagonal_residual(h_r):.3e}")
    return np.diag(np.maximum(0.0, np.real(np.diag(h_r)) - e)).astype(np.complex128)


def nash_map(game: AbstractGame, rho: DensityProfile, policy: NumericPolicy | None = None) -> DensityProfile:
    policy = resolve_policy(policy)
    if rho.shape.dims != game.shape.dims:
        raise DimensionMismatchError(f"profile dims {rho.shape.dims} do not match game dims {game.shape.dims}")
    tensors = _diagonal_tensors(game)
    new, _ = _nash_step(tensors, _diagonal_vectors(rho, policy))
    return _to_profile(new)


def _snap(vectors: Sequence[np.ndarray], threshold: float) -> list[np.ndarray] | None:
    snapped = []
    changed = False
    for v in vectors:
        w = np.where(v < threshold, 0.0, v)
        if w.sum() <= 0.0:
            return None
        changed = changed or bool(np.any(w != v))
        snapped.append(w / w.sum())
    return snapped if changed else None


def iterate_nash_map(
    game: AbstractGame,
    rho0: DensityProfile,
    tol: float | None = None,
    max_iter: int | None = None,
    *,
    eps: float | None = None,
    snap_every: int = 100,
    snap_threshold: float = 1e-3,
    policy: NumericPolicy | None = None,
) -> FixedPointReport:
    """Iterate the mapping until successive profiles agree within ``tol``.

    A profile only counts as converged when it also certifies as an
    ``eps``-equilibrium; otherwise the report says so after ``max_iter``.
    """
    settings = get_settings()
    policy = resolve_policy(policy)
    tol = settings.FIXED_POINT_TOL if tol is None else tol
    max_iter = settings.FIXED_POINT_MAX_ITER if max_iter is None else max_iter
    eps = settings.CERTIFICATE_EPS if eps is None else eps
    if rho0.shape.dims != game.shape.dims:
        raise DimensionMismatchError(f"profile dims {rho0.shape.dims} do not match game dims {game.shape.dims}")

    tensors = _diagonal_tensors(game)
    vectors = _diagonal_vectors(rho0, policy)
    residual, delta_norm, converged, iterations = math.inf, 0.0, False, 0

    for iterations in range(1, max_iter + 1):
        new, delta_norm = _nash_step(tensors, vectors)
        residual = _l1(new, vectors)
        vectors = new
        if residual < tol and max(_vector_gains(tensors, vectors)[0]) <= eps:
            converged = True
            break
        if snap_every and iterations % snap_every == 0:
            snapped = _snap(vectors, snap_threshold)
            if snapped is None:
                continue
            moved, snapped_delta = _nash_step(tensors, snapped)
            snapped_residual = _l1(moved, snapped)
            if snapped_residual < tol and max(_vector_gains(tensors, snapped)[0]) <= eps:
                log.debug(f"Support snap accepted at iteration {iterations}")
                vectors, residual, delta_norm, converged = snapped, snapped_residual, snapped_delta, True
                break

    certificate = _certificate(tensors, vectors, eps)
    if converged:
        log.info(f"Fixed point reached after {iterations} iterations (residual {residual:.3e})")
    else:
        log.warning(f"Fixed-point iteration did not converge in {max_iter} iterations (residual {residual:.3e})")
    return FixedPointReport(_to_profile(vectors), iterations, residual, converged, delta_norm, certificate)


# =====================================================================
# Verification
# =====================================================================
def _best_response_value(h: ComplexMatrix, policy: NumericPolicy) -> float:
    if is_diagonal(h, policy.offdiag_tol):
        return float(np.max(np.real(np.diag(h))))
    return float(la.eigvalsh(0.5 * (h + h.conj().T))[-1])


def verify_ne(game: AbstractGame, rho: DensityProfile, eps: float, policy: NumericPolicy | None = None) -> NashCertificate:
    """Largest unilateral gain per player.

    For diagonal H_R the best deviation is a pure strategy; otherwise it is
    the top eigenvector of H_R.
    """
    policy = resolve_policy(policy)
    gains, payoffs = [], []
    for i in range(game.n_players):
        h_r = reduced_payoff(game, rho, i)
        e = payoff_reduced(rho.factors[i], h_r, policy)
        payoffs.append(e)
        gains.append(max(0.0, _best_response_value(h_r, policy) - e))
    return NashCertificate(rho, eps, tuple(gains), tuple(payoffs))


def _effective_operator(h: ComplexMatrix, shape: SpaceShape, rest: ComplexMatrix, i: int) -> ComplexMatrix:
    # K with Tr(sigma K) = Tr(insert_factor(rest, shape, sigma, i) H)
    n = shape.n_players
    rows = list(range(n))
    cols = list(range(n, 2 * n))
    others = [j for j in range(n) if j != i]
    rest_dims = tuple(shape.dims[j] for j in others)
    operands = [
        h.reshape(shape.dims + shape.dims),
        rows + cols,
        rest.reshape(rest_dims + rest_dims),
        [cols[j] for j in others] + [rows[j] for j in others],
    ]
    return np.einsum(*operands, [rows[i], cols[i]])


def verify_gne(
    game: AbstractGame,
    joint: JointState,
    eps: float,
    *,
    random_deviations: int = 0,
    rng: np.random.Generator | None = None,
    policy: NumericPolicy | None = None,
) -> NashCertificate:
    """General (possibly correlated) equilibrium check.

    Player i deviates to Tr^i(rho_S) (x) rho^i; the best rho^i is the top
    eigenvector of the effective operator, optionally cross-checked against
    random density deviations.
    """
    policy = resolve_policy(policy)
    if joint.shape.dims != game.shape.dims:
        raise DimensionMismatchError(f"joint state dims {joint.shape.dims} do not match game dims {game.shape.dims}")
    rho_s = joint.rho_S
    rng = np.random.default_rng(0) if rng is None and random_deviations else rng
    gains, payoffs = [], []
    for i, h in enumerate(game.operators):
        e = complex(np.einsum("ij,ji->", rho_s, h)).real
        payoffs.append(e)
        k = _effective_operator(h, game.shape, trace_in(rho_s, game.shape, i), i)
        best = _best_response_value(k, policy)
        d = game.shape.dims[i]
        for _ in range(random_deviations):
            a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            sigma = a @ a.conj().T
            sigma /= np.trace(sigma).real
            best = max(best, complex(np.einsum("ij,ji->", sigma, k)).real)
        gains.append(max(0.0, best - e))
    # certificates carry a product profile; the marginals stand in for a correlated state
    marginals = DensityProfile(
        tuple(_symmetrized_density(partial_trace_keep(rho_s, game.shape, j)) for j in range(game.n_players))
    )
    return NashCertificate(marginals, eps, tuple(gains), tuple(payoffs))


def _symmetrized_density(m: ComplexMatrix) -> DensityMatrix:
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real)


# =====================================================================
# Oracle
# =====================================================================
def _indifferent_mix(payoff_sub: np.ndarray) -> np.ndarray | None:
    # rows: opponent's support strategies that must be indifferent; cols: own mixing weights
    k = payoff_sub.shape[0]
    lhs = np.zeros((k + 1, k + 1))
    lhs[:k, :k] = payoff_sub
    lhs[:k, k] = -1.0
    lhs[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        return np.linalg.solve(lhs, rhs)[:k]
    except np.linalg.LinAlgError:
        return None


def _support_key(vectors: Sequence[np.ndarray], tol: float = 1e-12):
    support = tuple(tuple(int(k) for k in np.flatnonzero(v > tol)) for v in vectors)
    return support, tuple(tuple(float(x) for x in v) for v in vectors)


def _dedupe_sorted(candidates: list[list[np.ndarray]]) -> list[list[np.ndarray]]:
    unique: list[list[np.ndarray]] = []
    for vectors in sorted(candidates, key=_support_key):
        if not any(all(np.allclose(a, b, atol=1e-9, rtol=0) for a, b in zip(vectors, u)) for u in unique):
            unique.append(vectors)
    return unique


def _support_enumeration(g: ClassicalGame, tol: float) -> list[list[np.ndarray]]:
    a, b = g.payoffs
    m, n = a.shape
    found = []
    for k in range(1, min(m, n) + 1):
        for rows in combinations(range(m), k):
            for cols in combinations(range(n), k):
                x = _indifferent_mix(b[np.ix_(rows, cols)].T)
                y = _indifferent_mix(a[np.ix_(rows, cols)])
                if x is None or y is None or np.any(x < -tol) or np.any(y < -tol):
                    continue
                p1, p2 = np.zeros(m), np.zeros(n)
                p1[list(rows)] = np.clip(x, 0.0, None)
                p2[list(cols)] = np.clip(y, 0.0, None)
                vectors = [p1 / p1.sum(), p2 / p2.sum()]
                gains, _ = _vector_gains(g.payoffs, vectors)
                if max(gains) <= tol:
                    found.append(vectors)
    return found


def _simplex_grid(dim: int, resolution: int) -> np.ndarray:
    points = []
    for bars in combinations(range(resolution + dim - 1), dim - 1):
        edges = (-1,) + bars + (resolution + dim - 1,)
        points.append([edges[k + 1] - edges[k] - 1 for k in range(dim)])
    return np.array(points, dtype=float) / resolution


def _grid_search(g: ClassicalGame, resolution: int, eps: float | None, max_points: int) -> list[list[np.ndarray]]:
    grids = [_simplex_grid(d, resolution) for d in g.dims.dims]
    count = math.prod(len(p) for p in grids)
    if count > max_points:
        raise SizeLimitError(f"oracle grid has {count} points, more than the limit of {max_points}")
    p1, p2, p3 = grids
    t1, t2, t3 = g.payoffs
    r1 = np.einsum("mab,ja,kb->jkm", t1, p2, p3)
    gain = r1.max(axis=-1)[None, :, :] - np.einsum("jkm,im->ijk", r1, p1)
    r2 = np.einsum("amb,ia,kb->ikm", t2, p1, p3)
    gain = np.maximum(gain, r2.max(axis=-1)[:, None, :] - np.einsum("ikm,jm->ijk", r2, p2))
    r3 = np.einsum("abm,ia,jb->ijm", t3, p1, p2)
    gain = np.maximum(gain, r3.max(axis=-1)[:, :, None] - np.einsum("ijm,km->ijk", r3, p3))
    threshold = max(float(gain.min()), 0.0) + 1e-12 if eps is None else eps
    log.debug(f"Grid search over {count} points, threshold {threshold:.3e}")
    return [[p1[i], p2[j], p3[k]] for i, j, k in np.argwhere(gain <= threshold)]


def brute_force_ne(
    g: ClassicalGame,
    resolution: int | None = None,
    *,
    eps: float | None = None,
    tol: float = 1e-9,
) -> list[NashCertificate]:
    """Reference equilibria for small games.

    Two players: support enumeration, exact up to ``tol``. Three players:
    simplex-grid search; by default every grid point with the smallest gain
    is returned, so exact grid equilibria are all reported. Each
    certificate's epsilon is the gain it actually achieves.
    """
    settings = get_settings()
    resolution = settings.ORACLE_RESOLUTION if resolution is None else resolution
    dims = g.dims.dims
    if g.n_players > 3 or max(dims) > 4 or resolution > 50 or resolution < 1:
        raise SizeLimitError(
            f"oracle supports N <= 3, L_i <= 4, resolution <= 50; got N={g.n_players}, dims={dims}, "
            f"resolution={resolution}"
        )
    scale = max(1.0, max(float(np.max(np.abs(t))) for t in g.payoffs))
    if g.n_players == 1:
        best = np.flatnonzero(g.payoffs[0] >= g.payoffs[0].max() - tol * scale)
        candidates = [[np.eye(dims[0])[k]] for k in best]
    elif g.n_players == 2:
        candidates = _support_enumeration(g, tol * scale)
    else:
        candidates = _grid_search(g, resolution, eps, settings.ORACLE_MAX_POINTS)
    return [_certificate(g.payoffs, v, 0.0, epsilon_is_achieved=True) for v in _dedupe_sorted(candidates)]


def solve_classical(
    g: ClassicalGame,
    *,
    eps: float | None = None,
    max_iter: int | None = None,
    resolution: int | None = None,
) -> NashCertificate:
    """Fixed-point iteration from the uniform profile, oracle if it stalls."""
    game = build_H_from_G(g)
    report = iterate_nash_map(game, DensityProfile.uniform(g.dims.dims), max_iter=max_iter, eps=eps)
    if report.converged:
        return report.certificate
    log.info("Falling back to the oracle")
    certificates = brute_force_ne(g, resolution)
    return min(certificates, key=lambda c: c.max_gain)


# =====================================================================
# Quantum special cases
# =====================================================================
def common_max_eigenvector(game: AbstractGame, tol: float = 1e-9) -> JointState | None:
    """Joint pure state maximizing every player's payoff at once, if one exists."""
    d = game.shape.total
    deficit = np.zeros((d, d), dtype=np.complex128)
    tops = []
    for h in game.operators:
        w, v = la.eigh(0.5 * (h + h.conj().T))
        tops.append(w[-1])
        top = v[:, w >= w[-1] - tol]
        deficit += np.eye(d) - top @ top.conj().T
    w, v = la.eigh(0.5 * (deficit + deficit.conj().T))
    if w[0] > tol:
        return None
    vec = v[:, 0] / np.linalg.norm(v[:, 0])
    for h, top in zip(game.operators, tops):
        if np.max(np.abs(h @ vec - top * vec)) > tol * max(1.0, abs(top)) * 10:
            return None
    return JointState(DensityMatrix.pure(vec), game.shape)


def _product_eigenvectors(basis: ComplexMatrix, shape: SpaceShape, tol: float = 1e-6) -> list[ComplexMatrix]:
    # every common eigenvector must be a product state; collect each player's factors
    if shape.n_players == 1:
        return [basis]
    collected: list[list[np.ndarray]] = [[] for _ in shape.dims]
    for k in range(basis.shape[1]):
        col = basis[:, k]
        projector = np.outer(col, col.conj())
        for j in range(shape.n_players):
            w, u = la.eigh(partial_trace_keep(projector, shape, j))
            if w[-1] < 1.0 - tol:
                raise EntangledBasisError(f"common eigenvector {k} is entangled (marginal purity {w[-1]:.6f})")
            vec = u[:, -1]
            if not any(abs(np.vdot(b, vec)) > 1.0 - tol for b in collected[j]):
                collected[j].append(vec)
    for j, vecs in enumerate(collected):
        if len(vecs) != shape.dims[j]:
            raise EntangledBasisError(f"player {j} has {len(vecs)} local basis vectors, expected {shape.dims[j]}")
    return [np.column_stack(vecs) for vecs in collected]


def _reduced_frames(game: AbstractGame, rng: np.random.Generator, samples: int = 3) -> list[ComplexMatrix]:
    # Tr_{-i}(H^k (rho_{-i} x I)) is diagonal in player i's local basis for every
    # product rho when all H^k share a product eigenbasis
    shape = game.shape
    frames = []
    for i in range(shape.n_players):
        others = [j for j in range(shape.n_players) if j != i]
        mix = np.zeros((shape.dims[i], shape.dims[i]), dtype=np.complex128)
        for _ in range(samples):
            rest = kron_all([random_density(rng, shape.dims[j]).matrix for j in others])
            embedded = insert_factor(rest, shape, np.eye(shape.dims[i]), i)
            for h in game.operators:
                mix += rng.standard_normal() * partial_trace_keep(h @ embedded, shape, i)
        _, u = la.eigh(0.5 * (mix + mix.conj().T))
        frames.append(u)
    return frames


def _local_bases(game: AbstractGame, policy: NumericPolicy) -> list[ComplexMatrix]:
    if game.shape.n_players == 1:
        return [simultaneous_diagonalization(game.operators, policy)]
    try:
        return _product_eigenvectors(simultaneous_diagonalization(game.operators, policy), game.shape)
    except EntangledBasisError as exc:
        # degenerate joint spectrum: eigh mixes product vectors inside each eigenspace
        log.debug(f"Common eigenbasis is not a product basis ({exc}), using reduced operators")
    return _reduced_frames(game, np.random.default_rng(get_settings().SEED))


def qne_commuting(
    game: AbstractGame,
    tol: float = 1e-9,
    *,
    eps: float | None = None,
    max_iter: int = 2000,
    policy: NumericPolicy | None = None,
) -> NashCertificate | None:
    """Quantum Nash equilibrium for mutually commuting payoff operators.

    Returns None when some pair does not commute. The common eigenbasis is
    split into per-player bases, the induced classical game is solved there,
    and the equilibrium is rotated back and verified in the original basis.
    """
    policy = resolve_policy(policy).model_copy(update={"commute_tol": tol})
    eps = get_settings().CERTIFICATE_EPS if eps is None else eps
    residual = max_commutator(game.operators)
    if residual > tol:
        log.info(f"Payoff operators do not commute (max |[H^i, H^j]| = {residual:.3e})")
        return None

    local = _local_bases(game, policy)
    frame = kron_all(local)
    induced = []
    for k, h in enumerate(game.operators):
        rotated = frame.conj().T @ h @ frame
        if offdiagonal_residual(rotated) > tol * max(1.0, float(np.max(np.abs(h)))) * 10:
            raise EntangledBasisError(f"local bases do not diagonalize H[{k}]")
        induced.append(np.real(np.diag(rotated)).reshape(game.shape.dims))

    classical = solve_classical(ClassicalGame(tuple(induced)), eps=eps, max_iter=max_iter)
    factors = []
    for u, p in zip(local, classical.profile.probabilities()):
        m = (u * p) @ u.conj().T
        factors.append(DensityMatrix(0.5 * (m + m.conj().T)))
    certificate = verify_ne(game, DensityProfile(tuple(factors)), eps, policy)
    if not certificate.valid:
        log.warning(f"Rotated equilibrium fails verification (max gain {certificate.max_gain:.3e})")
    return certificate
