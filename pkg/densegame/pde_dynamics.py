"""Boltzmann-response iteration and its long-run pattern.

Each step replaces a player's state by e^{beta H_R} / Tr e^{beta H_R},
where H_R is computed against the other players' current states. Runs stop
on convergence, on a revisited state (cycle) or after ``max_steps``.
"""
import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg as la
from scipy.special import softmax

from densegame.config import NumericPolicy, get_settings, resolve_policy
from densegame.equilibria import nash_map
from densegame.errors import DimensionMismatchError, InvalidStateError, NotDiagonalError
from densegame.game_model import AbstractGame, DensityProfile, payoff_reduced, reduced_payoff
from densegame.tensor_core import (
    DensityMatrix,
    as_matrix,
    check_hermitian,
    herm_expm,
    is_diagonal,
    offdiagonal_residual,
)

log = logging.getLogger("densegame.pde_dynamics")

BEST_RESPONSE_TIE_TOL = 1e-12
CYCLE_QUANTUM = 1e-9


# =====================================================================
# Configuration and records
# =====================================================================
class UpdateOrder(str, Enum):
    ROUND_ROBIN = "round-robin"
    PERMUTATION = "permutation"
    SIMULTANEOUS = "simultaneous"


class PdeConfig(BaseModel):
    """Iteration parameters; ``beta = inf`` selects exact best responses."""
    model_config = ConfigDict(frozen=True)

    beta: float = Field(default=1.0, ge=0.0)
    order: UpdateOrder = UpdateOrder.ROUND_ROBIN
    permutation: tuple[int, ...] | None = None
    tol: float = Field(default=1e-10, gt=0.0)
    max_steps: int = Field(default=1000, ge=1)
    cycle_window: int = Field(default_factory=lambda: get_settings().CYCLE_WINDOW, ge=2)
    quantum: bool = False
    thin: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if math.isnan(self.beta):
            raise ValueError("beta must not be NaN")
        if self.order is UpdateOrder.PERMUTATION and self.permutation is None:
            raise ValueError("order 'permutation' needs a permutation")
        return self


@dataclass(frozen=True, eq=False)
class TrajectoryStep:
    step: int
    profile: DensityProfile
    payoffs: tuple[float, ...]
    reduced_diagonals: tuple[np.ndarray, ...]


@dataclass(eq=False)
class Trajectory:
    steps: list[TrajectoryStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> TrajectoryStep | None:
        return self.steps[-1] if self.steps else None


class PatternKind(str, Enum):
    CONVERGED = "converged"
    CYCLE = "cycle"
    NONE = "none"


@dataclass(frozen=True)
class PatternReport:
    kind: PatternKind
    residual: float
    period: int | None = None
    steps: int = 0

    def summary(self) -> str:
        if self.kind is PatternKind.CYCLE:
            return f"pattern=cycle:{self.period}"
        return f"pattern={self.kind.value}"


# =====================================================================
# Single-player response
# =====================================================================
def _best_response_probabilities(values: np.ndarray) -> np.ndarray:
    top = values >= values.max() - BEST_RESPONSE_TIE_TOL
    return top / top.sum()


def boltzmann_update(h_r, beta: float, policy: NumericPolicy | None = None) -> DensityMatrix:
    """e^{beta H_R} / Tr e^{beta H_R}; the softmax of the diagonal when H_R is diagonal."""
    policy = resolve_policy(policy)
    if math.isnan(beta) or beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    h_r = as_matrix(h_r, "H_R")
    check_hermitian(h_r, policy.hermitian_tol, "H_R")

    if is_diagonal(h_r, policy.offdiag_tol):
        values = np.real(np.diag(h_r))
        p = _best_response_probabilities(values) if math.isinf(beta) else softmax(beta * values)
        return DensityMatrix.from_probabilities(p / p.sum())

    if math.isinf(beta):
        w, v = la.eigh(0.5 * (h_r + h_r.conj().T))
        top = v[:, w >= w[-1] - BEST_RESPONSE_TIE_TOL * max(1.0, abs(w[-1]))]
        m = top @ top.conj().T
    else:
        m = herm_expm(h_r, beta, stabilize=True, policy=policy)
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real)


def _respond(game: AbstractGame, rho: DensityProfile, i: int, cfg: PdeConfig, policy: NumericPolicy) -> DensityMatrix:
    h_r = reduced_payoff(game, rho, i)
    if not cfg.quantum and not is_diagonal(h_r, policy.offdiag_tol):
        raise NotDiagonalError(
            f"H_R for player {i} is not diagonal (residual {offdiagonal_residual(h_r):.3e}); "
            "enable quantum mode to use the matrix exponential"
        )
    return boltzmann_update(h_r, cfg.beta, policy)


def _player_order(cfg: PdeConfig, n: int) -> tuple[int, ...]:
    if cfg.order is UpdateOrder.PERMUTATION:
        if sorted(cfg.permutation) != list(range(n)):
            raise DimensionMismatchError(f"{cfg.permutation} is not a permutation of players 0..{n - 1}")
        return tuple(cfg.permutation)
    return tuple(range(n))


# =====================================================================
# Iteration
# =====================================================================
def pde_step(
    game: AbstractGame, rho: DensityProfile, cfg: PdeConfig, policy: NumericPolicy | None = None
) -> DensityProfile:
    policy = resolve_policy(policy)
    if rho.shape.dims != game.shape.dims:
        raise DimensionMismatchError(f"profile dims {rho.shape.dims} do not match game dims {game.shape.dims}")
    if cfg.order is UpdateOrder.SIMULTANEOUS:
        return DensityProfile(tuple(_respond(game, rho, i, cfg, policy) for i in range(game.n_players)))
    current = rho
    for i in _player_order(cfg, game.n_players):
        current = current.replace(i, _respond(game, current, i, cfg, policy))
    return current


def _distance(a: DensityProfile, b: DensityProfile) -> float:
    return float(sum(np.abs(x.matrix - y.matrix).sum() for x, y in zip(a.factors, b.factors)))


def _fingerprint(rho: DensityProfile) -> tuple:
    parts = []
    for f in rho.factors:
        m = f.matrix
        parts.append(tuple(np.round(np.concatenate([m.real.ravel(), m.imag.ravel()]) / CYCLE_QUANTUM).astype(np.int64)))
    return tuple(parts)


def _snapshot(game: AbstractGame, rho: DensityProfile, step: int, policy: NumericPolicy) -> TrajectoryStep:
    payoffs, diagonals = [], []
    for i in range(game.n_players):
        h_r = reduced_payoff(game, rho, i)
        payoffs.append(payoff_reduced(rho.factors[i], h_r, policy))
        diagonals.append(np.real(np.diag(h_r)).copy())
    return TrajectoryStep(step, rho, tuple(payoffs), tuple(diagonals))


def pde_run(
    game: AbstractGame, rho0: DensityProfile, cfg: PdeConfig, policy: NumericPolicy | None = None
) -> tuple[Trajectory, PatternReport]:
    policy = resolve_policy(policy)
    trajectory = Trajectory()
    window: deque[tuple] = deque()
    seen: dict[tuple, int] = {}
    current = rho0
    report = None

    for step in range(1, cfg.max_steps + 1):
        new = pde_step(game, current, cfg, policy)
        residual = _distance(new, current)
        current = new

        if residual < cfg.tol:
            report = PatternReport(PatternKind.CONVERGED, residual, None, step)
        else:
            key = _fingerprint(new)
            earlier = seen.get(key)
            if earlier is not None and step - earlier >= 2:
                report = PatternReport(PatternKind.CYCLE, residual, step - earlier, step)
            seen[key] = step
            window.append(key)
            if len(window) > cfg.cycle_window:
                old = window.popleft()
                if seen.get(old, 0) <= step - cfg.cycle_window:
                    seen.pop(old, None)

        if report is not None or step % cfg.thin == 0 or step == cfg.max_steps:
            trajectory.steps.append(_snapshot(game, new, step, policy))
        if report is not None:
            break
        log.debug(f"step {step}: residual {residual:.3e}")

    if report is None:
        report = PatternReport(PatternKind.NONE, residual, None, cfg.max_steps)
    log.info(f"PDE run finished after {report.steps} steps: {report.summary()}")
    return trajectory, report


def master_equation_rhs(p, payoffs, beta: float) -> np.ndarray:
    """dp/dt with source-independent rates w(x' -> x) = softmax(beta E)[x]."""
    p = np.asarray(p, dtype=float)
    payoffs = np.asarray(payoffs, dtype=float)
    if p.shape != payoffs.shape or p.ndim != 1:
        raise DimensionMismatchError(f"p has shape {p.shape}, payoffs have shape {payoffs.shape}")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-12:
        raise InvalidStateError(f"p is not a probability vector: {p}")
    target = _best_response_probabilities(payoffs) if math.isinf(beta) else softmax(beta * payoffs)
    rates = np.repeat(target[:, None], p.size, axis=1)
    return rates @ p - rates.sum(axis=0) * p


# =====================================================================
# Comparison with the fixed-point mapping
# =====================================================================
def approximate_boltzmann_map(
    game: AbstractGame, rho: DensityProfile, beta: float, policy: NumericPolicy | None = None
) -> DensityProfile:
    """rho' = (rho + e^{beta H_R}) / (1 + Tr e^{beta H_R}) per player, from the step-start profile."""
    policy = resolve_policy(policy)
    if math.isinf(beta):
        raise ValueError("the mixing form needs a finite beta")
    factors = []
    for i, f in enumerate(rho.factors):
        x = herm_expm(reduced_payoff(game, rho, i), beta, policy=policy)
        trace = np.trace(x).real
        if not math.isfinite(trace):
            raise InvalidStateError(f"e^(beta H_R) overflows for player {i} at beta={beta}")
        m = (f.matrix + x) / (1.0 + trace)
        m = 0.5 * (m + m.conj().T)
        factors.append(DensityMatrix(m / np.trace(m).real))
    return DensityProfile(tuple(factors))


def nash_map_comparison(
    game: AbstractGame, rho: DensityProfile, beta: float, policy: NumericPolicy | None = None
) -> tuple[DensityProfile, DensityProfile, float]:
    policy = resolve_policy(policy)
    mapped = nash_map(game, rho, policy)
    boltzmann = pde_step(game, rho, PdeConfig(beta=beta, order=UpdateOrder.SIMULTANEOUS), policy)
    distance = _distance(mapped, boltzmann)
    if math.isfinite(beta):
        mixed = approximate_boltzmann_map(game, rho, beta, policy)
        log.info(f"beta={beta}: |T - B|_1 = {distance:.6g}, |T - mixing form|_1 = {_distance(mapped, mixed):.6g}")
    else:
        log.info(f"beta=inf: |T - B|_1 = {distance:.6g}")
    return mapped, boltzmann, distance


# =====================================================================
# Export
# =====================================================================
CSV_HEADER = ("step", "player", "entry_index", "probability", "payoff")


def write_trajectory_csv(trajectory: Trajectory, stream: TextIO) -> int:
    """One row per diagonal entry per player per recorded step.

    ``payoff`` is the reduced payoff of that pure entry against the other
    players' recorded states.
    """
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    rows = 0
    for snap in trajectory.steps:
        for player, (factor, diagonal) in enumerate(zip(snap.profile.factors, snap.reduced_diagonals)):
            for k, (p, value) in enumerate(zip(factor.probabilities(), diagonal)):
                writer.writerow((snap.step, player, k, f"{p:.17g}", f"{value:.17g}"))
                rows += 1
    return rows
