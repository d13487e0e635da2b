"""Game definition files and run results.

Game files are UTF-8 JSON with a ``kind`` discriminator (``classical``,
``abstract`` or ``operator``). Complex numbers are always ``[re, im]`` pairs.
Syntax errors carry the decoder's line and column; schema and invariant
violations carry the dotted path of the offending field.
"""
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError

from densegame.equilibria import brute_force_ne
from densegame.errors import DenseGameError, GameFileError
from densegame.game_model import (
    AbstractGame,
    ClassicalGame,
    DensityProfile,
    build_H_from_G,
    diagonal_to_classical,
    payoff_trace,
)
from densegame.pde_dynamics import UpdateOrder
from densegame.quantum_game import (
    JointRule,
    OperatorGame,
    QuantumObject,
    TaxonomyLabel,
    build_abstract,
    classify,
    coefficient_density,
    operator_basis,
    pauli_basis,
    payoff_abstract,
    verify_equivalence,
)
from densegame.tensor_core import DensityMatrix, SpaceShape

log = logging.getLogger("densegame.gamefile")

FORMAT_VERSION = 1

ComplexPair = tuple[float, float]
ComplexMatrixData = list[list[ComplexPair]]


# =====================================================================
# Schema
# =====================================================================
class RuleSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["ordered-product", "direct-product", "custom"] = "ordered-product"
    # custom: nested [re, im] leaves, shape (b_0, ..., b_{N-1}, Q, Q)
    table: list | None = None


class SolverSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: Literal["fixed-point", "oracle"] = "fixed-point"
    tol: float | None = None
    max_iter: int | None = None
    resolution: int | None = None
    beta: float | None = None
    order: UpdateOrder | None = None
    steps: int | None = None


class SelfTest(BaseModel):
    """Assertions a bundled file makes about itself."""
    model_config = ConfigDict(extra="forbid")

    classification: TaxonomyLabel | None = None
    equilibria: int | None = None
    equilibrium_payoffs: list[list[float]] | None = None
    payoffs: dict[str, list[float]] = Field(default_factory=dict)
    max_deviation: float | None = None
    samples: int = 200
    tol: float = 1e-9


class _GameFileBase(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: Literal[1] = FORMAT_VERSION
    name: str = ""
    description: str = ""
    players: int = Field(ge=1)
    profiles: dict[str, list] = Field(default_factory=dict)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    self_test: SelfTest | None = None


class ClassicalGameFile(_GameFileBase):
    kind: Literal["classical"]
    dims: list[int]
    payoffs: list


class AbstractGameFile(_GameFileBase):
    kind: Literal["abstract"]
    dims: list[int]
    operators: list[ComplexMatrixData]


class OperatorGameFile(_GameFileBase):
    kind: Literal["operator"]
    object_dim: int = Field(ge=1)
    rho0: ComplexMatrixData
    rule: RuleSpec = Field(default_factory=RuleSpec)
    player_dims: list[int] | None = None
    bases: list[Union[Literal["operator", "pauli"], list[ComplexMatrixData]]] | None = None
    payoff_scales: list[ComplexMatrixData]


GameFile = Annotated[Union[ClassicalGameFile, AbstractGameFile, OperatorGameFile], Field(discriminator="kind")]
_GAME_FILE = TypeAdapter(GameFile)


class RunResult(BaseModel):
    command: list[str]
    seed: int
    outputs: dict[str, Any] = Field(default_factory=dict)
    wall_time: float = 0.0


# =====================================================================
# Encoding helpers
# =====================================================================
def decode_complex(data, what: str = "value") -> np.ndarray:
    """Nested lists with [re, im] leaves to a complex array."""
    a = np.asarray(data, dtype=float)
    if a.ndim == 0 or a.shape[-1] != 2:
        raise ValueError(f"{what} must use [re, im] pairs for complex entries")
    return a[..., 0] + 1j * a[..., 1]


def encode_complex(m) -> list:
    m = np.asarray(m, dtype=np.complex128)
    return np.stack([m.real, m.imag], axis=-1).tolist()


@contextmanager
def _located(path: str | None, field_path: str):
    try:
        yield
    except GameFileError:
        raise
    except (DenseGameError, ValueError) as e:
        raise GameFileError(str(e), path=path, field=field_path) from e


def _field_path(loc: tuple) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        elif item in ("classical", "abstract", "operator") and not parts:
            continue
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts)


# =====================================================================
# Loading
# =====================================================================
@dataclass(frozen=True, eq=False)
class LoadedGame:
    source: ClassicalGameFile | AbstractGameFile | OperatorGameFile
    game: ClassicalGame | AbstractGame | OperatorGame
    path: str | None = None

    @property
    def kind(self) -> str:
        return self.source.kind

    @cached_property
    def abstract(self) -> AbstractGame:
        if isinstance(self.game, ClassicalGame):
            return build_H_from_G(self.game)
        if isinstance(self.game, OperatorGame):
            return build_abstract(self.game)
        return self.game

    @cached_property
    def classical(self) -> ClassicalGame | None:
        if isinstance(self.game, ClassicalGame):
            return self.game
        game = self.abstract
        return diagonal_to_classical(game) if game.is_diagonal() else None


def _build_classical(src: ClassicalGameFile, path: str | None) -> ClassicalGame:
    with _located(path, "payoffs"):
        tensors = tuple(np.asarray(t, dtype=float) for t in src.payoffs)
        if len(tensors) != src.players:
            raise ValueError(f"{len(tensors)} payoff tensors for {src.players} players")
        for k, t in enumerate(tensors):
            if t.shape != tuple(src.dims):
                raise ValueError(f"payoff tensor {k} has shape {t.shape}, dims declare {tuple(src.dims)}")
        return ClassicalGame(tensors)


def _build_abstract(src: AbstractGameFile, path: str | None) -> AbstractGame:
    with _located(path, "dims"):
        if len(src.dims) != src.players:
            raise ValueError(f"{len(src.dims)} dims for {src.players} players")
        shape = SpaceShape(tuple(src.dims))
    ops = []
    for k, h in enumerate(src.operators):
        with _located(path, f"operators[{k}]"):
            ops.append(decode_complex(h, f"operator {k}"))
    with _located(path, "operators"):
        return AbstractGame(shape, tuple(ops))


def _build_basis(entry, d: int, j: int, path: str | None):
    with _located(path, f"bases[{j}]"):
        if entry == "operator":
            return operator_basis(d)
        if entry == "pauli":
            if d != 2:
                raise ValueError(f"the Pauli basis needs dimension 2, player {j} has {d}")
            return pauli_basis()
        return tuple(decode_complex(b, f"basis operator of player {j}") for b in entry)


def _build_operator(src: OperatorGameFile, path: str | None) -> OperatorGame:
    with _located(path, "rho0"):
        rho0 = decode_complex(src.rho0, "rho0")
        if rho0.shape != (src.object_dim, src.object_dim):
            raise ValueError(f"rho0 has shape {rho0.shape}, object_dim is {src.object_dim}")
        obj = QuantumObject(DensityMatrix(rho0))
    with _located(path, "rule"):
        table = decode_complex(src.rule.table, "rule table") if src.rule.table is not None else None
        rule = JointRule(src.rule.kind, table=table)
    scales = []
    for k, p in enumerate(src.payoff_scales):
        with _located(path, f"payoff_scales[{k}]"):
            scales.append(decode_complex(p, f"payoff scale {k}"))
    with _located(path, "payoff_scales"):
        if len(scales) != src.players:
            raise ValueError(f"{len(scales)} payoff scales for {src.players} players")
    dims = tuple(src.player_dims) if src.player_dims is not None else (src.object_dim,) * src.players
    bases = None
    if src.bases is not None:
        with _located(path, "bases"):
            if len(src.bases) != src.players:
                raise ValueError(f"{len(src.bases)} bases for {src.players} players")
        bases = tuple(_build_basis(entry, d, j, path) for j, (entry, d) in enumerate(zip(src.bases, dims)))
    with _located(path, "payoff_scales"):
        return OperatorGame(obj, rule, tuple(scales), tuple(src.player_dims) if src.player_dims else None, bases)


def load_game_text(text: str, path: str | None = None) -> LoadedGame:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise GameFileError(f"invalid JSON: {e.msg}", path=path, line=e.lineno, column=e.colno) from e
    try:
        src = _GAME_FILE.validate_python(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise GameFileError(first["msg"], path=path, field=_field_path(first["loc"]) or None) from e

    if src.kind == "classical":
        game = _build_classical(src, path)
    elif src.kind == "abstract":
        game = _build_abstract(src, path)
    else:
        game = _build_operator(src, path)
    log.debug(f"Loaded {src.kind} game '{src.name or path}'")
    return LoadedGame(src, game, path)


def load_game_file(path) -> LoadedGame:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise GameFileError(f"cannot read file: {e}", path=str(p)) from e
    return load_game_text(text, str(p))


def parse_game(path) -> ClassicalGame | AbstractGame | OperatorGame:
    return load_game_file(path).game


def dump_game(game: AbstractGame, name: str = "", description: str = "") -> str:
    """Serialize an abstract game as a game file (stable key order, two-space indent)."""
    src = AbstractGameFile(
        kind="abstract",
        name=name,
        description=description,
        players=game.n_players,
        dims=list(game.shape.dims),
        operators=[encode_complex(h) for h in game.operators],
    )
    return json.dumps(src.model_dump(mode="json", exclude={"profiles", "solver", "self_test"}), indent=2) + "\n"


# =====================================================================
# Profiles
# =====================================================================
def _density_entry(entry, what: str) -> DensityMatrix:
    a = np.asarray(entry, dtype=float)
    if a.ndim == 1:
        return DensityMatrix.from_probabilities(a)
    return DensityMatrix(decode_complex(a, what))


def _strategy_entry(entry, what: str) -> np.ndarray:
    a = np.asarray(entry, dtype=float)
    if a.ndim == 1:
        return coefficient_density(a)
    if a.ndim == 2:
        return coefficient_density(decode_complex(a, what))
    return decode_complex(a, what)


def resolve_profile(loaded: LoadedGame, spec: str) -> DensityProfile | list[np.ndarray]:
    """``uniform``, a profile name from the file, or inline JSON.

    Operator games return per-player operator-space densities (entries are
    coefficient vectors or densities); other kinds return a DensityProfile
    (entries are probability vectors or complex density matrices).
    """
    dims = loaded.abstract.shape.dims
    if spec == "uniform":
        if loaded.kind == "operator":
            return [np.eye(d, dtype=np.complex128) / d for d in dims]
        return DensityProfile.uniform(dims)
    where = f"profiles.{spec}"
    if spec in loaded.source.profiles:
        entries = loaded.source.profiles[spec]
    else:
        try:
            entries = json.loads(spec)
        except json.JSONDecodeError as e:
            raise GameFileError(f"unknown profile '{spec}' and not valid inline JSON", path=loaded.path) from e
        where = "--profile"
    with _located(loaded.path, where):
        if not isinstance(entries, list) or len(entries) != len(dims):
            raise ValueError(f"a profile needs one entry per player ({len(dims)})")
        if loaded.kind == "operator":
            mats = [_strategy_entry(e, f"strategy of player {j}") for j, e in enumerate(entries)]
            for j, (m, d) in enumerate(zip(mats, dims)):
                if m.shape != (d, d):
                    raise ValueError(f"player {j} strategy has dimension {m.shape[0]}, expected {d}")
            return mats
        profile = DensityProfile(tuple(_density_entry(e, f"state of player {j}") for j, e in enumerate(entries)))
        if profile.shape.dims != dims:
            raise ValueError(f"profile dims {profile.shape.dims} do not match game dims {dims}")
        return profile


def profile_payoffs(loaded: LoadedGame, profile) -> list[float]:
    game = loaded.abstract
    if loaded.kind == "operator":
        return [payoff_abstract(game, profile, i) for i in range(game.n_players)]
    return [payoff_trace(game, profile, i) for i in range(game.n_players)]


# =====================================================================
# Self-test
# =====================================================================
def run_self_test(loaded: LoadedGame, seed: int = 0) -> list[str]:
    """Check a file's ``self_test`` block; returns the failures (empty when all pass)."""
    block = loaded.source.self_test
    if block is None:
        return []
    failures = []
    tol = block.tol

    if block.classification is not None:
        label = classify(loaded.abstract).label
        if label is not block.classification:
            failures.append(f"classification is {label.value}, expected {block.classification.value}")

    if block.equilibria is not None or block.equilibrium_payoffs is not None:
        classical = loaded.classical
        if classical is None:
            failures.append("equilibrium checks need a diagonal game")
        else:
            certificates = brute_force_ne(classical)
            if block.equilibria is not None and len(certificates) != block.equilibria:
                failures.append(f"oracle found {len(certificates)} equilibria, expected {block.equilibria}")
            if block.equilibrium_payoffs is not None:
                found = sorted(tuple(c.payoffs) for c in certificates)
                expected = sorted(tuple(p) for p in block.equilibrium_payoffs)
                if len(found) != len(expected) or not np.allclose(found, expected, atol=tol, rtol=0):
                    failures.append(f"equilibrium payoffs {found} differ from {expected}")

    for name, expected in block.payoffs.items():
        got = profile_payoffs(loaded, resolve_profile(loaded, name))
        if len(got) != len(expected) or not np.allclose(got, expected, atol=tol, rtol=0):
            failures.append(f"profile '{name}' pays {got}, expected {expected}")

    if block.max_deviation is not None:
        if not isinstance(loaded.game, OperatorGame):
            failures.append("max_deviation applies to operator games only")
        else:
            deviation = verify_equivalence(loaded.game, loaded.abstract, block.samples, seed)
            if deviation > block.max_deviation:
                failures.append(f"equivalence deviation {deviation:.3e} exceeds {block.max_deviation:.3e}")

    return failures
