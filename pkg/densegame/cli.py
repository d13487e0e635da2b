"""Command-line entry point: ``densegame <payoff|solve|pde|quantum|classify> <file>``.

Results go to stdout (deterministic for a given file, flags and seed); logs
go to stderr. Exit codes: 0 success, 2 input error, 3 honest non-convergence.
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from densegame.config import get_settings
from densegame.equilibria import (
    NashCertificate,
    brute_force_ne,
    iterate_nash_map,
    qne_commuting,
    verify_ne,
)
from densegame.errors import DenseGameError, DiagonalizationError, GameFileError, InvalidStateError
from densegame.gamefile import (
    LoadedGame,
    RunResult,
    decode_complex,
    dump_game,
    encode_complex,
    load_game_file,
    profile_payoffs,
    resolve_profile,
    run_self_test,
)
from densegame.game_model import DensityProfile, density_to_mixed, payoff_classical
from densegame.pde_dynamics import PatternKind, PdeConfig, UpdateOrder, pde_run, write_trajectory_csv
from densegame.quantum_game import (
    PlayerOperator,
    TaxonomyLabel,
    classify,
    is_unitary,
    verify_equivalence,
)
from densegame.tensor_core import DensityMatrix, is_diagonal

log = logging.getLogger("densegame.cli")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3

EQUIVALENCE_THRESHOLD = 1e-9
PDE_VERIFY_EPS = 1e-3

Outputs = dict


# =====================================================================
# Formatting
# =====================================================================
def fmt(x: float) -> str:
    return f"{float(x) + 0.0:.12g}"


def _fmt_vector(v) -> str:
    return "[" + ", ".join(fmt(x) for x in v) + "]"


def _describe_factor(rho: DensityMatrix) -> str:
    if is_diagonal(rho.matrix):
        return f"probabilities={_fmt_vector(rho.probabilities())}"
    rows = []
    for row in rho.matrix:
        rows.append("[" + ", ".join(f"[{fmt(z.real)}, {fmt(z.imag)}]" for z in row) + "]")
    return "state=[" + ", ".join(rows) + "]"


def _certificate_lines(label: str, cert: NashCertificate) -> list[str]:
    lines = [f"{label}: valid={str(cert.valid).lower()} epsilon={fmt(cert.epsilon)} max_gain={fmt(cert.max_gain)}"]
    for i, factor in enumerate(cert.profile.factors):
        lines.append(
            f"  player {i}: {_describe_factor(factor)} payoff={fmt(cert.payoffs[i])} gain={fmt(cert.per_player_gain[i])}"
        )
    return lines


def _certificate_output(cert: NashCertificate) -> dict:
    return {
        "valid": cert.valid,
        "epsilon": cert.epsilon,
        "per_player_gain": list(cert.per_player_gain),
        "payoffs": list(cert.payoffs),
        "profile": [encode_complex(f.matrix) for f in cert.profile.factors],
    }


def _emit(lines: list[str]) -> None:
    for line in lines:
        print(line)


# =====================================================================
# Commands
# =====================================================================
def cmd_payoff(loaded: LoadedGame, args) -> tuple[int, Outputs]:
    profile = resolve_profile(loaded, args.profile)
    payoffs = profile_payoffs(loaded, profile)
    if loaded.kind == "classical" and isinstance(profile, DensityProfile) and profile.is_diagonal():
        mixed = density_to_mixed(profile)
        for i, value in enumerate(payoffs):
            direct = payoff_classical(loaded.game, mixed, i)
            if abs(direct - value) > 1e-12:
                log.warning(f"⚠️ Trace and tensor payoffs differ for player {i}: {value!r} vs {direct!r}")
    players = range(len(payoffs)) if args.player is None else [args.player]
    for i in players:
        if not 0 <= i < len(payoffs):
            raise InvalidStateError(f"--player {i} out of range for {len(payoffs)} players")
        print(f"player {i}: {fmt(payoffs[i])}")
    return EXIT_OK, {"payoffs": payoffs}


def _solve_classical(loaded: LoadedGame, args) -> tuple[int, Outputs]:
    solver = loaded.source.solver
    method = args.method or solver.method
    classical = loaded.classical
    if method == "oracle":
        certificates = brute_force_ne(classical, args.resolution or solver.resolution)
        lines = [f"method=oracle equilibria={len(certificates)}"]
        for k, cert in enumerate(certificates):
            lines += _certificate_lines(f"equilibrium {k}", cert)
        _emit(lines)
        return EXIT_OK, {"method": method, "certificates": [_certificate_output(c) for c in certificates]}

    tol = args.tol if args.tol is not None else solver.tol
    max_iter = args.max_iter if args.max_iter is not None else solver.max_iter
    report = iterate_nash_map(loaded.abstract, DensityProfile.uniform(classical.dims.dims), tol, max_iter)
    lines = [
        f"method=fixed-point converged={str(report.converged).lower()} iterations={report.iterations} "
        f"residual={fmt(report.residual)}"
    ]
    lines += _certificate_lines("fixed point", report.certificate)
    _emit(lines)
    outputs = {
        "method": method,
        "converged": report.converged,
        "iterations": report.iterations,
        "residual": report.residual,
        "certificates": [_certificate_output(report.certificate)],
    }
    if not report.converged:
        log.warning("⚠️ Fixed-point iteration did not converge")
        return EXIT_NO_CONVERGENCE, outputs
    return EXIT_OK, outputs


def cmd_solve(loaded: LoadedGame, args) -> tuple[int, Outputs]:
    if loaded.classical is not None:
        return _solve_classical(loaded, args)
    game = loaded.abstract
    taxonomy = classify(game)
    if taxonomy.label is not TaxonomyLabel.CO_DIAGONALIZABLE:
        print(f"method=none classification={taxonomy}")
        log.warning("⚠️ No equilibrium solver for games whose payoff operators do not commute")
        return EXIT_NO_CONVERGENCE, {"method": None, "classification": str(taxonomy)}
    try:
        cert = qne_commuting(game)
    except DiagonalizationError as e:
        print("method=commuting certificate=none")
        log.warning(f"⚠️ {e}")
        return EXIT_NO_CONVERGENCE, {"method": "commuting", "certificates": []}
    _emit(["method=commuting"] + _certificate_lines("equilibrium", cert))
    code = EXIT_OK if cert.valid else EXIT_NO_CONVERGENCE
    return code, {"method": "commuting", "certificates": [_certificate_output(cert)]}


def cmd_pde(loaded: LoadedGame, args) -> tuple[int, Outputs]:
    if loaded.kind == "operator":
        raise GameFileError("pde runs on classical or abstract games; compile with `quantum --build` first",
                            path=loaded.path)
    solver = loaded.source.solver
    order = args.order or (solver.order.value if solver.order else UpdateOrder.ROUND_ROBIN.value)
    cfg = PdeConfig(
        beta=args.beta if args.beta is not None else (solver.beta if solver.beta is not None else 1.0),
        order=order,
        permutation=args.permutation,
        tol=args.tol if args.tol is not None else (solver.tol or 1e-10),
        max_steps=args.steps if args.steps is not None else (solver.steps or 1000),
        quantum=args.quantum,
    )
    game = loaded.abstract
    rho0 = resolve_profile(loaded, args.profile)
    trajectory, report = pde_run(game, rho0, cfg)

    rows = None
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as stream:
            rows = write_trajectory_csv(trajectory, stream)
        log.info(f"✅ Wrote {rows} trajectory rows to {args.csv}")

    final = trajectory.final
    lines = [f"steps={report.steps} residual={fmt(report.residual)}"]
    for i, factor in enumerate(final.profile.factors):
        lines.append(f"  player {i}: {_describe_factor(factor)} payoff={fmt(final.payoffs[i])}")
    outputs = {"pattern": report.summary(), "steps": report.steps, "residual": report.residual, "csv_rows": rows}
    if report.kind is PatternKind.CONVERGED:
        cert = verify_ne(game, final.profile, PDE_VERIFY_EPS)
        lines.append(f"ne_check: valid={str(cert.valid).lower()} max_gain={fmt(cert.max_gain)}")
        outputs["certificate"] = _certificate_output(cert)
    lines.append(report.summary())
    _emit(lines)
    return (EXIT_NO_CONVERGENCE if report.kind is PatternKind.NONE else EXIT_OK), outputs


def _mixes_unitaries(density: np.ndarray, basis, tol: float = 1e-9) -> bool:
    # a mixture of unitaries U_k gives sum p_k U_k^dagger U_k and sum p_k U_k U_k^dagger both proportional to I
    b = np.array(basis)
    after = np.einsum("ab,aji,bjk->ik", density, b.conj(), b)
    before = np.einsum("ab,bij,akj->ik", density, b, b.conj())
    scale = np.trace(after).real / b.shape[1]
    if scale <= tol:
        return False
    ident = scale * np.eye(b.shape[1])
    return max(np.max(np.abs(after - ident)), np.max(np.abs(before - ident))) <= tol * max(1.0, scale)


def _check_unitary_profiles(loaded: LoadedGame) -> None:
    og = loaded.game
    for name, entries in loaded.source.profiles.items():
        for j, (entry, basis) in enumerate(zip(entries, og.bases)):
            try:
                a = np.asarray(entry, dtype=float)
                if a.ndim == 3:
                    ok = _mixes_unitaries(decode_complex(a, f"strategy of player {j}"), basis)
                else:
                    c = a[..., 0] + 1j * a[..., 1] if a.ndim == 2 else a
                    ok = c.ndim == 1 and is_unitary(PlayerOperator.from_coefficients(c, basis))
            except ValueError as e:
                raise InvalidStateError(f"profile '{name}' player {j}: {e}") from e
            if not ok:
                raise InvalidStateError(f"profile '{name}' gives player {j} a non-unitary strategy")


def cmd_quantum(loaded: LoadedGame, args) -> tuple[int, Outputs]:
    if loaded.kind != "operator":
        raise GameFileError("quantum needs an operator game file", path=loaded.path)
    if args.require_unitary:
        _check_unitary_profiles(loaded)
    game = loaded.abstract
    outputs: Outputs = {"dims": list(game.shape.dims)}
    lines = [f"compiled dims={'x'.join(str(d) for d in game.shape.dims)} classification={classify(game)}"]
    code = EXIT_OK
    if args.build:
        name = f"{loaded.source.name}-compiled" if loaded.source.name else "compiled"
        Path(args.build).write_text(dump_game(game, name=name), encoding="utf-8")
        lines.append(f"built {args.build}")
        outputs["build"] = args.build
    if args.verify:
        deviation = verify_equivalence(loaded.game, game, args.samples, args.seed)
        passed = deviation <= EQUIVALENCE_THRESHOLD
        lines.append(f"samples={args.samples} max_deviation={deviation:.3e} passed={str(passed).lower()}")
        outputs["max_deviation"] = deviation
        if not passed:
            log.warning(f"⚠️ Equivalence deviation {deviation:.3e} exceeds {EQUIVALENCE_THRESHOLD:g}")
            code = EXIT_NO_CONVERGENCE
    _emit(lines)
    return code, outputs


def cmd_classify(loaded: LoadedGame, args) -> tuple[int, Outputs]:
    taxonomy = classify(loaded.abstract, entangled=args.entangled)
    _emit([str(taxonomy), f"regimes={','.join(taxonomy.regimes)}"])
    return EXIT_OK, {"classification": str(taxonomy), "regimes": list(taxonomy.regimes)}


# =====================================================================
# Parser
# =====================================================================
def _permutation_arg(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated player indices, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("game", help="game file (JSON)")
    common.add_argument("--seed", type=int, default=settings.SEED)
    common.add_argument("--self-test", action="store_true", help="check the file's self_test block first")
    common.add_argument("--result", metavar="PATH", help="write a RunResult JSON file")
    common.add_argument("--log-level", default=None, help=f"logging level (default {settings.LOG_LEVEL})")

    parser = argparse.ArgumentParser(prog="densegame", description="Density-matrix game theory toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("payoff", parents=[common], help="payoff of every player at a profile")
    p.add_argument("--profile", default="uniform", help="profile name, 'uniform', or inline JSON")
    p.add_argument("--player", type=int, default=None)
    p.set_defaults(handler=cmd_payoff)

    p = sub.add_parser("solve", parents=[common], help="find and certify a Nash equilibrium")
    p.add_argument("--method", choices=["fixed-point", "oracle"], default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("pde", parents=[common], help="run the Boltzmann-response iteration")
    p.add_argument("--beta", type=float, default=None, help="inverse temperature; 'inf' for best responses")
    p.add_argument("--order", choices=[o.value for o in UpdateOrder], default=None)
    p.add_argument("--permutation", type=_permutation_arg, default=None, help="player order for --order permutation, e.g. 1,0")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--profile", default="uniform", help="start profile")
    p.add_argument("--quantum", action="store_true", help="allow non-diagonal reduced payoffs")
    p.add_argument("--csv", default=None, help="write the trajectory CSV here")
    p.set_defaults(handler=cmd_pde)

    p = sub.add_parser("quantum", parents=[common], help="compile or verify an operator game")
    p.add_argument("--build", metavar="OUT", default=None, help="write the compiled abstract game file")
    p.add_argument("--verify", action="store_true", help="check payoff equivalence on random strategies")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--require-unitary", action="store_true", help="reject non-unitary profile strategies")
    p.set_defaults(handler=cmd_quantum)

    p = sub.add_parser("classify", parents=[common], help="diagonal / co-diagonalizable / general")
    p.add_argument("--entangled", action="store_true", help="declare an entangled strategy space")
    p.set_defaults(handler=cmd_classify)
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or get_settings().LOG_LEVEL).upper(),
        format="%(asctime)s [%(levelname)s] %(name)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )
    log.info(f"🚀 densegame {args.command} {args.game} (seed {args.seed})")
    handler: Callable = args.handler
    started = time.perf_counter()
    try:
        loaded = load_game_file(args.game)
        if args.self_test:
            failures = run_self_test(loaded, args.seed)
            for failure in failures:
                log.error(f"❌ self-test: {failure}")
            if failures:
                print(f"self-test: failed ({len(failures)})")
                return EXIT_INPUT
            print("self-test: passed")
        code, outputs = handler(loaded, args)
    except (DenseGameError, ValidationError) as e:
        message = e.describe() if isinstance(e, GameFileError) else str(e)
        log.error(f"❌ {message}")
        print(f"error: {message}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        log.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT

    if args.result:
        result = RunResult(
            command=list(argv if argv is not None else sys.argv[1:]),
            seed=args.seed,
            outputs=outputs,
            wall_time=time.perf_counter() - started,
        )
        Path(args.result).write_text(result.model_dump_json(indent=2) + "\n", encoding="utf-8")
    log.info(f"✅ {args.command} finished with exit code {code}")
    return code
