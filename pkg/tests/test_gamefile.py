import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from densegame.errors import GameFileError
from densegame.game_model import AbstractGame, ClassicalGame, DensityProfile, build_H_from_G, matching_pennies
from densegame.gamefile import (
    RunResult,
    decode_complex,
    dump_game,
    encode_complex,
    load_game_file,
    load_game_text,
    parse_game,
    profile_payoffs,
    resolve_profile,
    run_self_test,
)
from densegame.quantum_game import OperatorGame

BUNDLED = sorted((Path(__file__).parents[1] / "densegame" / "games").glob("*.json"))

CLASSICAL = {
    "kind": "classical",
    "players": 2,
    "dims": [2, 2],
    "payoffs": [[[1, -1], [-1, 1]], [[-1, 1], [1, -1]]],
}


def text(**changes) -> str:
    return json.dumps({**CLASSICAL, **changes})


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_bundled_games_pass_their_self_tests(path):
    loaded = load_game_file(path)
    assert loaded.source.self_test is not None
    assert run_self_test(loaded) == []


def test_bundled_game_set():
    assert {p.stem for p in BUNDLED} >= {
        "matching_pennies",
        "dominant_strategy",
        "coordination",
        "three_player",
        "penny_flip",
        "commuting_quantum",
        "noncommuting_quantum",
    }


# =====================================================================
# Errors
# =====================================================================
def test_syntax_error_reports_line_and_column():
    broken = '{\n  "kind": "classical",\n  "players": 2,\n}'
    with pytest.raises(GameFileError) as info:
        load_game_text(broken, "broken.json")
    assert (info.value.line, info.value.column) == (4, 1)
    assert str(info.value).startswith("broken.json:4:1")


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"players": 0}, "players"),
        ({"colour": "red"}, "colour"),
        ({"format_version": 2}, "format_version"),
        ({"payoffs": [[[1, 2, 3]], [[1, 2, 3]]]}, "payoffs"),
        ({"payoffs": [[[1, -1], [-1, 1]]]}, "payoffs"),
    ],
)
def test_invalid_classical_files_name_the_field(changes, field):
    with pytest.raises(GameFileError) as info:
        load_game_text(text(**changes))
    assert info.value.field == field


def test_unknown_kind_is_rejected():
    with pytest.raises(GameFileError):
        load_game_text(text(kind="extensive"))


def test_abstract_operator_errors():
    base = {"kind": "abstract", "players": 1, "dims": [2]}
    with pytest.raises(GameFileError) as info:
        load_game_text(json.dumps({**base, "operators": [[[[1, 0], [0, 1]], [[0, 0], [1, 0]]]]}))
    assert info.value.field == "operators"
    with pytest.raises(GameFileError) as info:
        load_game_text(json.dumps({**base, "operators": [[[1, 2, 3]]]}))
    assert info.value.field == "operators[0][0][0]"


def test_operator_game_rho0_must_be_a_density():
    raw = json.loads((Path(__file__).parents[1] / "densegame" / "games" / "penny_flip.json").read_text())
    raw["rho0"] = [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]
    with pytest.raises(GameFileError) as info:
        load_game_text(json.dumps(raw))
    assert info.value.field == "rho0"


def test_missing_file(tmp_path):
    with pytest.raises(GameFileError) as info:
        load_game_file(tmp_path / "absent.json")
    assert info.value.path.endswith("absent.json")


# =====================================================================
# Loading, dumping and profiles
# =====================================================================
def test_complex_pairs():
    m = np.array([[1 + 2j, 0], [0.5j, -1]])
    assert encode_complex(m)[0][0] == [1.0, 2.0]
    assert_allclose(decode_complex(encode_complex(m)), m)
    with pytest.raises(ValueError):
        decode_complex([1.0, 2.0, 3.0])


def test_parse_game_kinds(games_dir):
    assert isinstance(parse_game(games_dir / "matching_pennies.json"), ClassicalGame)
    assert isinstance(parse_game(games_dir / "commuting_quantum.json"), AbstractGame)
    assert isinstance(parse_game(games_dir / "penny_flip.json"), OperatorGame)


def test_classical_view(games_dir):
    assert load_game_file(games_dir / "penny_flip.json").classical is None
    assert load_game_file(games_dir / "commuting_quantum.json").classical is None
    loaded = load_game_file(games_dir / "three_player.json")
    assert loaded.classical is loaded.game


def test_dumped_game_loads_back():
    game = build_H_from_G(matching_pennies())
    dumped = dump_game(game, name="mp")
    assert dumped.endswith("\n")
    assert list(json.loads(dumped))[:2] == ["format_version", "name"]
    loaded = load_game_text(dumped)
    assert loaded.kind == "abstract"
    assert loaded.source.name == "mp"
    for a, b in zip(loaded.game.operators, game.operators):
        assert_allclose(a, b)


def test_resolve_profiles(games_dir):
    loaded = load_game_file(games_dir / "matching_pennies.json")
    uniform = resolve_profile(loaded, "uniform")
    assert isinstance(uniform, DensityProfile)
    assert profile_payoffs(loaded, resolve_profile(loaded, "heads_tails")) == [-1.0, 1.0]
    inline = resolve_profile(loaded, "[[0.25, 0.75], [1, 0]]")
    assert_allclose(inline.probabilities()[0], [0.25, 0.75])
    with pytest.raises(GameFileError):
        resolve_profile(loaded, "no_such_profile")
    with pytest.raises(GameFileError) as info:
        resolve_profile(loaded, "[[1, 0]]")
    assert info.value.field == "--profile"
    with pytest.raises(GameFileError):
        resolve_profile(loaded, "[[1, 0, 0], [1, 0]]")


def test_operator_game_profiles(games_dir):
    loaded = load_game_file(games_dir / "penny_flip.json")
    assert_allclose(profile_payoffs(loaded, resolve_profile(loaded, "one_flip")), [-1, 1], atol=1e-12)
    uniform = resolve_profile(loaded, "uniform")
    assert [m.shape for m in uniform] == [(4, 4), (4, 4)]
    with pytest.raises(GameFileError):
        resolve_profile(loaded, "[[1, 0], [1, 0, 0, 1]]")


def test_self_test_reports_wrong_expectations(games_dir):
    raw = json.loads((games_dir / "coordination.json").read_text())
    raw["self_test"]["equilibria"] = 2
    raw["self_test"]["payoffs"] = {"uniform": [0.25, 0.5]}
    failures = run_self_test(load_game_text(json.dumps(raw)))
    assert len(failures) == 2
    assert "oracle found 3 equilibria" in failures[0]


def test_self_test_checks_need_matching_kinds(games_dir):
    raw = json.loads((games_dir / "noncommuting_quantum.json").read_text())
    raw["self_test"] = {"equilibria": 1, "max_deviation": 1e-9}
    failures = run_self_test(load_game_text(json.dumps(raw)))
    assert failures == ["equilibrium checks need a diagonal game", "max_deviation applies to operator games only"]


def test_run_result_serializes():
    result = RunResult(command=["solve", "game.json"], seed=3, outputs={"payoffs": [1.0, -1.0]}, wall_time=0.5)
    assert json.loads(result.model_dump_json())["outputs"]["payoffs"] == [1.0, -1.0]
