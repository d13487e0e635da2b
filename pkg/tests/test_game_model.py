import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from densegame.errors import DimensionMismatchError, InvalidStateError, NonHermitianError, NotDiagonalError
from densegame.game_model import (
    AbstractGame,
    ClassicalGame,
    DensityProfile,
    MixedProfile,
    build_H_from_G,
    density_to_mixed,
    diagonal_to_classical,
    matching_pennies,
    mixed_to_density,
    payoff_classical,
    payoff_reduced,
    payoff_trace,
    prisoners_dilemma,
    pure_density,
    reduced_payoff,
    wavefunction_to_mixed,
)
from densegame.generators import (
    random_classical_game,
    random_density,
    random_density_profile,
    random_hermitian,
    random_mixed_profile,
)
from densegame.tensor_core import DensityMatrix, SpaceShape, kron_all, partial_trace_keep


def expected_payoff_by_enumeration(g: ClassicalGame, p: MixedProfile, i: int) -> float:
    total = 0.0
    for combo in itertools.product(*(range(d) for d in g.dims.dims)):
        weight = np.prod([p.vectors[j][k] for j, k in enumerate(combo)])
        total += weight * g.payoffs[i][combo]
    return total


@pytest.mark.parametrize("dims", [(2, 2), (3, 2), (2, 3, 4)])
def test_trace_payoff_matches_classical_expectation(rng, dims):
    g = random_classical_game(rng, dims)
    game = build_H_from_G(g)
    for _ in range(5):
        p = random_mixed_profile(rng, dims)
        rho = mixed_to_density(p)
        for i in range(len(dims)):
            expected = expected_payoff_by_enumeration(g, p, i)
            assert payoff_classical(g, p, i) == pytest.approx(expected, abs=1e-12)
            assert payoff_trace(game, rho, i) == pytest.approx(expected, abs=1e-12)


def test_pure_profile_reads_tensor_entry():
    g = prisoners_dilemma()
    p = MixedProfile.pure((2, 2), (1, 0))
    assert payoff_classical(g, p, 0) == 5.0
    assert payoff_trace(build_H_from_G(g), mixed_to_density(p), 1) == 0.0


def test_matching_pennies_uniform_pays_zero():
    game = build_H_from_G(matching_pennies())
    rho = DensityProfile.uniform((2, 2))
    assert payoff_trace(game, rho, 0) == 0.0
    assert payoff_trace(game, rho, 1) == 0.0


def test_lift_is_diagonal_and_reversible(rng):
    g = random_classical_game(rng, (2, 3))
    game = build_H_from_G(g)
    assert game.is_diagonal()
    assert_allclose(np.diag(game.operators[0]).real, g.payoffs[0].reshape(-1))
    back = diagonal_to_classical(game)
    for a, b in zip(back.payoffs, g.payoffs):
        assert_allclose(a, b)


def test_diagonal_to_classical_rejects_off_diagonal(rng):
    h = random_hermitian(rng, 4)
    game = AbstractGame(SpaceShape((2, 2)), (h, h))
    with pytest.raises(NotDiagonalError):
        diagonal_to_classical(game)


def test_reduced_payoff_matches_partial_trace_definition(rng):
    shape = SpaceShape((2, 3, 2))
    game = AbstractGame(shape, tuple(random_hermitian(rng, shape.total) for _ in range(3)))
    rho = random_density_profile(rng, shape.dims)
    for i in range(3):
        weights = [f.matrix if j != i else np.eye(shape.dims[i]) for j, f in enumerate(rho.factors)]
        expected = partial_trace_keep(kron_all(weights) @ game.operators[i], shape, i)
        assert_allclose(reduced_payoff(game, rho, i), expected, atol=1e-12)


def test_reduced_and_trace_payoffs_agree(rng):
    shape = SpaceShape((2, 3))
    game = AbstractGame(shape, tuple(random_hermitian(rng, 6) for _ in range(2)))
    rho = random_density_profile(rng, shape.dims)
    for i in range(2):
        h_r = reduced_payoff(game, rho, i)
        assert payoff_reduced(rho.factors[i], h_r) == pytest.approx(payoff_trace(game, rho, i), abs=1e-12)


def test_payoff_is_linear_in_one_players_state(rng):
    shape = SpaceShape((2, 2))
    game = AbstractGame(shape, tuple(random_hermitian(rng, 4) for _ in range(2)))
    rho = random_density_profile(rng, shape.dims)
    a, b = random_density(rng, 2), random_density(rng, 2)
    mix = DensityMatrix(0.3 * a.matrix + 0.7 * b.matrix)
    expected = 0.3 * payoff_trace(game, rho.replace(0, a), 1) + 0.7 * payoff_trace(game, rho.replace(0, b), 1)
    assert payoff_trace(game, rho.replace(0, mix), 1) == pytest.approx(expected, abs=1e-12)


def test_non_hermitian_operator_is_rejected():
    h = np.zeros((4, 4))
    h[0, 1] = 1.0
    with pytest.raises(NonHermitianError):
        AbstractGame(SpaceShape((2, 2)), (h, np.zeros((4, 4))))


def test_profile_dims_must_match_game():
    game = build_H_from_G(matching_pennies())
    with pytest.raises(DimensionMismatchError):
        payoff_trace(game, DensityProfile.uniform((2, 3)), 0)
    with pytest.raises(DimensionMismatchError):
        payoff_trace(game, DensityProfile.uniform((2, 2)), 2)


def test_classical_game_validates_tensors():
    with pytest.raises(DimensionMismatchError):
        ClassicalGame((np.zeros((2, 2)), np.zeros((2, 3))))
    with pytest.raises(DimensionMismatchError):
        ClassicalGame((np.zeros((2, 2)),))


def test_mixed_profile_rejects_non_distributions():
    with pytest.raises(InvalidStateError):
        MixedProfile((np.array([0.6, 0.6]),))
    with pytest.raises(InvalidStateError):
        MixedProfile((np.array([1.1, -0.1]),))


def test_density_and_mixed_conversions_round_trip(rng):
    p = random_mixed_profile(rng, (3, 2))
    back = density_to_mixed(mixed_to_density(p))
    for a, b in zip(back.vectors, p.vectors):
        assert_allclose(a, b, atol=1e-15)


def test_wavefunction_to_mixed():
    phi = np.array([1, 1j]) / np.sqrt(2)
    mixed = wavefunction_to_mixed(phi)
    assert isinstance(mixed, MixedProfile)
    assert mixed.dims == (2,)
    assert_allclose(mixed.vectors[0], [0.5, 0.5], atol=1e-15)
    assert_allclose(np.diag(pure_density(phi).matrix).real, [0.5, 0.5], atol=1e-15)
    with pytest.raises(InvalidStateError):
        wavefunction_to_mixed([1.0, 1.0])


def test_wavefunction_payoff_matches_pure_density(rng):
    phi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    phi /= np.linalg.norm(phi)
    g = ClassicalGame((rng.uniform(-3, 3, size=4),))
    via_mixed = payoff_classical(g, wavefunction_to_mixed(phi), 0)
    via_density = payoff_trace(build_H_from_G(g), DensityProfile((pure_density(phi),)), 0)
    assert via_mixed == pytest.approx(via_density, abs=1e-12)


def test_off_diagonal_coherences_do_not_change_diagonal_payoffs(rng):
    game = build_H_from_G(random_classical_game(rng, (3, 2)))
    rho = random_density_profile(rng, (3, 2))
    dephased = DensityProfile(tuple(DensityMatrix.from_probabilities(p) for p in rho.probabilities()))
    for i in range(2):
        assert payoff_trace(game, rho, i) == pytest.approx(payoff_trace(game, dephased, i), abs=1e-12)
