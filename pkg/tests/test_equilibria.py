import numpy as np
import pytest
from numpy.testing import assert_allclose

from densegame.equilibria import (
    JointState,
    brute_force_ne,
    common_max_eigenvector,
    delta_E,
    iterate_nash_map,
    nash_map,
    qne_commuting,
    solve_classical,
    verify_gne,
    verify_ne,
)
from densegame.errors import EntangledBasisError, NotDiagonalError, SizeLimitError
from densegame.game_model import (
    AbstractGame,
    ClassicalGame,
    DensityProfile,
    build_H_from_G,
    coordination_game,
    matching_pennies,
    mixed_to_density,
    payoff_trace,
    prisoners_dilemma,
    zero_game,
)
from densegame.generators import (
    conjugate_game,
    local_unitary,
    random_classical_game,
    random_density,
    random_density_profile,
    random_hermitian,
    random_mixed_profile,
)
from densegame.tensor_core import DensityMatrix, SpaceShape, kron

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)

PUBLIC_GOODS = ClassicalGame((
    np.array([[[0, 2], [2, 4]], [[-1, 1], [1, 3]]], dtype=float),
    np.array([[[0, 2], [-1, 1]], [[2, 4], [1, 3]]], dtype=float),
    np.array([[[0, -1], [2, 1]], [[2, 1], [4, 3]]], dtype=float),
))


def pure(dims, choice) -> DensityProfile:
    return DensityProfile(tuple(DensityMatrix.from_probabilities(np.eye(d)[c]) for d, c in zip(dims, choice)))


def profile_distance(a: DensityProfile, b: DensityProfile) -> float:
    return sum(np.abs(x.matrix - y.matrix).sum() for x, y in zip(a.factors, b.factors))


# delta_E / nash_map

@pytest.mark.parametrize(
    "e, expected",
    [(3.0, [0.0, 0.0]), (2.0, [1.0, 0.0])],
)
def test_delta_e(e, expected):
    assert_allclose(np.diag(delta_E(np.diag([3.0, 1.0]), e)).real, expected)


def test_delta_e_zero_and_non_diagonal():
    assert_allclose(delta_E(np.zeros((2, 2)), 0.0), np.zeros((2, 2)))
    with pytest.raises(NotDiagonalError):
        delta_E(SIGMA_X, 0.0)


def test_nash_map_moves_toward_better_strategy():
    # player 0's reduced payoff is diag(3, 1) whatever player 1 does
    g = ClassicalGame((np.array([[3.0, 3.0], [1.0, 1.0]]), np.zeros((2, 2))))
    mapped = nash_map(build_H_from_G(g), DensityProfile.uniform((2, 2)))
    assert_allclose(mapped.factors[0].probabilities(), [0.75, 0.25], atol=1e-15)
    assert_allclose(mapped.factors[1].probabilities(), [0.5, 0.5], atol=1e-15)


def test_nash_map_fixes_equilibria():
    mp = build_H_from_G(matching_pennies())
    uniform = DensityProfile.uniform((2, 2))
    assert profile_distance(nash_map(mp, uniform), uniform) == 0.0
    pd = build_H_from_G(prisoners_dilemma())
    defect = pure((2, 2), (1, 1))
    assert profile_distance(nash_map(pd, defect), defect) == 0.0


def test_nash_map_keeps_profiles_valid(rng):
    g = random_classical_game(rng, (3, 2, 2))
    game = build_H_from_G(g)
    rho = mixed_to_density(random_mixed_profile(rng, (3, 2, 2)))
    for _ in range(20):
        rho = nash_map(game, rho)
        for p in rho.probabilities():
            assert np.all(p >= 0.0)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_nash_map_rejects_quantum_games(rng):
    h = random_hermitian(rng, 4)
    with pytest.raises(NotDiagonalError):
        nash_map(AbstractGame(SpaceShape((2, 2)), (h, h)), DensityProfile.uniform((2, 2)))


# iterate_nash_map

def test_iterate_from_strict_equilibrium_stops_immediately():
    report = iterate_nash_map(build_H_from_G(prisoners_dilemma()), pure((2, 2), (1, 1)))
    assert report.converged
    assert report.iterations == 1
    assert report.residual == 0.0
    assert report.delta_E_norm == 0.0


def test_iterate_matching_pennies_from_uniform():
    report = iterate_nash_map(build_H_from_G(matching_pennies()), DensityProfile.uniform((2, 2)))
    assert report.converged
    assert report.iterations == 1
    assert report.certificate.valid


def test_iterate_dominant_strategy_game_reaches_verified_equilibrium():
    game = build_H_from_G(prisoners_dilemma())
    report = iterate_nash_map(game, DensityProfile.uniform((2, 2)))
    assert report.converged
    assert report.residual <= 1e-10
    assert verify_ne(game, report.final_profile, 1e-6).valid
    for p in report.final_profile.probabilities():
        assert_allclose(p, [0.0, 1.0], atol=1e-9)


def test_iterate_reports_non_convergence_honestly():
    game = build_H_from_G(prisoners_dilemma())
    report = iterate_nash_map(game, DensityProfile.uniform((2, 2)), max_iter=5, snap_every=0)
    assert not report.converged
    assert report.iterations == 5
    assert not report.certificate.valid


# verify_ne

def test_verify_ne_examples():
    pd = build_H_from_G(prisoners_dilemma())
    assert verify_ne(pd, pure((2, 2), (1, 1)), 0.0).valid
    mp = build_H_from_G(matching_pennies())
    assert verify_ne(mp, DensityProfile.uniform((2, 2)), 1e-12).valid
    cert = verify_ne(mp, pure((2, 2), (0, 0)), 1e-6)
    assert not cert.valid
    assert cert.max_gain == pytest.approx(2.0)
    assert cert.payoffs == (1.0, -1.0)


def test_pure_deviations_bound_random_mixed_deviations(rng):
    g = random_classical_game(rng, (3, 3))
    game = build_H_from_G(g)
    rho = mixed_to_density(random_mixed_profile(rng, (3, 3)))
    cert = verify_ne(game, rho, 0.0)
    for i in range(2):
        best = max(
            payoff_trace(game, rho.replace(i, DensityMatrix.from_probabilities(rng.dirichlet(np.ones(3)))), i)
            for _ in range(2000)
        )
        assert best <= cert.payoffs[i] + cert.per_player_gain[i] + 1e-9


def test_verify_ne_uses_top_eigenvalue_for_quantum_games(rng):
    shape = SpaceShape((2, 2))
    game = AbstractGame(shape, tuple(random_hermitian(rng, 4) for _ in range(2)))
    rho = random_density_profile(rng, (2, 2))
    cert = verify_ne(game, rho, 0.0)
    for i in range(2):
        best = max(payoff_trace(game, rho.replace(i, random_density(rng, 2, rank=1)), i) for _ in range(500))
        assert best <= cert.payoffs[i] + cert.per_player_gain[i] + 1e-9


# brute_force_ne

def test_oracle_matching_pennies():
    certs = brute_force_ne(matching_pennies())
    assert len(certs) == 1
    for p in certs[0].profile.probabilities():
        assert_allclose(p, [0.5, 0.5], atol=1e-10)


def test_oracle_coordination_game_has_three_equilibria():
    certs = brute_force_ne(coordination_game())
    assert len(certs) == 3
    first, mixed, last = (c.profile.probabilities() for c in certs)
    assert_allclose(first, [[1, 0], [1, 0]], atol=1e-12)
    assert_allclose(mixed, [[0.5, 0.5], [0.5, 0.5]], atol=1e-10)
    assert_allclose(last, [[0, 1], [0, 1]], atol=1e-12)


def test_oracle_dominant_strategy_game():
    certs = brute_force_ne(prisoners_dilemma())
    assert len(certs) == 1
    assert_allclose(certs[0].profile.probabilities(), [[0, 1], [0, 1]])
    assert_allclose(certs[0].payoffs, (1.0, 1.0))


def test_oracle_equilibria_are_fixed_points(rng):
    for _ in range(20):
        g = random_classical_game(rng, (2, 3))
        game = build_H_from_G(g)
        for cert in brute_force_ne(g):
            assert cert.valid
            assert profile_distance(nash_map(game, cert.profile), cert.profile) <= 1e-7


def test_oracle_three_player_grid():
    certs = brute_force_ne(PUBLIC_GOODS, resolution=10)
    assert len(certs) == 1
    assert_allclose(certs[0].profile.probabilities(), [[1, 0], [1, 0], [1, 0]])
    assert certs[0].epsilon == 0.0


def test_oracle_size_limits():
    with pytest.raises(SizeLimitError):
        brute_force_ne(zero_game((2, 2, 2, 2)))
    with pytest.raises(SizeLimitError):
        brute_force_ne(zero_game((5, 2)))
    with pytest.raises(SizeLimitError):
        brute_force_ne(PUBLIC_GOODS, resolution=51)


def test_solve_classical_matching_pennies():
    cert = solve_classical(matching_pennies(), max_iter=200)
    assert cert.valid
    assert_allclose(cert.profile.probabilities(), [[0.5, 0.5], [0.5, 0.5]], atol=1e-10)


# general and quantum equilibria

def test_verify_gne_agrees_with_verify_ne_on_products(rng):
    shape = SpaceShape((2, 3))
    game = AbstractGame(shape, tuple(random_hermitian(rng, 6) for _ in range(2)))
    rho = random_density_profile(rng, (2, 3))
    a = verify_ne(game, rho, 1e-3)
    b = verify_gne(game, JointState.from_profile(rho), 1e-3)
    assert_allclose(a.per_player_gain, b.per_player_gain, atol=1e-12)
    assert_allclose(a.payoffs, b.payoffs, atol=1e-12)


def test_verify_gne_zero_game_maximally_mixed():
    game = build_H_from_G(zero_game((2, 2)))
    joint = JointState(DensityMatrix.maximally_mixed(4), SpaceShape((2, 2)))
    assert verify_gne(game, joint, 0.0).valid


def test_verify_gne_random_deviations_never_beat_best(rng):
    shape = SpaceShape((2, 2))
    game = AbstractGame(shape, tuple(random_hermitian(rng, 4) for _ in range(2)))
    joint = JointState(random_density(rng, 4), shape)
    exact = verify_gne(game, joint, 0.0)
    sampled = verify_gne(game, joint, 0.0, random_deviations=200, rng=rng)
    assert_allclose(sampled.per_player_gain, exact.per_player_gain, atol=1e-12)


def test_common_max_eigenvector_of_equal_operators(rng):
    h = random_hermitian(rng, 4)
    game = AbstractGame(SpaceShape((2, 2)), (h, h))
    joint = common_max_eigenvector(game)
    assert joint is not None
    w, v = np.linalg.eigh(h)
    top = v[:, -1]
    assert_allclose(joint.rho_S, np.outer(top, top.conj()), atol=1e-9)


def test_common_max_eigenvector_certifies_general_equilibrium():
    h = np.diag([1.0, 0.0, 0.0, 0.0])
    game = AbstractGame(SpaceShape((2, 2)), (h, h))
    joint = common_max_eigenvector(game)
    assert_allclose(joint.rho_S, h, atol=1e-12)
    assert verify_gne(game, joint, 1e-12).valid


def test_common_max_eigenvector_absent():
    game = AbstractGame(SpaceShape((2, 1)), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    assert common_max_eigenvector(game) is None


def test_qne_commuting_on_classical_game_matches_classical_search():
    game = build_H_from_G(prisoners_dilemma())
    cert = qne_commuting(game)
    assert cert.valid
    assert_allclose(cert.payoffs, (1.0, 1.0), atol=1e-12)


def test_qne_commuting_recovers_equilibrium_after_local_rotation(rng):
    g = random_classical_game(rng, (2, 2))
    payoff_sets = [c.payoffs for c in brute_force_ne(g)]
    rotated = conjugate_game(build_H_from_G(g), local_unitary(rng, (2, 2)))
    cert = qne_commuting(rotated)
    assert cert is not None
    assert verify_ne(rotated, cert.profile, 1e-6).valid
    assert any(np.allclose(cert.payoffs, p, atol=1e-6) for p in payoff_sets)


@pytest.mark.parametrize("make_game", [matching_pennies, coordination_game])
def test_qne_commuting_handles_degenerate_spectra_after_local_rotation(rng, make_game):
    g = make_game()
    payoff_sets = [c.payoffs for c in brute_force_ne(g)]
    for _ in range(10):
        rotated = conjugate_game(build_H_from_G(g), local_unitary(rng, (2, 2)))
        cert = qne_commuting(rotated)
        assert cert is not None
        assert verify_ne(rotated, cert.profile, 1e-8).valid
        assert any(np.allclose(cert.payoffs, p, atol=1e-8) for p in payoff_sets)


def test_qne_commuting_rejects_entangled_common_eigenbasis():
    game = AbstractGame(SpaceShape((2, 2)), (kron(SIGMA_X, SIGMA_X), kron(SIGMA_Z, SIGMA_Z)))
    with pytest.raises(EntangledBasisError):
        qne_commuting(game)


def test_qne_commuting_declines_non_commuting_games():
    game = AbstractGame(SpaceShape((2, 2)), (kron(SIGMA_X, np.eye(2)), kron(SIGMA_Z, np.eye(2))))
    assert qne_commuting(game) is None
