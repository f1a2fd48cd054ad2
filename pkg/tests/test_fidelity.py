import numpy as np
import pytest

from petzcheck.algebra_core import StateElement, TracialAlgebra, random_state, random_unitary
from petzcheck.channels import pinching_channel, random_channel, trace_channel, unitary_channel
from petzcheck.exceptions import AlgebraMismatchError
from petzcheck.fidelity import (
    FidelityPair,
    bures_angle,
    bures_triangle_slack,
    concavity_grid,
    fidelity,
    fidelity_bound_slack,
    fidelity_unitary_oracle,
    joint_concavity_slack,
    monotonicity_slack,
    polar_unitary,
    powers_stormer_slack,
    transition_concavity_slack,
)

SEEDS = range(15)
COMMUTING_F = np.sqrt(3) / 2


@pytest.fixture
def orthogonal_pair():
    algebra = TracialAlgebra((1, 1), (0.5, 0.5))
    A = StateElement(algebra, (np.array([[2.0]]), np.array([[0.0]])))
    B = StateElement(algebra, (np.array([[0.0]]), np.array([[2.0]])))
    return FidelityPair(A, B)


@pytest.fixture
def commuting_pair(m2, diag_state):
    return FidelityPair(diag_state, StateElement(m2, (np.diag([0.5, 1.5]),)))


def random_pair(algebra, rng, rank=None):
    return FidelityPair(random_state(algebra, rng, rank=rank), random_state(algebra, rng))


# ----------------------------
# fidelity
# ----------------------------
def test_fidelity_examples(m2, worked_state, orthogonal_pair, commuting_pair):
    assert fidelity(FidelityPair(worked_state, worked_state)) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(orthogonal_pair) == pytest.approx(0.0, abs=1e-14)
    assert fidelity(commuting_pair) == pytest.approx(COMMUTING_F, abs=1e-12)


def test_pair_rejects_mixed_algebras(m2, m3):
    with pytest.raises(AlgebraMismatchError):
        FidelityPair(random_state(m2, 0), random_state(m3, 0))


@pytest.mark.parametrize("seed", SEEDS)
def test_fidelity_is_symmetric_and_bounded(mixed_blocks, seed):
    pair = random_pair(mixed_blocks, np.random.default_rng(seed), rank=1)
    F = fidelity(pair)
    assert F == pytest.approx(fidelity(pair.swapped()), abs=1e-12)
    assert -1e-12 <= F <= 1.0 + 1e-12


# ----------------------------
# Unitary oracle
# ----------------------------
def test_oracle_on_unit_states(m2):
    one = StateElement.from_element(m2.identity())
    result = fidelity_unitary_oracle(FidelityPair(one, one), 20, 0)
    assert result.best_sampled <= 1.0 + 1e-12
    assert result.polar_value == pytest.approx(1.0, abs=1e-12)


def test_oracle_commuting(commuting_pair):
    result = fidelity_unitary_oracle(commuting_pair, 50, 1)
    assert result.polar_value == pytest.approx(COMMUTING_F, abs=1e-12)
    assert result.attainment_residual <= 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_oracle_never_exceeds_closed_form(two_block, seed):
    rng = np.random.default_rng(seed)
    pair = random_pair(two_block, rng, rank=1 if seed % 3 == 0 else None)
    result = fidelity_unitary_oracle(pair, 50, rng)
    assert result.best_sampled <= fidelity(pair) + 1e-12
    assert result.attainment_residual <= 1e-10


def test_polar_unitary_is_unitary(m3):
    pair = random_pair(m3, np.random.default_rng(4))
    U = polar_unitary(pair)
    np.testing.assert_allclose((U.H @ U).dense(), np.eye(3), atol=1e-12)


def test_oracle_rejects_empty_sample(commuting_pair):
    with pytest.raises(ValueError):
        fidelity_unitary_oracle(commuting_pair, 0, 0)


# ----------------------------
# Bures angle
# ----------------------------
def test_bures_examples(worked_state, orthogonal_pair, commuting_pair):
    assert bures_angle(FidelityPair(worked_state, worked_state)) == pytest.approx(0.0, abs=1e-7)
    assert bures_angle(orthogonal_pair) == pytest.approx(np.pi / 2)
    assert bures_angle(commuting_pair) == pytest.approx(np.pi / 6)


@pytest.mark.parametrize("seed", SEEDS)
def test_bures_triangle(m3, seed):
    rng = np.random.default_rng(seed)
    A, B, C = (random_state(m3, rng) for _ in range(3))
    assert bures_triangle_slack(A, B, C) >= -1e-9


# ----------------------------
# Trace-distance bounds
# ----------------------------
def test_trace_distance_bounds_examples(worked_state, commuting_pair):
    same = FidelityPair(worked_state, worked_state)
    assert powers_stormer_slack(same) == pytest.approx(0.0, abs=1e-12)
    assert powers_stormer_slack(commuting_pair) == pytest.approx(0.732051, abs=1e-6)
    assert fidelity_bound_slack(commuting_pair) == pytest.approx(0.732051, abs=1e-6)


@pytest.mark.parametrize("seed", SEEDS)
def test_trace_distance_bounds_random(mixed_blocks, seed):
    pair = random_pair(mixed_blocks, np.random.default_rng(seed), rank=1)
    assert powers_stormer_slack(pair) >= -1e-10
    assert fidelity_bound_slack(pair) >= -1e-10


# ----------------------------
# Monotonicity and concavity
# ----------------------------
def test_monotonicity_examples(m2, commuting_pair):
    U = random_unitary(m2, 3)
    assert monotonicity_slack(commuting_pair, unitary_channel(m2, U)) == pytest.approx(0.0, abs=1e-10)
    assert monotonicity_slack(commuting_pair, trace_channel(m2)) == pytest.approx(1.0 - COMMUTING_F, abs=1e-12)
    assert monotonicity_slack(commuting_pair, pinching_channel(m2)) >= -1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_monotonicity_random(m3, seed):
    rng = np.random.default_rng(seed)
    phi = random_channel(m3, TracialAlgebra.full_matrix(2), 2, rng)
    assert monotonicity_slack(random_pair(m3, rng), phi) >= -1e-9


@pytest.mark.parametrize("seed", SEEDS)
def test_rank_deficient_fidelity_is_unitarily_invariant(seed):
    m4 = TracialAlgebra.full_matrix(4)
    rng = np.random.default_rng(seed)
    pair = FidelityPair(random_state(m4, rng, rank=1), random_state(m4, rng, rank=2))
    phi = unitary_channel(m4, random_unitary(m4, rng))
    assert abs(monotonicity_slack(pair, phi)) <= 1e-12
    assert abs(monotonicity_slack(pair.swapped(), phi)) <= 1e-12
    assert powers_stormer_slack(pair) >= -1e-10


def test_monotonicity_rejects_foreign_channel(m3, commuting_pair):
    with pytest.raises(AlgebraMismatchError):
        monotonicity_slack(commuting_pair, trace_channel(m3))


def test_joint_concavity_edges(m2):
    rng = np.random.default_rng(0)
    first, second = random_pair(m2, rng), random_pair(m2, rng)
    assert joint_concavity_slack(first, second, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert joint_concavity_slack(first, second, 1.0) == pytest.approx(0.0, abs=1e-12)

    A1, A2 = random_state(m2, 1), random_state(m2, 2)
    diagonal = joint_concavity_slack(FidelityPair(A1, A1), FidelityPair(A2, A2), 0.3)
    assert diagonal == pytest.approx(0.0, abs=1e-10)

    with pytest.raises(ValueError):
        joint_concavity_slack(first, second, 1.5)


@pytest.mark.parametrize("seed", SEEDS)
def test_concavity_random(two_block, seed):
    rng = np.random.default_rng(seed)
    first, second = random_pair(two_block, rng, rank=1), random_pair(two_block, rng)
    lambdas = [0.1 * k for k in range(1, 10)]
    assert concavity_grid(lambdas, first, second) >= -1e-9
    for lam in lambdas:
        assert transition_concavity_slack(first.A, second.A, first.B, lam) >= -1e-9
