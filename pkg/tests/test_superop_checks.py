import numpy as np
import pytest
from numpy.testing import assert_allclose

from petzcheck.algebra_core import (
    AlgebraElement,
    ReferenceState,
    TracialAlgebra,
    random_element,
    random_reference_state,
    random_state,
    random_unitary,
)
from petzcheck.channels import (
    compose,
    identity_channel,
    pinching_channel,
    random_channel,
    reference_image,
    trace_channel,
    unitary_channel,
)
from petzcheck.entropy import EntropyContext
from petzcheck.exceptions import AlgebraMismatchError, NumericalBreakdownError
from petzcheck.superop_checks import (
    ModularSetup,
    LEFT,
    RIGHT,
    adjoint_norm_identity_residual,
    am_contraction_margin,
    amgm_psd_margin,
    build_mult,
    commutator_residual,
    concavity_step_margin,
    contraction_margin,
    modular_psd_margin,
    modular_setup,
    modular_spectrum_residual,
    psd_margin,
    sandwich_psd_margin,
    trace_vs_am_margin,
)

SEEDS = range(10)


def random_strict_channel(algebra, rng):
    """ A random channel on single blocks, a twisted pinching otherwise. """
    if algebra.is_single_block:
        return random_channel(algebra, algebra, 3, rng)
    twisted = unitary_channel(algebra, random_unitary(algebra, rng))
    return compose(twisted, pinching_channel(algebra))


# ----------------------------
# Multiplication operators
# ----------------------------
def test_multiplication_operator_diagonals(m2):
    X = AlgebraElement(m2, (np.diag([2.0, 3.0]),))
    assert_allclose(np.diag(build_mult(m2, X, LEFT).matrix), [2, 2, 3, 3])
    assert_allclose(np.diag(build_mult(m2, X, RIGHT).matrix), [2, 3, 2, 3])
    assert_allclose(build_mult(m2, m2.identity(), LEFT).matrix, np.eye(4))


@pytest.mark.parametrize("seed", SEEDS)
def test_multiplication_operators_act_and_commute(two_block, seed):
    rng = np.random.default_rng(seed)
    X, Y = random_element(two_block, rng), random_element(two_block, rng)
    L, R = build_mult(two_block, X, LEFT), build_mult(two_block, Y, RIGHT)
    assert_allclose(L.matrix @ Y.coords(), (X @ Y).coords(), atol=1e-13)
    assert_allclose(R.matrix @ X.coords(), (X @ Y).coords(), atol=1e-13)
    assert commutator_residual(L, R) <= 1e-13
    assert L.kind == LEFT and L.element is X


def test_build_mult_errors(m2, m3):
    with pytest.raises(AlgebraMismatchError):
        build_mult(m2, m3.identity(), LEFT)
    with pytest.raises(ValueError):
        build_mult(m2, m2.identity(), "up")


def test_psd_margin():
    assert psd_margin(np.diag([1.0, 2.0, 3.0])) == pytest.approx(1.0 / 3.0)
    assert psd_margin(np.diag([0.25, 0.5])) == pytest.approx(0.25)
    assert psd_margin(np.diag([-1e-3, 1e6])) == pytest.approx(-1e-9)
    with pytest.raises(NumericalBreakdownError):
        psd_margin(np.array([[0.0, 1.0], [0.0, 0.0]]))


# ----------------------------
# Contraction inequalities
# ----------------------------
def test_contraction_saturates_for_invertible_channels(m3):
    B = random_reference_state(m3, 1, floor=1e-2)
    assert contraction_margin(identity_channel(m3), B) == pytest.approx(0.0, abs=1e-10)
    phi = unitary_channel(m3, random_unitary(m3, 2))
    assert contraction_margin(phi, B) == pytest.approx(0.0, abs=1e-10)
    assert modular_psd_margin(phi, B) == pytest.approx(0.0, abs=1e-9)
    assert concavity_step_margin(phi, B) == pytest.approx(0.0, abs=1e-9)
    assert sandwich_psd_margin(phi, B) == pytest.approx(0.0, abs=1e-9)


def test_trace_channel_with_unit_reference(m2, unit_reference):
    phi = trace_channel(m2)
    assert contraction_margin(phi, unit_reference) == pytest.approx(0.0, abs=1e-12)
    assert sandwich_psd_margin(phi, unit_reference) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("algebra", [
    TracialAlgebra.full_matrix(3),
    TracialAlgebra((2, 2), (0.125, 0.375)),
    TracialAlgebra((1, 1, 2), (0.2, 0.3, 0.25)),
])
@pytest.mark.parametrize("seed", SEEDS)
def test_contractions_hold_on_random_instances(algebra, seed):
    rng = np.random.default_rng(seed)
    phi = random_strict_channel(algebra, rng)
    B = random_reference_state(algebra, rng, floor=1e-3)
    X = random_element(algebra, rng)

    assert contraction_margin(phi, B) >= -1e-10
    assert modular_psd_margin(phi, B) >= -1e-9
    assert concavity_step_margin(phi, B) >= -1e-9
    assert sandwich_psd_margin(phi, B) >= -1e-9
    assert am_contraction_margin(phi, B, X) >= -1e-9
    assert adjoint_norm_identity_residual(phi, B, X) <= 1e-9


@pytest.mark.parametrize("seed", SEEDS)
def test_shared_modular_setup_gives_identical_margins(m3, seed):
    rng = np.random.default_rng(seed)
    phi = random_channel(m3, m3, 3, rng)
    B = random_reference_state(m3, rng, floor=1e-3)
    X = random_element(m3, rng)
    modular = modular_setup(phi, B)
    assert isinstance(modular, ModularSetup)
    assert contraction_margin(phi, B, modular=modular) == contraction_margin(phi, B)
    assert modular_psd_margin(phi, B, modular=modular) == modular_psd_margin(phi, B)
    assert concavity_step_margin(phi, B, modular=modular) == concavity_step_margin(phi, B)
    assert adjoint_norm_identity_residual(phi, B, X, modular=modular) == adjoint_norm_identity_residual(phi, B, X)


@pytest.mark.parametrize("seed", SEEDS)
def test_contractions_hold_at_the_spectrum_floor(m3, near_floor_reference, seed):
    rng = np.random.default_rng(seed)
    B = near_floor_reference(m3, seed)
    X = random_element(m3, rng)
    for phi in (unitary_channel(m3, random_unitary(m3, rng)), random_channel(m3, m3, 3, rng)):
        modular = modular_setup(phi, B)
        assert contraction_margin(phi, B, modular=modular) >= -1e-9
        assert modular_psd_margin(phi, B, modular=modular) >= -1e-9
        assert concavity_step_margin(phi, B, modular=modular) >= -1e-9
        assert sandwich_psd_margin(phi, B) >= -1e-9
        assert adjoint_norm_identity_residual(phi, B, X, modular=modular) <= 1e-10


# ----------------------------
# Single-algebra inequalities
# ----------------------------
def test_amgm_examples(m2, unit_reference):
    assert amgm_psd_margin(unit_reference) == pytest.approx(0.0, abs=1e-14)
    B = ReferenceState(m2, (np.diag([1.5, 0.5]),))
    # diagonal pairs saturate, the cross pair leaves (3/4)^{-1/2} − 1
    assert amgm_psd_margin(B) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_amgm_random(mixed_blocks, seed):
    B = random_reference_state(mixed_blocks, seed, floor=1e-2)
    assert amgm_psd_margin(B) >= -1e-9


def test_trace_vs_am_examples(m2, unit_reference):
    assert trace_vs_am_margin(m2.zero(), unit_reference) == 0.0
    X = AlgebraElement(m2, (np.array([[0.0, 0.5], [0.5, 0.0]]),))
    assert trace_vs_am_margin(X, unit_reference) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_trace_vs_am_random(two_block, seed):
    rng = np.random.default_rng(seed)
    B = random_reference_state(two_block, rng)
    assert trace_vs_am_margin(random_element(two_block, rng), B) >= -1e-9
    A, C = random_state(two_block, rng), random_state(two_block, rng)
    assert trace_vs_am_margin(A - C, B) >= -1e-9


@pytest.mark.parametrize("seed", SEEDS)
def test_modular_spectrum(mixed_blocks, seed):
    B = random_reference_state(mixed_blocks, seed, floor=1e-2)
    assert modular_spectrum_residual(B) <= 1e-9


@pytest.mark.parametrize("algebra", [TracialAlgebra.full_matrix(3), TracialAlgebra.full_matrix(4)])
@pytest.mark.parametrize("seed", SEEDS)
def test_amgm_at_the_spectrum_floor(algebra, near_floor_reference, seed):
    B = near_floor_reference(algebra, seed)
    assert B.min_eigenvalue_value == pytest.approx(1e-6, rel=1e-6)
    assert amgm_psd_margin(B) >= -1e-9


def test_cached_contexts_give_identical_margins(m3):
    rng = np.random.default_rng(3)
    phi = random_channel(m3, m3, 2, rng)
    B = random_reference_state(m3, rng, floor=1e-2)
    X = random_element(m3, rng)
    contexts = (EntropyContext(B), EntropyContext(reference_image(phi, B)))
    assert am_contraction_margin(phi, B, X, contexts=contexts) == am_contraction_margin(phi, B, X)
    assert trace_vs_am_margin(X, B, contexts[0]) == trace_vs_am_margin(X, B)
    assert_allclose(modular_setup(phi, B, contexts=contexts).V, modular_setup(phi, B).V, atol=0)
