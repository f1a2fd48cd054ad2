import numpy as np
import pytest
from numpy.testing import assert_allclose

from petzcheck.algebra_core import (
    ReferenceState,
    StateElement,
    TracialAlgebra,
    random_element,
    random_reference_state,
    random_state,
    random_unitary,
    trace,
)
from petzcheck.channels import (
    Channel,
    compose,
    identity_channel,
    pinching_channel,
    random_channel,
    trace_channel,
    unitary_channel,
)
from petzcheck.entropy import am_norm, sandwiched_entropy
from petzcheck.exceptions import (
    AlgebraMismatchError,
    InequalityViolationError,
    NotAContractionError,
    NumericalBreakdownError,
    StrictnessError,
)
from petzcheck.recovery import (
    RecoverySetup,
    am_adjoint_residual,
    chain_report,
    contraction_defect_slack,
    kl_recovery_gap,
    petz_map,
    petz_sufficiency_check,
    whitened_channel,
    whitened_coords,
)

SEEDS = range(10)
WORKED_F = (np.sqrt(1.5) + np.sqrt(0.5)) / 2


def unitary_setup(algebra, seed):
    rng = np.random.default_rng(seed)
    phi = unitary_channel(algebra, random_unitary(algebra, rng))
    return RecoverySetup(phi, random_reference_state(algebra, rng, floor=1e-2))


# ----------------------------
# petz_map
# ----------------------------
@pytest.mark.parametrize("seed", SEEDS)
def test_unitary_channel_is_recovered_exactly(two_block, seed):
    setup = unitary_setup(two_block, seed)
    A = random_state(two_block, seed + 50)
    assert_allclose(setup.recover(A).dense(), A.dense(), atol=1e-9)


def test_pinching_recovery_with_unit_reference(m2, unit_reference, worked_state):
    setup = RecoverySetup(pinching_channel(m2), unit_reference)
    assert_allclose(setup.recover(worked_state).blocks[0], np.eye(2), atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_trace_channel_recovers_reference(m2, seed):
    B = random_reference_state(m2, seed, floor=1e-2)
    R = petz_map(trace_channel(m2), B)
    Y = random_element(m2, seed + 1)
    assert_allclose(R(Y).dense(), (trace(m2, Y) * B).dense(), atol=1e-10)


@pytest.mark.parametrize("algebra", [
    TracialAlgebra.full_matrix(3),
    TracialAlgebra((1, 1, 2), (0.2, 0.3, 0.25)),
])
@pytest.mark.parametrize("seed", SEEDS)
def test_petz_map_is_a_channel_fixing_reference(algebra, seed):
    rng = np.random.default_rng(seed)
    if algebra.is_single_block:
        phi = random_channel(algebra, algebra, 2, rng)
    else:
        phi = compose(unitary_channel(algebra, random_unitary(algebra, rng)), pinching_channel(algebra))
    setup = RecoverySetup(phi, random_reference_state(algebra, rng, floor=1e-3))

    assert setup.petz.source == phi.target and setup.petz.target == phi.source
    assert setup.petz.residuals.choi_min_eigenvalue >= -1e-10
    assert setup.petz.residuals.trace_preservation <= 1e-10
    assert setup.fixed_point_residual <= 1e-9
    assert setup.strictness_margin > 0
    assert am_adjoint_residual(setup) <= 1e-9


def test_adjoint_residual_examples(m2, unit_reference):
    assert am_adjoint_residual(RecoverySetup(identity_channel(m2), unit_reference)) <= 1e-12
    assert am_adjoint_residual(RecoverySetup(pinching_channel(m2), unit_reference)) <= 1e-12


def test_non_strict_channel_is_rejected(m2, unit_reference):
    kraus = np.zeros((2, 2, 2))
    kraus[0, 0, 0] = kraus[1, 0, 1] = 1.0
    collapse = Channel(m2, m2, kraus, name="collapse")
    with pytest.raises(StrictnessError):
        petz_map(collapse, unit_reference)
    with pytest.raises(StrictnessError):
        RecoverySetup(collapse, unit_reference)


def test_recover_rejects_foreign_state(m2, m3, unit_reference):
    setup = RecoverySetup(pinching_channel(m2), unit_reference)
    with pytest.raises(AlgebraMismatchError):
        setup.recover(random_state(m3, 0))


# ----------------------------
# Contraction defect
# ----------------------------
def test_contraction_defect_examples():
    x = np.array([1.0, 0.0, 0.0])
    assert contraction_defect_slack(np.eye(3), x) == pytest.approx(0.0, abs=1e-15)
    P = np.diag([1.0, 1.0, 0.0])
    assert contraction_defect_slack(P, np.array([0.6, 0.0, 0.8])) == pytest.approx(0.0, abs=1e-15)
    assert contraction_defect_slack(0.5 * np.eye(3), x) == pytest.approx(3 / 16)
    with pytest.raises(NotAContractionError):
        contraction_defect_slack(2.0 * np.eye(3), x)


@pytest.mark.parametrize("seed", SEEDS)
def test_whitened_channel_reproduces_recovery_bound(m3, seed):
    rng = np.random.default_rng(seed)
    setup = RecoverySetup(random_channel(m3, m3, 3, rng), random_reference_state(m3, rng, floor=1e-2))
    A = random_state(m3, rng)
    T = whitened_channel(setup)
    assert T.operator_norm() <= 1.0 + 1e-10

    slack = contraction_defect_slack(T, whitened_coords(setup, A))
    report = chain_report(A, setup)
    assert slack >= -1e-9
    assert slack == pytest.approx(report.entropy_gap - report.am_residual_sq, abs=1e-9)


# ----------------------------
# Chain
# ----------------------------
def test_worked_pinching_chain(m2, unit_reference, worked_state):
    report = chain_report(worked_state, RecoverySetup(pinching_channel(m2), unit_reference), check=True)
    assert report.s2_src == pytest.approx(1.25, abs=1e-12)
    assert report.s2_tgt == pytest.approx(1.0, abs=1e-12)
    assert report.entropy_gap == pytest.approx(0.25, abs=1e-12)
    assert report.am_residual_sq == pytest.approx(0.25, abs=1e-12)
    assert report.l1_residual_sq == pytest.approx(0.25, abs=1e-12)
    assert report.fidelity == pytest.approx(WORKED_F, abs=1e-12)
    assert report.fidelity_term == pytest.approx(4 * (1 - WORKED_F) ** 2, abs=1e-12)
    assert report.fidelity_term == pytest.approx(0.004644, abs=1e-6)
    assert report.scaled_trace_bound == pytest.approx(0.25, abs=1e-12)


def test_worked_trace_chain(m2, unit_reference, diag_state):
    report = chain_report(diag_state, RecoverySetup(trace_channel(m2), unit_reference), check=True)
    assert report.entropy_gap == pytest.approx(0.25, abs=1e-12)
    assert report.l1_residual_sq == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_unitary_chain_is_trivial(m3, seed):
    setup = unitary_setup(m3, seed)
    report = chain_report(random_state(m3, seed + 7), setup, check=True)
    for value in (report.entropy_gap, report.am_residual_sq, report.l1_residual_sq, report.fidelity_term):
        assert value == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("algebra", [
    TracialAlgebra.full_matrix(2),
    TracialAlgebra((2, 2), (0.125, 0.375)),
])
@pytest.mark.parametrize("seed", SEEDS)
def test_chain_margins_hold(algebra, seed):
    rng = np.random.default_rng(seed)
    phi = compose(unitary_channel(algebra, random_unitary(algebra, rng)), pinching_channel(algebra))
    setup = RecoverySetup(phi, random_reference_state(algebra, rng, floor=1e-3))
    A = random_state(algebra, rng, rank=1 if seed % 2 else None)
    report = chain_report(A, setup)
    assert min(report.margins().values()) >= -1e-9
    assert report.entropy_gap == pytest.approx(
        sandwiched_entropy(A, setup.source_context, 2) - sandwiched_entropy(phi(A), setup.target_context, 2)
    )
    residual = A - setup.recover(A)
    assert report.am_residual_sq == pytest.approx(am_norm(residual, setup.source_context, 2) ** 2)


def test_chain_report_json(m2, unit_reference, worked_state):
    data = chain_report(worked_state, RecoverySetup(pinching_channel(m2), unit_reference)).to_json()
    assert data["am_recovery"] == pytest.approx(0.0, abs=1e-12)
    assert {"entropy_gap", "fidelity_term", "scaled_trace_bound", "fidelity_recovery"} <= set(data)


# ----------------------------
# Logarithmic gap and sufficiency
# ----------------------------
def test_kl_recovery_gap_examples(m2, unit_reference, worked_state):
    setup = RecoverySetup(pinching_channel(m2), unit_reference)
    assert kl_recovery_gap(worked_state, setup) == pytest.approx(0.061476, abs=1e-6)


@pytest.mark.parametrize("seed", SEEDS)
def test_kl_recovery_gap_vanishes_for_unitaries(m2, seed):
    setup = unitary_setup(m2, seed)
    assert kl_recovery_gap(random_state(m2, seed + 3), setup) == pytest.approx(0.0, abs=1e-9)


def test_sufficiency(m2, unit_reference, worked_state, diag_state):
    pinching = RecoverySetup(pinching_channel(m2), unit_reference)

    invariant = petz_sufficiency_check(diag_state, pinching)
    assert invariant.applicable and invariant.passed
    assert invariant.kl_gap == pytest.approx(0.0, abs=1e-12)
    assert invariant.s2_gap == pytest.approx(0.0, abs=1e-12)

    moved = petz_sufficiency_check(worked_state, pinching)
    assert not moved.applicable and moved.passed
    assert moved.recovery_residual == pytest.approx(0.5, abs=1e-12)

    unitary = petz_sufficiency_check(random_state(m2, 1), unitary_setup(m2, 1))
    assert unitary.applicable and unitary.passed


# ----------------------------
# Spectrum floor
# ----------------------------
@pytest.mark.parametrize("seed", SEEDS)
def test_scaled_trace_bound_at_the_spectrum_floor(m3, near_floor_reference, seed):
    B = near_floor_reference(m3, seed)
    setup = RecoverySetup(unitary_channel(m3, random_unitary(m3, seed + 1)), B)
    report = chain_report(random_state(m3, seed + 2), setup)
    assert report.s2_src > 1.0
    assert report.margins()["scaled_trace_bound"] >= -1e-9
    assert report.l1_residual_sq <= 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_equal_entropies_force_recovery(m3, seed):
    rng = np.random.default_rng(seed)
    middle = rng.uniform(0.1, 2.0)
    B = ReferenceState(m3, (np.diag([1e-6, middle, 3.0 - 1e-6 - middle]),), floor=1e-6)
    A = StateElement.from_element(pinching_channel(m3)(random_state(m3, rng)))
    cases = [
        (RecoverySetup(pinching_channel(m3), B), A),
        (RecoverySetup(unitary_channel(m3, random_unitary(m3, rng)), B), random_state(m3, rng, rank=1)),
    ]
    for setup, state in cases:
        report = chain_report(state, setup)
        assert abs(report.entropy_gap) <= 1e-9 * max(1.0, report.s2_src)
        assert report.am_residual_sq <= 1e-8


@pytest.mark.parametrize("seed", SEEDS)
def test_petz_choi_spectrum_is_recorded(m3, near_floor_reference, seed):
    rng = np.random.default_rng(seed)
    setup = RecoverySetup(random_channel(m3, m3, 3, rng), near_floor_reference(m3, seed))
    assert -1e-10 <= setup.petz_choi_min_eigenvalue <= 1e-10
    assert setup.fixed_point_residual <= 1e-9


def test_negative_petz_choi_spectrum_aborts(m2, unit_reference, monkeypatch):
    monkeypatch.setattr("petzcheck.recovery.choi_min_eigenvalue", lambda choi: -5e-9)
    with pytest.raises(NumericalBreakdownError):
        RecoverySetup(pinching_channel(m2), unit_reference)


def test_chain_report_raises_by_default(m2, unit_reference, worked_state):
    setup = RecoverySetup(identity_channel(m2), unit_reference)
    # a recovery map that forgets the off-diagonal part of A
    object.__setattr__(setup, "petz", pinching_channel(m2))
    with pytest.raises(InequalityViolationError):
        chain_report(worked_state, setup)
    report = chain_report(worked_state, setup, check=False)
    assert report.margins()["am_recovery"] == pytest.approx(-0.25, abs=1e-12)
