"""
Petz recovery map and the recoverability inequality chain.

For a channel φ that is strict for a reference state B, the recovery map

    R(Y) = B^{1/2} φ*(φ(B)^{-1/2} Y φ(B)^{-1/2}) B^{1/2}

is the adjoint of φ between the Araki-Masuda L² spaces of B and φ(B). It
is materialized as a Channel with Kraus operators read off those of φ, so
the constructor's invariant checks certify that R is completely positive
and trace preserving. R fixes the reference state: R(φ(B)) = B.

For a state A the chain

    4(1 − F(A|R(φ(A))))² ≤ ‖A − R(φ(A))‖₁² ≤ ‖A − R(φ(A))‖²_{B,2} ≤ S₂(A|B) − S₂(φ(A)|φ(B))

is reported by ``chain_report`` as a set of margins.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, NamedTuple, Tuple

import numpy as np
import scipy.linalg as la

import petzcheck.config as Config
from petzcheck.algebra_core import AlgebraElement, ReferenceState, p_norm, positive_power
from petzcheck.channels import (
    Channel,
    Superoperator,
    apply,
    choi_from_kraus,
    choi_min_eigenvalue,
    is_strict,
    kraus_from_choi,
    reference_image,
    sandwich_operator,
)
from petzcheck.entropy import EntropyContext, am_norm, kl_divergence, sandwiched_entropy
from petzcheck.exceptions import (
    AlgebraMismatchError,
    InequalityViolationError,
    NotAContractionError,
    NumericalBreakdownError,
)
from petzcheck.fidelity import FidelityPair, fidelity

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)


# ----------------------------
# Petz map
# ----------------------------
def petz_kraus(phi: Channel, B: ReferenceState, phi_B: ReferenceState) -> np.ndarray:
    """
    Kraus operators P_i B^{1/2} W^{-1/2} K_j* W′^{1/2} φ(B)^{-1/2} of the Petz map.

    K_j are the Kraus operators of φ, W and W′ the weight operators of the
    source and target, and P_i the block projections of the source. The
    powers come from eigendecompositions, so the products stay at the
    conditioning of B^{1/2} and φ(B)^{-1/2} instead of their L² squares.
    """
    sqrt_B = positive_power(B, 0.5).dense()
    inv_sqrt_phi_B = positive_power(phi_B, -0.5).dense()
    w_src = phi.source.weight_diagonal ** -0.5
    w_tgt = phi.target.weight_diagonal ** 0.5
    core = np.stack([
        sqrt_B @ (w_src[:, None] * K.conj().T * w_tgt[None, :]) @ inv_sqrt_phi_B for K in phi.kraus
    ])
    if phi.source.is_single_block:
        return core
    labels = np.repeat(np.arange(phi.source.num_blocks), phi.source.block_dims)
    return np.concatenate([
        np.where((labels == i)[None, :, None], core, 0.0) for i in range(phi.source.num_blocks)
    ])


def _petz_channel(phi: Channel, kraus: np.ndarray) -> Tuple[Channel, float]:
    # Choi positivity is measured on the assembled family, before any Kraus reduction
    n_in, n_out = phi.target.total_dim, phi.source.total_dim
    choi = choi_from_kraus(kraus)
    lowest = choi_min_eigenvalue(choi)
    if lowest < Config.CHOI_FLOOR:
        raise NumericalBreakdownError(f"Petz map of {phi.name}: Choi eigenvalue {lowest:.3e} < {Config.CHOI_FLOOR:.0e}")
    if kraus.shape[0] > n_in * n_out:
        kraus = kraus_from_choi(choi, n_in, n_out)
    return Channel(phi.target, phi.source, kraus, name=f"petz[{phi.name}]"), lowest


def petz_map(phi: Channel, B: ReferenceState, strictness_floor: float = Config.STRICTNESS_FLOOR) -> Channel:
    """
    The Petz recovery map of φ with respect to B, as a channel target → source.

    Args:
        phi (Channel): The channel to recover from.
        B (ReferenceState): Reference state of the source algebra.
        strictness_floor (float): Lower bound required for the spectrum of φ(B).

    Returns:
        Channel: R, from ``phi.target`` to ``phi.source``.

    Raises:
        StrictnessError: φ is not strict for B.
        NumericalBreakdownError: The assembled Choi matrix of R has an eigenvalue below CHOI_FLOOR.
        MalformedChannelError: The assembled map fails a channel invariant.
    """
    if B.algebra != phi.source:
        raise AlgebraMismatchError(f"Reference state lives in {B.algebra}, {phi.name} acts on {phi.source}")
    phi_B = reference_image(phi, B, strictness_floor)
    return _petz_channel(phi, petz_kraus(phi, B, phi_B))[0]


@dataclass(frozen=True, eq=False)
class RecoverySetup:
    """
    A channel, a reference state and the Petz map they determine.

    Attributes:
        phi (Channel): The channel.
        B (ReferenceState): Reference state of the source algebra.
        phi_B (ReferenceState): φ(B), validated against the strictness floor.
        petz (Channel): The Petz recovery map.
        strictness_margin (float): Smallest eigenvalue of φ(B).
        petz_choi_min_eigenvalue (float): Smallest eigenvalue of the Choi matrix of R, relative to its largest.
        fixed_point_residual (float): ‖R(φ(B)) − B‖₂.

    Raises:
        NumericalBreakdownError: ‖R(φ(B)) − B‖₂ exceeds FIXED_POINT_TOL.
    """

    phi: Channel
    B: ReferenceState
    strictness_floor: float = Config.STRICTNESS_FLOOR
    phi_B: ReferenceState = field(init=False)
    petz: Channel = field(init=False)
    strictness_margin: float = field(init=False)
    petz_choi_min_eigenvalue: float = field(init=False)
    fixed_point_residual: float = field(init=False)
    source_context: EntropyContext = field(init=False, repr=False)
    target_context: EntropyContext = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.B.algebra != self.phi.source:
            raise AlgebraMismatchError(f"Reference state lives in {self.B.algebra}, {self.phi.name} acts on {self.phi.source}")
        phi_B = reference_image(self.phi, self.B, self.strictness_floor)
        petz, choi_min = _petz_channel(self.phi, petz_kraus(self.phi, self.B, phi_B))
        residual = p_norm(self.B.algebra, apply(petz, phi_B) - self.B, 2)
        if residual > Config.FIXED_POINT_TOL:
            raise NumericalBreakdownError(f"Petz map does not fix the reference state: ‖R(φ(B)) − B‖₂ = {residual:.3e}")

        object.__setattr__(self, "phi_B", phi_B)
        object.__setattr__(self, "petz", petz)
        object.__setattr__(self, "strictness_margin", is_strict(self.phi, self.B, self.strictness_floor).margin)
        object.__setattr__(self, "petz_choi_min_eigenvalue", choi_min)
        object.__setattr__(self, "fixed_point_residual", residual)
        object.__setattr__(self, "source_context", EntropyContext(self.B))
        object.__setattr__(self, "target_context", EntropyContext(phi_B))
        logger.debug(f"Recovery setup for {self.phi.name}: strictness margin {self.strictness_margin:.3e}")

    def recover(self, A: AlgebraElement) -> AlgebraElement:
        """ R(φ(A)). """
        if A.algebra != self.phi.source:
            raise AlgebraMismatchError(f"State lives in {A.algebra}, {self.phi.name} acts on {self.phi.source}")
        return apply(self.petz, apply(self.phi, A)).hermitian_part()


def am_adjoint_residual(setup: RecoverySetup) -> float:
    """
    max over orthonormal basis pairs of |⟨φ(X), Y⟩_{φ(B)} − ⟨X, R(Y)⟩_B|.

    With G = L_{B^{-1/2}} R_{B^{-1/2}} the Gram operator of ⟨·,·⟩_B, this is the
    largest entry of G_{φ(B)} Φ − R* G_B, relative to max(1, max|G_{φ(B)} Φ|).
    """
    gram_src = sandwich_operator(setup.source_context.inv_sqrt).matrix
    gram_tgt = sandwich_operator(setup.target_context.inv_sqrt).matrix
    Phi = setup.phi.superoperator.matrix
    R = setup.petz.superoperator.matrix
    forward = gram_tgt @ Phi
    return float(np.max(np.abs(forward - R.conj().T @ gram_src))) / max(1.0, float(np.max(np.abs(forward))))


# ----------------------------
# Contractions
# ----------------------------
def whitened_channel(setup: RecoverySetup) -> Superoperator:
    """
    φ between the Araki-Masuda L² spaces, in orthonormal coordinates: G_{φ(B)}^{1/2} Φ G_B^{-1/2}.

    Its conjugate transpose is the Petz map in the same coordinates, and
    x = G_B^{1/2}·vec(A) turns ``contraction_defect_slack`` into the bound
    ‖A − R(φ(A))‖²_{B,2} ≤ ‖A‖²_{B,2} − ‖φ(A)‖²_{φ(B),2}.
    """
    left = sandwich_operator(setup.target_context.inv_quarter).matrix
    right = sandwich_operator(setup.source_context.quarter).matrix
    matrix = left @ setup.phi.superoperator.matrix @ right
    return Superoperator(setup.phi.source.l2_dim, setup.phi.target.l2_dim, matrix)


def whitened_coords(setup: RecoverySetup, A: AlgebraElement) -> np.ndarray:
    """ G_B^{1/2}·vec(A), the coordinates of A in the B-weighted L² space. """
    return sandwich_operator(setup.source_context.inv_quarter).matrix @ A.coords()


def contraction_defect_slack(T: Superoperator | np.ndarray, x: np.ndarray, tol: float = Config.CONTRACTION_TOL) -> float:
    """
    (‖x‖² − ‖Tx‖²) − ‖x − T*Tx‖², non-negative for every contraction T.

    Raises:
        NotAContractionError: ‖T‖ > 1 + ``tol``.
    """
    matrix = T.matrix if isinstance(T, Superoperator) else np.asarray(T, dtype=complex)
    norm = float(la.svdvals(matrix)[0]) if matrix.size else 0.0
    if norm > 1.0 + tol:
        raise NotAContractionError(f"Operator norm {norm:.12g} exceeds 1")
    x = np.asarray(x, dtype=complex)
    Tx = matrix @ x
    defect = x - matrix.conj().T @ Tx
    return float((np.vdot(x, x).real - np.vdot(Tx, Tx).real) - np.vdot(defect, defect).real)


# ----------------------------
# Chain
# ----------------------------
@dataclass(frozen=True)
class ChainReport:
    """
    Quantities of the recoverability chain for one state A.

    Attributes:
        s2_src (float): S₂(A|B).
        s2_tgt (float): S₂(φ(A)|φ(B)).
        entropy_gap (float): s2_src − s2_tgt.
        am_residual_sq (float): ‖A − R(φ(A))‖²_{B,2}.
        l1_residual_sq (float): ‖A − R(φ(A))‖₁².
        fidelity (float): F(A|R(φ(A))).
        fidelity_term (float): 4(1 − fidelity)².
        scaled_trace_bound (float): ‖B‖₂²‖B⁻¹‖·entropy_gap.
    """

    s2_src: float
    s2_tgt: float
    entropy_gap: float
    am_residual_sq: float
    l1_residual_sq: float
    fidelity: float
    fidelity_term: float
    scaled_trace_bound: float

    def margins(self) -> Dict[str, float]:
        """ Every link of the chain as a slack that is non-negative when it holds. """
        return {
            "am_recovery": self.entropy_gap - self.am_residual_sq,
            "l1_recovery": self.entropy_gap - self.l1_residual_sq,
            "fidelity_recovery": self.l1_residual_sq - self.fidelity_term,
            "trace_vs_am_residual": self.am_residual_sq - self.l1_residual_sq,
            "scaled_trace_bound": self.scaled_trace_bound - self.l1_residual_sq,
        }

    def to_json(self) -> Dict[str, float]:
        return {**asdict(self), **self.margins()}


def chain_report(
    A: AlgebraElement,
    setup: RecoverySetup,
    check: bool = True,
    tol: float = Config.CHAIN_TOL,
) -> ChainReport:
    """
    Evaluate the recoverability chain for the state A.

    Args:
        A (AlgebraElement): A state of the source algebra.
        setup (RecoverySetup): Channel, reference state and Petz map.
        check (bool): Raise when a margin falls below −``tol``·max(1, S₂(A|B)).
        tol (float): Relative slack floor. Entropy gaps in [−tol·max(1, S₂(A|B)), 0)
            count as zero in the scaled trace bound.

    Returns:
        ChainReport: All chain quantities.

    Raises:
        InequalityViolationError: ``check`` is set and a link fails.
    """
    src, tgt = setup.source_context, setup.target_context
    s2_src = sandwiched_entropy(A, src, 2)
    s2_tgt = sandwiched_entropy(apply(setup.phi, A), tgt, 2)
    gap = s2_src - s2_tgt

    recovered = setup.recover(A)
    residual = A - recovered
    F = fidelity(FidelityPair(A, recovered))
    B = setup.B
    scale = p_norm(B.algebra, B, 2) ** 2 / B.min_eigenvalue_value
    floor = tol * max(1.0, abs(s2_src))
    # scale reaches 1e6 at the spectrum floor
    bound_gap = 0.0 if -floor <= gap < 0.0 else gap

    report = ChainReport(
        s2_src=s2_src,
        s2_tgt=s2_tgt,
        entropy_gap=gap,
        am_residual_sq=am_norm(residual, src, 2) ** 2,
        l1_residual_sq=p_norm(A.algebra, residual, 1) ** 2,
        fidelity=F,
        fidelity_term=4.0 * (1.0 - F) ** 2,
        scaled_trace_bound=scale * bound_gap,
    )
    if check:
        failed = {name: m for name, m in report.margins().items() if m < -floor}
        if failed:
            raise InequalityViolationError(f"Recoverability chain violated for {setup.phi.name}: {failed}")
    return report


def kl_recovery_gap(A: AlgebraElement, setup: RecoverySetup) -> float:
    """
    [D(A|B) − D(φ(A)|φ(B))] − [−2 ln F(A|R(φ(A)))].

    The sign is not fixed: negative values are counterexample candidates for
    the logarithmic recovery bound and are only reported.
    """
    kl_gap = kl_divergence(A, setup.source_context) - kl_divergence(apply(setup.phi, A), setup.target_context)
    F = fidelity(FidelityPair(A, setup.recover(A)))
    if F <= 0.0:
        logger.warning(f"{setup.phi.name}: A and R(φ(A)) are orthogonal, recovery gap is −∞")
        return float("-inf")
    return kl_gap + 2.0 * float(np.log(F))


class SufficiencyResult(NamedTuple):
    """
    Attributes:
        applicable (bool): R(φ(A)) = A within the recovery tolerance.
        passed (bool): Both gaps vanish whenever the check applies.
        recovery_residual (float): ‖R(φ(A)) − A‖₂.
        kl_gap (float): D(A|B) − D(φ(A)|φ(B)).
        s2_gap (float): S₂(A|B) − S₂(φ(A)|φ(B)).
    """

    applicable: bool
    passed: bool
    recovery_residual: float
    kl_gap: float
    s2_gap: float


def petz_sufficiency_check(
    A: AlgebraElement,
    setup: RecoverySetup,
    recovery_tol: float = 1e-8,
    gap_tol: float = 1e-6,
) -> SufficiencyResult:
    """ If R(φ(A)) = A, then the KL and S₂ gaps vanish. """
    src, tgt = setup.source_context, setup.target_context
    image = apply(setup.phi, A)
    residual = p_norm(A.algebra, setup.recover(A) - A, 2)
    kl_gap = kl_divergence(A, src) - kl_divergence(image, tgt)
    s2_gap = sandwiched_entropy(A, src, 2) - sandwiched_entropy(image, tgt, 2)
    applicable = residual <= recovery_tol
    passed = not applicable or (abs(kl_gap) <= gap_tol and abs(s2_gap) <= gap_tol)
    return SufficiencyResult(applicable, passed, residual, kl_gap, s2_gap)
