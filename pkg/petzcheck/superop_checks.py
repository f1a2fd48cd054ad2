"""
Operator inequalities between superoperators on L²(τ).

Every check assembles dense matrices in orthonormal L² coordinates (so
adjoints are conjugate transposes) and reports a margin: a smallest
eigenvalue, a norm defect or a scalar difference that is non-negative when
the inequality holds.

Notation used below, for a channel φ and reference state B:

    Φ       L² matrix of φ
    L_X/R_X left/right multiplication by X
    V       R_{B^{1/2}} Φ* R_{φ(B)^{-1/2}}, i.e. Y ↦ φ*(Y φ(B)^{-1/2}) B^{1/2}
    Δ, Δ₀   L_B R_{B^{-1}} and L_{φ(B)} R_{φ(B)^{-1}}
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
import scipy.linalg as la

import petzcheck.config as Config
from petzcheck.algebra_core import (
    AlgebraElement,
    ReferenceState,
    TracialAlgebra,
    p_norm,
    positive_power,
)
from petzcheck.channels import (
    Channel,
    Superoperator,
    adjoint,
    apply,
    left_multiplication,
    reference_image,
    right_multiplication,
    sandwich_operator,
)
from petzcheck.entropy import EntropyContext, am_norm
from petzcheck.exceptions import AlgebraMismatchError, NumericalBreakdownError

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True, eq=False)
class MultiplicationOperator(Superoperator):
    """
    L_X or R_X on L²(τ).

    Attributes:
        kind (str): ``"left"`` or ``"right"``.
        element (AlgebraElement | None): The multiplier X.
    """

    kind: str = LEFT
    element: AlgebraElement | None = None


def build_mult(algebra: TracialAlgebra, X: AlgebraElement, kind: str) -> MultiplicationOperator:
    """
    Left (Y ↦ XY) or right (Y ↦ YX) multiplication operator.

    Raises:
        AlgebraMismatchError: X is not an element of ``algebra``.
        ValueError: Unknown ``kind``.
    """
    if X.algebra != algebra:
        raise AlgebraMismatchError(f"Multiplier lives in {X.algebra}, expected {algebra}")
    if kind == LEFT:
        op = left_multiplication(X)
    elif kind == RIGHT:
        op = right_multiplication(X)
    else:
        raise ValueError(f"kind must be '{LEFT}' or '{RIGHT}', got {kind!r}")
    return MultiplicationOperator(algebra.l2_dim, algebra.l2_dim, op.matrix, algebra, algebra, kind=kind, element=X)


def commutator_residual(first: Superoperator, second: Superoperator) -> float:
    """ max |[S, T]| entry. """
    comm = first.matrix @ second.matrix - second.matrix @ first.matrix
    return float(np.max(np.abs(comm), initial=0.0))


def psd_margin(matrix: np.ndarray, tol: float = Config.SYMMETRIZATION_TOL) -> float:
    """
    Smallest eigenvalue of the Hermitian part of ``matrix``, relative to max(1, spectral radius).

    Raises:
        NumericalBreakdownError: The anti-Hermitian part exceeds ``tol`` relative to max(1, max|entry|).
    """
    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
    residual = float(np.max(np.abs(matrix - matrix.conj().T), initial=0.0))
    if residual > tol * scale:
        raise NumericalBreakdownError(f"Operator expected to be self-adjoint has residual {residual:.3e}")
    eigs = la.eigvalsh((matrix + matrix.conj().T) / 2)
    if not eigs.size:
        return 0.0
    return float(eigs[0]) / max(1.0, float(np.max(np.abs(eigs))))


class ModularSetup(NamedTuple):
    """ Operators shared by the contraction inequalities. """

    V: np.ndarray
    delta: np.ndarray
    delta0: np.ndarray
    sqrt_delta: np.ndarray
    sqrt_delta0: np.ndarray


def modular_setup(
    phi: Channel,
    B: ReferenceState,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
    contexts: Tuple[EntropyContext, EntropyContext] | None = None,
) -> ModularSetup:
    """
    Assemble V, Δ, Δ₀ and their square roots.

    Args:
        contexts (Tuple[EntropyContext, EntropyContext] | None): Cached contexts of B and φ(B).

    Raises:
        StrictnessError: φ(B) falls below ``strictness_floor``.
    """
    if contexts is None:
        contexts = (EntropyContext(B), EntropyContext(reference_image(phi, B, strictness_floor)))
    src, tgt = contexts
    phi_B = tgt.B

    V = right_multiplication(src.sqrt) @ adjoint(phi) @ right_multiplication(tgt.inv_sqrt)
    delta = left_multiplication(B).matrix @ right_multiplication(src.power(-1.0)).matrix
    delta0 = left_multiplication(phi_B).matrix @ right_multiplication(tgt.power(-1.0)).matrix
    sqrt_delta = sandwich_operator(src.sqrt, src.inv_sqrt).matrix
    sqrt_delta0 = sandwich_operator(tgt.sqrt, tgt.inv_sqrt).matrix
    logger.debug(f"Modular setup for {phi.name}: L² dims {V.matrix.shape[1]} → {V.matrix.shape[0]}")
    return ModularSetup(V.matrix, delta, delta0, sqrt_delta, sqrt_delta0)


# ----------------------------
# Contraction inequalities
# ----------------------------
def contraction_margin(
    phi: Channel,
    B: ReferenceState,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
    modular: ModularSetup | None = None,
) -> float:
    """ 1 − ‖V‖ for V(Y) = φ*(Y φ(B)^{-1/2}) B^{1/2}. """
    V = (modular or modular_setup(phi, B, strictness_floor)).V
    return 1.0 - float(la.svdvals(V)[0])


def modular_psd_margin(
    phi: Channel,
    B: ReferenceState,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
    modular: ModularSetup | None = None,
) -> float:
    """ Smallest eigenvalue of Δ₀ − V*ΔV. """
    m = modular or modular_setup(phi, B, strictness_floor)
    return psd_margin(m.delta0 - m.V.conj().T @ m.delta @ m.V)


def concavity_step_margin(
    phi: Channel,
    B: ReferenceState,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
    modular: ModularSetup | None = None,
) -> float:
    """ Smallest eigenvalue of Δ₀^{1/2} − V*Δ^{1/2}V (operator concavity of the square root). """
    m = modular or modular_setup(phi, B, strictness_floor)
    return psd_margin(m.sqrt_delta0 - m.V.conj().T @ m.sqrt_delta @ m.V)


def adjoint_norm_identity_residual(
    phi: Channel,
    B: ReferenceState,
    X: AlgebraElement,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
    modular: ModularSetup | None = None,
) -> float:
    """
    |‖V*(X)‖₂² − τ′(φ(X B^{1/2}) φ(B)^{-1} φ(B^{1/2} X*))| for X in the source algebra,
    relative to max(1, ‖V*(X)‖₂²).

    The trace is evaluated as ‖φ(B)^{-1/2} φ(B^{1/2} X*)‖₂², using φ(X B^{1/2}) = φ(B^{1/2} X*)*.
    """
    m = modular or modular_setup(phi, B, strictness_floor)
    phi_B = reference_image(phi, B, strictness_floor)
    sqrt_B = positive_power(B, 0.5)
    lhs = float(np.linalg.norm(m.V.conj().T @ X.coords()) ** 2)
    Z = positive_power(phi_B, -0.5) @ apply(phi, sqrt_B @ X.adjoint())
    rhs = p_norm(phi.target, Z, 2) ** 2
    return abs(lhs - rhs) / max(1.0, lhs)


def sandwich_psd_margin(phi: Channel, B: ReferenceState, strictness_floor: float = Config.STRICTNESS_FLOOR) -> float:
    """ Smallest eigenvalue of L_{φ(B)^{1/2}}R_{φ(B)^{1/2}} − Φ L_{B^{1/2}}R_{B^{1/2}} Φ*. """
    phi_B = reference_image(phi, B, strictness_floor)
    Phi = phi.superoperator.matrix
    inner_op = sandwich_operator(positive_power(B, 0.5)).matrix
    outer_op = sandwich_operator(positive_power(phi_B, 0.5)).matrix
    return psd_margin(outer_op - Phi @ inner_op @ Phi.conj().T)


def am_contraction_margin(
    phi: Channel,
    B: ReferenceState,
    X: AlgebraElement,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
    contexts: Tuple[EntropyContext, EntropyContext] | None = None,
) -> float:
    """ ‖X‖_{B,2} − ‖φ(X)‖_{φ(B),2}. """
    src, tgt = contexts or (EntropyContext(B), EntropyContext(reference_image(phi, B, strictness_floor)))
    return am_norm(X, src, 2) - am_norm(apply(phi, X), tgt, 2)


# ----------------------------
# Single-algebra inequalities
# ----------------------------
def amgm_psd_margin(B: ReferenceState) -> float:
    """
    Smallest eigenvalue of L_{B^{-1/2}}R_{B^{-1/2}} − 2(L_B + R_B)^{-1}, relative to its spectral radius.

    L_B + R_B is inverted through its eigendecomposition.
    """
    lhs = sandwich_operator(positive_power(B, -0.5)).matrix
    arithmetic = left_multiplication(B).matrix + right_multiplication(B).matrix
    vals, vecs = la.eigh((arithmetic + arithmetic.conj().T) / 2)
    inverse = (vecs / vals) @ vecs.conj().T
    return psd_margin(lhs - 2.0 * inverse)


def trace_vs_am_margin(X: AlgebraElement, B: ReferenceState, context: EntropyContext | None = None) -> float:
    """ ‖X‖²_{B,2} − ‖X‖₁², relative to max(1, ‖X‖²_{B,2}). """
    am_sq = am_norm(X, context or EntropyContext(B), 2) ** 2
    return (am_sq - p_norm(X.algebra, X, 1) ** 2) / max(1.0, am_sq)


def modular_spectrum_residual(B: ReferenceState) -> float:
    """
    Relative distance between the spectrum of Δ = L_B R_{B^{-1}} and the ratios λ_r/λ_s.

    The ratios run over eigenvalue pairs of the same block of B.
    """
    delta = left_multiplication(B).matrix @ right_multiplication(positive_power(B, -1.0)).matrix
    computed = la.eigvalsh((delta + delta.conj().T) / 2)
    expected = []
    for block in B.blocks:
        lam = la.eigvalsh((block + block.conj().T) / 2)
        expected.append(np.divide.outer(lam, lam).reshape(-1))
    expected = np.sort(np.concatenate(expected))
    return float(np.max(np.abs(computed - expected) / np.maximum(1.0, np.abs(expected))))
