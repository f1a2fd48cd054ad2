"""
Sandwiched quasi-relative entropy and Araki-Masuda norms.

For a reference state B and p ≥ 1 with harmonic conjugate q (1/p + 1/q = 1):

    S_p(A|B)   = τ[(B^{-1/2q} A B^{-1/2q})^p]
    ‖X‖_{B,p}  = ‖B^{-1/2q} X B^{-1/2q}‖_p
    ⟨X, Y⟩_B   = ⟨X, B^{-1/2} Y B^{-1/2}⟩_τ

S_p carries no logarithm: differences S_p(A|B) − S_p(φ(A)|φ(B)) are the
"entropy gaps" reported by the recovery module. The Kullback-Leibler
divergence D(A|B) = τ(A ln A) − τ(A ln B) is provided alongside.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

import petzcheck.config as Config
from petzcheck.algebra_core import (
    AlgebraElement,
    ReferenceState,
    TracialAlgebra,
    inner,
    p_norm,
    positive_power,
    spectral_apply,
    trace,
)
from petzcheck.channels import Channel, apply, reference_image
from petzcheck.exceptions import AlgebraMismatchError, FloorViolationError, NumericalBreakdownError

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)


def conjugation_exponent(p: float) -> float:
    """ The exponent −1/(2q) = −(p − 1)/(2p) applied to B on each side; −1/2 for p = ∞. """
    if np.isinf(p):
        return -0.5
    return -(p - 1.0) / (2.0 * p)


@dataclass(frozen=True, eq=False)
class EntropyContext:
    """
    A reference state together with its eagerly computed powers.

    Attributes:
        B (ReferenceState): Positive invertible reference state with τ(B) = 1.
        sqrt (AlgebraElement): B^{1/2}.
        inv_sqrt (AlgebraElement): B^{-1/2}.
        inv_quarter (AlgebraElement): B^{-1/4}, the p = 2 conjugation factor.
        quarter (AlgebraElement): B^{1/4}.
        log (AlgebraElement): ln B.

    Raises:
        FloorViolationError: B is not a ReferenceState.
        NumericalBreakdownError: B^{1/2}·B^{-1/2} deviates from 1 by more than 1e-9.
    """

    B: ReferenceState
    sqrt: AlgebraElement = field(init=False)
    inv_sqrt: AlgebraElement = field(init=False)
    inv_quarter: AlgebraElement = field(init=False)
    quarter: AlgebraElement = field(init=False)
    log: AlgebraElement = field(init=False)
    _powers: Dict[float, AlgebraElement] = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.B, ReferenceState):
            raise FloorViolationError("EntropyContext needs a ReferenceState (spectrum above the invertibility floor)")
        B = self.B
        object.__setattr__(self, "sqrt", positive_power(B, 0.5))
        object.__setattr__(self, "inv_sqrt", positive_power(B, -0.5))
        object.__setattr__(self, "inv_quarter", positive_power(B, -0.25))
        object.__setattr__(self, "quarter", positive_power(B, 0.25))
        object.__setattr__(self, "log", spectral_apply(B, np.log, floor=0.0))

        defect = (self.sqrt @ self.inv_sqrt - self.algebra.identity()).max_abs()
        if defect > 1e-9:
            raise NumericalBreakdownError(f"B^(1/2) B^(-1/2) deviates from 1 by {defect:.3e}")
        self._powers.update({0.5: self.sqrt, -0.5: self.inv_sqrt, -0.25: self.inv_quarter, 0.25: self.quarter})

    @property
    def algebra(self) -> TracialAlgebra:
        return self.B.algebra

    def power(self, exponent: float) -> AlgebraElement:
        """ B^exponent, cached per exponent. """
        if exponent == 0.0:
            return self.algebra.identity()
        if exponent not in self._powers:
            logger.debug(f"Caching B^{exponent:g}")
            self._powers[exponent] = positive_power(self.B, exponent)
        return self._powers[exponent]

    def conjugate(self, X: AlgebraElement, p: float) -> AlgebraElement:
        """ B^{-1/2q} X B^{-1/2q}. """
        if X.algebra != self.algebra:
            raise AlgebraMismatchError(f"Element of {X.algebra} used with a reference state of {self.algebra}")
        return X.sandwich(self.power(conjugation_exponent(p)))

    def norm_equivalence_bounds(self) -> Tuple[float, float]:
        """
        Constants c₁, c₂ with c₁‖X‖₂ ≤ ‖X‖_{B,2} ≤ c₂‖X‖₂.

        Returns:
            Tuple[float, float]: (min eig B^{-1/2})² and (max eig B^{-1/2})².
        """
        eigs = self.inv_sqrt.eigvalsh()
        return float(eigs.min()) ** 2, float(eigs.max()) ** 2


# ----------------------------
# Entropies and norms
# ----------------------------
def sandwiched_entropy(A: AlgebraElement, ctx: EntropyContext, p: float) -> float:
    """
    S_p(A|B) = τ[(B^{-1/2q} A B^{-1/2q})^p].

    Args:
        A (AlgebraElement): A state (positive, unit trace) of the reference algebra.
        ctx (EntropyContext): Reference state B and its powers.
        p (float): Order, finite and > 1.

    Returns:
        float: S_p(A|B) ≥ 1 for states A.

    Raises:
        ValueError: p ≤ 1 or p infinite.
    """
    if not (1.0 < p < np.inf):
        raise ValueError(f"sandwiched_entropy needs a finite p > 1, got {p}")
    conjugated = ctx.conjugate(A, p).hermitian_part()
    return trace(ctx.algebra, positive_power(conjugated, p)).real


def am_norm(X: AlgebraElement, ctx: EntropyContext, p: float) -> float:
    """ Araki-Masuda norm ‖B^{-1/2q} X B^{-1/2q}‖_p for 1 ≤ p ≤ ∞. """
    if not p >= 1:
        raise ValueError(f"am_norm needs p ≥ 1, got {p}")
    return p_norm(ctx.algebra, ctx.conjugate(X, p), p)


def am_inner(X: AlgebraElement, Y: AlgebraElement, ctx: EntropyContext) -> complex:
    """ ⟨X, Y⟩_B = ⟨X, B^{-1/2} Y B^{-1/2}⟩_τ. """
    return inner(ctx.algebra, X, ctx.conjugate(Y, np.inf))


def _x_log_x(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    positive = values > 0
    out[positive] = values[positive] * np.log(values[positive])
    return out


def kl_divergence(A: AlgebraElement, ctx: EntropyContext) -> float:
    """
    D(A|B) = τ(A ln A) − τ(A ln B), with 0·ln 0 = 0 on the kernel of A.

    A may be rank deficient; B is invertible by construction of the context.
    """
    if A.algebra != ctx.algebra:
        raise AlgebraMismatchError(f"Element of {A.algebra} used with a reference state of {ctx.algebra}")
    entropy_term = trace(ctx.algebra, spectral_apply(A, _x_log_x, clamp=True)).real
    cross_term = trace(ctx.algebra, A @ ctx.log).real
    return entropy_term - cross_term


def dpi_margin(
    A: AlgebraElement,
    B: ReferenceState,
    phi: Channel,
    p: float,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
) -> float:
    """
    Data-processing margin S_p(A|B) − S_p(φ(A)|φ(B)).

    Non-negative for p = 2 (contraction of φ between Araki-Masuda spaces);
    for other p the value is only reported.

    Raises:
        StrictnessError: φ(B) falls below ``strictness_floor``.
    """
    src = EntropyContext(B)
    tgt = EntropyContext(reference_image(phi, B, strictness_floor))
    return sandwiched_entropy(A, src, p) - sandwiched_entropy(apply(phi, A), tgt, p)
