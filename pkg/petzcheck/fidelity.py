"""
Uhlmann fidelity between states of a tracial algebra.

    F(A|B) = τ(|A^{1/2} B^{1/2}|) = sup_U |⟨U A^{1/2}, B^{1/2}⟩_τ|

The supremum runs over unitaries of the algebra and is attained by the
polar unitary of A^{1/2}B^{1/2}. The Bures angle arccos F is a metric on
states. Every inequality below is returned as a slack that is non-negative
when it holds.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as la

from petzcheck.algebra_core import (
    AlgebraElement,
    SeedLike,
    StateElement,
    TracialAlgebra,
    inner,
    make_rng,
    p_norm,
    positive_power,
    random_unitary,
)
from petzcheck.channels import Channel, apply
from petzcheck.exceptions import AlgebraMismatchError

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)


def as_state(X: AlgebraElement) -> StateElement:
    """ Validate ``X`` as a state, symmetrizing away rounding noise first. """
    if isinstance(X, StateElement):
        return X
    return StateElement.from_element(X.hermitian_part())


@dataclass(frozen=True, eq=False)
class FidelityPair:
    """
    Two states of the same algebra. Invertibility is not required.

    Attributes:
        A (StateElement): First state.
        B (StateElement): Second state.
        sqrt_A (AlgebraElement): A^{1/2}, computed once.
        sqrt_B (AlgebraElement): B^{1/2}, computed once.
    """

    A: StateElement
    B: StateElement
    sqrt_A: AlgebraElement = field(init=False, repr=False)
    sqrt_B: AlgebraElement = field(init=False, repr=False)

    def __post_init__(self) -> None:
        A, B = as_state(self.A), as_state(self.B)
        if A.algebra != B.algebra:
            raise AlgebraMismatchError(f"States live in {A.algebra} and {B.algebra}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sqrt_A", positive_power(A, 0.5))
        object.__setattr__(self, "sqrt_B", positive_power(B, 0.5))

    @property
    def algebra(self) -> TracialAlgebra:
        return self.A.algebra

    def swapped(self) -> "FidelityPair":
        return FidelityPair(self.B, self.A)


def _overlap(pair: FidelityPair) -> AlgebraElement:
    return pair.sqrt_A @ pair.sqrt_B


def fidelity(pair: FidelityPair) -> float:
    """ τ(|A^{1/2} B^{1/2}|), the weighted sum of singular values. """
    svals = _overlap(pair).singular_values()
    return float(sum(w * np.sum(s) for s, w in zip(svals, pair.algebra.trace_weights)))


class OracleResult(NamedTuple):
    """
    Attributes:
        best_sampled (float): Largest |⟨U A^{1/2}, B^{1/2}⟩_τ| over sampled unitaries.
        polar_value (float): The same quantity at the polar unitary.
        attainment_residual (float): |F − polar_value|.
    """

    best_sampled: float
    polar_value: float
    attainment_residual: float


def _transition_amplitude(pair: FidelityPair, U: AlgebraElement) -> float:
    return abs(inner(pair.algebra, U @ pair.sqrt_A, pair.sqrt_B))


def polar_unitary(pair: FidelityPair) -> AlgebraElement:
    """ The unitary u* where A^{1/2}B^{1/2} = u·|A^{1/2}B^{1/2}|. """
    blocks = []
    for block in _overlap(pair).blocks:
        u, _ = la.polar(block, side="right")
        blocks.append(u.conj().T)
    return AlgebraElement(pair.algebra, tuple(blocks))


def fidelity_unitary_oracle(pair: FidelityPair, num_samples: int, seed: SeedLike) -> OracleResult:
    """
    Lower-bound evidence for the closed form from Haar-sampled unitaries.

    Raises:
        ValueError: ``num_samples`` < 1.
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be positive, got {num_samples}")
    rng = make_rng(seed)
    best = max(_transition_amplitude(pair, random_unitary(pair.algebra, rng)) for _ in range(num_samples))
    polar_value = _transition_amplitude(pair, polar_unitary(pair))
    logger.debug(f"Fidelity oracle: best of {num_samples} samples {best:.6f}, polar {polar_value:.6f}")
    return OracleResult(best, polar_value, abs(fidelity(pair) - polar_value))


def bures_angle(pair: FidelityPair) -> float:
    """ arccos F, with F clamped to [0, 1]. """
    return float(np.arccos(np.clip(fidelity(pair), 0.0, 1.0)))


# ----------------------------
# Inequality slacks
# ----------------------------
def powers_stormer_slack(pair: FidelityPair) -> float:
    """ ‖A − B‖₁ − ‖A^{1/2} − B^{1/2}‖₂². """
    alg = pair.algebra
    root_gap = pair.sqrt_A - pair.sqrt_B
    return p_norm(alg, pair.A - pair.B, 1) - p_norm(alg, root_gap, 2) ** 2


def fidelity_bound_slack(pair: FidelityPair) -> float:
    """ ‖A − B‖₁ − 2(1 − F(A|B)). """
    return p_norm(pair.algebra, pair.A - pair.B, 1) - 2.0 * (1.0 - fidelity(pair))


def monotonicity_slack(pair: FidelityPair, phi: Channel) -> float:
    """ F(φ(A)|φ(B)) − F(A|B). """
    if pair.algebra != phi.source:
        raise AlgebraMismatchError(f"{phi.name} acts on {phi.source}, states live in {pair.algebra}")
    image = FidelityPair(apply(phi, pair.A), apply(phi, pair.B))
    return fidelity(image) - fidelity(pair)


def _check_weight(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"Mixing weight must lie in [0, 1], got {lam}")


def _mix(lam: float, X: AlgebraElement, Y: AlgebraElement) -> AlgebraElement:
    return lam * X + (1.0 - lam) * Y


def joint_concavity_slack(first: FidelityPair, second: FidelityPair, lam: float) -> float:
    """ F(λA₁ + (1−λ)A₂ | λB₁ + (1−λ)B₂) − [λF(A₁|B₁) + (1−λ)F(A₂|B₂)]. """
    _check_weight(lam)
    if first.algebra != second.algebra:
        raise AlgebraMismatchError(f"Pairs live in {first.algebra} and {second.algebra}")
    mixed = FidelityPair(_mix(lam, first.A, second.A), _mix(lam, first.B, second.B))
    return fidelity(mixed) - (lam * fidelity(first) + (1.0 - lam) * fidelity(second))


def transition_concavity_slack(A1: StateElement, A2: StateElement, B: StateElement, lam: float) -> float:
    """ F(λA₁ + (1−λ)A₂ | B)² − [λF(A₁|B)² + (1−λ)F(A₂|B)²]. """
    _check_weight(lam)
    mixed = fidelity(FidelityPair(_mix(lam, A1, A2), B)) ** 2
    return mixed - (lam * fidelity(FidelityPair(A1, B)) ** 2 + (1.0 - lam) * fidelity(FidelityPair(A2, B)) ** 2)


def bures_triangle_slack(A: StateElement, B: StateElement, C: StateElement) -> float:
    """ d(A, B) + d(B, C) − d(A, C). """
    return (
        bures_angle(FidelityPair(A, B))
        + bures_angle(FidelityPair(B, C))
        - bures_angle(FidelityPair(A, C))
    )


def concavity_grid(lambdas: Sequence[float], first: FidelityPair, second: FidelityPair) -> float:
    """ Smallest joint-concavity slack over a grid of mixing weights. """
    return min(joint_concavity_slack(first, second, lam) for lam in lambdas)
