"""
petzcheck: numerical verification of Petz recovery, sandwiched quasi-relative
entropy and Uhlmann fidelity on finite-dimensional tracial algebras.
"""

from petzcheck.algebra_core import (
    AlgebraElement,
    HermitianElement,
    PositiveElement,
    ReferenceState,
    StateElement,
    TracialAlgebra,
    inner,
    p_norm,
    spectral_apply,
    trace,
)
from petzcheck.channels import Channel, Superoperator
from petzcheck.recovery import RecoverySetup, chain_report, petz_map

__all__ = [
    "AlgebraElement",
    "Channel",
    "HermitianElement",
    "PositiveElement",
    "RecoverySetup",
    "ReferenceState",
    "StateElement",
    "Superoperator",
    "TracialAlgebra",
    "chain_report",
    "inner",
    "p_norm",
    "petz_map",
    "spectral_apply",
    "trace",
]
