import numpy as np
import pytest

from petzcheck.algebra_core import ReferenceState, StateElement, TracialAlgebra, random_state


@pytest.fixture
def m2():
    """ M2 with τ = Tr/2. """
    return TracialAlgebra.full_matrix(2)


@pytest.fixture
def m3():
    return TracialAlgebra.full_matrix(3)


@pytest.fixture
def two_block():
    """ M2 ⊕ M2 with weights 1/8, 3/8. """
    return TracialAlgebra((2, 2), (0.125, 0.375))


@pytest.fixture
def mixed_blocks():
    """ C ⊕ C ⊕ M2 with block masses 0.2, 0.3, 0.5. """
    return TracialAlgebra((1, 1, 2), (0.2, 0.3, 0.25))


@pytest.fixture
def unit_reference(m2):
    """ B = 1 in (M2, Tr/2). """
    return ReferenceState.from_element(m2.identity())


@pytest.fixture
def worked_state(m2):
    """ A = [[1, 1/2], [1/2, 1]]. """
    return StateElement(m2, (np.array([[1.0, 0.5], [0.5, 1.0]]),))


@pytest.fixture
def diag_state(m2):
    """ A = diag(3/2, 1/2). """
    return StateElement(m2, (np.diag([1.5, 0.5]),))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def near_floor_reference():
    """ Builds (1 − δ)ρ + δ·1 with ρ of rank one per block, so the spectrum of B touches δ. """
    def build(algebra, seed, floor=1e-6):
        rho = random_state(algebra, seed, rank=1)
        mixed = (1.0 - floor) * rho + floor * algebra.identity()
        return ReferenceState(algebra, mixed.blocks, floor=floor)
    return build
