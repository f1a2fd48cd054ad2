"""
Finite-dimensional tracial von Neumann algebras.

An algebra is a direct sum of full matrix blocks M_{n_1} ⊕ ... ⊕ M_{n_k} carrying
the faithful tracial state

    τ(X) = Σ_i w_i · Tr(X_i),        Σ_i w_i · n_i = 1.

This module provides:

- TracialAlgebra: block dimensions plus trace weights, with the orthonormal
  L²(τ) coordinate system used by every superoperator in the package.
- AlgebraElement and its refinements HermitianElement, PositiveElement,
  StateElement and ReferenceState. Refinements validate on construction.
- trace, p_norm, inner, spectral_apply: the tracial functional calculus.
- Seeded generators for states, reference states, Hermitian elements and
  Haar-random unitaries.
- JSON encoding of algebras and elements for harness reports.

L² coordinates:
    The matrix unit E_rc of block i has ⟨E_rc, E_rc⟩_τ = w_i, so the
    orthonormal basis element is w_i^{-1/2} E_rc. The coordinate vector of X
    is therefore the concatenation over blocks of √w_i · X_i flattened in
    row-major order, and adjoints of linear maps become plain
    conjugate-transposes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
import scipy.linalg as la

import petzcheck.config as Config
from petzcheck.exceptions import (
    AlgebraMismatchError,
    FloorViolationError,
    InvalidAlgebraError,
    NotAStateError,
    NotHermitianError,
    NotPositiveError,
)

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)

SeedLike = int | np.random.Generator | np.random.SeedSequence | Sequence[int] | None


def make_rng(seed: SeedLike) -> np.random.Generator:
    """ Return ``seed`` if it already is a Generator, else a fresh PCG64 generator seeded by it. """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ----------------------------
# Algebra
# ----------------------------
@dataclass(frozen=True, eq=False)
class TracialAlgebra:
    """
    Finite direct sum of matrix blocks with a normalized weighted trace.

    Attributes:
        block_dims (Tuple[int, ...]): Block sizes n_i (all ≥ 1).
        trace_weights (Tuple[float, ...]): Strictly positive weights w_i with Σ w_i n_i = 1.
    """

    block_dims: Tuple[int, ...]
    trace_weights: Tuple[float, ...]

    def __post_init__(self) -> None:
        dims = tuple(int(n) for n in self.block_dims)
        weights = tuple(float(w) for w in self.trace_weights)
        object.__setattr__(self, "block_dims", dims)
        object.__setattr__(self, "trace_weights", weights)

        if len(dims) == 0 or len(dims) != len(weights):
            raise InvalidAlgebraError(
                f"block_dims and trace_weights must be non-empty and of equal length, got {dims} and {weights}"
            )
        if any(n < 1 for n in dims):
            raise InvalidAlgebraError(f"Block dimensions must be positive, got {dims}")
        if not all(w > 0 for w in weights):
            raise InvalidAlgebraError(f"Trace weights must be strictly positive, got {weights}")
        total = sum(w * n for w, n in zip(weights, dims))
        if abs(total - 1.0) > Config.NORMALIZATION_TOL:
            raise InvalidAlgebraError(f"Σ w_i n_i must equal 1 (τ(1) = 1), got {total!r}")

    @classmethod
    def full_matrix(cls, n: int) -> "TracialAlgebra":
        """ The matrix algebra M_n with normalized trace Tr/n. """
        return cls((n,), (1.0 / n,))

    @classmethod
    def from_masses(cls, block_dims: Sequence[int], masses: Sequence[float]) -> "TracialAlgebra":
        """
        Build an algebra from the τ-mass of each block's identity.

        Args:
            block_dims (Sequence[int]): Block sizes n_i.
            masses (Sequence[float]): τ(1_i) = w_i n_i for each block; must sum to one.

        Returns:
            TracialAlgebra: Algebra with weights w_i = mass_i / n_i.
        """
        return cls(tuple(block_dims), tuple(m / n for m, n in zip(masses, block_dims)))

    # --- equality uses a rounding-tolerant weight comparison ---
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TracialAlgebra):
            return NotImplemented
        return self.block_dims == other.block_dims and bool(
            np.allclose(self.trace_weights, other.trace_weights, rtol=1e-13, atol=0.0)
        )

    def __hash__(self) -> int:
        return hash(self.block_dims)

    def __str__(self) -> str:
        return " ⊕ ".join(f"M{n}[w={w:.6g}]" for n, w in zip(self.block_dims, self.trace_weights))

    # --- derived geometry ---
    @property
    def num_blocks(self) -> int:
        return len(self.block_dims)

    @property
    def is_single_block(self) -> bool:
        return len(self.block_dims) == 1

    @cached_property
    def total_dim(self) -> int:
        """ N = Σ n_i, the size of the block-diagonal embedding into M_N. """
        return sum(self.block_dims)

    @cached_property
    def l2_dim(self) -> int:
        """ Σ n_i², the dimension of L²(τ). """
        return sum(n * n for n in self.block_dims)

    @cached_property
    def offsets(self) -> Tuple[int, ...]:
        """ Row offset of each block inside M_N. """
        return tuple(int(o) for o in np.concatenate(([0], np.cumsum(self.block_dims)[:-1])))

    @cached_property
    def coord_offsets(self) -> Tuple[int, ...]:
        """ Offset of each block inside the L² coordinate vector. """
        squares = [n * n for n in self.block_dims]
        return tuple(int(o) for o in np.concatenate(([0], np.cumsum(squares)[:-1])))

    @cached_property
    def weight_diagonal(self) -> np.ndarray:
        """ Diagonal of the weight operator W on C^N. """
        diag = np.concatenate([np.full(n, w) for n, w in zip(self.block_dims, self.trace_weights)])
        diag.setflags(write=False)
        return diag

    @cached_property
    def coord_layout(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Position of every L² coordinate inside M_N.

        Returns:
            Tuple[np.ndarray, np.ndarray, np.ndarray]: Row index, column index and √w_i
            of each coordinate, in coordinate order.
        """
        rows, cols, roots = [], [], []
        for o, n, w in zip(self.offsets, self.block_dims, self.trace_weights):
            r, c = np.divmod(np.arange(n * n), n)
            rows.append(o + r)
            cols.append(o + c)
            roots.append(np.full(n * n, np.sqrt(w)))
        layout = (np.concatenate(rows), np.concatenate(cols), np.concatenate(roots))
        for arr in layout:
            arr.setflags(write=False)
        return layout

    @cached_property
    def block_mask(self) -> np.ndarray:
        """ Boolean N×N mask of the block-diagonal positions. """
        labels = np.repeat(np.arange(self.num_blocks), self.block_dims)
        mask = labels[:, None] == labels[None, :]
        mask.setflags(write=False)
        return mask

    # --- distinguished elements ---
    def identity(self) -> "AlgebraElement":
        return AlgebraElement(self, tuple(np.eye(n, dtype=complex) for n in self.block_dims))

    def zero(self) -> "AlgebraElement":
        return AlgebraElement(self, tuple(np.zeros((n, n), dtype=complex) for n in self.block_dims))

    def matrix_unit(self, block: int, row: int, col: int) -> "AlgebraElement":
        """ The unnormalized matrix unit E_{row,col} of the given block. """
        blocks = [np.zeros((n, n), dtype=complex) for n in self.block_dims]
        blocks[block][row, col] = 1.0
        return AlgebraElement(self, tuple(blocks))

    def orthonormal_basis(self) -> List["AlgebraElement"]:
        """ Matrix units scaled by w_i^{-1/2}, ordered like the L² coordinates. """
        eye = np.eye(self.l2_dim)
        return [AlgebraElement.from_coords(self, eye[k]) for k in range(self.l2_dim)]

    def descriptor(self) -> Dict[str, List[Any]]:
        return {"block_dims": list(self.block_dims), "trace_weights": list(self.trace_weights)}

    @classmethod
    def from_descriptor(cls, descriptor: Dict[str, Any]) -> "TracialAlgebra":
        try:
            return cls(tuple(descriptor["block_dims"]), tuple(descriptor["trace_weights"]))
        except (KeyError, TypeError) as e:
            raise InvalidAlgebraError(f"Malformed algebra descriptor {descriptor!r}: {e}") from e


# ----------------------------
# Elements
# ----------------------------
def _scale(blocks: Sequence[np.ndarray]) -> float:
    return max(1.0, max((float(np.max(np.abs(b))) for b in blocks if b.size), default=0.0))


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """
    Block-diagonal complex matrix living in a specific TracialAlgebra.

    Elements are immutable: the block arrays are copied on construction and
    marked read-only. Arithmetic is only defined between elements of the same
    algebra and always returns a plain AlgebraElement.
    """

    algebra: TracialAlgebra
    blocks: Tuple[np.ndarray, ...]

    # numpy scalars defer to __rmul__ instead of broadcasting over the element
    __array_ufunc__ = None

    def __post_init__(self) -> None:
        blocks = tuple(np.array(b, dtype=complex) for b in self.blocks)
        if len(blocks) != self.algebra.num_blocks:
            raise AlgebraMismatchError(
                f"Expected {self.algebra.num_blocks} blocks for {self.algebra}, got {len(blocks)}"
            )
        for b, n in zip(blocks, self.algebra.block_dims):
            if b.shape != (n, n):
                raise AlgebraMismatchError(f"Block shape {b.shape} does not match dimension {n}")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        self._validate()

    def _validate(self) -> None:
        """ Hook for refinements. """

    # --- constructors ---
    @classmethod
    def from_element(cls, X: "AlgebraElement", **kwargs: Any) -> "AlgebraElement":
        """ Re-validate an existing element as this refinement. """
        return cls(X.algebra, X.blocks, **kwargs)

    @classmethod
    def from_dense(
        cls,
        algebra: TracialAlgebra,
        matrix: np.ndarray,
        tol: float | None = Config.BLOCK_TOL,
        **kwargs: Any,
    ) -> "AlgebraElement":
        """
        Project an N×N matrix onto the block-diagonal subspace.

        Args:
            algebra (TracialAlgebra): Target algebra.
            matrix (np.ndarray): Dense N×N matrix.
            tol (float | None): Maximum off-block magnitude relative to max(1, max|entry|);
                None disables the check.

        Returns:
            AlgebraElement: The block-diagonal part of ``matrix``.

        Raises:
            AlgebraMismatchError: Wrong shape, or off-block residual above ``tol``.
        """
        matrix = np.asarray(matrix, dtype=complex)
        N = algebra.total_dim
        if matrix.shape != (N, N):
            raise AlgebraMismatchError(f"Expected a {N}×{N} matrix, got {matrix.shape}")
        if tol is not None:
            residual = float(np.max(np.abs(matrix[~algebra.block_mask]), initial=0.0))
            scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
            if residual > tol * scale:
                raise AlgebraMismatchError(
                    f"Matrix leaves the block-diagonal subspace of {algebra}: residual {residual:.3e}"
                )
        blocks = tuple(
            matrix[o:o + n, o:o + n] for o, n in zip(algebra.offsets, algebra.block_dims)
        )
        return cls(algebra, blocks, **kwargs)

    @classmethod
    def from_coords(cls, algebra: TracialAlgebra, coords: np.ndarray, **kwargs: Any) -> "AlgebraElement":
        """ Inverse of ``coords()``: orthonormal L² coordinates to blocks. """
        coords = np.asarray(coords, dtype=complex)
        if coords.shape != (algebra.l2_dim,):
            raise AlgebraMismatchError(f"Expected {algebra.l2_dim} coordinates, got shape {coords.shape}")
        blocks = tuple(
            coords[o:o + n * n].reshape(n, n) / np.sqrt(w)
            for o, n, w in zip(algebra.coord_offsets, algebra.block_dims, algebra.trace_weights)
        )
        return cls(algebra, blocks, **kwargs)

    # --- representations ---
    def coords(self) -> np.ndarray:
        """ Orthonormal L²(τ) coordinates (√w_i-scaled, row-major per block). """
        return np.concatenate(
            [np.sqrt(w) * b.reshape(-1) for b, w in zip(self.blocks, self.algebra.trace_weights)]
        )

    def dense(self) -> np.ndarray:
        """ Block-diagonal embedding into M_N. """
        return la.block_diag(*self.blocks).astype(complex)

    def as_element(self) -> "AlgebraElement":
        """ Drop any refinement. """
        return AlgebraElement(self.algebra, self.blocks)

    # --- arithmetic ---
    def _same(self, other: "AlgebraElement") -> None:
        if not isinstance(other, AlgebraElement):
            raise TypeError(f"Expected an AlgebraElement, got {type(other).__name__}")
        if other.algebra != self.algebra:
            raise AlgebraMismatchError(f"Operands live in {self.algebra} and {other.algebra}")

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._same(other)
        return AlgebraElement(self.algebra, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._same(other)
        return AlgebraElement(self.algebra, tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, tuple(-b for b in self.blocks))

    def __mul__(self, scalar: complex) -> "AlgebraElement":
        if isinstance(scalar, AlgebraElement):
            raise TypeError("Use @ for the algebra product")
        return AlgebraElement(self.algebra, tuple(scalar * b for b in self.blocks))

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "AlgebraElement":
        return AlgebraElement(self.algebra, tuple(b / scalar for b in self.blocks))

    def __matmul__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._same(other)
        return AlgebraElement(self.algebra, tuple(a @ b for a, b in zip(self.blocks, other.blocks)))

    def adjoint(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, tuple(b.conj().T for b in self.blocks))

    @property
    def H(self) -> "AlgebraElement":
        return self.adjoint()

    def sandwich(self, Z: "AlgebraElement") -> "AlgebraElement":
        """ Z · self · Z. """
        self._same(Z)
        return AlgebraElement(self.algebra, tuple(z @ b @ z for b, z in zip(self.blocks, Z.blocks)))

    # --- inspection ---
    def max_abs(self) -> float:
        return max(float(np.max(np.abs(b))) for b in self.blocks)

    def hermitian_residual(self) -> float:
        return max(float(np.max(np.abs(b - b.conj().T))) for b in self.blocks)

    def is_hermitian(self, tol: float = Config.HERMITIAN_TOL) -> bool:
        return self.hermitian_residual() <= tol * _scale(self.blocks)

    def hermitian_part(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, tuple((b + b.conj().T) / 2 for b in self.blocks))

    def eigvalsh(self) -> np.ndarray:
        """ Eigenvalues of the symmetrized blocks, concatenated in block order. """
        return np.concatenate([la.eigvalsh((b + b.conj().T) / 2) for b in self.blocks])

    def singular_values(self) -> List[np.ndarray]:
        return [la.svdvals(b) for b in self.blocks]

    def min_eigenvalue(self) -> float:
        return float(np.min(self.eigvalsh()))


class HermitianElement(AlgebraElement):
    """ Element with X = X* within the Hermiticity tolerance (relative to max(1, max|entry|)). """

    def _validate(self) -> None:
        if not self.is_hermitian():
            raise NotHermitianError(f"Element is not Hermitian: residual {self.hermitian_residual():.3e}")


class PositiveElement(HermitianElement):
    """ Hermitian element whose spectrum is ≥ −POSITIVITY_TOL (scaled). """

    def _validate(self) -> None:
        super()._validate()
        lowest = self.min_eigenvalue()
        if lowest < -Config.POSITIVITY_TOL * _scale(self.blocks):
            raise NotPositiveError(f"Element has negative eigenvalue {lowest:.3e}")


class StateElement(PositiveElement):
    """ Positive element with τ(A) = 1. """

    def _validate(self) -> None:
        super()._validate()
        t = trace(self.algebra, self)
        if abs(t - 1.0) > Config.STATE_TRACE_TOL:
            raise NotAStateError(f"State must have unit trace, got τ = {t:.12g}")


@dataclass(frozen=True, eq=False)
class ReferenceState(StateElement):
    """
    State whose spectrum is bounded below by an invertibility floor δ.

    Attributes:
        floor (float): The invertibility floor δ the state was validated against.
        min_eigenvalue_value (float): Smallest eigenvalue, computed on construction.
    """

    floor: float = Config.INVERTIBILITY_FLOOR
    min_eigenvalue_value: float = field(init=False, default=0.0)

    def _validate(self) -> None:
        super()._validate()
        lowest = self.min_eigenvalue()
        if not self.floor > 0:
            raise FloorViolationError(f"Invertibility floor must be positive, got {self.floor}")
        if lowest < self.floor - Config.POSITIVITY_TOL * _scale(self.blocks):
            raise FloorViolationError(
                f"Reference state spectrum {lowest:.3e} lies below the invertibility floor {self.floor:.1e}"
            )
        object.__setattr__(self, "min_eigenvalue_value", lowest)


# ----------------------------
# Tracial functional calculus
# ----------------------------
def _require(algebra: TracialAlgebra, *elements: AlgebraElement) -> None:
    for X in elements:
        if X.algebra != algebra:
            raise AlgebraMismatchError(f"Element of {X.algebra} used with {algebra}")


def trace(algebra: TracialAlgebra, X: AlgebraElement) -> complex:
    """
    Normalized faithful trace τ(X) = Σ_i w_i Tr(X_i).

    Args:
        algebra (TracialAlgebra): Owning algebra.
        X (AlgebraElement): Element of ``algebra``.

    Returns:
        complex: τ(X).
    """
    _require(algebra, X)
    return complex(sum(w * np.trace(b) for b, w in zip(X.blocks, algebra.trace_weights)))


def p_norm(algebra: TracialAlgebra, X: AlgebraElement, p: float) -> float:
    """
    Non-commutative L^p norm ‖X‖_p = τ(|X|^p)^{1/p}.

    |X| is evaluated through the singular values of each block. ``p = inf``
    gives the operator norm.

    Raises:
        ValueError: p < 1.
    """
    _require(algebra, X)
    if not p >= 1:
        raise ValueError(f"p-norms require p ≥ 1, got {p}")
    svals = X.singular_values()
    if np.isinf(p):
        return max(float(np.max(s, initial=0.0)) for s in svals)
    total = sum(w * float(np.sum(s ** p)) for s, w in zip(svals, algebra.trace_weights))
    return total ** (1.0 / p)


def inner(algebra: TracialAlgebra, X: AlgebraElement, Y: AlgebraElement) -> complex:
    """ ⟨X, Y⟩_τ = τ(Y* X): linear in X, conjugate-linear in Y. """
    _require(algebra, X, Y)
    return complex(np.vdot(Y.coords(), X.coords()))


def spectral_apply(
    X: AlgebraElement,
    f: Callable[[np.ndarray], np.ndarray],
    *,
    floor: float | None = None,
    clamp: bool = False,
) -> AlgebraElement:
    """
    Apply a scalar function to the spectrum of a Hermitian element, blockwise.

    The input is symmetrized ((X + X*)/2) before the eigendecomposition.

    Args:
        X (AlgebraElement): Hermitian element.
        f (Callable): Vectorized scalar function applied to the eigenvalues.
        floor (float | None): When given, every eigenvalue must lie strictly above it
            (required for log and negative powers).
        clamp (bool): Clamp eigenvalues in [−tol, 0) to 0 before applying ``f`` (for sqrt and abs).

    Returns:
        AlgebraElement: f(X) in the algebra of X.

    Raises:
        NotHermitianError: X is not Hermitian within tolerance.
        NotPositiveError: ``clamp`` was requested but the spectrum is genuinely negative.
        FloorViolationError: Spectrum at or below ``floor``.
    """
    if not X.is_hermitian():
        raise NotHermitianError(f"spectral_apply needs a Hermitian input, residual {X.hermitian_residual():.3e}")
    scale = _scale(X.blocks)
    out = []
    for b in X.blocks:
        vals, vecs = la.eigh((b + b.conj().T) / 2)
        if floor is not None and vals.size and vals.min() <= floor:
            raise FloorViolationError(f"Spectrum minimum {vals.min():.3e} is at or below the floor {floor:.1e}")
        if clamp:
            if vals.size and vals.min() < -Config.POSITIVITY_TOL * scale:
                raise NotPositiveError(f"Cannot clamp eigenvalue {vals.min():.3e} to zero")
            vals = np.clip(vals, 0.0, None)
        fvals = np.asarray(f(vals))
        out.append((vecs * fvals) @ vecs.conj().T)
    return AlgebraElement(X.algebra, tuple(out))


def positive_power(X: AlgebraElement, exponent: float) -> AlgebraElement:
    """
    X^exponent for positive X.

    Non-negative exponents clamp tiny negative eigenvalues; negative exponents
    require a strictly positive spectrum. For 0 < exponent < 1, eigenvalues
    below RANK_RTOL·n·λ_max of their block are treated as exact zeros.
    """
    if exponent < 0:
        return spectral_apply(X, lambda v: np.power(v, exponent), floor=0.0)
    if exponent >= 1:
        return spectral_apply(X, lambda v: np.power(v, exponent), clamp=True)

    def _fractional(v: np.ndarray) -> np.ndarray:
        if not v.size:
            return v
        cutoff = Config.RANK_RTOL * v.size * float(v.max())
        return np.power(np.where(v > cutoff, v, 0.0), exponent)

    return spectral_apply(X, _fractional, clamp=True)


def element_abs(X: AlgebraElement) -> AlgebraElement:
    """ |X| = (X*X)^{1/2}. """
    return spectral_apply(X.adjoint() @ X, np.sqrt, clamp=True)


# ----------------------------
# Seeded generators
# ----------------------------
def _ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def random_element(algebra: TracialAlgebra, seed: SeedLike) -> AlgebraElement:
    """ Element with independent complex Gaussian entries in every block. """
    rng = make_rng(seed)
    return AlgebraElement(algebra, tuple(_ginibre(rng, n, n) / np.sqrt(2 * n) for n in algebra.block_dims))


def random_hermitian(algebra: TracialAlgebra, seed: SeedLike) -> HermitianElement:
    rng = make_rng(seed)
    blocks = []
    for n in algebra.block_dims:
        g = _ginibre(rng, n, n) / np.sqrt(2 * n)
        blocks.append((g + g.conj().T) / 2)
    return HermitianElement(algebra, tuple(blocks))


def random_state(algebra: TracialAlgebra, seed: SeedLike, rank: int | None = None) -> StateElement:
    """
    Random density element G G* / τ(G G*) with Ginibre G in each block.

    Args:
        algebra (TracialAlgebra): Owning algebra.
        seed (SeedLike): Seed or generator.
        rank (int | None): Maximum rank per block; None gives full rank almost surely.

    Returns:
        StateElement: Positive element with τ = 1.
    """
    rng = make_rng(seed)
    blocks = []
    for n in algebra.block_dims:
        g = _ginibre(rng, n, n if rank is None else max(1, min(rank, n)))
        blocks.append(g @ g.conj().T)
    total = sum(w * np.trace(b).real for b, w in zip(blocks, algebra.trace_weights))
    return StateElement(algebra, tuple(b / total for b in blocks))


def max_feasible_floor(algebra: TracialAlgebra) -> float:
    """ Upper bound 1/(Σ n_i · max w_i) for the invertibility floor of a random reference state. """
    return 1.0 / (algebra.total_dim * max(algebra.trace_weights))


def random_reference_state(
    algebra: TracialAlgebra,
    seed: SeedLike,
    floor: float = Config.INVERTIBILITY_FLOOR,
) -> ReferenceState:
    """
    Random reference state (1 − δ)·ρ + δ·1 with ρ a random state.

    The normalized identity has τ(1) = 1 and spectrum {1}, so the mixture is a
    state whose spectrum is bounded below by δ.

    Raises:
        FloorViolationError: δ outside (0, 1/(Σ n_i · max w_i)).
    """
    if not 0.0 < floor < max_feasible_floor(algebra):
        raise FloorViolationError(
            f"Invertibility floor {floor} is infeasible for {algebra} (must lie in (0, {max_feasible_floor(algebra):.3g}))"
        )
    rho = random_state(algebra, seed)
    mixed = (1.0 - floor) * rho + floor * algebra.identity()
    logger.debug(f"Reference state on {algebra} with floor {floor:.1e}")
    return ReferenceState(algebra, mixed.blocks, floor=floor)


def haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """ Haar-distributed n×n unitary via QR of a Ginibre matrix with phase correction. """
    q, r = np.linalg.qr(_ginibre(rng, n, n))
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_unitary(algebra: TracialAlgebra, seed: SeedLike) -> AlgebraElement:
    """ Block-diagonal unitary with independent Haar blocks. """
    rng = make_rng(seed)
    return AlgebraElement(algebra, tuple(haar_unitary(rng, n) for n in algebra.block_dims))


# ----------------------------
# JSON encoding
# ----------------------------
def encode_matrix(matrix: np.ndarray) -> List[List[List[float]]]:
    """ Nested [re, im] pairs, row by row. """
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix, dtype=complex)]


def decode_matrix(data: Sequence[Sequence[Sequence[float]]]) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(f"Expected rows of [re, im] pairs, got array of shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def element_to_json(X: AlgebraElement) -> Dict[str, Any]:
    return {"algebra": X.algebra.descriptor(), "blocks": [encode_matrix(b) for b in X.blocks]}


def element_from_json(data: Dict[str, Any], cls: type = AlgebraElement, **kwargs: Any) -> AlgebraElement:
    """ Decode an element and validate it as ``cls`` (e.g. StateElement, ReferenceState). """
    algebra = TracialAlgebra.from_descriptor(data["algebra"])
    return cls(algebra, tuple(decode_matrix(b) for b in data["blocks"]), **kwargs)
