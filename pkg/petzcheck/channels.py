"""
Completely positive, weighted-trace-preserving maps between tracial algebras.

A Channel is carried as Kraus operators acting on the block-diagonal
embeddings C^{N_src} → C^{N_tgt}:

    φ(X) = Σ_j K_j X K_j*.

On construction every channel eagerly computes and caches:

- its Choi matrix on M_{N_src} ⊗ M_{N_tgt} (complete positivity),
- the block-preservation and weighted trace-preservation residuals,
- its Superoperator: the matrix of φ in orthonormal L² coordinates.

Because the coordinates are orthonormal for ⟨·,·⟩_τ, the L² adjoint φ* is
the conjugate transpose of that matrix.

Builders:
    identity_channel, unitary_channel, pinching_channel, trace_channel,
    direct_sum, tensor_channel, compose, random_channel, kraus_from_choi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Sequence

import numpy as np
import scipy.linalg as la

import petzcheck.config as Config
from petzcheck.algebra_core import (
    AlgebraElement,
    ReferenceState,
    SeedLike,
    TracialAlgebra,
    decode_matrix,
    encode_matrix,
    make_rng,
    p_norm,
)
from petzcheck.exceptions import (
    AlgebraMismatchError,
    InvalidAlgebraError,
    MalformedChannelError,
    NumericalBreakdownError,
    StrictnessError,
)

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)


# ----------------------------
# Superoperators
# ----------------------------
@dataclass(frozen=True, eq=False)
class Superoperator:
    """
    Matrix of a linear map in orthonormal weighted-L² coordinates.

    Attributes:
        source_dim (int): L² dimension of the domain.
        target_dim (int): L² dimension of the codomain.
        matrix (np.ndarray): ``target_dim × source_dim`` complex matrix.
        source (TracialAlgebra | None): Domain algebra, when known (enables element application).
        target (TracialAlgebra | None): Codomain algebra, when known.
    """

    source_dim: int
    target_dim: int
    matrix: np.ndarray
    source: TracialAlgebra | None = field(default=None)
    target: TracialAlgebra | None = field(default=None)

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.shape != (self.target_dim, self.source_dim):
            raise ValueError(
                f"Superoperator matrix has shape {matrix.shape}, expected {(self.target_dim, self.source_dim)}"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def between(cls, source: TracialAlgebra, target: TracialAlgebra, matrix: np.ndarray) -> "Superoperator":
        return cls(source.l2_dim, target.l2_dim, matrix, source, target)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        """ Composition self ∘ other. """
        if other.target_dim != self.source_dim:
            raise ValueError(f"Cannot compose {self.source_dim}-dim input with {other.target_dim}-dim output")
        return Superoperator(other.source_dim, self.target_dim, self.matrix @ other.matrix, other.source, self.target)

    def __call__(self, X: AlgebraElement) -> AlgebraElement:
        if self.source is None or self.target is None:
            raise ValueError("Superoperator was built without algebras; apply it to coordinate vectors instead")
        if X.algebra != self.source:
            raise AlgebraMismatchError(f"Superoperator acts on {self.source}, got an element of {X.algebra}")
        return AlgebraElement.from_coords(self.target, self.matrix @ X.coords())

    def adjoint(self) -> "Superoperator":
        return Superoperator(self.target_dim, self.source_dim, self.matrix.conj().T, self.target, self.source)

    def operator_norm(self) -> float:
        """ Largest singular value. """
        if self.matrix.size == 0:
            return 0.0
        return float(la.svdvals(self.matrix)[0])

    def symmetrization_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def hermitian_part(self) -> np.ndarray:
        return (self.matrix + self.matrix.conj().T) / 2


def left_multiplication(X: AlgebraElement) -> Superoperator:
    """ L_X: Y ↦ XY in orthonormal coordinates (block-diagonal kron(X_i, 1)). """
    mats = [np.kron(b, np.eye(b.shape[0])) for b in X.blocks]
    return Superoperator.between(X.algebra, X.algebra, la.block_diag(*mats))


def right_multiplication(X: AlgebraElement) -> Superoperator:
    """ R_X: Y ↦ YX in orthonormal coordinates (block-diagonal kron(1, X_iᵀ)). """
    mats = [np.kron(np.eye(b.shape[0]), b.T) for b in X.blocks]
    return Superoperator.between(X.algebra, X.algebra, la.block_diag(*mats))


def sandwich_operator(X: AlgebraElement, Y: AlgebraElement | None = None) -> Superoperator:
    """ L_X R_Y: Z ↦ X Z Y (Y defaults to X). """
    return left_multiplication(X) @ right_multiplication(X if Y is None else Y)


# ----------------------------
# Channel
# ----------------------------
class ChannelResiduals(NamedTuple):
    """ Invariant residuals measured when a channel is constructed. """

    block: float
    choi_min_eigenvalue: float
    trace_preservation: float


class StrictnessReport(NamedTuple):
    """ Outcome of a strictness test: φ(B) ≥ floor. """

    is_strict: bool
    margin: float


def choi_from_kraus(kraus: np.ndarray) -> np.ndarray:
    # C[(a, r), (b, s)] = Σ_j K_j[r, a] conj(K_j[s, b]) = (φ(E_ab))[r, s]
    m, n_out, n_in = kraus.shape
    vecs = kraus.transpose(0, 2, 1).reshape(m, n_in * n_out)
    return vecs.T @ vecs.conj()


def choi_min_eigenvalue(choi: np.ndarray) -> float:
    """ Smallest eigenvalue of the Hermitian part of ``choi``, normalized by max(1, λ_max). """
    eigs = la.eigvalsh((choi + choi.conj().T) / 2)
    return float(eigs[0]) / max(1.0, float(eigs[-1]))


class Channel:
    """
    Completely positive, weighted-trace-preserving map between tracial algebras.

    Args:
        source (TracialAlgebra): Domain algebra (Kraus columns index C^{N_src}).
        target (TracialAlgebra): Codomain algebra (Kraus rows index C^{N_tgt}).
        kraus (Sequence[np.ndarray] | np.ndarray): Kraus operators, each N_tgt × N_src.
        name (str): Label used in logs and reports.
        validate (bool): Raise MalformedChannelError when an invariant fails.

    Raises:
        MalformedChannelError: Block preservation residual above BLOCK_TOL, Choi eigenvalue
            below CHOI_FLOOR, or trace-preservation residual above TP_TOL.
    """

    def __init__(
        self,
        source: TracialAlgebra,
        target: TracialAlgebra,
        kraus: Sequence[np.ndarray] | np.ndarray,
        name: str = "channel",
        validate: bool = True,
    ) -> None:
        ops = np.array(kraus, dtype=complex)
        if ops.ndim == 2:
            ops = ops[None, :, :]
        if ops.ndim != 3 or ops.shape[0] == 0 or ops.shape[1:] != (target.total_dim, source.total_dim):
            raise MalformedChannelError(
                f"Kraus operators must form a non-empty list of {target.total_dim}×{source.total_dim} matrices, "
                f"got array of shape {ops.shape}"
            )
        ops.setflags(write=False)

        self.source = source
        self.target = target
        self.kraus = ops
        self.name = name

        choi = choi_from_kraus(ops)
        choi.setflags(write=False)
        self.choi = choi
        self.residuals = self._measure_residuals()
        if validate:
            self._check_residuals()
        self.superoperator = self._assemble_superoperator()
        logger.debug(f"Built {self.name}: {source} → {target}, {ops.shape[0]} Kraus operators, {self.residuals}")

    def __repr__(self) -> str:
        return f"Channel({self.name!r}, {self.source} → {self.target}, kraus={self.kraus.shape[0]})"

    def __call__(self, X: AlgebraElement) -> AlgebraElement:
        return apply(self, X)

    @property
    def num_kraus(self) -> int:
        return int(self.kraus.shape[0])

    def _choi4(self) -> np.ndarray:
        n_in, n_out = self.source.total_dim, self.target.total_dim
        return self.choi.reshape(n_in, n_out, n_in, n_out)

    def _measure_residuals(self) -> ChannelResiduals:
        choi4 = self._choi4()
        scale = max(1.0, float(np.max(np.abs(self.choi), initial=0.0)))

        # φ(E_ab) for a, b in the same source block must stay in the target blocks
        images = choi4.transpose(0, 2, 1, 3)[self.source.block_mask]
        block = float(np.max(np.abs(images[:, ~self.target.block_mask]), initial=0.0)) / scale

        choi_min = choi_min_eigenvalue(self.choi)

        # Σ_j K_j* W' K_j compressed to the source blocks must equal W
        S = np.einsum("jra,r,jrb->ab", self.kraus.conj(), self.target.weight_diagonal, self.kraus)
        S = np.where(self.source.block_mask, S, 0.0)
        tp = float(np.max(np.abs(S - np.diag(self.source.weight_diagonal))))
        return ChannelResiduals(block, choi_min, tp)

    def _check_residuals(self) -> None:
        r = self.residuals
        if r.block > Config.BLOCK_TOL:
            raise MalformedChannelError(f"{self.name}: block preservation residual {r.block:.3e} > {Config.BLOCK_TOL:.0e}")
        if r.choi_min_eigenvalue < Config.CHOI_FLOOR:
            raise MalformedChannelError(
                f"{self.name}: Choi matrix has eigenvalue {r.choi_min_eigenvalue:.3e} < {Config.CHOI_FLOOR:.0e}"
            )
        if r.trace_preservation > Config.TP_TOL:
            raise MalformedChannelError(
                f"{self.name}: trace preservation residual {r.trace_preservation:.3e} > {Config.TP_TOL:.0e}"
            )

    def _assemble_superoperator(self) -> Superoperator:
        src_rows, src_cols, src_roots = self.source.coord_layout
        tgt_rows, tgt_cols, tgt_roots = self.target.coord_layout
        choi4 = self._choi4()
        # column k is φ(w_i^{-1/2} E_ab) in target coordinates
        matrix = choi4[src_rows[None, :], tgt_rows[:, None], src_cols[None, :], tgt_cols[:, None]]
        matrix = matrix * (tgt_roots[:, None] / src_roots[None, :])
        return Superoperator.between(self.source, self.target, matrix)


# ----------------------------
# Channel operations
# ----------------------------
def apply(phi: Channel, X: AlgebraElement) -> AlgebraElement:
    """
    Evaluate φ(X) = Σ_j K_j X K_j*, re-projected onto the target blocks.

    Args:
        phi (Channel): The channel.
        X (AlgebraElement): Element of the source algebra.

    Returns:
        AlgebraElement: φ(X) in the target algebra.

    Raises:
        AlgebraMismatchError: X does not belong to the source algebra.
        MalformedChannelError: The output leaves the target blocks by more than BLOCK_TOL.
    """
    if X.algebra != phi.source:
        raise AlgebraMismatchError(f"{phi.name} acts on {phi.source}, got an element of {X.algebra}")
    dense = np.einsum("jra,ab,jsb->rs", phi.kraus, X.dense(), phi.kraus.conj())
    try:
        return AlgebraElement.from_dense(phi.target, dense, tol=Config.BLOCK_TOL)
    except AlgebraMismatchError as e:
        raise MalformedChannelError(f"{phi.name} does not preserve the block structure: {e}") from e


def l2_superoperator(phi: Channel) -> Superoperator:
    """ Matrix of φ in orthonormal weighted-L² coordinates. """
    return phi.superoperator


def adjoint(phi: Channel) -> Superoperator:
    """ The L² adjoint φ*: L²(target) → L²(source), a conjugate transpose in orthonormal coordinates. """
    return phi.superoperator.adjoint()


def adjoint_apply(phi: Channel, Y: AlgebraElement) -> AlgebraElement:
    """ φ*(Y) for Y in the target algebra. """
    return adjoint(phi)(Y)


def is_strict(phi: Channel, B: AlgebraElement, floor: float = Config.STRICTNESS_FLOOR) -> StrictnessReport:
    """
    Whether φ maps the positive invertible B to an element with spectrum ≥ floor.

    Returns:
        StrictnessReport: ``is_strict`` flag and the smallest eigenvalue of φ(B) as margin.
    """
    margin = apply(phi, B).min_eigenvalue()
    return StrictnessReport(margin >= floor, margin)


def reference_image(phi: Channel, B: ReferenceState, floor: float = Config.STRICTNESS_FLOOR) -> ReferenceState:
    """
    φ(B) as a reference state of the target algebra.

    Raises:
        StrictnessError: φ(B) has an eigenvalue below ``floor``.
    """
    image = apply(phi, B).hermitian_part()
    margin = image.min_eigenvalue()
    if margin < floor:
        raise StrictnessError(f"{phi.name} is not strict for B: min eig φ(B) = {margin:.3e} < {floor:.0e}")
    return ReferenceState(phi.target, image.blocks, floor=floor)


def l2_bound_margin(phi: Channel, X: AlgebraElement) -> float:
    """ ‖φ(1)‖·‖X‖₂² − ‖φ(X)‖₂², non-negative for every CPTP φ. """
    unit_image = apply(phi, phi.source.identity())
    bound = p_norm(phi.target, unit_image, np.inf) * p_norm(phi.source, X, 2) ** 2
    return bound - p_norm(phi.target, apply(phi, X), 2) ** 2


def adjoint_positivity_margin(phi: Channel, A: AlgebraElement) -> float:
    """ Smallest eigenvalue of φ*(A); non-negative whenever A is positive. """
    return adjoint_apply(phi, A).hermitian_part().min_eigenvalue()


def choi_lifting_margin(phi: Channel, level: int) -> float:
    """
    Smallest Choi eigenvalue of φ ⊗ id_level, normalized by the largest.

    This is the positivity of the lifted map φ_n on M_n(M) checked at the
    matrix level n = ``level``.
    """
    eye = np.eye(level)
    lifted = np.stack([np.kron(K, eye) for K in phi.kraus])
    return choi_min_eigenvalue(choi_from_kraus(lifted))


# ----------------------------
# Builders
# ----------------------------
def identity_channel(algebra: TracialAlgebra) -> Channel:
    return Channel(algebra, algebra, [np.eye(algebra.total_dim)], name="identity")


def unitary_channel(algebra: TracialAlgebra, U: AlgebraElement) -> Channel:
    """ X ↦ U X U* for a block-diagonal unitary U. """
    if U.algebra != algebra:
        raise AlgebraMismatchError(f"Unitary lives in {U.algebra}, expected {algebra}")
    dense = U.dense()
    defect = float(np.max(np.abs(dense.conj().T @ dense - np.eye(algebra.total_dim))))
    if defect > 1e-10:
        raise MalformedChannelError(f"Element is not unitary: ‖U*U − 1‖_max = {defect:.3e}")
    return Channel(algebra, algebra, [dense], name="unitary")


def pinching_channel(algebra: TracialAlgebra) -> Channel:
    """ Conditional expectation onto the diagonal: Kraus operators |a⟩⟨a|. """
    N = algebra.total_dim
    kraus = np.zeros((N, N, N), dtype=complex)
    kraus[np.arange(N), np.arange(N), np.arange(N)] = 1.0
    return Channel(algebra, algebra, kraus, name="pinching")


def trace_channel(source: TracialAlgebra, target: TracialAlgebra | None = None) -> Channel:
    """ X ↦ τ(X)·1_target, with Kraus operators √w_b |a⟩⟨b|. """
    target = source if target is None else target
    n_in, n_out = source.total_dim, target.total_dim
    roots = np.sqrt(source.weight_diagonal)
    kraus = np.zeros((n_out * n_in, n_out, n_in), dtype=complex)
    for a in range(n_out):
        for b in range(n_in):
            kraus[a * n_in + b, a, b] = roots[b]
    return Channel(source, target, kraus, name="trace")


def direct_sum(*channels: Channel, masses: Sequence[float] | None = None) -> Channel:
    """
    φ₁ ⊕ φ₂ ⊕ ... between the direct-sum algebras.

    The summand k receives τ-mass ``masses[k]`` on both sides (default: equal
    masses), i.e. τ = Σ_k m_k τ_k. This keeps the sum trace preserving.
    """
    if not channels:
        raise ValueError("direct_sum needs at least one channel")
    masses = [1.0 / len(channels)] * len(channels) if masses is None else list(masses)
    if len(masses) != len(channels) or any(m <= 0 for m in masses) or abs(sum(masses) - 1.0) > 1e-12:
        raise ValueError(f"masses must be positive, one per channel, and sum to 1, got {masses}")

    def _sum_algebra(parts: Sequence[TracialAlgebra]) -> TracialAlgebra:
        dims = tuple(n for a in parts for n in a.block_dims)
        weights = tuple(m * w for a, m in zip(parts, masses) for w in a.trace_weights)
        return TracialAlgebra(dims, weights)

    source = _sum_algebra([c.source for c in channels])
    target = _sum_algebra([c.target for c in channels])
    row = col = 0
    kraus: List[np.ndarray] = []
    for c in channels:
        for K in c.kraus:
            big = np.zeros((target.total_dim, source.total_dim), dtype=complex)
            big[row:row + c.target.total_dim, col:col + c.source.total_dim] = K
            kraus.append(big)
        row += c.target.total_dim
        col += c.source.total_dim
    return Channel(source, target, kraus, name="⊕".join(c.name for c in channels))


def tensor_channel(phi1: Channel, phi2: Channel) -> Channel:
    """ φ₁ ⊗ φ₂ for channels between single-block algebras. """
    for c in (phi1, phi2):
        if not (c.source.is_single_block and c.target.is_single_block):
            raise InvalidAlgebraError(f"tensor_channel needs single-block algebras, got {c!r}")
    source = TracialAlgebra.full_matrix(phi1.source.total_dim * phi2.source.total_dim)
    target = TracialAlgebra.full_matrix(phi1.target.total_dim * phi2.target.total_dim)
    kraus = [np.kron(K1, K2) for K1 in phi1.kraus for K2 in phi2.kraus]
    return Channel(source, target, kraus, name=f"{phi1.name}⊗{phi2.name}")


def kraus_from_choi(
    choi: np.ndarray,
    n_in: int,
    n_out: int,
    floor: float = Config.CHOI_FLOOR,
) -> np.ndarray:
    """
    Minimal Kraus family of a CP map from its Choi matrix.

    Eigenvalues are normalized by max(1, λ_max) before comparison with
    ``floor``. Negative values in [floor, 0) are clamped to zero; anything
    lower aborts.

    Returns:
        np.ndarray: Kraus operators of shape (m, n_out, n_in).

    Raises:
        NumericalBreakdownError: Choi eigenvalue below ``floor``.
    """
    vals, vecs = la.eigh((choi + choi.conj().T) / 2)
    lowest = float(vals[0]) / max(1.0, float(vals[-1]))
    if lowest < floor:
        raise NumericalBreakdownError(f"Choi eigenvalue {lowest:.3e} below the floor {floor:.0e}")
    keep = vals > 0
    if not np.any(keep):
        raise NumericalBreakdownError("Choi matrix has no positive eigenvalue")
    vecs = vecs[:, keep] * np.sqrt(vals[keep])
    return vecs.T.reshape(-1, n_in, n_out).transpose(0, 2, 1)


def compose(phi2: Channel, phi1: Channel, minimal: bool = True) -> Channel:
    """
    φ₂ ∘ φ₁.

    Args:
        phi2 (Channel): Applied second.
        phi1 (Channel): Applied first.
        minimal (bool): Re-derive a minimal Kraus family from the Choi matrix of the product.
    """
    if phi1.target != phi2.source:
        raise AlgebraMismatchError(f"Cannot compose {phi2!r} after {phi1!r}")
    kraus = np.stack([K2 @ K1 for K2 in phi2.kraus for K1 in phi1.kraus])
    if minimal and kraus.shape[0] > phi1.source.total_dim * phi2.target.total_dim:
        kraus = kraus_from_choi(choi_from_kraus(kraus), phi1.source.total_dim, phi2.target.total_dim)
    return Channel(phi1.source, phi2.target, kraus, name=f"{phi2.name}∘{phi1.name}")


def random_channel(source: TracialAlgebra, target: TracialAlgebra, num_kraus: int, seed: SeedLike) -> Channel:
    """
    Random channel M_n → M_m with ``num_kraus`` Ginibre Kraus operators.

    Trace preservation is enforced by K_j ← K_j S^{-1/2} W^{1/2} with
    S = Σ_j K_j* W' K_j, which gives Σ_j K_j* W' K_j = W exactly.

    Raises:
        InvalidAlgebraError: Source or target has more than one block.
        NumericalBreakdownError: S stayed singular after MAX_RESAMPLES draws.
    """
    if not (source.is_single_block and target.is_single_block):
        raise InvalidAlgebraError("random_channel needs single-block source and target algebras")
    if num_kraus < 1:
        raise ValueError(f"num_kraus must be positive, got {num_kraus}")
    rng = make_rng(seed)
    n, m = source.total_dim, target.total_dim
    w_src, w_tgt = source.trace_weights[0], target.trace_weights[0]
    for attempt in range(Config.MAX_RESAMPLES):
        kraus = rng.standard_normal((num_kraus, m, n)) + 1j * rng.standard_normal((num_kraus, m, n))
        S = w_tgt * np.einsum("jra,jrb->ab", kraus.conj(), kraus)
        vals, vecs = la.eigh((S + S.conj().T) / 2)
        if vals[0] <= 0 or vals[-1] / vals[0] > Config.SINGULAR_COND:
            logger.debug(f"random_channel: singular S (attempt {attempt + 1}), resampling")
            continue
        correction = (vecs * (vals ** -0.5)) @ vecs.conj().T * np.sqrt(w_src)
        return Channel(source, target, kraus @ correction, name="random")
    raise NumericalBreakdownError(f"random_channel: S singular after {Config.MAX_RESAMPLES} draws")


# ----------------------------
# JSON encoding
# ----------------------------
def channel_to_json(phi: Channel) -> Dict[str, Any]:
    return {
        "name": phi.name,
        "source": phi.source.descriptor(),
        "target": phi.target.descriptor(),
        "kraus": [encode_matrix(K) for K in phi.kraus],
    }


def channel_from_json(data: Dict[str, Any]) -> Channel:
    """ Rebuild and re-validate a channel; a corrupted Kraus entry surfaces as MalformedChannelError. """
    return Channel(
        TracialAlgebra.from_descriptor(data["source"]),
        TracialAlgebra.from_descriptor(data["target"]),
        [decode_matrix(K) for K in data["kraus"]],
        name=data.get("name", "channel"),
    )
