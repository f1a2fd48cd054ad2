"""
Randomized verification harness.

Features:
- HarnessConfig loaded from a TOML file (tomlkit) and validated up front.
- A registry mapping every check name to the inequality it certifies and
  its default slack floor.
- Deterministic trials: each (algebra, family, trial) gets a seed derived
  from the master seed by counter; an instance is built from that seed and
  evaluated from the instance alone, so a persisted instance replays to
  bit-identical margins.
- Margins carrying S₂ values are relative to max(1, S₂(A|B)); the spectrum
  floor of B puts S₂ near 1e6.
- Process-pool execution, one worker per CPU by default, with results
  identical to a serial run.
- JSON and CSV reports carrying ``schema_version``; timestamps live only in
  the report header.
- Failing trials and counterexample candidates of the logarithmic recovery
  bound are persisted as replayable instance files.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg as la
import tomlkit
from tomlkit.exceptions import ParseError

import petzcheck.config as Config
from petzcheck.algebra_core import (
    AlgebraElement,
    ReferenceState,
    StateElement,
    TracialAlgebra,
    element_from_json,
    element_to_json,
    inner,
    max_feasible_floor,
    random_element,
    random_reference_state,
    random_state,
    random_unitary,
)
from petzcheck.channels import (
    Channel,
    adjoint_apply,
    adjoint_positivity_margin,
    apply,
    channel_from_json,
    channel_to_json,
    choi_lifting_margin,
    compose,
    direct_sum,
    is_strict,
    l2_bound_margin,
    pinching_channel,
    random_channel,
    trace_channel,
    unitary_channel,
)
from petzcheck.entropy import sandwiched_entropy
from petzcheck.exceptions import (
    ConfigError,
    InstanceFormatError,
    InvalidAlgebraError,
    MalformedChannelError,
    NumericalBreakdownError,
    PetzCheckError,
)
from petzcheck.fidelity import (
    FidelityPair,
    bures_triangle_slack,
    concavity_grid,
    fidelity,
    fidelity_bound_slack,
    fidelity_unitary_oracle,
    monotonicity_slack,
    powers_stormer_slack,
    transition_concavity_slack,
)
from petzcheck.recovery import (
    RecoverySetup,
    am_adjoint_residual,
    chain_report,
    contraction_defect_slack,
    kl_recovery_gap,
    petz_sufficiency_check,
    whitened_channel,
    whitened_coords,
)
from petzcheck.superop_checks import (
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
    sandwich_psd_margin,
    trace_vs_am_margin,
)

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).with_name("harness.toml")

FAMILIES = ("unitary", "pinching", "trace", "random_single_block", "direct_sum", "composed")
OUTPUT_FORMATS = ("json", "csv")
PERSIST_MODES = ("none", "failures", "all")


# ----------------------------
# Check registry
# ----------------------------
class Check(NamedTuple):
    """
    One verified statement.

    Attributes:
        name (str): Report key.
        statement (str): The inequality, as it is checked.
        tolerance (float): Default slack floor; the check passes iff margin ≥ −tolerance.
        asserted (bool): Whether a negative margin fails the trial.
        extended (bool): Evaluated only on the first ``superop_trials`` trials of each grid cell.
    """

    name: str
    statement: str
    tolerance: float
    asserted: bool = True
    extended: bool = False


CHECKS: Dict[str, Check] = {c.name: c for c in (
    # channels
    Check("l2_boundedness", "‖φ(X)‖₂² ≤ ‖φ(1)‖·‖X‖₂²", 1e-9),
    Check("adjoint_positivity", "φ*(P) ≥ 0 for positive P", 1e-9),
    Check("duality", "⟨φ(X), Y⟩_τ′ = ⟨X, φ*(Y)⟩_τ", 1e-11),
    Check("choi_lifting", "Choi matrix of φ ⊗ id₂ is positive", 1e-10, extended=True),
    # entropy
    Check("dpi_s2", "S₂(φ(A)|φ(B)) ≤ S₂(A|B)", 1e-9),
    Check("dpi_s_general", "S_p(φ(A)|φ(B)) ≤ S_p(A|B) at the configured p (reported only)", 0.0, asserted=False),
    Check("am_contraction", "‖φ(X)‖_{φ(B),2} ≤ ‖X‖_{B,2}", 1e-9),
    Check("trace_vs_am", "‖X‖₁² ≤ ‖X‖²_{B,2}", 1e-9),
    # recovery
    Check("petz_fixed_point", "R(φ(B)) = B", 1e-9),
    Check("petz_choi_positivity", "Choi matrix of R is positive", 1e-10),
    Check("petz_trace_preservation", "R preserves the weighted trace", 1e-10),
    Check("petz_adjoint", "⟨φ(X), Y⟩_{φ(B)} = ⟨X, R(Y)⟩_B", 1e-9),
    Check("am_recovery", "‖A − R(φ(A))‖²_{B,2} ≤ S₂(A|B) − S₂(φ(A)|φ(B))", 1e-9),
    Check("l1_recovery", "‖A − R(φ(A))‖₁² ≤ S₂(A|B) − S₂(φ(A)|φ(B))", 1e-9),
    Check("fidelity_recovery", "4(1 − F(A|R(φ(A))))² ≤ ‖A − R(φ(A))‖₁²", 1e-9),
    Check("trace_vs_am_residual", "‖A − R(φ(A))‖₁² ≤ ‖A − R(φ(A))‖²_{B,2}", 1e-9),
    Check("scaled_trace_bound", "‖A − R(φ(A))‖₁² ≤ ‖B‖₂²‖B⁻¹‖·[S₂(A|B) − S₂(φ(A)|φ(B))]", 1e-9),
    Check("contraction_defect", "‖x − T*Tx‖² ≤ ‖x‖² − ‖Tx‖² for the whitened channel", 1e-10),
    Check("perfect_recovery", "unitary channels: gap, residuals and fidelity term vanish", 1e-10),
    Check("petz_sufficiency", "R(φ(A)) = A implies vanishing KL and S₂ gaps", 1e-6),
    Check("kl_recovery_gap", "−2 ln F(A|R(φ(A))) ≤ D(A|B) − D(φ(A)|φ(B)) (reported only)", 0.0, asserted=False),
    # superoperator inequalities
    Check("v_contraction", "V = R_{B^½} φ* R_{φ(B)^-½} is a contraction", 1e-9, extended=True),
    Check("modular_psd", "V*ΔV ≤ Δ₀", 1e-9, extended=True),
    Check("concavity_step", "V*Δ^½V ≤ Δ₀^½", 1e-9, extended=True),
    Check("sandwich_psd", "Φ L_{B^½}R_{B^½} Φ* ≤ L_{φ(B)^½}R_{φ(B)^½}", 1e-9, extended=True),
    Check("adjoint_norm_identity", "‖V*(X)‖₂² = τ′(φ(XB^½) φ(B)⁻¹ φ(B^½X*))", 1e-10, extended=True),
    Check("amgm_psd", "2(L_B + R_B)⁻¹ ≤ L_{B^-½}R_{B^-½}", 1e-9, extended=True),
    Check("modular_spectrum", "spec(L_B R_{B⁻¹}) = {λ_r/λ_s}", 1e-9, extended=True),
    Check("multiplication_commute", "[L_X, R_B] = 0", 1e-11, extended=True),
    # fidelity
    Check("fidelity_oracle", "|⟨U A^½, B^½⟩_τ| ≤ F(A|B) for sampled unitaries U", 1e-12, extended=True),
    Check("polar_attainment", "the polar unitary attains F(A|B)", 1e-10, extended=True),
    Check("bures_triangle", "d(A, C) ≤ d(A, B) + d(B, C)", 1e-9),
    Check("powers_stormer", "‖A^½ − B^½‖₂² ≤ ‖A − B‖₁", 1e-10),
    Check("fidelity_trace_bound", "2(1 − F(A|B)) ≤ ‖A − B‖₁", 1e-10),
    Check("fidelity_monotonicity", "F(A|B) ≤ F(φ(A)|φ(B))", 1e-9),
    Check("joint_concavity", "F is jointly concave", 1e-9),
    Check("transition_concavity", "F² is concave in each argument", 1e-9),
)}


# ----------------------------
# Configuration
# ----------------------------
@dataclass(frozen=True)
class EvaluationSettings:
    """ Everything ``evaluate_instance`` needs besides the instance itself. """

    tolerances: Dict[str, float]
    skip: Tuple[str, ...] = ()
    strictness_floor: float = Config.STRICTNESS_FLOOR
    oracle_samples: int = 200
    lambda_grid: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    general_p: float = 3.0

    def to_json(self) -> Dict[str, Any]:
        return {
            "tolerances": dict(self.tolerances),
            "skip": list(self.skip),
            "strictness_floor": self.strictness_floor,
            "oracle_samples": self.oracle_samples,
            "lambda_grid": list(self.lambda_grid),
            "general_p": self.general_p,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "EvaluationSettings":
        return cls(
            tolerances={k: float(v) for k, v in data["tolerances"].items()},
            skip=tuple(data["skip"]),
            strictness_floor=float(data["strictness_floor"]),
            oracle_samples=int(data["oracle_samples"]),
            lambda_grid=tuple(float(x) for x in data["lambda_grid"]),
            general_p=float(data["general_p"]),
        )


_CONFIG_KEYS = {
    "algebras", "families", "trials", "superop_trials", "master_seed", "tolerances", "skip",
    "invertibility_floor", "strictness_floor", "oracle_samples", "lambda_grid", "general_p",
    "workers", "output",
}
_OUTPUT_KEYS = {"path", "format", "instances", "persist"}


@dataclass(frozen=True)
class HarnessConfig:
    """
    Validated harness configuration.

    Attributes:
        algebras (Tuple[TracialAlgebra, ...]): Algebra grid.
        families (Tuple[str, ...]): Channel families to draw from.
        trials (int): Trials per (algebra, family) cell.
        superop_trials (int): Leading trials per cell that also run the extended checks.
        master_seed (int): 64-bit seed all trial seeds derive from.
        tolerances (Dict[str, float]): Overrides of the registry slack floors.
        skip (Tuple[str, ...]): Checks deliberately not evaluated.
        invertibility_floor (float): δ for random reference states.
        strictness_floor (float): Lower bound for the spectrum of φ(B).
        oracle_samples (int): Sampled unitaries per fidelity oracle call.
        lambda_grid (Tuple[float, ...]): Mixing weights for the concavity checks.
        general_p (float): Order of the reported (non-asserted) sandwiched DPI margin.
        workers (int): Worker processes, one per CPU by default; 1 runs serially.
        output_path (Path | None): Report file.
        output_format (str): ``json`` or ``csv``.
        instances_dir (Path | None): Directory for persisted instances.
        persist (str): ``none``, ``failures`` (failures and counterexample candidates) or ``all``.

    Raises:
        ConfigError: Any field is out of range.
    """

    algebras: Tuple[TracialAlgebra, ...]
    families: Tuple[str, ...] = FAMILIES
    trials: int = 1000
    superop_trials: int = 200
    master_seed: int = 0
    tolerances: Dict[str, float] = field(default_factory=dict)
    skip: Tuple[str, ...] = ()
    invertibility_floor: float = Config.INVERTIBILITY_FLOOR
    strictness_floor: float = Config.STRICTNESS_FLOOR
    oracle_samples: int = 200
    lambda_grid: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    general_p: float = 3.0
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    output_path: Optional[Path] = None
    output_format: str = "json"
    instances_dir: Optional[Path] = None
    persist: str = "failures"

    def __post_init__(self) -> None:
        if not self.algebras:
            raise ConfigError("At least one algebra is required")
        if not self.families:
            raise ConfigError("At least one channel family is required")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ConfigError(f"Unknown channel families {sorted(unknown)}; expected a subset of {FAMILIES}")
        if self.trials < 1 or self.superop_trials < 0:
            raise ConfigError(f"trials must be ≥ 1 and superop_trials ≥ 0, got {self.trials}, {self.superop_trials}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        for name in list(self.tolerances) + list(self.skip):
            if name not in CHECKS:
                raise ConfigError(f"Unknown check {name!r}")
        for name, tol in self.tolerances.items():
            if not tol >= 0:
                raise ConfigError(f"Tolerance for {name} must be ≥ 0, got {tol}")
        for algebra in self.algebras:
            if not 0 < self.invertibility_floor < max_feasible_floor(algebra):
                raise ConfigError(f"Invertibility floor {self.invertibility_floor} is infeasible for {algebra}")
        if not self.strictness_floor > 0:
            raise ConfigError(f"strictness_floor must be positive, got {self.strictness_floor}")
        if self.oracle_samples < 1:
            raise ConfigError(f"oracle_samples must be positive, got {self.oracle_samples}")
        if not self.lambda_grid or any(not 0.0 <= lam <= 1.0 for lam in self.lambda_grid):
            raise ConfigError(f"lambda_grid must be a non-empty list of weights in [0, 1], got {self.lambda_grid}")
        if not self.general_p > 1 or math.isinf(self.general_p):
            raise ConfigError(f"general_p must be finite and > 1, got {self.general_p}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"Output format must be one of {OUTPUT_FORMATS}, got {self.output_format!r}")
        if self.persist not in PERSIST_MODES:
            raise ConfigError(f"persist must be one of {PERSIST_MODES}, got {self.persist!r}")

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "HarnessConfig":
        """
        Build a configuration from parsed TOML.

        Raises:
            ConfigError: Unknown keys, malformed values or invalid algebras.
        """
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"Unknown configuration keys {sorted(unknown)}")
        output = data.get("output", {})
        unknown = set(output) - _OUTPUT_KEYS
        if unknown:
            raise ConfigError(f"Unknown [output] keys {sorted(unknown)}")

        try:
            algebras = tuple(TracialAlgebra.from_descriptor(d) for d in data.get("algebras", []))
            kwargs: Dict[str, Any] = {"algebras": algebras}
            for key, convert in (
                ("trials", int), ("superop_trials", int), ("master_seed", int), ("invertibility_floor", float),
                ("strictness_floor", float), ("oracle_samples", int), ("general_p", float), ("workers", int),
            ):
                if key in data:
                    kwargs[key] = convert(data[key])
            if "families" in data:
                kwargs["families"] = tuple(str(f) for f in data["families"])
            if "skip" in data:
                kwargs["skip"] = tuple(str(s) for s in data["skip"])
            if "lambda_grid" in data:
                kwargs["lambda_grid"] = tuple(float(x) for x in data["lambda_grid"])
            if "tolerances" in data:
                kwargs["tolerances"] = {str(k): float(v) for k, v in data["tolerances"].items()}
            if "path" in output:
                kwargs["output_path"] = Path(output["path"])
            if "format" in output:
                kwargs["output_format"] = str(output["format"])
            if "instances" in output:
                kwargs["instances_dir"] = Path(output["instances"])
            if "persist" in output:
                kwargs["persist"] = str(output["persist"])
        except InvalidAlgebraError as e:
            raise ConfigError(f"Invalid algebra in configuration: {e}") from e
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigError(f"Malformed configuration value: {e}") from e
        return cls(**kwargs)

    def with_overrides(self, **overrides: Any) -> "HarnessConfig":
        """ Copy with the given fields replaced; ``None`` values are ignored. """
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, CHECKS[name].tolerance)

    def evaluation(self) -> EvaluationSettings:
        return EvaluationSettings(
            tolerances={name: self.tolerance(name) for name in CHECKS},
            skip=self.skip,
            strictness_floor=self.strictness_floor,
            oracle_samples=self.oracle_samples,
            lambda_grid=self.lambda_grid,
            general_p=self.general_p,
        )

    def describe(self) -> Dict[str, Any]:
        """ Deterministic summary of the configuration for report headers. """
        return {
            "algebras": [a.descriptor() for a in self.algebras],
            "families": list(self.families),
            "trials": self.trials,
            "superop_trials": self.superop_trials,
            "master_seed": self.master_seed,
            "invertibility_floor": self.invertibility_floor,
            **self.evaluation().to_json(),
        }


def load_config(path: str | Path) -> HarnessConfig:
    """
    Read a harness configuration from a TOML file.

    Raises:
        ConfigError: The file is missing, is not valid TOML, or holds invalid values.
    """
    path = Path(path)
    try:
        document = tomlkit.parse(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"Configuration file {path} not found") from e
    except ParseError as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    logger.debug(f"Loaded harness configuration from {path}")
    return HarnessConfig.from_mapping(document.unwrap())


def default_config() -> HarnessConfig:
    """ The configuration shipped with the package. """
    return load_config(DEFAULT_CONFIG_PATH)


# ----------------------------
# Instances
# ----------------------------
@dataclass(frozen=True, eq=False)
class TrialInstance:
    """
    All random data of one trial.

    Attributes:
        trial_id (str): ``a<algebra>-<family>-t<trial>``.
        seed (int): Derived seed the instance was drawn from.
        family (str): Channel family.
        extended (bool): Whether extended checks run on this instance.
        lam (float): Mixing weight for the single-argument concavity check.
        phi (Channel): The channel.
        B (ReferenceState): Reference state.
        A, A2 (StateElement): States of the source algebra (A drives the recovery chain).
        S1, S2 (StateElement): Further states for the fidelity checks.
        X (AlgebraElement): Generic source element.
        Y (AlgebraElement): Generic target element.
        P (StateElement): Positive element of the target.
    """

    trial_id: str
    seed: int
    family: str
    extended: bool
    lam: float
    phi: Channel
    B: ReferenceState
    A: StateElement
    A2: StateElement
    S1: StateElement
    S2: StateElement
    X: AlgebraElement
    Y: AlgebraElement
    P: StateElement

    @property
    def algebra(self) -> TracialAlgebra:
        return self.B.algebra

    def to_json(self, settings: EvaluationSettings) -> Dict[str, Any]:
        return {
            "schema_version": Config.SCHEMA_VERSION,
            "trial_id": self.trial_id,
            "seed": self.seed,
            "family": self.family,
            "extended": self.extended,
            "lam": self.lam,
            "channel": channel_to_json(self.phi),
            "B": {**element_to_json(self.B), "floor": self.B.floor},
            **{name: element_to_json(getattr(self, name)) for name in ("A", "A2", "S1", "S2", "X", "Y", "P")},
            "settings": settings.to_json(),
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "TrialInstance":
        """
        Rebuild an instance; channel invariants are re-validated.

        Raises:
            InstanceFormatError: Missing fields or a foreign schema version.
            MalformedChannelError: The stored Kraus operators no longer form a channel.
        """
        if data.get("schema_version") != Config.SCHEMA_VERSION:
            raise InstanceFormatError(f"Unsupported instance schema version {data.get('schema_version')!r}")
        try:
            states = {name: element_from_json(data[name], StateElement) for name in ("A", "A2", "S1", "S2", "P")}
            return cls(
                trial_id=str(data["trial_id"]),
                seed=int(data["seed"]),
                family=str(data["family"]),
                extended=bool(data["extended"]),
                lam=float(data["lam"]),
                phi=channel_from_json(data["channel"]),
                B=element_from_json(data["B"], ReferenceState, floor=float(data["B"]["floor"])),
                X=element_from_json(data["X"]),
                Y=element_from_json(data["Y"]),
                **states,
            )
        except MalformedChannelError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise InstanceFormatError(f"Malformed instance: missing or invalid field {e}") from e


def family_applicable(family: str, algebra: TracialAlgebra) -> bool:
    """ Raw random Kraus families only exist between single blocks; direct sums need several blocks. """
    if family == "random_single_block":
        return algebra.is_single_block
    if family == "direct_sum":
        return not algebra.is_single_block
    return True


def build_channel(family: str, algebra: TracialAlgebra, rng: np.random.Generator) -> Channel:
    """
    Draw a channel of the given family on ``algebra``.

    Raises:
        ConfigError: Unknown family, or a family that does not apply to ``algebra``.
    """
    if family not in FAMILIES or not family_applicable(family, algebra):
        raise ConfigError(f"Channel family {family!r} does not apply to {algebra}")
    if family == "unitary":
        return unitary_channel(algebra, random_unitary(algebra, rng))
    if family == "pinching":
        return pinching_channel(algebra)
    if family == "trace":
        return trace_channel(algebra)
    if family == "random_single_block":
        return random_channel(algebra, algebra, int(rng.integers(2, 5)), rng)
    if family == "direct_sum":
        parts = [
            random_channel(TracialAlgebra.full_matrix(n), TracialAlgebra.full_matrix(n), int(rng.integers(1, 4)), rng)
            for n in algebra.block_dims
        ]
        masses = [w * n for w, n in zip(algebra.trace_weights, algebra.block_dims)]
        return direct_sum(*parts, masses=masses)
    first = unitary_channel(algebra, random_unitary(algebra, rng))
    second = unitary_channel(algebra, random_unitary(algebra, rng))
    return compose(second, compose(pinching_channel(algebra), first))


def derive_seed(master_seed: int, algebra_index: int, family_index: int, trial: int) -> int:
    """ Counter-based per-trial seed. """
    sequence = np.random.SeedSequence(master_seed, spawn_key=(algebra_index, family_index, trial))
    return int(sequence.generate_state(1, np.uint64)[0])


def build_instance(
    algebra: TracialAlgebra,
    family: str,
    seed: int,
    trial_id: str,
    extended: bool,
    invertibility_floor: float = Config.INVERTIBILITY_FLOOR,
    strictness_floor: float = Config.STRICTNESS_FLOOR,
    lambda_grid: Tuple[float, ...] = (0.5,),
) -> TrialInstance:
    """
    Draw every random object of a trial from ``seed``.

    Channel and reference state are redrawn until φ is strict for B.

    Raises:
        NumericalBreakdownError: No strict pair after MAX_RESAMPLES draws.
    """
    rng = np.random.default_rng(seed)
    for attempt in range(Config.MAX_RESAMPLES):
        phi = build_channel(family, algebra, rng)
        B = random_reference_state(algebra, rng, invertibility_floor)
        if is_strict(phi, B, strictness_floor).is_strict:
            break
        logger.debug(f"{trial_id}: {phi.name} not strict for B (attempt {attempt + 1}), resampling")
    else:
        raise NumericalBreakdownError(f"{trial_id}: no strict channel after {Config.MAX_RESAMPLES} draws")

    max_rank = max(algebra.block_dims)
    A = random_state(algebra, rng, rank=int(rng.integers(1, max_rank + 1)))
    if family == "pinching" and rng.random() < 0.25:
        # pinching-invariant state, so the sufficiency check applies
        A = StateElement.from_element(apply(phi, A))
    return TrialInstance(
        trial_id=trial_id,
        seed=seed,
        family=family,
        extended=extended,
        lam=float(rng.choice(lambda_grid)),
        phi=phi,
        B=B,
        A=A,
        A2=random_state(algebra, rng),
        S1=random_state(algebra, rng, rank=int(rng.integers(1, max_rank + 1))),
        S2=random_state(algebra, rng),
        X=random_element(algebra, rng),
        Y=random_element(phi.target, rng),
        P=random_state(phi.target, rng),
    )


# ----------------------------
# Evaluation
# ----------------------------
@dataclass
class TrialReport:
    """
    Margins of one trial.

    Attributes:
        trial_id (str): Trial identifier.
        seed (int): Derived seed.
        algebra (Dict[str, Any]): Algebra descriptor.
        family (str): Channel family.
        margins (Dict[str, Optional[float]]): Check name → margin; None when the check does not apply.
        failures (List[str]): Asserted checks whose margin fell below −tolerance.
        error (Optional[str]): Error that aborted the trial.
    """

    trial_id: str
    seed: int
    algebra: Dict[str, Any]
    family: str
    margins: Dict[str, Optional[float]] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and not self.failures

    @property
    def counterexample_candidate(self) -> bool:
        gap = self.margins.get("kl_recovery_gap")
        return gap is not None and gap < 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "trial_id": self.trial_id,
            "seed": self.seed,
            "algebra": self.algebra,
            "family": self.family,
            "ok": self.ok,
            "error": self.error,
            "failures": list(self.failures),
            "margins": dict(sorted(self.margins.items())),
        }


class _Recorder:
    """ Collects margins, honoring the skip list. """

    def __init__(self, settings: EvaluationSettings) -> None:
        self.settings = settings
        self.margins: Dict[str, Optional[float]] = {}

    def __call__(self, name: str, compute: Callable[[], Optional[float]]) -> None:
        if name in self.settings.skip:
            return
        value = compute()
        self.margins[name] = None if value is None else float(value)

    def failures(self) -> List[str]:
        out = []
        for name, margin in self.margins.items():
            check = CHECKS[name]
            if check.asserted and margin is not None and not margin >= -self.settings.tolerances[name]:
                out.append(name)
        return sorted(out)


def evaluate_instance(instance: TrialInstance, settings: EvaluationSettings) -> TrialReport:
    """
    Evaluate every registered check on one instance.

    The result depends only on the instance and the settings; auxiliary
    randomness (sampled unitaries) is seeded from the instance seed.
    """
    inst = instance
    phi, B, A, X = inst.phi, inst.B, inst.A, inst.X
    source, target = phi.source, phi.target
    record = _Recorder(settings)
    report = TrialReport(inst.trial_id, inst.seed, inst.algebra.descriptor(), inst.family)
    floor = settings.strictness_floor

    try:
        # channels
        record("l2_boundedness", lambda: l2_bound_margin(phi, X))
        record("adjoint_positivity", lambda: adjoint_positivity_margin(phi, inst.P))
        record("duality", lambda: -abs(
            inner(target, apply(phi, X), inst.Y) - inner(source, X, adjoint_apply(phi, inst.Y))
        ))

        # recovery
        setup = RecoverySetup(phi, B, floor)
        chain = chain_report(A, setup, check=False)
        # margins carrying S₂ values are relative to max(1, S₂(A|B)), which reaches 1e6 at the spectrum floor
        s2_scale = max(1.0, abs(chain.s2_src))
        contexts = (setup.source_context, setup.target_context)
        record("dpi_s2", lambda: chain.entropy_gap / s2_scale)
        record("dpi_s_general", lambda: (
            sandwiched_entropy(A, setup.source_context, settings.general_p)
            - sandwiched_entropy(apply(phi, A), setup.target_context, settings.general_p)
        ))
        record("am_contraction", lambda: am_contraction_margin(phi, B, X, floor, contexts))
        record("trace_vs_am", lambda: trace_vs_am_margin(X, B, setup.source_context))
        record("petz_fixed_point", lambda: -setup.fixed_point_residual)
        record("petz_choi_positivity", lambda: setup.petz_choi_min_eigenvalue)
        record("petz_trace_preservation", lambda: -setup.petz.residuals.trace_preservation)
        record("petz_adjoint", lambda: -am_adjoint_residual(setup))
        for name, margin in chain.margins().items():
            record(name, lambda m=margin / (1.0 if name == "fidelity_recovery" else s2_scale): m)
        x = whitened_coords(setup, A)
        record("contraction_defect", lambda: (
            contraction_defect_slack(whitened_channel(setup), x) / max(1.0, float(np.vdot(x, x).real))
        ))
        record("perfect_recovery", lambda: (
            -max(abs(chain.entropy_gap) / s2_scale, chain.am_residual_sq / s2_scale, chain.l1_residual_sq, chain.fidelity_term)
            if inst.family == "unitary" else None
        ))

        def _sufficiency() -> Optional[float]:
            result = petz_sufficiency_check(A, setup)
            return -max(abs(result.kl_gap), abs(result.s2_gap)) if result.applicable else None

        record("petz_sufficiency", _sufficiency)
        record("kl_recovery_gap", lambda: kl_recovery_gap(A, setup))

        # fidelity
        pair = FidelityPair(A, inst.S1)
        record("bures_triangle", lambda: bures_triangle_slack(A, inst.S1, inst.S2))
        record("powers_stormer", lambda: powers_stormer_slack(pair))
        record("fidelity_trace_bound", lambda: fidelity_bound_slack(pair))
        record("fidelity_monotonicity", lambda: monotonicity_slack(pair, phi))
        record("joint_concavity", lambda: concavity_grid(settings.lambda_grid, pair, FidelityPair(inst.A2, inst.S2)))
        record("transition_concavity", lambda: transition_concavity_slack(A, inst.A2, inst.S1, inst.lam))

        if inst.extended:
            oracle = fidelity_unitary_oracle(pair, settings.oracle_samples, np.random.default_rng([inst.seed, 1]))
            record("fidelity_oracle", lambda: fidelity(pair) - oracle.best_sampled)
            record("polar_attainment", lambda: -oracle.attainment_residual)
            record("choi_lifting", lambda: choi_lifting_margin(phi, 2))
            modular = modular_setup(phi, B, floor, contexts)
            record("v_contraction", lambda: contraction_margin(phi, B, floor, modular))
            record("modular_psd", lambda: modular_psd_margin(phi, B, floor, modular))
            record("concavity_step", lambda: concavity_step_margin(phi, B, floor, modular))
            record("sandwich_psd", lambda: sandwich_psd_margin(phi, B, floor))
            record("adjoint_norm_identity", lambda: -adjoint_norm_identity_residual(phi, B, X, floor, modular))
            record("amgm_psd", lambda: amgm_psd_margin(B))
            record("modular_spectrum", lambda: -modular_spectrum_residual(B))
            record("multiplication_commute", lambda: -commutator_residual(
                build_mult(source, X, LEFT), build_mult(source, B, RIGHT)
            ))
    except (PetzCheckError, la.LinAlgError) as e:
        report.error = f"{type(e).__name__}: {e}"
        logger.warning(f"{inst.trial_id}: trial aborted: {report.error}")

    report.margins = record.margins
    report.failures = record.failures()
    return report


# ----------------------------
# Suite
# ----------------------------
class TrialTask(NamedTuple):
    algebra: Dict[str, Any]
    family: str
    seed: int
    trial_id: str
    extended: bool
    invertibility_floor: float
    persist: str
    settings: EvaluationSettings


class TrialOutcome(NamedTuple):
    report: TrialReport
    instance: Optional[Dict[str, Any]]


def _run_task(task: TrialTask) -> TrialOutcome:
    algebra = TracialAlgebra.from_descriptor(task.algebra)
    try:
        instance = build_instance(
            algebra, task.family, task.seed, task.trial_id, task.extended,
            task.invertibility_floor, task.settings.strictness_floor, task.settings.lambda_grid,
        )
    except PetzCheckError as e:
        report = TrialReport(task.trial_id, task.seed, task.algebra, task.family, error=f"{type(e).__name__}: {e}")
        logger.warning(f"{task.trial_id}: instance construction failed: {report.error}")
        return TrialOutcome(report, None)

    report = evaluate_instance(instance, task.settings)
    keep = task.persist == "all" or (task.persist == "failures" and (not report.ok or report.counterexample_candidate))
    return TrialOutcome(report, instance.to_json(task.settings) if keep else None)


@dataclass
class SuiteResult:
    """
    Outcome of ``run_suite``.

    Attributes:
        summary (Dict[str, Any]): Per-check counts, inapplicable families and the recovery-gap histogram.
        reports (List[TrialReport]): One report per trial, in grid order.
        persisted (List[Path]): Instance files written.
    """

    summary: Dict[str, Any]
    reports: List[TrialReport]
    persisted: List[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.summary["passed"])

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def _tasks(config: HarnessConfig, not_applicable: List[Dict[str, Any]]) -> Iterable[TrialTask]:
    settings = config.evaluation()
    for ai, algebra in enumerate(config.algebras):
        for family in config.families:
            if not family_applicable(family, algebra):
                not_applicable.append({"algebra": algebra.descriptor(), "family": family})
                logger.info(f"Family {family} is not applicable to {algebra}")
                continue
            fi = FAMILIES.index(family)
            for t in range(config.trials):
                yield TrialTask(
                    algebra.descriptor(), family, derive_seed(config.master_seed, ai, fi, t),
                    f"a{ai}-{family}-t{t}", t < config.superop_trials, config.invertibility_floor,
                    config.persist, settings,
                )


def summarize(config: HarnessConfig, reports: List[TrialReport], not_applicable: List[Dict[str, Any]]) -> Dict[str, Any]:
    """ Per-check counts, errors and the sign histogram of the logarithmic recovery gap. """
    checks: Dict[str, Dict[str, Any]] = {}
    for name, check in CHECKS.items():
        values = [r.margins[name] for r in reports if r.margins.get(name) is not None]
        failed = sum(1 for r in reports if name in r.failures)
        checks[name] = {
            "statement": check.statement,
            "asserted": check.asserted,
            "tolerance": config.tolerance(name),
            "skipped": name in config.skip,
            "evaluated": len(values),
            "not_applicable": sum(1 for r in reports if name in r.margins and r.margins[name] is None),
            "failed": failed,
            "worst_margin": min(values) if values else None,
        }

    gaps = [r.margins["kl_recovery_gap"] for r in reports if r.margins.get("kl_recovery_gap") is not None]
    errors = sum(1 for r in reports if r.error is not None)
    failed_trials = sum(1 for r in reports if not r.ok)
    return {
        "trials": len(reports),
        "errors": errors,
        "failed_trials": failed_trials,
        "passed": failed_trials == 0,
        "checks": checks,
        "not_applicable_families": not_applicable,
        "kl_recovery_gap": {
            "positive": sum(1 for g in gaps if g > 0),
            "negative": sum(1 for g in gaps if g < 0),
            "zero": sum(1 for g in gaps if g == 0),
            "min": min(gaps) if gaps else None,
            "max": max(gaps) if gaps else None,
        },
    }


def run_suite(config: HarnessConfig) -> SuiteResult:
    """
    Run every trial of the configured grid.

    Args:
        config (HarnessConfig): Validated configuration.

    Returns:
        SuiteResult: Summary, per-trial reports and persisted instance paths.
    """
    not_applicable: List[Dict[str, Any]] = []
    tasks = list(_tasks(config, not_applicable))
    logger.info(f"Running {len(tasks)} trials over {len(config.algebras)} algebras with {config.workers} worker(s)")

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    else:
        outcomes = [_run_task(task) for task in tasks]

    reports = [o.report for o in outcomes]
    summary = summarize(config, reports, not_applicable)
    persisted = persist_instances(config, outcomes)

    hist = summary["kl_recovery_gap"]
    logger.info(
        f"Suite finished: {summary['trials']} trials, {summary['failed_trials']} failed, {summary['errors']} errored; "
        f"log recovery gap signs +{hist['positive']} / −{hist['negative']} / 0:{hist['zero']}"
    )
    for report in reports:
        if report.counterexample_candidate:
            logger.warning(
                f"{report.trial_id}: counterexample candidate, log recovery gap {report.margins['kl_recovery_gap']:.3e}"
            )
    return SuiteResult(summary, reports, persisted)


def persist_instances(config: HarnessConfig, outcomes: List[TrialOutcome]) -> List[Path]:
    """ Write kept instances as ``<instances_dir>/<trial_id>.json``. """
    kept = [o for o in outcomes if o.instance is not None]
    if not kept or config.instances_dir is None:
        return []
    config.instances_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for outcome in kept:
        path = config.instances_dir / f"{outcome.report.trial_id}.json"
        path.write_text(json.dumps(outcome.instance, sort_keys=True), encoding="utf-8")
        paths.append(path)
    logger.info(f"Persisted {len(paths)} instance(s) to {config.instances_dir}")
    return paths


def replay(path: str | Path) -> TrialReport:
    """
    Re-evaluate a persisted instance with the settings stored alongside it.

    Raises:
        InstanceFormatError: The file is missing or is not a valid instance.
        MalformedChannelError: The stored channel fails its invariants.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        settings = EvaluationSettings.from_json(data["settings"])
    except FileNotFoundError as e:
        raise InstanceFormatError(f"Instance file {path} not found") from e
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as e:
        raise InstanceFormatError(f"Cannot read instance {path}: {e}") from e
    instance = TrialInstance.from_json(data)
    logger.info(f"Replaying {instance.trial_id} (seed {instance.seed}, family {instance.family})")
    return evaluate_instance(instance, settings)


# ----------------------------
# Output
# ----------------------------
def write_report(result: SuiteResult, config: HarnessConfig, path: Optional[Path] = None) -> Path:
    """
    Write the suite result as JSON or CSV.

    Everything except ``header.generated_at`` is a deterministic function of
    the configuration.
    """
    path = Path(path or config.output_path or f"petzcheck-report.{config.output_format}")
    path.parent.mkdir(parents=True, exist_ok=True)
    generated_at = datetime.now(timezone.utc).isoformat()

    if config.output_format == "json":
        document = {
            "schema_version": Config.SCHEMA_VERSION,
            "header": {"generated_at": generated_at, "version": Config.VERSION},
            "config": config.describe(),
            "summary": result.summary,
            "trials": [r.to_json() for r in result.reports],
        }
        path.write_text(json.dumps(document, indent=2, sort_keys=True), encoding="utf-8")
    else:
        names = sorted(CHECKS)
        with path.open("w", newline="", encoding="utf-8") as handle:
            handle.write(f"# schema_version={Config.SCHEMA_VERSION} generated_at={generated_at}\n")
            writer = csv.writer(handle)
            writer.writerow(["trial_id", "seed", "block_dims", "trace_weights", "family", "ok", "error", *names])
            for r in result.reports:
                writer.writerow([
                    r.trial_id, r.seed, r.algebra["block_dims"], r.algebra["trace_weights"], r.family, r.ok,
                    r.error or "", *("" if r.margins.get(n) is None else repr(r.margins[n]) for n in names),
                ])
    logger.info(f"Report written to {path}")
    return path
