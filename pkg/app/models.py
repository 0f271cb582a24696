import math
from datetime import datetime
from enum import Enum
from typing import Annotated, Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.constants
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    WithJsonSchema,
    field_validator,
    model_validator,
)

CONSTANTS_VERSION = "CODATA 2018"


def _parse_complex(value: Any) -> complex:
    if isinstance(value, bool):
        raise ValueError("expected a voltage, got a boolean")
    if isinstance(value, (int, float, complex, np.number)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, dict) and set(value) == {"re", "im"}:
        return complex(float(value["re"]), float(value["im"]))
    raise ValueError("voltage must be a number or a [re, im] pair")


def _dump_complex(value: complex) -> List[float]:
    return [value.real, value.imag]


ComplexVoltage = Annotated[
    complex,
    PlainValidator(_parse_complex),
    PlainSerializer(_dump_complex, return_type=list),
    WithJsonSchema(
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
    ),
]


class StrictModel(BaseModel):
    """Config-facing models reject unknown keys"""

    model_config = ConfigDict(extra="forbid", frozen=True)


# --- physical system ---------------------------------------------------------


class PhysicalConstants(StrictModel):
    planck: float = scipy.constants.h
    boltzmann_k: float = scipy.constants.k
    version: str = CONSTANTS_VERSION


class QubitModel(StrictModel):
    frequency: float = Field(5e9, gt=0, description="g-e transition frequency, Hz")
    t1: float = Field(10e-6, gt=0, description="energy relaxation time, s")
    p_e_equilibrium: float = Field(0.0, ge=0, lt=0.5)
    anharmonicity: float = Field(-250e6, description="e-f minus g-e frequency, Hz")


class BathModel(StrictModel):
    gamma_up: float = Field(0.0, ge=0, description="excitation rate, Hz")
    gamma_down: float = Field(0.0, ge=0, description="relaxation rate, Hz")

    @property
    def total_rate(self) -> float:
        return self.gamma_up + self.gamma_down


class ApparatusModel(StrictModel):
    v_g: ComplexVoltage = complex(0.0, 0.0)
    v_e: ComplexVoltage = complex(1.0, 0.0)
    noise_sigma: float = Field(0.0, ge=0, description="per-quadrature noise std")
    t_meas: float = Field(1e-6, ge=0, description="readout duration, s")
    readout_excitation_prob: float = Field(0.0, ge=0, lt=1)
    qnd_flip_prob: float = Field(0.0, ge=0, lt=1)
    f_response_angle: float = Field(
        math.pi / 4,
        description="rotation of (v_e - v_g) placing the f response at v_e + rotated vector",
    )

    @model_validator(mode="after")
    def _distinct_responses(self) -> "ApparatusModel":
        if self.v_g == self.v_e:
            raise ValueError("v_g and v_e must differ")
        return self

    @property
    def v_f(self) -> complex:
        rotation = complex(math.cos(self.f_response_angle), math.sin(self.f_response_angle))
        return self.v_e + (self.v_e - self.v_g) * rotation

    def snr(self) -> float:
        if self.noise_sigma == 0:
            return math.inf
        return abs(self.v_e - self.v_g) / self.noise_sigma

    def responses(self) -> np.ndarray:
        """Response table indexed by state code g=0, e=1, f=2"""
        return np.array([self.v_g, self.v_e, self.v_f], dtype=np.complex128)


class PulseModel(StrictModel):
    pi_ge_error: float = Field(0.0, ge=0, lt=1)
    pi_ef_error: float = Field(0.0, ge=0, lt=1)
    ef_leakage_prob: float = Field(0.0, ge=0, lt=1)


# --- simulation --------------------------------------------------------------


class PrepTag(str, Enum):
    NONE = "none"
    PI_GE = "pi_ge"
    PI_EF_RABI = "pi_ef_rabi"


PREP_CODES = {PrepTag.NONE: 0, PrepTag.PI_GE: 1, PrepTag.PI_EF_RABI: 2}
PREP_BY_CODE = {code: tag for tag, code in PREP_CODES.items()}

STATE_NAMES = ("g", "e", "f")


class Prep(StrictModel):
    tag: PrepTag = PrepTag.NONE
    angle: Optional[float] = None
    with_ge_pi: Optional[bool] = None

    @model_validator(mode="after")
    def _rabi_fields(self) -> "Prep":
        if self.tag is PrepTag.PI_EF_RABI:
            if self.angle is None or not math.isfinite(self.angle) or self.with_ge_pi is None:
                raise ValueError("pi_ef_rabi prep needs a finite angle and with_ge_pi")
        elif self.angle is not None or self.with_ge_pi is not None:
            raise ValueError(f"{self.tag.value} prep takes no rabi fields")
        return self


class ShotRecord(StrictModel):
    shot_index: int = Field(ge=0)
    prep: Prep
    v1: ComplexVoltage
    v2: Optional[ComplexVoltage] = None
    tau: float = Field(0.0, ge=0)
    truth: Optional[Tuple[str, ...]] = None

    @model_validator(mode="after")
    def _pairs_only_without_pulse(self) -> "ShotRecord":
        if (self.v2 is not None) != (self.prep.tag is PrepTag.NONE):
            raise ValueError("v2 is present exactly for records without a preparation pulse")
        return self


class SimConfig(StrictModel):
    qubit: QubitModel = QubitModel()
    apparatus: ApparatusModel = ApparatusModel()
    pulses: PulseModel = PulseModel()
    n_shots: int = Field(ge=1)
    tau: float = Field(0.0, ge=0)
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    rabi_angles: List[float] = Field(default_factory=list)
    qutrit_shots: Optional[int] = Field(None, ge=1)
    collect_truth: bool = False

    @field_validator("rabi_angles")
    @classmethod
    def _finite_angles(cls, angles: List[float]) -> List[float]:
        if not all(math.isfinite(a) for a in angles):
            raise ValueError("rabi angles must be finite")
        return angles

    def with_seed(self, seed: int) -> "SimConfig":
        return self.model_copy(update={"seed": seed})


class RecordSet(BaseModel):
    """Column-wise shot records; one row per protocol repetition.

    v2 is NaN where absent, rabi_angle is NaN and with_ge_pi is -1 outside
    the Rabi protocol, truth rows hold state codes (-1 = not measured).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    shot_index: np.ndarray
    prep: np.ndarray
    rabi_angle: np.ndarray
    with_ge_pi: np.ndarray
    tau: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    truth: Optional[np.ndarray] = None

    def model_post_init(self, __context: Any) -> None:
        n = len(self.shot_index)
        for name in ("prep", "rabi_angle", "with_ge_pi", "tau", "v1", "v2"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        for name in ("shot_index", "prep", "rabi_angle", "with_ge_pi", "tau", "v1", "v2", "truth"):
            column = getattr(self, name)
            if column is not None:
                column.flags.writeable = False

    def __len__(self) -> int:
        return len(self.shot_index)

    @classmethod
    def empty(cls) -> "RecordSet":
        return cls.concat([])

    @classmethod
    def concat(cls, parts: Sequence["RecordSet"]) -> "RecordSet":
        if not parts:
            return cls(
                shot_index=np.zeros(0, dtype=np.int64),
                prep=np.zeros(0, dtype=np.int8),
                rabi_angle=np.zeros(0),
                with_ge_pi=np.zeros(0, dtype=np.int8),
                tau=np.zeros(0),
                v1=np.zeros(0, dtype=np.complex128),
                v2=np.zeros(0, dtype=np.complex128),
            )
        with_truth = all(p.truth is not None for p in parts)
        return cls(
            shot_index=np.concatenate([p.shot_index for p in parts]),
            prep=np.concatenate([p.prep for p in parts]),
            rabi_angle=np.concatenate([p.rabi_angle for p in parts]),
            with_ge_pi=np.concatenate([p.with_ge_pi for p in parts]),
            tau=np.concatenate([p.tau for p in parts]),
            v1=np.concatenate([p.v1 for p in parts]),
            v2=np.concatenate([p.v2 for p in parts]),
            truth=np.concatenate([p.truth for p in parts]) if with_truth else None,
        )

    def take(self, index: np.ndarray) -> "RecordSet":
        return RecordSet(
            shot_index=self.shot_index[index],
            prep=self.prep[index],
            rabi_angle=self.rabi_angle[index],
            with_ge_pi=self.with_ge_pi[index],
            tau=self.tau[index],
            v1=self.v1[index],
            v2=self.v2[index],
            truth=None if self.truth is None else self.truth[index],
        )

    def with_prep(self, tag: PrepTag) -> "RecordSet":
        return self.take(np.flatnonzero(self.prep == PREP_CODES[tag]))

    def has_prep(self, tag: PrepTag) -> bool:
        return bool(np.any(self.prep == PREP_CODES[tag]))

    def without_truth(self) -> "RecordSet":
        return self.model_copy(update={"truth": None})

    def group_keys(self) -> np.ndarray:
        """Integer label per row for stratified resampling: prep, angle and variant"""
        angle = np.where(np.isnan(self.rabi_angle), -1.0, self.rabi_angle)
        stacked = np.stack([self.prep.astype(float), angle, self.with_ge_pi.astype(float)], axis=1)
        _, labels = np.unique(stacked, axis=0, return_inverse=True)
        return labels.reshape(-1)

    def iter_records(self) -> Iterator[ShotRecord]:
        for i in range(len(self)):
            tag = PREP_BY_CODE[int(self.prep[i])]
            if tag is PrepTag.PI_EF_RABI:
                prep = Prep(tag=tag, angle=float(self.rabi_angle[i]), with_ge_pi=bool(self.with_ge_pi[i]))
            else:
                prep = Prep(tag=tag)
            truth = None
            if self.truth is not None:
                truth = tuple(STATE_NAMES[s] for s in self.truth[i] if s >= 0)
            yield ShotRecord(
                shot_index=int(self.shot_index[i]),
                prep=prep,
                v1=complex(self.v1[i]),
                v2=None if tag is not PrepTag.NONE else complex(self.v2[i]),
                tau=float(self.tau[i]),
                truth=truth,
            )


# --- estimation ---------------------------------------------------------------


class EstimatorType(str, Enum):
    CORRELATOR_APPROX = "correlator_approx"
    CORRELATOR_EXACT = "correlator_exact"
    CORRELATOR_GENERAL = "correlator_general"
    DIRECT_COUNT = "direct_count"
    QUTRIT = "qutrit"


CORRELATOR_METHODS = (
    EstimatorType.CORRELATOR_APPROX,
    EstimatorType.CORRELATOR_EXACT,
    EstimatorType.CORRELATOR_GENERAL,
)


class UncertaintyMode(str, Enum):
    BOOTSTRAP = "bootstrap"
    ANALYTIC = "analytic"


class CalibrationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    v_g_hat: ComplexVoltage
    v_e_hat: ComplexVoltage
    n_cal: int = Field(ge=2)
    snr_hat: Optional[float] = None

    @model_validator(mode="after")
    def _non_degenerate(self) -> "CalibrationResult":
        if self.v_g_hat == self.v_e_hat:
            raise ValueError("calibration responses coincide")
        return self

    @property
    def axis(self) -> complex:
        """Unit vector pointing from the ground to the excited response"""
        delta = self.v_e_hat - self.v_g_hat
        return delta / abs(delta)


class EstimateDiagnostics(BaseModel):
    g0: Optional[float] = None
    g0_pi: Optional[float] = None
    g1_0: Optional[float] = None
    g1_inf: Optional[float] = None
    snr_hat: Optional[float] = None
    t1_correction_applied: bool = False
    noise_dominated: bool = False
    raw_p_e: Optional[float] = None
    analytic_std_error: Optional[float] = None
    general_mismatch: Optional[float] = Field(
        None, description="|sqrt(g1_0) - g0| / |g0_pi - g0| on raw projections; small when the first-order formula holds"
    )
    approximation_valid: Optional[bool] = None


class Estimate(BaseModel):
    method: EstimatorType
    p_e: float
    std_error: float = Field(ge=0)
    n_shots: int = Field(ge=0)
    diagnostics: EstimateDiagnostics = Field(default_factory=EstimateDiagnostics)


class EstimationContext(BaseModel):
    """Knobs that shape an estimate beyond the records themselves"""

    model_config = ConfigDict(extra="forbid")

    t_meas: float = Field(0.0, ge=0)
    t1: Optional[float] = Field(None, gt=0)
    apply_t1_correction: bool = False
    uncertainty: UncertaintyMode = UncertaintyMode.BOOTSTRAP
    n_resamples: int = Field(200, ge=100)
    bootstrap_seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)


class DecayFit(BaseModel):
    amplitude: float
    t1_fit: float
    offset: float
    amplitude_std: Optional[float] = None
    t1_std: Optional[float] = None
    offset_std: Optional[float] = None
    value_at_zero: float
    value_at_zero_std: Optional[float] = None
    residual_norm: float = 0.0
    t1_fixed: bool = Field(False, description="T1 held at the configured value because the decay amplitude was not significant")


# --- harness --------------------------------------------------------------------


class SweepVariable(str, Enum):
    TAU = "tau"
    TEMPERATURE = "temperature"
    N_SHOTS = "n_shots"
    POWER = "power"
    FREQUENCY = "frequency"


class ExperimentType(str, Enum):
    DECAY_SCAN = "decay_scan"
    TEMPERATURE_SWEEP = "temperature_sweep"
    PRECISION_SCALING = "precision_scaling"
    METHOD_COMPARISON = "method_comparison"
    FREQUENCY_REPLAY = "frequency_replay"


DEFAULT_EXPERIMENTS = {
    SweepVariable.TAU: ExperimentType.DECAY_SCAN,
    SweepVariable.TEMPERATURE: ExperimentType.TEMPERATURE_SWEEP,
    SweepVariable.N_SHOTS: ExperimentType.PRECISION_SCALING,
    SweepVariable.POWER: ExperimentType.METHOD_COMPARISON,
    SweepVariable.FREQUENCY: ExperimentType.FREQUENCY_REPLAY,
}


class _TupleFriendly(StrictModel):
    """Accepts either an object or a positional list in config files"""

    @model_validator(mode="before")
    @classmethod
    def _from_sequence(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple)):
            names = list(cls.model_fields)
            if len(data) != len(names):
                raise ValueError(f"expected {len(names)} values: {', '.join(names)}")
            return dict(zip(names, data))
        return data


class PowerPoint(_TupleFriendly):
    power_dbm: float
    snr: float = Field(gt=0)
    qnd_flip_prob: float = Field(0.0, ge=0, lt=1)

    @property
    def label(self) -> str:
        return f"{self.power_dbm:g}dBm"


class ProfilePoint(_TupleFriendly):
    frequency: float = Field(gt=0)
    gamma_up: float = Field(ge=0)
    gamma_down: float = Field(ge=0)


class SweepSpec(StrictModel):
    variable: SweepVariable
    experiment: Optional[ExperimentType] = None
    values: List[float] = Field(min_length=1)
    base_config: SimConfig
    power_map: Optional[List[PowerPoint]] = None
    hot_bath: Optional[BathModel] = None
    frequency_profile: Optional[List[ProfilePoint]] = None
    seeds_per_point: int = Field(1, ge=1)
    methods: List[EstimatorType] = Field(
        default_factory=lambda: [EstimatorType.CORRELATOR_EXACT], min_length=1
    )
    uncertainty: UncertaintyMode = UncertaintyMode.BOOTSTRAP
    apply_t1_correction: bool = True
    fridge_temperature: float = Field(0.020, gt=0)
    seed: Optional[int] = Field(None, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _values_fit_variable(self) -> "SweepSpec":
        if self.variable is SweepVariable.POWER:
            if not self.power_map:
                raise ValueError("a power sweep needs power_map")
            known = [p.power_dbm for p in self.power_map]
            for value in self.values:
                if not any(math.isclose(value, k) for k in known):
                    raise ValueError(f"power {value} dBm is not in power_map")
        else:
            steps = np.diff(np.asarray(self.values, dtype=float))
            if len(steps) and not (np.all(steps > 0) or np.all(steps < 0)):
                raise ValueError("sweep values must be strictly monotone")
        if self.variable is SweepVariable.N_SHOTS:
            if any(v < 1 or v != int(v) for v in self.values):
                raise ValueError("n_shots values must be positive integers")
        if self.frequency_profile is not None:
            freqs = np.diff([p.frequency for p in self.frequency_profile])
            if len(freqs) and not np.all(freqs > 0):
                raise ValueError("frequency_profile must be sorted by strictly increasing frequency")
            if self.variable is SweepVariable.FREQUENCY and self.frequency_profile:
                low, high = self.frequency_profile[0].frequency, self.frequency_profile[-1].frequency
                outside = [v for v in self.values if not low <= v <= high]
                if outside:
                    raise ValueError(
                        f"frequencies {outside} lie outside the profile range [{low:g}, {high:g}] Hz"
                    )
        return self

    def resolved_experiment(self) -> ExperimentType:
        return self.experiment or DEFAULT_EXPERIMENTS[self.variable]

    def power_point(self, power_dbm: float) -> PowerPoint:
        for point in self.power_map or []:
            if math.isclose(point.power_dbm, power_dbm):
                return point
        raise KeyError(power_dbm)


class SweepRow(BaseModel):
    x_name: str
    x_value: float
    estimates: List[Estimate] = Field(default_factory=list)
    truth_p_e: Optional[float] = None
    reference: Dict[str, float] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    g1: Optional[float] = None
    g1_std: Optional[float] = None
    g1_truth: Optional[float] = None


class SweepResult(BaseModel):
    experiment: ExperimentType
    spec: SweepSpec
    rows: List[SweepRow]
    summary: Dict[str, Any] = Field(default_factory=dict)


# --- cli ------------------------------------------------------------------------


class RunManifest(BaseModel):
    subcommand: str
    config_digest: str
    seed: Optional[int] = None
    artifact_version: str
    constants_version: str = CONSTANTS_VERSION
    started_at: datetime
    finished_at: Optional[datetime] = None
    outputs: List[str] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)
