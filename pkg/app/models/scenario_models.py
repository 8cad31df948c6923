"""Pydantic DTOs for experiment configuration and per-step results."""

from typing import Any, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.base import MODEL_CONFIG, Vector
from app.models.privacy_models import AutoLookahead, FixedLookahead, PrivacySpec
from app.models.sensor_models import SensorPartition

Scheme = Literal["centralized", "no_exchange", "sequential", "baseline", "unsanitized"]
DECENTRALIZED_SCHEMES = ("no_exchange", "sequential")


class ScenarioConfig(BaseModel):
    """One simulated scenario; keys mirror the flat config-file keys."""

    model_config = ConfigDict(**MODEL_CONFIG, extra="forbid")

    seed: int = Field(default=0, ge=0, lt=2**64)
    steps: int = Field(default=20, ge=1)
    trials: Optional[int] = Field(default=None, ge=1)

    dim_state: int = Field(default=8, ge=1)
    dim_meas: int = Field(default=8, ge=1)
    n_public: int = Field(default=4, ge=0)
    n_private: int = Field(default=4, ge=1)

    delta: float = Field(default=1.0, ge=0)
    privacy_map: Literal["trace", "elementwise"] = "trace"
    lookahead: Literal["fixed", "auto"] = "fixed"
    lookahead_depth: int = Field(default=0, ge=0)
    xi: Optional[float] = Field(default=None, gt=0)
    epsilon: Optional[float] = Field(default=None, gt=0)

    q_scale: float = Field(default=1.0, gt=0)
    r_scale: float = Field(default=1.0, gt=0)
    p0_scale: float = Field(default=1.0, gt=0)

    f_generator: Literal["random_sv", "gaussian_rows", "mixing", "flip", "identity"] = "random_sv"
    sv_low: float = Field(default=1.0, gt=0)
    sv_high: float = Field(default=1.2, gt=0)
    omega: float = Field(default=0.2, ge=0, le=1)
    h_generator: Literal["gaussian", "orthogonal", "identity"] = "gaussian"
    drop_prob: Optional[float] = Field(default=None, ge=0, le=1)

    scheme: Scheme = "centralized"
    baseline_kind: Literal["ib", "pf", "cp"] = "cp"
    baseline_gamma: float = Field(default=1.0, ge=0)
    baseline_rank: Optional[int] = Field(default=None, ge=1)

    sensors: Optional[int] = Field(default=None, ge=1)
    sensor_dims: Optional[List[int]] = None
    sensor_order: Optional[List[int]] = None
    independent_noise: bool = False
    eps_conv: Optional[float] = Field(default=None, gt=0)
    max_sweeps: Optional[int] = Field(default=None, ge=1)

    @field_validator("sensor_dims", "sensor_order", mode="before")
    @classmethod
    def _split_int_list(cls, value: Any):
        if isinstance(value, str):
            items = [item.strip() for item in value.split(",") if item.strip()]
            return [int(item) for item in items] or None
        return value

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.n_public + self.n_private != self.dim_state:
            raise ValueError("n_public + n_private must equal dim_state")
        if self.sv_low > self.sv_high:
            raise ValueError("sv_low must not exceed sv_high")
        if self.lookahead == "auto" and (self.xi is None or self.epsilon is None):
            raise ValueError("lookahead=auto needs xi and epsilon")
        if self.h_generator == "identity" and self.dim_meas != self.dim_state:
            raise ValueError("h_generator=identity needs dim_meas == dim_state")
        if self.h_generator == "orthogonal" and self.dim_meas < self.dim_state:
            raise ValueError("h_generator=orthogonal needs dim_meas >= dim_state")
        if self.scheme == "baseline" and self.baseline_kind != "cp" and self.baseline_gamma <= 0:
            raise ValueError("baseline_gamma must be positive for ib and pf")
        if self.sensor_dims is not None:
            if sum(self.sensor_dims) != self.dim_meas or min(self.sensor_dims) < 1:
                raise ValueError("sensor_dims must be positive and sum to dim_meas")
            if self.sensors is not None and self.sensors != len(self.sensor_dims):
                raise ValueError("sensors disagrees with the length of sensor_dims")
        if self.sensors is not None and self.sensors > self.dim_meas:
            raise ValueError("more sensors than measurement rows")
        if self.scheme in DECENTRALIZED_SCHEMES and self.n_sensors is None:
            raise ValueError(f"scheme={self.scheme} needs sensors or sensor_dims")
        if self.scheme in DECENTRALIZED_SCHEMES and self.drop_prob:
            raise ValueError("row dropping is not supported with sensor partitions")
        if self.sensor_order is not None and sorted(self.sensor_order) != list(range(self.n_sensors or 0)):
            raise ValueError("sensor_order must be a permutation of the sensor indices")
        return self

    @property
    def n_sensors(self) -> Optional[int]:
        if self.sensor_dims is not None:
            return len(self.sensor_dims)
        return self.sensors

    def privacy_spec(self) -> PrivacySpec:
        if self.lookahead == "auto":
            policy = AutoLookahead(xi=self.xi, epsilon=self.epsilon)
        else:
            policy = FixedLookahead(depth=self.lookahead_depth)
        return PrivacySpec.partitioned(
            self.n_public,
            self.n_private,
            delta=self.delta,
            privacy_map=self.privacy_map,
            lookahead=policy,
        )

    def partition(self) -> Optional[SensorPartition]:
        if self.sensor_dims is not None:
            return SensorPartition.from_dims(self.sensor_dims)
        if self.sensors is not None:
            return SensorPartition.even(self.dim_meas, self.sensors)
        return None

    def with_overrides(self, **overrides: Any) -> "ScenarioConfig":
        """Re-validated copy; ``None`` values leave the field untouched."""
        values = self.model_dump()
        values.update({key: value for key, value in overrides.items() if value is not None})
        return ScenarioConfig.model_validate(values)


class StepRecord(BaseModel):
    model_config = MODEL_CONFIG

    trial: int = 0
    k: int
    tau: float = Field(ge=0)
    eta: Vector
    eta_min: float
    eta_sum: float
    M_used: List[int] = Field(default_factory=list)
    feasible: bool
    utility: float
    lookahead: int = 0
    wall_ns: int = 0
    error: Optional[str] = None

    @property
    def M_label(self) -> str:
        return ";".join(str(m) for m in self.M_used)


class EkfConfig(BaseModel):
    """Range-only localization run around a rectangular waypoint loop."""

    model_config = ConfigDict(**MODEL_CONFIG, extra="forbid")

    seed: int = Field(default=0, ge=0, lt=2**64)
    steps: int = Field(default=318, ge=1)
    dt: float = Field(default=0.1, gt=0)
    speed: float = Field(default=1.0, gt=0)
    p0_scale: float = Field(default=0.01, gt=0)
    r_scale: float = Field(default=0.04, gt=0)
    q_scale: float = Field(default=0.04, gt=0)
    # Trace over heading and location at |Q|δ = 2
    delta: float = Field(default=2.0 / 3.0, ge=0)
    privacy_map: Literal["positions", "trace"] = "trace"

    def privacy_spec(self) -> PrivacySpec:
        """Speed public; heading and location private.

        ``positions`` puts the floor on the location variances only, ``trace``
        on heading plus location.
        """
        weights = [[0.0, 1.0, 1.0]] if self.privacy_map == "positions" else [[1.0, 1.0, 1.0]]
        return PrivacySpec(public_idx=[0], private_idx=[1, 2, 3], map_A=weights, delta=self.delta)
