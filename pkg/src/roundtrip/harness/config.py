"""Run configuration: validated schema, scenario presets and object builders."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..control import ControllerGains, Mode
from ..mission import EstimatorConfig, MissionPlan, Simulator
from ..sensing import NoiseParams, RateSchedule
from ..vehicle import VehicleParams, Wrench
from ..windfield import (
    CompositeFlow,
    JetFlow,
    PiecewiseGain,
    SinusoidalGain,
    TimeVaryingFlow,
    UniformFlow,
    WindField,
)

Vec3 = tuple[float, float, float]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class VehicleConfig(Strict):
    mass: float = Field(0.154, gt=0, description="kg")
    arm_length: float = Field(0.0585, gt=0, description="m, hub to rotor")
    inertia: Vec3 = Field((8e-5, 8e-5, 1.4e-4), description="kg m^2, diagonal")
    max_thrust: float = Field(4.6, gt=0, description="N, all four motors")
    gravity: float = Field(9.81, gt=0, description="m/s^2")
    yaw_torque_coeff: float = Field(0.006, ge=0, description="m, reaction torque per N")
    drag_linear: float = Field(0.0, ge=0, description="N s/m")
    drag_quadratic: float = Field(0.15 / 36.0, ge=0, description="N s^2/m^2")
    thrust_mismatch: float = Field(1.0, gt=0, description="applied / commanded thrust")


class UniformFieldConfig(Strict):
    type: Literal["uniform"] = "uniform"
    velocity: Vec3 = (0.0, 0.0, 0.0)


class JetFieldConfig(Strict):
    type: Literal["jet"] = "jet"
    origin: Vec3 = (1.0, -0.3, 1.0)
    direction: Vec3 = (0.0, 1.0, 0.0)
    ref_speed: float = Field(6.0, ge=0, description="m/s on the axis at ref_distance")
    ref_distance: float = Field(0.3, gt=0, description="m")
    core_radius: float = Field(0.06, ge=0, description="m")
    half_width: float = Field(0.15, gt=0, description="m, radius of half speed")
    blocked_sector: Optional[tuple[float, float]] = Field(None, description="deg about the axis")
    turbulence: float = Field(0.0, ge=0)


class SinusoidalGainConfig(Strict):
    kind: Literal["sinusoidal"] = "sinusoidal"
    mean: float = 1.0
    amplitude: float = 0.0
    period: float = Field(1.0, gt=0, description="s")


class PiecewiseGainConfig(Strict):
    kind: Literal["piecewise"] = "piecewise"
    times: list[float]
    values: list[float]


class TimeVaryingFieldConfig(Strict):
    type: Literal["time-varying"] = "time-varying"
    base: "FieldConfig"
    gain: Annotated[
        Union[SinusoidalGainConfig, PiecewiseGainConfig], Field(discriminator="kind")
    ] = SinusoidalGainConfig()


class CompositeFieldConfig(Strict):
    type: Literal["composite"] = "composite"
    components: list["FieldConfig"]


FieldConfig = Annotated[
    Union[UniformFieldConfig, JetFieldConfig, CompositeFieldConfig, TimeVaryingFieldConfig],
    Field(discriminator="type"),
]
TimeVaryingFieldConfig.model_rebuild()
CompositeFieldConfig.model_rebuild()


class GainsConfig(Strict):
    kp: Vec3 = (4.0, 4.0, 4.0)
    kd: Vec3 = (2.8, 2.8, 2.8)
    attitude_tau: tuple[float, float] = (0.06, 0.06)
    yaw_tau: float = 0.2


class RatesConfig(Strict):
    sim_hz: int = 1000
    imu_hz: int = 500
    position_hz: int = 200
    command_hz: int = 50
    record_hz: int = 50


class NoiseConfig(Strict):
    accel_sigma: float = Field(0.05, ge=0, description="m/s^2")
    gyro_sigma: float = Field(0.002, ge=0, description="rad/s")
    accel_bias: Vec3 = (0.0, 0.0, 0.0)
    gyro_bias: Vec3 = (0.0, 0.0, 0.0)
    position_sigma: float = Field(0.001, ge=0, description="m")


class EstimatorSettings(Strict):
    tau_force: float = Field(0.1, ge=0, description="s")
    tau_torque: float = Field(0.05, ge=0, description="s")
    tau_diff: float = Field(0.02, ge=0, description="s")
    tau_fuse: float = Field(0.1, ge=0, description="s")
    fallback_distance: float = Field(0.5, ge=0, description="m")


class PlanConfig(Strict):
    kind: Literal["roundtrip", "line", "hover"] = "roundtrip"
    origin: Vec3 = (0.0, 0.0, 1.0)
    target: Vec3 = (2.0, 0.0, 1.0)
    outbound_speed: float = Field(0.1, gt=0, description="m/s")
    return_speed: float = Field(1.0, gt=0, description="m/s")
    accel_limit: float = Field(1.0, gt=0, description="m/s^2")
    dwell: float = Field(2.0, ge=0, description="s")
    hover_duration: float = Field(10.0, gt=0, description="s, hover plans only")
    outbound_mode: Mode = Mode.FEEDBACK
    return_mode: Mode = Mode.FEEDFORWARD
    yaw: float = Field(0.0, description="rad")

    @model_validator(mode="after")
    def _check(self):
        if self.outbound_mode is Mode.FEEDFORWARD:
            raise ValueError("outbound_mode cannot be feedforward")
        return self


class CompareConfig(Strict):
    modes: list[Mode] = [Mode.FEEDBACK, Mode.FEEDFORWARD]


class InjectedConfig(Strict):
    force: Vec3 = Field((0.0, 0.0, 0.0), description="N, world frame")
    torque: Vec3 = Field((0.0, 0.0, 0.0), description="N m, body frame")


class RunConfig(Strict):
    scenario: str = "custom"
    seed: int = Field(0, ge=0, description="master seed")
    vehicle: VehicleConfig = VehicleConfig()
    field: FieldConfig = UniformFieldConfig()
    gains: GainsConfig = GainsConfig()
    rates: RatesConfig = RatesConfig()
    noise: NoiseConfig = NoiseConfig()
    estimator: EstimatorSettings = EstimatorSettings()
    plan: PlanConfig = PlanConfig()
    compare: CompareConfig = CompareConfig()
    injected: InjectedConfig = InjectedConfig()
    log_truth: bool = True


def _complex_field() -> dict:
    return {
        "type": "composite",
        "components": [
            # main jet slightly above the path with one quadrant of the exit blocked
            {"type": "jet", "origin": (1.0, -0.3, 1.05), "blocked_sector": (0.0, 90.0)},
            # floor fan blowing upward under the first half of the path
            {
                "type": "jet",
                "origin": (0.6, 0.0, 0.0),
                "direction": (0.0, 0.0, 1.0),
                "ref_speed": 5.0,
                "ref_distance": 0.6,
                "core_radius": 0.1,
                "half_width": 0.25,
            },
        ],
    }


PRESETS: dict[str, dict] = {
    "jet": {
        "field": {"type": "jet"},
        "compare": {"modes": ["feedback", "feedforward"]},
    },
    "complex": {
        "field": _complex_field(),
        "compare": {"modes": ["feedback", "feedforward"]},
    },
    "hover": {
        "field": {"type": "jet"},
        "plan": {"kind": "hover", "target": (1.0, 0.0, 1.0), "hover_duration": 10.0},
        "compare": {"modes": ["pd-only", "feedback"]},
    },
    "baseline": {
        "field": {"type": "jet"},
        "plan": {"kind": "line"},
        "compare": {"modes": ["pd-only", "feedback"]},
    },
    "calm": {
        "field": {"type": "uniform"},
        "plan": {"return_mode": "feedback"},
        "compare": {"modes": ["feedback", "feedforward"]},
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        # a field of a different type replaces the old one wholesale; a partial
        # jet layered on top of a composite makes no sense
        retyped = key == "field" and isinstance(value, dict) and isinstance(out.get(key), dict) and (
            value.get("type", out[key].get("type")) != out[key].get("type")
        )
        if isinstance(value, dict) and isinstance(out.get(key), dict) and not retyped:
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(data: dict | None = None, scenario: str | None = None) -> RunConfig:
    """Validate ``data`` layered on top of a named preset."""
    data = dict(data or {})
    name = scenario or data.get("scenario")
    base: dict = {}
    if name is not None and name != "custom":
        if name not in PRESETS:
            raise KeyError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}")
        base = copy.deepcopy(PRESETS[name])
    merged = _merge(base, data)
    if name is not None:
        merged["scenario"] = name
    return RunConfig.model_validate(merged)


def load_config(path=None, scenario: str | None = None, overrides: dict | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    if overrides:
        data = _merge(data, overrides)
    return resolve_config(data, scenario)


def config_dict(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json")


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_dict(cfg), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def schema_json() -> str:
    return json.dumps(RunConfig.model_json_schema(), indent=2, sort_keys=True)


def describe_errors(exc: ValidationError) -> list[str]:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return lines


# ---- seeds -----------------------------------------------------------------

STREAMS = {"mission": 0, "wind": 1, "sweep": 2}


def derive_seed(master: int, stream: str, index: int | None = None) -> int:
    """Seed for a named stream, derived from the master seed."""
    key = (STREAMS[stream],) if index is None else (STREAMS[stream], index)
    ss = np.random.SeedSequence(master, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def stream_name(stream: str, index: int | None = None) -> str:
    return stream if index is None else f"{stream}[{index}]"


# ---- builders --------------------------------------------------------------


def build_params(cfg: RunConfig) -> VehicleParams:
    return VehicleParams(**cfg.vehicle.model_dump())


def build_gain(cfg) -> object:
    if isinstance(cfg, SinusoidalGainConfig):
        return SinusoidalGain(cfg.mean, cfg.amplitude, cfg.period)
    return PiecewiseGain(cfg.times, cfg.values)


def build_field(cfg, wind_seed: int = 0) -> WindField:
    if isinstance(cfg, UniformFieldConfig):
        return UniformFlow(tuple(cfg.velocity))
    if isinstance(cfg, JetFieldConfig):
        kw = cfg.model_dump(exclude={"type"})
        return JetFlow(**kw, seed=wind_seed)
    if isinstance(cfg, CompositeFieldConfig):
        return CompositeFlow([build_field(c, wind_seed + i) for i, c in enumerate(cfg.components)])
    if isinstance(cfg, TimeVaryingFieldConfig):
        return TimeVaryingFlow(build_field(cfg.base, wind_seed), build_gain(cfg.gain))
    raise TypeError(f"unsupported field config {cfg!r}")


def build_plan(cfg: RunConfig, return_mode: Mode | None = None) -> MissionPlan:
    p = cfg.plan
    return MissionPlan(
        origin=p.origin,
        target=p.target,
        outbound_speed=p.outbound_speed,
        return_speed=p.return_speed,
        accel_limit=p.accel_limit,
        dwell=p.dwell,
        outbound_mode=p.outbound_mode,
        return_mode=return_mode or p.return_mode,
        yaw=p.yaw,
    )


def build_simulator(cfg: RunConfig, start=None, mission_seed: int | None = None) -> Simulator:
    if mission_seed is None:
        mission_seed = derive_seed(cfg.seed, "mission")
    if start is None:
        start = cfg.plan.target if cfg.plan.kind == "hover" else cfg.plan.origin
    return Simulator(
        params=build_params(cfg),
        gains=ControllerGains(**cfg.gains.model_dump()),
        wind=build_field(cfg.field, derive_seed(cfg.seed, "wind")),
        noise=NoiseParams(**cfg.noise.model_dump()),
        rates=RateSchedule(**cfg.rates.model_dump()),
        estimator=EstimatorConfig(**cfg.estimator.model_dump()),
        seed=mission_seed,
        injected=Wrench(np.array(cfg.injected.force), np.array(cfg.injected.torque)),
        start=start,
        yaw=cfg.plan.yaw,
        log_truth=cfg.log_truth,
    )
