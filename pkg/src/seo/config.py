"""Run configuration: dataclasses with reference constants as defaults, plus strict JSON (de)serialization."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dynamics import DynParams
from .optimizers import ChannelModel, GatingMode, ResponseEstimator
from .safety import BarrierParams, FilterParams, GridSpec
from .scheduler import ModelSpec, Subset


class Mode(str, enum.Enum):
    OFFLOAD = "offload"
    MODEL_GATE = "model-gate"
    SENSOR_GATE = "sensor-gate"

    @property
    def accounting(self) -> GatingMode:
        return GatingMode.SENSOR_AND_MODEL if self is Mode.SENSOR_GATE else GatingMode.MODEL_ONLY


def default_models(tau: float = 0.020) -> list[ModelSpec]:
    # two detectors at p = tau and p = 2 tau (17 ms / 7 W each) and one critical state estimator
    return [
        ModelSpec("detector_p1", Subset.OPTIMIZABLE, tau, 0.017, 7.0, sensor="zed_camera"),
        ModelSpec("detector_p2", Subset.OPTIMIZABLE, 2 * tau, 0.017, 7.0, sensor="zed_camera"),
        ModelSpec("state_estimator", Subset.CRITICAL, tau, 0.017, 7.0),
    ]


@dataclass(frozen=True)
class ScenarioConfig:
    road_length: float = 100.0
    lane_center_y: float = 0.0
    lane_half_width: float = 2.0
    safety_radius: float = 2.5
    collision_radius: float = 1.5
    min_spacing: float = 8.0
    sensing_horizon: float = 50.0
    max_time: float = 60.0


@dataclass(frozen=True)
class ControllerParams:
    target_speed: float = 7.0
    k_speed: float = 0.5
    k_lateral: float = 0.3
    k_heading: float = 1.5
    heading_max: float = 0.5
    avoid_range: float = 18.0
    # center distance kept beside an obstacle while passing
    pass_width: float = 4.0
    pass_behind: float = 2.0


@dataclass
class TableConfig:
    horizon_periods: int = 4
    sub_dt_fraction: float = 0.1
    throttle: float = 1.0
    grid: GridSpec = field(default_factory=GridSpec)
    path: Optional[str] = None


@dataclass
class RunConfig:
    tau: float = 0.020
    mode: Mode = Mode.OFFLOAD
    filtered: bool = True
    obstacle_count: int = 4
    models: list[ModelSpec] = field(default_factory=default_models)
    channel: ChannelModel = field(default_factory=ChannelModel)
    estimator: ResponseEstimator = field(default_factory=ResponseEstimator)
    seeds: list[int] = field(default_factory=lambda: list(range(25)))
    output_dir: str = "runs"
    measurement_span: str = "sensor_period"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    dyn: DynParams = field(default_factory=DynParams)
    barrier: BarrierParams = field(default_factory=BarrierParams)
    filter: FilterParams = field(default_factory=FilterParams)
    controller: ControllerParams = field(default_factory=ControllerParams)
    table: TableConfig = field(default_factory=TableConfig)

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.validate()

    def validate(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not self.models:
            raise ValueError("models must be non-empty")
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("model ids must be unique")
        if not any(m.critical for m in self.models):
            raise ValueError("need at least one critical (state estimation) model")
        if not any(not m.critical for m in self.models):
            raise ValueError("need at least one optimizable model")
        if self.obstacle_count < 0:
            raise ValueError("obstacle_count must be >= 0")
        if self.measurement_span not in ("sensor_period", "base_period"):
            raise ValueError(f"unknown measurement_span {self.measurement_span!r}")
        if self.mode is Mode.SENSOR_GATE:
            for m in self.models:
                if not m.critical and m.sensor is None:
                    raise ValueError(f"sensor-gate mode needs a sensor on {m.id}")

    @property
    def horizon(self) -> float:
        return self.table.horizon_periods * self.tau

    @property
    def sub_dt(self) -> float:
        return self.table.sub_dt_fraction * self.tau


_NESTED = {
    "channel": ChannelModel,
    "estimator": ResponseEstimator,
    "scenario": ScenarioConfig,
    "dyn": DynParams,
    "barrier": BarrierParams,
    "filter": FilterParams,
    "controller": ControllerParams,
}


def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    if "tau" in data and not (isinstance(data["tau"], (int, float)) and data["tau"] > 0):
        raise ValueError("tau must be positive")
    kw = {}
    for key, cls in _NESTED.items():
        if key in data:
            kw[key] = _strict(cls, data.pop(key), key)
    if "models" in data:
        kw["models"] = [_strict(ModelSpec, m, f"models[{i}]") for i, m in enumerate(data.pop("models"))]
    elif "tau" in data:
        # default sensor periods are tied to tau
        kw["models"] = default_models(data["tau"])
    if "table" in data:
        t = dict(data.pop("table"))
        grid = _strict(GridSpec, t.pop("grid", {}), "table.grid")
        kw["table"] = _strict(TableConfig, {**t, "grid": grid}, "table")
    return _strict(RunConfig, {**data, **kw}, "config")


def config_to_dict(cfg: RunConfig) -> dict:
    def conv(v):
        if isinstance(v, enum.Enum):
            return v.value
        if dataclasses.is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        return v

    return conv(cfg)


def load_config(path) -> RunConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2))
