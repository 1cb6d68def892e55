"""Energy-optimized stand-ins for slack periods: offloading over a Rayleigh channel, and gating."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .scheduler import ModelSpec


@dataclass(frozen=True)
class SensorProfile:
    name: str
    P_meas: float
    P_mech: float

    def __post_init__(self):
        if self.P_meas < 0 or self.P_mech < 0:
            raise ValueError("sensor powers must be >= 0")


SENSOR_PRESETS = {
    "zed_camera": SensorProfile("zed_camera", P_meas=1.9, P_mech=0.0),
    "navtech_radar": SensorProfile("navtech_radar", P_meas=21.6, P_mech=2.4),
    "velodyne_hdl32e": SensorProfile("velodyne_hdl32e", P_meas=9.6, P_mech=2.4),
}


def sensor_profile(name: str) -> SensorProfile:
    try:
        return SENSOR_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown sensor preset {name!r}; known: {sorted(SENSOR_PRESETS)}") from None


@dataclass(frozen=True)
class ChannelModel:
    """Wireless link whose effective rate is Rayleigh distributed.

    ``outage`` forces a zero rate, i.e. responses never arrive.
    """

    rayleigh_scale: float = 20.0  # Mbit/s
    payload: float = 1.0e5  # bits per offload
    server_compute: float = 2e-3
    tx_power_P: float = 6.0
    outage: bool = False

    def __post_init__(self):
        if self.rayleigh_scale <= 0 or self.payload < 0 or self.server_compute < 0 or self.tx_power_P <= 0:
            raise ValueError("channel parameters must be positive")


def sample_rate(ch: ChannelModel, rng: np.random.Generator) -> float:
    if ch.outage:
        return 0.0
    return float(rng.rayleigh(ch.rayleigh_scale))


def transfer_times(ch: ChannelModel, rate: float) -> tuple[float, float]:
    """(transmission time, response time) for an effective rate in Mbit/s."""
    if ch.payload == 0:
        tx = 0.0
    elif rate <= 0:
        tx = math.inf
    else:
        tx = ch.payload / (rate * 1e6)
    return tx, tx + ch.server_compute


def sample_response_time(ch: ChannelModel, rng: np.random.Generator) -> float:
    return transfer_times(ch, sample_rate(ch, rng))[1]


@dataclass(frozen=True)
class ResponseEstimator:
    """EWMA of observed response times; the estimate is inflated by ``safety_multiplier``."""

    ewma_response: Optional[float] = None
    safety_multiplier: float = 1.5
    alpha: float = 0.2

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.safety_multiplier < 1:
            raise ValueError("safety_multiplier must be >= 1")

    @property
    def estimate(self) -> float:
        # optimistic until the first observation so the link gets probed
        if self.ewma_response is None:
            return 0.0
        return self.safety_multiplier * self.ewma_response


def update_estimator(est: ResponseEstimator, observed: float) -> ResponseEstimator:
    if not observed > 0:
        raise ValueError("observed response must be positive")
    if est.ewma_response is None:
        return replace(est, ewma_response=observed)
    return replace(est, ewma_response=est.alpha * observed + (1.0 - est.alpha) * est.ewma_response)


class OffloadChoice(str, enum.Enum):
    OFFLOAD_NOW = "offload_now"
    LOCAL_ONLY = "local_only"


def offload_decide(delta_i: int, delta_max: int, tau: float, estimate: float) -> OffloadChoice:
    """Offload only if the estimated response beats both the model period and the fallback point."""
    if delta_i * tau <= estimate or estimate >= (delta_max - delta_i) * tau:
        return OffloadChoice.LOCAL_ONLY
    return OffloadChoice.OFFLOAD_NOW


class OffloadOutcome(str, enum.Enum):
    RESPONSE_APPLIED = "response_applied"
    STILL_WAITING = "still_waiting"
    FALLBACK_LOCAL = "fallback_local"
    IDLE = "idle"


@dataclass
class OffloadRequest:
    model_id: str
    issued_at: int
    tx_time: float
    actual_response: float
    deadline_step: int  # interval step delta_max - delta_i at which fallback runs
    tau: float
    resolved: bool = False
    outcome: Optional[OffloadOutcome] = None

    @property
    def abandon_at(self) -> float:
        return self.deadline_step * self.tau

    @property
    def tx_charged_time(self) -> float:
        # radio runs until done or until fallback abandons it; no refund
        return min(self.tx_time, self.abandon_at)

    def tx_time_in_period(self, k: int) -> float:
        lo, hi = k * self.tau, (k + 1) * self.tau
        return max(0.0, min(hi, self.tx_charged_time) - lo)

    @property
    def applied(self) -> bool:
        return self.actual_response < self.abandon_at


def issue_offload(model_id: str, n: int, delta_i: int, delta_max: int, tau: float, ch: ChannelModel,
                  rng: np.random.Generator) -> OffloadRequest:
    tx, resp = transfer_times(ch, sample_rate(ch, rng))
    return OffloadRequest(model_id, n, tx, resp, delta_max - delta_i, tau)


def offload_step(req: OffloadRequest, n: int, model: ModelSpec, tx_power: float) -> tuple[OffloadOutcome, float]:
    """Advance an in-flight request to interval step ``n``; returns (outcome, energy in mJ).

    Energy is the transmission share falling inside this base period, plus the
    local inference when the fallback fires. Responses landing at or after the
    fallback step are discarded.
    """
    k = n - req.issued_at
    energy = tx_power * req.tx_time_in_period(k) * 1e3
    if req.resolved:
        return OffloadOutcome.IDLE, energy
    if req.applied and req.actual_response < (k + 1) * req.tau:
        req.resolved, req.outcome = True, OffloadOutcome.RESPONSE_APPLIED
    elif n >= req.issued_at + req.deadline_step:
        req.resolved, req.outcome = True, OffloadOutcome.FALLBACK_LOCAL
        energy += model.latency_T * model.power_P * 1e3
    else:
        return OffloadOutcome.STILL_WAITING, energy
    return req.outcome, energy


class GatingMode(str, enum.Enum):
    MODEL_ONLY = "model_only"
    SENSOR_AND_MODEL = "sensor_and_model"


class PeriodKind(str, enum.Enum):
    GATED = "gated"
    ACTIVE = "active"


def gating_energy(kind: PeriodKind, model: ModelSpec, mode: GatingMode, tau: float,
                  sensor: Optional[SensorProfile] = None, measurement_span: str = "sensor_period") -> float:
    """Energy in mJ drawn by ``model`` (and its sensor) in one base period.

    ``measurement_span`` selects how long measurement power is drawn per
    activation: the sensor's own period ("sensor_period") or one base period
    ("base_period").
    """
    local = model.latency_T * model.power_P
    if mode is GatingMode.MODEL_ONLY:
        return 0.0 if kind is PeriodKind.GATED else local * 1e3
    if sensor is None:
        if model.sensor is None:
            raise ValueError(f"model {model.id} has no sensor for sensor gating")
        sensor = sensor_profile(model.sensor)
    mech = tau * sensor.P_mech
    if kind is PeriodKind.GATED:
        return mech * 1e3
    if measurement_span == "sensor_period":
        span = model.period_p
    elif measurement_span == "base_period":
        span = tau
    else:
        raise ValueError(f"unknown measurement_span {measurement_span!r}")
    return (mech + span * sensor.P_meas + local) * 1e3
