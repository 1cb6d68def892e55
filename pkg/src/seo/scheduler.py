"""Period/deadline discretization, the regulated schedule and the interval state machine."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

_EPS = 1e-9


class Subset(str, enum.Enum):
    CRITICAL = "critical"
    OPTIMIZABLE = "optimizable"


class Decision(str, enum.Enum):
    RUN_FULL = "run_full"
    OPTIMIZE = "optimize"
    IDLE = "idle"


@dataclass(frozen=True)
class ModelSpec:
    id: str
    subset: Subset = Subset.OPTIMIZABLE
    period_p: float = 0.020
    latency_T: float = 0.017
    power_P: float = 7.0
    sensor: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "subset", Subset(self.subset))
        if self.period_p <= 0 or self.power_P <= 0:
            raise ValueError(f"{self.id}: period and power must be positive")
        if self.latency_T > self.period_p + _EPS:
            raise ValueError(f"{self.id}: latency exceeds period, not schedulable")

    @property
    def critical(self) -> bool:
        return self.subset is Subset.CRITICAL

    def delta(self, tau: float) -> int:
        return discretize_period(self.period_p, tau)


def discretize_period(p: float, tau: float) -> int:
    """Sensor period in base periods, rounding partial periods up."""
    if p <= 0 or tau <= 0:
        raise ValueError("period and tau must be positive")
    ratio = p / tau
    whole = round(ratio)
    if abs(p - whole * tau) <= _EPS:
        return int(whole)
    return int(math.floor(ratio)) + 1


def discretize_deadline(delta: float, tau: float) -> int:
    if delta < 0 or tau <= 0:
        raise ValueError("need delta >= 0 and tau > 0")
    return int(math.floor(delta / tau + _EPS))


def _on_cadence(delta_i: int, n: int, since_last: Optional[int]) -> bool:
    # without history the sensor is assumed to sample at the interval's multiples of delta_i
    if since_last is None:
        return n % delta_i == 0
    return since_last >= delta_i


def regulated_decision(delta_i: int, n: int, delta_max: int, since_last: Optional[int] = None) -> Decision:
    """Decision for a model of discretized period ``delta_i`` at interval step ``n``.

    ``since_last`` is the number of base periods since the model's last full
    run. When the model simply runs at its natural rate it runs again once a
    full sensor period has elapsed; without it, at multiples of ``delta_i``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if delta_i >= delta_max:
        return Decision.RUN_FULL if _on_cadence(delta_i, n, since_last) else Decision.IDLE
    last = delta_max - delta_i
    if n == last:
        return Decision.RUN_FULL
    if n < last and n % delta_i == 0:
        return Decision.OPTIMIZE
    return Decision.IDLE


def decide(model: ModelSpec, n: int, delta_max: int, tau: float, since_last: Optional[int] = None) -> Decision:
    d = model.delta(tau)
    if model.critical:
        return Decision.RUN_FULL if _on_cadence(d, n, since_last) else Decision.IDLE
    return regulated_decision(d, n, delta_max, since_last)


@dataclass(frozen=True)
class IntervalState:
    n: int = 0
    delta_max: int = 0
    done_flags: dict = field(default_factory=dict)
    new_delta: bool = True


def open_interval(state: IntervalState, delta_new: int, deltas: dict[str, int]) -> IntervalState:
    """Load a freshly sampled deadline and reset the interval.

    Models with no slack under the new deadline are marked done right away.
    """
    if delta_new < 0:
        raise ValueError("delta_max must be >= 0")
    flags = {mid: d >= delta_new for mid, d in deltas.items()}
    return IntervalState(0, delta_new, flags, False)


def close_period(state: IntervalState, decisions: dict[str, Decision], deltas: dict[str, int]) -> IntervalState:
    flags = dict(state.done_flags)
    for mid, d in deltas.items():
        if decisions.get(mid) is Decision.RUN_FULL and state.n == state.delta_max - d:
            flags[mid] = True
    ended = all(flags.values()) or state.n + 1 >= max(state.delta_max, 1)
    return replace(state, n=state.n + 1, done_flags=flags, new_delta=ended)


def advance_interval(state: IntervalState, decisions: dict[str, Decision], delta_new: int,
                     deltas: dict[str, int]) -> IntervalState:
    """One base period of the interval machine: (re)open if requested, record completions, step ``n``.

    ``deltas`` maps each optimizable model id to its discretized period.
    """
    if state.new_delta:
        state = open_interval(state, delta_new, deltas)
    return close_period(state, decisions, deltas)


class IntervalScheduler:
    """Single-owner driver of the interval machine over a fixed model set."""

    def __init__(self, models, tau: float):
        self.tau = tau
        self.models = list(models)
        self.deltas = {m.id: m.delta(tau) for m in self.models if not m.critical}
        self.state = IntervalState()
        self.last_run: dict[str, int] = {}
        self.period = 0

    @property
    def new_delta(self) -> bool:
        return self.state.new_delta

    def start(self, delta_new: int) -> None:
        self.state = open_interval(self.state, delta_new, self.deltas)

    def since_last(self, model_id: str) -> int:
        # a model that never ran is due immediately
        last = self.last_run.get(model_id)
        return self.period - last if last is not None else self.period + 10 ** 9

    def decisions(self) -> dict[str, Decision]:
        s = self.state
        return {m.id: decide(m, s.n, s.delta_max, self.tau, self.since_last(m.id)) for m in self.models}

    def finish(self, decisions: dict[str, Decision]) -> None:
        for mid, d in decisions.items():
            if d is Decision.RUN_FULL:
                self.last_run[mid] = self.period
        self.state = close_period(self.state, decisions, self.deltas)
        self.period += 1
