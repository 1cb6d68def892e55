"""Per-period energy bookkeeping, always-local baselines and gain reports."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .optimizers import GatingMode, PeriodKind, SensorProfile, gating_energy
from .scheduler import ModelSpec

CSV_COLUMNS = ("global_period", "time_s", "model", "decision", "energy_mJ", "delta_max")


@dataclass(frozen=True)
class LedgerEntry:
    period: int
    model: str
    decision: str
    energy: float  # mJ
    delta_max: int


@dataclass
class EnergyLedger:
    tau: float
    entries: list[LedgerEntry] = field(default_factory=list)
    # one value per interval, in order of sampling
    sampled_deltas: list[int] = field(default_factory=list)

    def record(self, period: int, model: str, decision: str, energy: float, delta_max: int) -> None:
        if energy < 0:
            raise ValueError(f"negative energy for {model} at period {period}")
        self.entries.append(LedgerEntry(period, model, decision, energy, delta_max))

    @property
    def periods(self) -> int:
        if not self.entries:
            return 0
        return max(e.period for e in self.entries) + 1

    def total(self, model: str) -> float:
        return sum(e.energy for e in self.entries if e.model == model)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for e in self.entries:
                w.writerow([e.period, f"{e.period * self.tau:.6f}", e.model, e.decision,
                            repr(e.energy), e.delta_max])

    @classmethod
    def read_csv(cls, path, tau: float) -> "EnergyLedger":
        led = cls(tau)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                led.entries.append(LedgerEntry(int(row["global_period"]), row["model"], row["decision"],
                                               float(row["energy_mJ"]), int(row["delta_max"])))
        return led


def natural_activations(delta_i: int, periods: int) -> int:
    """Number of multiples of ``delta_i`` in [0, periods)."""
    return -(-periods // delta_i) if periods > 0 else 0


def baseline_energy(model: ModelSpec, periods: int, mode: GatingMode, tau: float,
                    sensor: Optional[SensorProfile] = None, measurement_span: str = "sensor_period") -> float:
    """Always-local, never-gated energy (mJ) of ``model`` over ``periods`` base periods."""
    if periods < 0:
        raise ValueError("periods must be >= 0")
    if periods == 0:
        return 0.0
    acts = natural_activations(model.delta(tau), periods)
    active = gating_energy(PeriodKind.ACTIVE, model, mode, tau, sensor, measurement_span)
    if mode is GatingMode.MODEL_ONLY:
        return acts * active
    idle = gating_energy(PeriodKind.GATED, model, mode, tau, sensor, measurement_span)
    return acts * active + (periods - acts) * idle


@dataclass
class GainReport:
    baseline: dict[str, float]
    optimized: dict[str, float]
    gains: dict[str, float]
    combined_gain: float
    delta_histogram: dict[int, int]
    mean_delta_max: float

    def to_dict(self) -> dict:
        return {
            "baseline_mJ": self.baseline,
            "optimized_mJ": self.optimized,
            "gains": self.gains,
            "combined_gain": self.combined_gain,
            "delta_histogram": {str(k): v for k, v in sorted(self.delta_histogram.items())},
            "mean_delta_max": self.mean_delta_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GainReport":
        return cls(dict(d["baseline_mJ"]), dict(d["optimized_mJ"]), dict(d["gains"]), d["combined_gain"],
                   {int(k): v for k, v in d["delta_histogram"].items()}, d["mean_delta_max"])

    def format(self) -> str:
        lines = [f"{'model':<16}{'baseline mJ':>14}{'optimized mJ':>14}{'gain':>9}"]
        for mid in self.gains:
            lines.append(f"{mid:<16}{self.baseline[mid]:>14.2f}{self.optimized[mid]:>14.2f}"
                         f"{100 * self.gains[mid]:>8.2f}%")
        lines.append(f"combined gain: {100 * self.combined_gain:.2f}%   mean delta_max: {self.mean_delta_max:.3f}")
        hist = "  ".join(f"{k}:{v}" for k, v in sorted(self.delta_histogram.items()))
        lines.append(f"delta_max histogram: {hist}")
        return "\n".join(lines)


def histogram_mean(hist: dict[int, int]) -> float:
    total = sum(hist.values())
    return sum(k * v for k, v in hist.items()) / total if total else float("nan")


def compute_gains(ledger: EnergyLedger, models, mode: GatingMode, *, measurement_span: str = "sensor_period",
                  periods: Optional[int] = None) -> GainReport:
    """Gains of each optimizable model over its always-local baseline on the ledger's window.

    The combined gain is the arithmetic mean of the per-model gains.
    """
    periods = ledger.periods if periods is None else periods
    baseline, optimized, gains = {}, {}, {}
    for m in models:
        if m.critical:
            continue
        base = baseline_energy(m, periods, mode, ledger.tau, measurement_span=measurement_span)
        if base <= 0:
            raise ValueError(f"zero baseline energy for {m.id}")
        opt = ledger.total(m.id)
        baseline[m.id], optimized[m.id] = base, opt
        gains[m.id] = 1.0 - opt / base
    if not gains:
        raise ValueError("no optimizable models")
    hist = dict(Counter(ledger.sampled_deltas))
    return GainReport(baseline, optimized, gains, sum(gains.values()) / len(gains), hist, histogram_mean(hist))


def write_summary(path, report: GainReport, **metadata) -> None:
    Path(path).write_text(json.dumps({**metadata, "report": report.to_dict()}, indent=2))


def interval_gating_ledger(models, delta_max: int, mode: GatingMode, tau: float, *,
                           measurement_span: str = "sensor_period", intervals: int = 1) -> EnergyLedger:
    """Ledger of ``intervals`` back-to-back gating intervals at a fixed ``delta_max``.

    Full runs are charged the active energy, every other period the gated
    energy. Critical models are booked under model-only accounting.
    """
    from .scheduler import Decision, IntervalScheduler

    sched = IntervalScheduler(models, tau)
    led = EnergyLedger(tau)
    g = 0
    for _ in range(intervals):
        sched.start(delta_max)
        led.sampled_deltas.append(delta_max)
        while True:
            decisions = sched.decisions()
            for m in models:
                acc = GatingMode.MODEL_ONLY if m.critical else mode
                kind = PeriodKind.ACTIVE if decisions[m.id] is Decision.RUN_FULL else PeriodKind.GATED
                led.record(g, m.id, decisions[m.id].value,
                           gating_energy(kind, m, acc, tau, measurement_span=measurement_span), delta_max)
            sched.finish(decisions)
            g += 1
            if sched.new_delta:
                break
    return led
