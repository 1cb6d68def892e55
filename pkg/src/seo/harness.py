"""Closed-loop episode runner: state estimation, control, filtering, deadline sampling, regulated processing."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .config import ControllerParams, Mode, RunConfig
from .dynamics import (
    ControlAction,
    DynParams,
    Obstacle,
    SafetyContext,
    Scenario,
    VehicleState,
    check_collision,
    min_clearance,
    place_obstacles,
    step_dynamics,
)
from .ledger import EnergyLedger, GainReport, compute_gains, histogram_mean
from .optimizers import (
    GatingMode,
    OffloadChoice,
    OffloadOutcome,
    PeriodKind,
    gating_energy,
    issue_offload,
    offload_decide,
    offload_step,
    update_estimator,
)
from .safety import DeadlineTable, GridSpec, build_deadline_table, nearest_context, safety_filter, sample_deadline
from .scheduler import Decision, IntervalScheduler, discretize_deadline


class Status(str, enum.Enum):
    COMPLETED = "completed"
    COLLIDED = "collided"
    TIMEOUT = "timeout"


@dataclass
class PredictionStore:
    """Latest output of every model: opaque token plus the base period its input was sampled at."""

    tokens: dict = field(default_factory=dict)
    sampled_at: dict = field(default_factory=dict)

    def update(self, model_id: str, period: int, token=None) -> None:
        prev = self.sampled_at.get(model_id)
        if prev is not None and period < prev:
            raise ValueError(f"timestamp for {model_id} went backwards")
        self.sampled_at[model_id] = period
        self.tokens[model_id] = token if token is not None else (model_id, period)

    def age(self, model_id: str, now: int) -> float:
        t = self.sampled_at.get(model_id)
        return math.inf if t is None else now - t


@dataclass
class PeriodRecord:
    period: int
    state: VehicleState
    u: ControlAction
    u_filtered: ControlAction
    ctx: SafetyContext
    decisions: dict
    energies: dict
    delta_max: int


@dataclass
class RunTrace:
    seed: int
    records: list[PeriodRecord] = field(default_factory=list)
    status: Status = Status.TIMEOUT
    min_clearance: float = math.inf
    staleness_violations: int = 0
    interval_log: list = field(default_factory=list)  # (start period, delta_max, length)
    offload_log: list = field(default_factory=list)


def stand_in_controller(theta: PredictionStore, state: VehicleState, scenario: Scenario, params=None,
                        dyn=None) -> ControlAction:
    """Lane keeping plus a bounded avoidance offset around the nearest obstacle ahead; throttle holds target speed.

    ``theta`` is accepted for interface parity; model outputs are opaque and do
    not drive the physics.
    """
    p = params or ControllerParams()
    dyn = dyn or DynParams()
    lane = -p.k_lateral * (state.pos_y - scenario.lane_center_y)
    avoid = 0.0
    nearest = math.inf
    for ob in scenario.obstacles:
        dx = ob.pos_x - state.pos_x
        if dx < -p.pass_behind or dx > p.avoid_range or dx >= nearest:
            continue
        dy = state.pos_y - ob.pos_y
        if abs(dy) >= p.pass_width:
            continue
        nearest = dx
        side = 1.0 if dy >= 0.0 else -1.0
        # shift the lateral target from the lane center to pass_width beside the obstacle
        avoid = p.k_lateral * (ob.pos_y + side * p.pass_width - scenario.lane_center_y)
    desired = max(-p.heading_max, min(p.heading_max, lane + avoid))
    steer = p.k_heading * (desired - state.heading)
    hold = dyn.c_drag * p.target_speed / dyn.a_max
    throttle = hold + p.k_speed * (p.target_speed - state.speed)
    return ControlAction(steer, throttle).clamped(dyn.steer_max)


def table_for(cfg: RunConfig) -> DeadlineTable:
    """Deadline table for ``cfg``: loaded from ``cfg.table.path`` if set, else built (and memoized)."""
    if cfg.table.path:
        return DeadlineTable.load(cfg.table.path)
    g = cfg.table.grid
    grid_key = (tuple(g.distance), tuple(g.rel_angle), tuple(g.speed), tuple(g.steer), g.refine)
    return _cached_grid_table(grid_key, cfg.horizon, cfg.sub_dt, cfg.table.throttle, cfg.dyn, cfg.barrier,
                              cfg.scenario.safety_radius)


@lru_cache(maxsize=8)
def _cached_grid_table(grid_key, horizon, sub_dt, throttle, dyn, barrier, safety_radius) -> DeadlineTable:
    d, a, s, st, refine = grid_key
    grid = GridSpec(list(d), list(a), list(s), list(st), refine)
    return build_deadline_table(grid, horizon, sub_dt, throttle=throttle, dyn=dyn, barrier=barrier,
                                safety_radius=safety_radius)


def build_scenario(cfg: RunConfig, seed: int) -> Scenario:
    sc = cfg.scenario
    base = Scenario(sc.road_length, sc.lane_center_y, sc.lane_half_width, (), cfg.tau)
    template = Obstacle(0.0, 0.0, sc.safety_radius, sc.collision_radius)
    obstacles = place_obstacles(cfg.obstacle_count, seed, base, min_spacing=sc.min_spacing, template=template)
    return Scenario(sc.road_length, sc.lane_center_y, sc.lane_half_width, tuple(obstacles), cfg.tau)


class _OffloadState:
    def __init__(self, cfg: RunConfig, seed: int):
        self.channel = cfg.channel
        self.estimator = cfg.estimator
        self.rng = np.random.default_rng([seed, 0x5E0])
        self.requests = {}
        self.log: list[OffloadEvent] = []


@dataclass
class OffloadEvent:
    """One offload-or-local choice for a model in an interval, with its resolution."""

    interval_start: int
    model_id: str
    delta_max: int
    choice: OffloadChoice
    outcome: Optional[OffloadOutcome] = None
    resolved_at: Optional[int] = None  # interval step


def run_episode(cfg: RunConfig, seed: int, table: Optional[DeadlineTable] = None,
                keep_records: bool = True) -> tuple[RunTrace, EnergyLedger]:
    """Run one episode of the safe control and optimization loop."""
    if table is None:
        table = table_for(cfg)
    if not isinstance(table, DeadlineTable):
        raise TypeError("table must be a built DeadlineTable")
    tau = cfg.tau
    scenario = build_scenario(cfg, seed)
    obstacles = scenario.obstacles
    models = cfg.models
    optimizable = [m for m in models if not m.critical]
    deltas = {m.id: m.delta(tau) for m in models}
    accounting = cfg.mode.accounting
    span = cfg.measurement_span
    sched = IntervalScheduler(models, tau)
    theta = PredictionStore()
    ledger = EnergyLedger(tau)
    trace = RunTrace(seed)
    off = _OffloadState(cfg, seed) if cfg.mode is Mode.OFFLOAD else None
    local_only: dict[str, bool] = {}

    # critical models carry no sensor accounting; they are outside the gain ratios
    acc = {m.id: GatingMode.MODEL_ONLY if m.critical else accounting for m in models}
    active_e = {m.id: gating_energy(PeriodKind.ACTIVE, m, acc[m.id], tau, measurement_span=span) for m in models}
    gated_e = {m.id: gating_energy(PeriodKind.GATED, m, acc[m.id], tau, measurement_span=span) for m in models}

    state = VehicleState(0.0, scenario.lane_center_y, 0.0, cfg.controller.target_speed)
    max_periods = int(math.ceil(cfg.scenario.max_time / tau))
    interval_start = 0
    prev_delta_max = None
    trace.min_clearance = min_clearance(state, obstacles)

    for g in range(max_periods):
        # state estimation from ground truth; critical models run at full cadence
        ctx = nearest_context(state, obstacles, cfg.barrier, cfg.scenario.sensing_horizon)
        u = stand_in_controller(theta, state, scenario, cfg.controller, cfg.dyn)
        u_applied = safety_filter(state, obstacles, u, cfg.filter, cfg.dyn, cfg.barrier) if cfg.filtered else u

        if sched.new_delta:
            if prev_delta_max is not None:
                trace.interval_log.append((interval_start, prev_delta_max, g - interval_start))
                for m in optimizable:
                    if theta.age(m.id, g) > max(prev_delta_max, deltas[m.id]):
                        trace.staleness_violations += 1
            delta_max = discretize_deadline(sample_deadline(table, ctx, u_applied), tau)
            sched.start(delta_max)
            ledger.sampled_deltas.append(delta_max)
            interval_start, prev_delta_max = g, delta_max
            if off is not None:
                off.requests.clear()
                local_only.clear()
        n = sched.state.n
        dmax = sched.state.delta_max
        decisions = sched.decisions()
        energies = {}
        for m in models:
            d = decisions[m.id]
            if m.critical:
                e = active_e[m.id] if d is Decision.RUN_FULL else gated_e[m.id]
                if d is Decision.RUN_FULL:
                    theta.update(m.id, g)
            elif off is None:
                e = active_e[m.id] if d is Decision.RUN_FULL else gated_e[m.id]
                if d is Decision.RUN_FULL:
                    theta.update(m.id, g)
            else:
                e = _offload_period(off, m, d, n, dmax, deltas[m.id], g, interval_start, tau, theta, local_only,
                                    active_e[m.id])
            ledger.record(g, m.id, d.value, e, dmax)
            energies[m.id] = e
        sched.finish(decisions)

        if keep_records:
            trace.records.append(PeriodRecord(g, state, u, u_applied, ctx, decisions, energies, dmax))
        state = step_dynamics(state, u_applied, tau, cfg.dyn)
        c = min_clearance(state, obstacles)
        if c < trace.min_clearance:
            trace.min_clearance = c
        if check_collision(state, obstacles):
            trace.status = Status.COLLIDED
            break
        if state.pos_x >= scenario.road_length:
            trace.status = Status.COMPLETED
            break
    else:
        trace.status = Status.TIMEOUT
    if off is not None:
        trace.offload_log = off.log
    return trace, ledger


def _offload_period(off: _OffloadState, m, d: Decision, n: int, dmax: int, delta_i: int, g: int,
                    interval_start: int, tau: float, theta: PredictionStore, local_only: dict,
                    local_e: float) -> float:
    req = off.requests.get(m.id)
    energy = 0.0
    if d is Decision.OPTIMIZE and req is None and not local_only.get(m.id):
        choice = offload_decide(delta_i, dmax, tau, off.estimator.estimate)
        off.log.append(OffloadEvent(interval_start, m.id, dmax, choice))
        if choice is OffloadChoice.OFFLOAD_NOW:
            req = issue_offload(m.id, n, delta_i, dmax, tau, off.channel, off.rng)
            off.requests[m.id] = req
        else:
            local_only[m.id] = True
    if req is not None:
        outcome, energy = offload_step(req, n, m, off.channel.tx_power_P)
        if outcome in (OffloadOutcome.RESPONSE_APPLIED, OffloadOutcome.FALLBACK_LOCAL):
            ev = next(e for e in reversed(off.log) if e.model_id == m.id)
            ev.outcome, ev.resolved_at = outcome, n
        if outcome is OffloadOutcome.RESPONSE_APPLIED:
            theta.update(m.id, interval_start + req.issued_at)
            off.estimator = update_estimator(off.estimator, req.actual_response)
        elif outcome is OffloadOutcome.FALLBACK_LOCAL:
            theta.update(m.id, g)
            # censored observation: all that is known is that it took at least this long
            off.estimator = update_estimator(off.estimator, max(req.abandon_at, tau))
        return energy
    # no request in flight: run locally at cadence
    if d is not Decision.IDLE:
        theta.update(m.id, g)
        return local_e
    return 0.0


@dataclass
class RunSummary:
    seed: int
    status: Status
    periods: int
    min_clearance: float
    staleness_violations: int
    report: Optional[GainReport]


def summarize(cfg: RunConfig, trace: RunTrace, ledger: EnergyLedger) -> RunSummary:
    report = compute_gains(ledger, cfg.models, cfg.mode.accounting, measurement_span=cfg.measurement_span) \
        if ledger.entries else None
    return RunSummary(trace.seed, trace.status, ledger.periods, trace.min_clearance, trace.staleness_violations,
                      report)


@dataclass
class BatchResult:
    report: GainReport
    runs: list[RunSummary]

    @property
    def completed(self) -> list[RunSummary]:
        return [r for r in self.runs if r.status is Status.COMPLETED]


def aggregate_reports(reports: list[GainReport]) -> GainReport:
    """Average per-run gains; energies are summed and delta_max histograms merged."""
    if not reports:
        raise ValueError("no reports to aggregate")
    ids = list(reports[0].gains)
    hist = Counter()
    for r in reports:
        hist.update(r.delta_histogram)
    gains = {i: sum(r.gains[i] for r in reports) / len(reports) for i in ids}
    return GainReport(
        {i: sum(r.baseline[i] for r in reports) for i in ids},
        {i: sum(r.optimized[i] for r in reports) for i in ids},
        gains,
        sum(r.combined_gain for r in reports) / len(reports),
        dict(hist),
        histogram_mean(dict(hist)),
    )


def run_batch(cfg: RunConfig, seeds=None, table: Optional[DeadlineTable] = None) -> BatchResult:
    """Run every seed, then average over the episodes that completed the route."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    table = table or table_for(cfg)
    runs = []
    for s in seeds:
        trace, ledger = run_episode(cfg, s, table, keep_records=False)
        runs.append(summarize(cfg, trace, ledger))
    done = [r.report for r in runs if r.status is Status.COMPLETED and r.report is not None]
    if not done:
        raise RuntimeError("no episode completed the route")
    return BatchResult(aggregate_reports(done), runs)
