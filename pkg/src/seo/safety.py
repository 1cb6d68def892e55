"""Safety function, safety filter, time-to-unsafe integration and the deadline lookup table."""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from itertools import product
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (
    ControlAction,
    DynParams,
    Obstacle,
    SafetyContext,
    VehicleState,
    relative_state,
    step_dynamics,
    wrap_angle,
)

TABLE_FORMAT = "seo-deadline-table"
TABLE_VERSION = 1


@dataclass(frozen=True)
class BarrierParams:
    """Margin of the barrier h = distance - (d_min + k_v * speed * max(0, cos(rel_angle)))."""

    d_min: float = 2.0
    k_v: float = 0.4


@dataclass(frozen=True)
class SafetyVerdict:
    h_value: float
    s_flag: int


@dataclass(frozen=True)
class FilterParams:
    steer_max: float = 0.6
    brake_on_unsafe: bool = True
    lookahead: float = 0.1
    n_steer: int = 21

    def __post_init__(self):
        if self.steer_max <= 0 or self.lookahead <= 0:
            raise ValueError("steer_max and lookahead must be positive")
        if self.n_steer < 2:
            raise ValueError("n_steer must be >= 2")

    def steer_grid(self) -> list[float]:
        # descending so that ties resolve toward positive steer
        k = self.n_steer - 1
        return [self.steer_max * (1.0 - 2.0 * i / k) for i in range(self.n_steer)]


def barrier_value(distance: float, rel_angle: float, speed: float, barrier: BarrierParams = BarrierParams()) -> float:
    c = math.cos(rel_angle)
    return distance - (barrier.d_min + barrier.k_v * speed * (c if c > 0.0 else 0.0))


def evaluate_h(ctx: SafetyContext, barrier: BarrierParams = BarrierParams()) -> SafetyVerdict:
    h = barrier_value(ctx.distance, ctx.rel_angle, ctx.speed, barrier)
    return SafetyVerdict(h, 1 if h >= 0.0 else 0)


def min_h(vehicle: VehicleState, obstacles, barrier: BarrierParams = BarrierParams()) -> float:
    """Barrier value minimized over obstacles; +inf when there are none."""
    best = math.inf
    for ob in obstacles:
        ctx = relative_state(vehicle, ob)
        h = barrier_value(ctx.distance, ctx.rel_angle, ctx.speed, barrier)
        if h < best:
            best = h
    return best


def nearest_context(vehicle: VehicleState, obstacles, barrier: BarrierParams = BarrierParams(),
                    sensing_horizon: float = 50.0) -> SafetyContext:
    """Context of the obstacle with the smallest barrier value inside the sensing horizon.

    With nothing in range the distance is the ``sensing_horizon`` sentinel.
    """
    best_ctx = None
    best_h = math.inf
    for ob in obstacles:
        ctx = relative_state(vehicle, ob)
        if ctx.distance > sensing_horizon:
            continue
        h = barrier_value(ctx.distance, ctx.rel_angle, ctx.speed, barrier)
        if h < best_h:
            best_h, best_ctx = h, ctx
    if best_ctx is None:
        return SafetyContext(sensing_horizon, 0.0, vehicle.speed)
    return best_ctx


def canonical_pose(ctx: SafetyContext, safety_radius: float = 2.5) -> tuple[VehicleState, Obstacle]:
    """Vehicle at the origin heading +x, obstacle placed to reproduce ``ctx``."""
    r = ctx.distance + safety_radius
    ob = Obstacle(r * math.cos(ctx.rel_angle), r * math.sin(ctx.rel_angle),
                  safety_radius=safety_radius, collision_radius=0.6 * safety_radius)
    return VehicleState(0.0, 0.0, 0.0, ctx.speed), ob


def _predicted_h_per_steer(vehicle, obstacles, throttle, steers, params, dyn, barrier):
    # one Euler step: position and speed do not depend on steer, only heading does
    x, y, th, v = vehicle.pos_x, vehicle.pos_y, vehicle.heading, vehicle.speed
    dt = params.lookahead
    nx = x + v * math.cos(th) * dt
    ny = y + v * math.sin(th) * dt
    nv = max(0.0, v + (dyn.a_max * throttle - dyn.c_drag * v) * dt)
    geo = []
    for ob in obstacles:
        dx, dy = ob.pos_x - nx, ob.pos_y - ny
        geo.append((math.hypot(dx, dy) - ob.safety_radius, math.atan2(dy, dx)))
    out = []
    for s in steers:
        nth = th + v * math.tan(s) / dyn.wheelbase * dt
        best = math.inf
        for dist, bearing in geo:
            h = barrier_value(dist, bearing - nth, nv, barrier)
            if h < best:
                best = h
        out.append(best)
    return out


def safety_filter(vehicle: VehicleState, obstacles, u: ControlAction, params: FilterParams = FilterParams(),
                  dyn: DynParams = DynParams(), barrier: BarrierParams = BarrierParams()) -> ControlAction:
    """Pass ``u`` through when currently and predictably safe, otherwise substitute the corrective action.

    The corrective action is the grid steer maximizing the barrier one
    lookahead ahead (minimized over all obstacles). Throttle drops to zero when
    braking is enabled and no steer keeps the prediction non-negative.
    """
    u = u.clamped(params.steer_max)
    if not obstacles:
        return u
    now = min_h(vehicle, obstacles, barrier)
    if now >= 0.0 and _predicted_h_per_steer(vehicle, obstacles, u.throttle, (u.steer,), params, dyn, barrier)[0] >= 0.0:
        return u
    steers = params.steer_grid()
    throttle = u.throttle
    preds = _predicted_h_per_steer(vehicle, obstacles, throttle, steers, params, dyn, barrier)
    if params.brake_on_unsafe and max(preds) < 0.0:
        throttle = 0.0
        preds = _predicted_h_per_steer(vehicle, obstacles, throttle, steers, params, dyn, barrier)
    best_i = 0
    for i in range(1, len(steers)):
        if preds[i] > preds[best_i] + 1e-12:
            best_i = i
    return ControlAction(steers[best_i], throttle)


def filter_control(ctx: SafetyContext, u: ControlAction, params: FilterParams = FilterParams(),
                   dyn: DynParams = DynParams(), barrier: BarrierParams = BarrierParams(),
                   safety_radius: float = 2.5) -> ControlAction:
    """Single-obstacle filter on a relative context (canonical pose reconstruction)."""
    vehicle, ob = canonical_pose(ctx, safety_radius)
    return safety_filter(vehicle, [ob], u, params, dyn, barrier)


def time_to_unsafe(vehicle: VehicleState, obstacles, u: ControlAction, horizon: float, sub_dt: float,
                   dyn: DynParams = DynParams(), barrier: BarrierParams = BarrierParams()) -> float:
    """Time the held action ``u`` keeps the barrier non-negative, capped at ``horizon``.

    Returns the last sub-step time known to be safe, so the result is a
    multiple of ``sub_dt`` and never later than the true crossing.
    """
    if horizon <= 0 or sub_dt <= 0:
        raise ValueError("horizon and sub_dt must be positive")
    if min_h(vehicle, obstacles, barrier) < 0.0:
        return 0.0
    steps = int(math.floor(horizon / sub_dt + 1e-9))
    state = vehicle
    for k in range(1, steps + 1):
        state = step_dynamics(state, u, sub_dt, dyn)
        if min_h(state, obstacles, barrier) < 0.0:
            return (k - 1) * sub_dt
    return horizon


def time_to_unsafe_batch(distance, rel_angle, speed, steer, throttle: float, horizon: float, sub_dt: float,
                         dyn: DynParams = DynParams(), barrier: BarrierParams = BarrierParams(),
                         safety_radius: float = 2.5) -> np.ndarray:
    """Vectorized time-to-unsafe over canonical poses (single obstacle), same stepping as the scalar path."""
    distance, rel_angle, speed, steer = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (distance, rel_angle, speed, steer)))
    r = distance + safety_radius
    ox, oy = r * np.cos(rel_angle), r * np.sin(rel_angle)
    x = np.zeros_like(r)
    y = np.zeros_like(r)
    th = np.zeros_like(r)
    v = speed.copy()
    tan_s = np.tan(steer)

    def h_of(x, y, th, v):
        dx, dy = ox - x, oy - y
        rel = np.arctan2(dy, dx) - th
        return np.hypot(dx, dy) - safety_radius - (barrier.d_min + barrier.k_v * v * np.maximum(0.0, np.cos(rel)))

    out = np.full(r.shape, horizon)
    alive = h_of(x, y, th, v) >= 0.0
    out[~alive] = 0.0
    steps = int(math.floor(horizon / sub_dt + 1e-9))
    for k in range(1, steps + 1):
        x, y, th, v = (
            x + v * np.cos(th) * sub_dt,
            y + v * np.sin(th) * sub_dt,
            th + v * tan_s / dyn.wheelbase * sub_dt,
            np.maximum(0.0, v + (dyn.a_max * throttle - dyn.c_drag * v) * sub_dt),
        )
        crossed = alive & (h_of(x, y, th, v) < 0.0)
        out[crossed] = (k - 1) * sub_dt
        alive &= ~crossed
    return out


def _default_axes():
    return {
        "distance": np.geomspace(0.5, 60.0, 49).tolist(),
        "rel_angle": np.linspace(-math.pi, math.pi, 33).tolist(),
        "speed": np.linspace(0.0, 12.0, 9).tolist(),
        "steer": np.linspace(-0.6, 0.6, 7).tolist(),
    }


AXIS_NAMES = ("distance", "rel_angle", "speed", "steer")


@dataclass
class GridSpec:
    distance: list[float] = field(default_factory=lambda: _default_axes()["distance"])
    rel_angle: list[float] = field(default_factory=lambda: _default_axes()["rel_angle"])
    speed: list[float] = field(default_factory=lambda: _default_axes()["speed"])
    steer: list[float] = field(default_factory=lambda: _default_axes()["steer"])
    # evaluation points per cell edge; 1 means corners only
    refine: int = 1

    def axes(self) -> list[list[float]]:
        return [list(map(float, getattr(self, n))) for n in AXIS_NAMES]

    def validate(self):
        for name, ax in zip(AXIS_NAMES, self.axes()):
            if len(ax) < 2:
                raise ValueError(f"axis {name!r} needs at least 2 points")
            if any(b <= a for a, b in zip(ax, ax[1:])):
                raise ValueError(f"axis {name!r} must be strictly increasing")
        if self.refine < 1:
            raise ValueError("refine must be >= 1")


@dataclass
class DeadlineTable:
    """Precomputed conservative map from (distance, rel_angle, speed, steer) cells to Delta_max."""

    axes: list[tuple[float, ...]]
    values: np.ndarray
    horizon_cap: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = [tuple(float(a) for a in ax) for ax in self.axes]
        self.values = np.asarray(self.values, dtype=float)
        expected = tuple(len(ax) - 1 for ax in self.axes)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > self.horizon_cap):
            raise ValueError("cell values must lie in [0, horizon_cap]")

    def to_dict(self) -> dict:
        return {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "axes": {n: list(ax) for n, ax in zip(AXIS_NAMES, self.axes)},
            "shape": list(self.values.shape),
            "horizon_cap": self.horizon_cap,
            "values": self.values.ravel(order="C").tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeadlineTable":
        if d.get("format") != TABLE_FORMAT:
            raise ValueError("not a deadline table file")
        if d.get("version") != TABLE_VERSION:
            raise ValueError(f"unsupported table version {d.get('version')}")
        axes = [d["axes"][n] for n in AXIS_NAMES]
        values = np.asarray(d["values"], dtype=float).reshape(d["shape"], order="C")
        return cls(axes, values, float(d["horizon_cap"]), d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "DeadlineTable":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def cell_index(self, distance: float, rel_angle: float, speed: float, steer: float) -> tuple[int, ...]:
        idx = []
        for ax, val in zip(self.axes, (distance, wrap_angle(rel_angle), speed, steer)):
            i = bisect_right(ax, val) - 1
            if i < 0:
                i = 0
            elif i > len(ax) - 2:
                i = len(ax) - 2
            idx.append(i)
        return tuple(idx)


def build_deadline_table(grid: GridSpec | None = None, horizon: float = 0.080, sub_dt: float = 0.002, *,
                         throttle: float = 1.0, dyn: DynParams = DynParams(),
                         barrier: BarrierParams = BarrierParams(), safety_radius: float = 2.5) -> DeadlineTable:
    """Evaluate time-to-unsafe on the grid and keep, per cell, the minimum over its evaluation points.

    Evaluation points are the cell corners, plus ``grid.refine - 1`` interior
    points per axis when refinement is requested. The throttle is held at
    ``throttle`` for every evaluation.
    """
    grid = grid or GridSpec()
    grid.validate()
    axes = grid.axes()
    k = grid.refine
    fine = []
    for ax in axes:
        pts = []
        for a, b in zip(ax, ax[1:]):
            pts.extend(a + (b - a) * j / k for j in range(k))
        pts.append(ax[-1])
        fine.append(np.asarray(pts))
    mesh = np.meshgrid(*fine, indexing="ij")
    phi = time_to_unsafe_batch(mesh[0], mesh[1], mesh[2], mesh[3], throttle, horizon, sub_dt,
                               dyn, barrier, safety_radius)
    # min over every evaluation point inside/on each cell
    shape = tuple(len(ax) - 1 for ax in axes)
    out = np.full(shape, np.inf)
    for offs in product(range(k + 1), repeat=4):
        sl = tuple(slice(o, o + k * n, k) for o, n in zip(offs, shape))
        np.minimum(out, phi[sl], out=out)
    out = np.clip(out, 0.0, horizon)
    meta = {
        "sub_dt": sub_dt,
        "throttle": throttle,
        "safety_radius": safety_radius,
        "refine": k,
        "dyn": asdict(dyn),
        "barrier": asdict(barrier),
    }
    return DeadlineTable(axes, out, horizon, meta)


def sample_deadline(table: DeadlineTable, ctx: SafetyContext, u: ControlAction) -> float:
    """Look up Delta_max for ``ctx`` under steer ``u.steer``.

    Queries below the smallest grid distance return 0; other axes clamp to the
    nearest edge cell.
    """
    if ctx.distance < table.axes[0][0]:
        return 0.0
    return float(table.values[table.cell_index(ctx.distance, ctx.rel_angle, ctx.speed, u.steer)])
