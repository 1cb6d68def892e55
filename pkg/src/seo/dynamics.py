"""Kinematic bicycle plant, obstacle geometry and relative-state extraction."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < angle <= math.pi:
        return angle
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


class SimulationError(RuntimeError):
    """Raised when the simulated state becomes corrupted (non-finite)."""


@dataclass(frozen=True)
class VehicleState:
    pos_x: float
    pos_y: float
    heading: float
    speed: float


@dataclass(frozen=True)
class ControlAction:
    steer: float
    throttle: float

    def clamped(self, steer_max: float) -> "ControlAction":
        return ControlAction(
            min(max(self.steer, -steer_max), steer_max),
            min(max(self.throttle, 0.0), 1.0),
        )


@dataclass(frozen=True)
class Obstacle:
    pos_x: float
    pos_y: float
    safety_radius: float = 2.5
    collision_radius: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.collision_radius < self.safety_radius:
            raise ValueError("need 0 < collision_radius < safety_radius")


@dataclass(frozen=True)
class DynParams:
    wheelbase: float = 2.5
    steer_max: float = 0.6
    a_max: float = 3.0
    # a_max / c_drag = 8 m/s cruise at full throttle
    c_drag: float = 0.375


@dataclass(frozen=True)
class Scenario:
    road_length: float = 100.0
    lane_center_y: float = 0.0
    lane_half_width: float = 2.0
    obstacles: tuple[Obstacle, ...] = field(default_factory=tuple)
    dt: float = 0.020

    def __post_init__(self):
        if self.road_length <= 0:
            raise ValueError("road_length must be positive")
        for ob in self.obstacles:
            if not 0.0 <= ob.pos_x <= self.road_length:
                raise ValueError(f"obstacle outside road: {ob}")


@dataclass(frozen=True)
class SafetyContext:
    """Relative state seen by the safety filter.

    ``distance`` is center distance minus the obstacle's safety radius and may
    be negative inside the safety sphere.
    """

    distance: float
    rel_angle: float
    speed: float


def step_dynamics(state: VehicleState, u: ControlAction, dt: float, params: DynParams = DynParams()) -> VehicleState:
    """Advance the bicycle model by one explicit Euler step of ``dt`` under held ``u``."""
    x, y, th, v = state.pos_x, state.pos_y, state.heading, state.speed
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(th) and math.isfinite(v)):
        raise SimulationError(f"non-finite vehicle state: {state}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    accel = params.a_max * u.throttle - params.c_drag * v
    v_next = v + accel * dt
    if v_next < 0.0:
        v_next = 0.0
    return VehicleState(
        x + v * math.cos(th) * dt,
        y + v * math.sin(th) * dt,
        wrap_angle(th + v * math.tan(u.steer) / params.wheelbase * dt),
        v_next,
    )


def rollout(state: VehicleState, u: ControlAction, duration: float, dt: float,
            params: DynParams = DynParams()) -> VehicleState:
    steps = int(round(duration / dt))
    for _ in range(steps):
        state = step_dynamics(state, u, dt, params)
    return state


def relative_state(vehicle: VehicleState, obstacle: Obstacle) -> SafetyContext:
    dx = obstacle.pos_x - vehicle.pos_x
    dy = obstacle.pos_y - vehicle.pos_y
    return SafetyContext(
        math.hypot(dx, dy) - obstacle.safety_radius,
        wrap_angle(math.atan2(dy, dx) - vehicle.heading),
        vehicle.speed,
    )


def check_collision(vehicle: VehicleState, obstacles) -> bool:
    # closed condition: touching the collision radius counts
    for ob in obstacles:
        if math.hypot(ob.pos_x - vehicle.pos_x, ob.pos_y - vehicle.pos_y) <= ob.collision_radius:
            return True
    return False


def min_clearance(vehicle: VehicleState, obstacles) -> float:
    """Smallest center distance minus collision radius over ``obstacles`` (inf if none)."""
    best = math.inf
    for ob in obstacles:
        c = math.hypot(ob.pos_x - vehicle.pos_x, ob.pos_y - vehicle.pos_y) - ob.collision_radius
        if c < best:
            best = c
    return best


def place_obstacles(count: int, seed, scenario: Scenario, *, min_spacing: float = 10.0,
                    template: Obstacle = Obstacle(0.0, 0.0), max_tries: int = 1000) -> list[Obstacle]:
    """Sample ``count`` obstacles in the final third of the road.

    x is uniform on [2/3 L, L], y uniform within the lane; pairwise center
    spacing of at least ``min_spacing`` is enforced by rejection.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = random.Random(seed)
    lo = 2.0 * scenario.road_length / 3.0
    hi = scenario.road_length
    y_lo = scenario.lane_center_y - scenario.lane_half_width
    y_hi = scenario.lane_center_y + scenario.lane_half_width
    placed: list[Obstacle] = []
    misses = 0
    for _ in range(max_tries * max(count, 1)):
        if len(placed) == count:
            break
        cand = replace(template, pos_x=rng.uniform(lo, hi), pos_y=rng.uniform(y_lo, y_hi))
        if all(math.hypot(cand.pos_x - o.pos_x, cand.pos_y - o.pos_y) >= min_spacing for o in placed):
            placed.append(cand)
            misses = 0
        else:
            misses += 1
            if misses > 50:
                # greedy dead end: start over
                placed, misses = [], 0
    if len(placed) < count:
        raise ValueError(f"cannot place {count} obstacles with spacing {min_spacing} m")
    placed.sort(key=lambda o: o.pos_x)
    return placed
