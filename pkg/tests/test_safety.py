import math
import random

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from seo.dynamics import ControlAction, DynParams, Obstacle, SafetyContext, VehicleState, relative_state, step_dynamics
from seo.safety import (
    BarrierParams,
    DeadlineTable,
    FilterParams,
    GridSpec,
    barrier_value,
    build_deadline_table,
    canonical_pose,
    evaluate_h,
    filter_control,
    min_h,
    nearest_context,
    safety_filter,
    sample_deadline,
    time_to_unsafe,
    time_to_unsafe_batch,
)

FP = FilterParams()
NO_DRAG = DynParams(c_drag=0.0)

dists = st.floats(0.5, 60.0)
rel = st.floats(-math.pi, math.pi)
speeds = st.floats(0.0, 12.0)
steers = st.floats(-0.6, 0.6)
throttles = st.floats(0.0, 1.0)


def phi_at(ctx, u, horizon=0.08, sub_dt=0.002):
    vehicle, ob = canonical_pose(ctx)
    return time_to_unsafe(vehicle, [ob], u, horizon, sub_dt)


def oracle_predicted_h(vehicle, obstacles, steer, throttle, lookahead=0.1):
    # independent path: full dynamics step, then geometry via relative_state
    nxt = step_dynamics(vehicle, ControlAction(steer, throttle), lookahead)
    return min(evaluate_h(relative_state(nxt, ob)).h_value for ob in obstacles)


def test_evaluate_h_examples():
    v = evaluate_h(SafetyContext(50, 0.0, 0.0))
    assert v.h_value == 48.0 and v.s_flag == 1
    v = evaluate_h(SafetyContext(2.0, math.pi, 0.0))
    assert v.h_value == 0.0 and v.s_flag == 1
    v = evaluate_h(SafetyContext(4.0, 0.0, 10.0))
    assert v.h_value == pytest.approx(-2.0) and v.s_flag == 0


@given(st.floats(-10, 60), rel, speeds)
def test_verdict_flag_matches_sign(d, a, v):
    verdict = evaluate_h(SafetyContext(d, a, v))
    assert verdict.s_flag == (1 if verdict.h_value >= 0 else 0)
    # margin never shrinks below d_min and ignores obstacles behind
    assert verdict.h_value <= d - 2.0 + 1e-12
    if math.cos(a) <= 0:
        assert verdict.h_value == pytest.approx(d - 2.0)


def test_filter_passes_safe_action():
    u = ControlAction(0.1, 0.5)
    assert filter_control(SafetyContext(50, 0.0, 5.0), u) == u


def test_filter_head_on_evades_at_full_lock_toward_positive():
    u = filter_control(SafetyContext(5.0, 0.0, 8.0), ControlAction(0.0, 1.0))
    assert abs(u.steer) == pytest.approx(FP.steer_max)
    assert u.steer > 0


@pytest.mark.parametrize("angle, sign", [(0.05, -1.0), (-0.05, 1.0)])
def test_filter_turns_toward_larger_clearance(angle, sign):
    # obstacle slightly left -> turn right, and vice versa
    ctx = SafetyContext(5.0, angle, 8.0)
    u = filter_control(ctx, ControlAction(0.0, 1.0))
    assert math.copysign(1.0, u.steer) == sign
    vehicle, ob = canonical_pose(ctx)
    preds = {s: oracle_predicted_h(vehicle, [ob], s, u.throttle) for s in FP.steer_grid()}
    best = max(preds.values())
    assert preds[u.steer] == pytest.approx(best, abs=1e-9)


def test_filter_brakes_when_no_steer_is_safe():
    ctx = SafetyContext(0.5, 0.0, 10.0)
    vehicle, ob = canonical_pose(ctx)
    assert all(oracle_predicted_h(vehicle, [ob], s, 1.0) < 0 for s in FP.steer_grid())
    u = filter_control(ctx, ControlAction(0.0, 1.0))
    assert u.throttle == 0.0
    keep = filter_control(ctx, ControlAction(0.0, 1.0), FilterParams(brake_on_unsafe=False))
    assert keep.throttle == 1.0


@given(st.floats(-5, 60), rel, speeds, st.floats(-3, 3), st.floats(-2, 2))
def test_filter_output_admissible(d, a, v, s, t):
    u = filter_control(SafetyContext(d, a, v), ControlAction(s, t))
    assert -FP.steer_max <= u.steer <= FP.steer_max
    assert 0.0 <= u.throttle <= 1.0


@given(dists, rel, speeds, steers, throttles)
def test_filter_idempotent_on_safe_inputs(d, a, v, s, t):
    ctx = SafetyContext(d, a, v)
    vehicle, ob = canonical_pose(ctx)
    assume(evaluate_h(ctx).s_flag == 1)
    assume(oracle_predicted_h(vehicle, [ob], s, t) >= 1e-9)
    assert filter_control(ctx, ControlAction(s, t)) == ControlAction(s, t)


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=4),
       rel, speeds, steers, throttles)
def test_one_step_safety_preservation(pts, heading, v, s, t):
    obstacles = [Obstacle(x, y) for x, y in pts]
    vehicle = VehicleState(0.0, 0.0, heading, v)
    assume(min_h(vehicle, obstacles) >= 0.0)
    assume(max(oracle_predicted_h(vehicle, obstacles, g, t) for g in FP.steer_grid()) >= 1e-9)
    u = safety_filter(vehicle, obstacles, ControlAction(s, t))
    nxt = step_dynamics(vehicle, u, FP.lookahead)
    assert min_h(nxt, obstacles) >= -1e-9


def test_nearest_context_picks_min_h_and_sentinel():
    v = VehicleState(0, 0, 0, 5.0)
    ahead, behind = Obstacle(10, 0), Obstacle(-9, 0)
    ctx = nearest_context(v, [behind, ahead])
    # behind is closer but ahead has the smaller barrier value
    assert barrier_value(ctx.distance, ctx.rel_angle, ctx.speed) == pytest.approx(min_h(v, [behind, ahead]))
    assert ctx.rel_angle == pytest.approx(0.0)
    far = nearest_context(v, [Obstacle(90, 0)], sensing_horizon=50.0)
    assert far == SafetyContext(50.0, 0.0, 5.0)


def test_time_to_unsafe_examples():
    v = VehicleState(0, 0, 0, 10)
    assert time_to_unsafe(v, [Obstacle(5, 0)], ControlAction(0, 0), 1.0, 0.002) == 0.0
    away = VehicleState(0, 0, math.pi, 5)
    assert time_to_unsafe(away, [Obstacle(10, 0)], ControlAction(0, 0), 0.08, 0.002) == 0.08


def test_time_to_unsafe_head_on_closed_form():
    # margin 2 + 0.4 * 10 = 6 m; 20 m beyond the margin at 10 m/s -> 2 s
    sub_dt = 0.002
    ob = Obstacle(20.0 + 6.0 + 2.5, 0.0)
    phi = time_to_unsafe(VehicleState(0, 0, 0, 10), [ob], ControlAction(0, 0), 5.0, sub_dt, NO_DRAG)
    assert abs(phi - 2.0) <= sub_dt
    assert phi <= 2.0 + 1e-12


@given(st.floats(0.5, 30), st.floats(0.5, 30), speeds, steers, throttles)
def test_phi_monotone_in_distance_head_on(d1, d2, v, s, t):
    lo, hi = sorted((d1, d2))
    u = ControlAction(s, t)
    assert phi_at(SafetyContext(lo, 0.0, v), u) <= phi_at(SafetyContext(hi, 0.0, v), u)


@given(st.floats(-1, 60), rel, speeds, steers, throttles)
def test_batch_matches_scalar(d, a, v, s, t):
    vehicle, ob = canonical_pose(SafetyContext(d, a, v))
    scalar = time_to_unsafe(vehicle, [ob], ControlAction(s, t), 0.08, 0.002)
    batch = time_to_unsafe_batch(d, a, v, s, t, 0.08, 0.002)
    assert float(batch) == pytest.approx(scalar, abs=1e-12)


def test_phi_rejects_bad_arguments():
    with pytest.raises(ValueError):
        time_to_unsafe(VehicleState(0, 0, 0, 1), [], ControlAction(0, 0), 0.0, 0.002)


def small_grid(**kw):
    base = dict(distance=[5.0, 10.0], rel_angle=[-0.2, 0.2], speed=[4.0, 8.0], steer=[-0.3, 0.3])
    base.update(kw)
    return GridSpec(**base)


def test_single_cell_all_horizon():
    tab = build_deadline_table(small_grid(distance=[50.0, 55.0]))
    assert tab.values.shape == (1, 1, 1, 1)
    assert tab.values[0, 0, 0, 0] == 0.08


def test_cell_is_min_over_corners():
    grid = small_grid(distance=[2.0, 4.0, 8.0], speed=[0.0, 6.0, 12.0])
    tab = build_deadline_table(grid)
    from itertools import product

    for idx in np.ndindex(tab.values.shape):
        corners = []
        for offs in product((0, 1), repeat=4):
            d, a, v, s = (tab.axes[k][idx[k] + offs[k]] for k in range(4))
            corners.append(phi_at(SafetyContext(d, a, v), ControlAction(s, 1.0)))
        assert tab.values[idx] == pytest.approx(min(corners), abs=1e-12)


def test_refined_table_is_no_less_conservative():
    grid = small_grid(distance=[2.0, 4.0, 8.0])
    coarse = build_deadline_table(grid)
    fine = build_deadline_table(GridSpec(grid.distance, grid.rel_angle, grid.speed, grid.steer, refine=3))
    assert np.all(fine.values <= coarse.values)


def test_grid_validation():
    with pytest.raises(ValueError):
        build_deadline_table(small_grid(distance=[5.0]))
    with pytest.raises(ValueError):
        build_deadline_table(small_grid(speed=[8.0, 4.0]))
    with pytest.raises(ValueError):
        build_deadline_table(small_grid(distance=[]))


def test_sample_deadline_edges(default_table):
    tab = default_table
    assert sample_deadline(tab, SafetyContext(50.0, 0.0, 8.0), ControlAction(0, 1)) == tab.horizon_cap
    assert sample_deadline(tab, SafetyContext(0.3, 0.0, 1.0), ControlAction(0, 1)) == 0.0
    # queries beyond the last bin clamp to the edge cell
    assert sample_deadline(tab, SafetyContext(500.0, 0.0, 30.0), ControlAction(0, 1)) == tab.values[-1, 16, -1, 3]


def test_sample_at_grid_corner_is_conservative(default_table):
    tab = default_table
    rng = random.Random(3)
    for _ in range(200):
        idx = [rng.randrange(len(ax)) for ax in tab.axes]
        d, a, v, s = (tab.axes[k][i] for k, i in enumerate(idx))
        phi = phi_at(SafetyContext(d, a, v), ControlAction(s, 1.0))
        assert sample_deadline(tab, SafetyContext(d, a, v), ControlAction(s, 1.0)) <= phi


@given(st.floats(0.5, 60), rel, speeds, steers, throttles)
def test_table_conservative_at_random_points(default_table, d, a, v, s, t):
    ctx, u = SafetyContext(d, a, v), ControlAction(s, t)
    assert sample_deadline(default_table, ctx, u) <= phi_at(ctx, u) + 0.002


def test_table_roundtrip(tmp_path, default_table):
    path = tmp_path / "table.json"
    default_table.save(path)
    back = DeadlineTable.load(path)
    assert back.axes == default_table.axes
    assert np.array_equal(back.values, default_table.values)
    assert back.horizon_cap == default_table.horizon_cap
    d = default_table.to_dict()
    assert d["format"] == "seo-deadline-table" and d["version"] == 1
    assert len(d["values"]) == int(np.prod(d["shape"]))
    with pytest.raises(ValueError):
        DeadlineTable.from_dict({**d, "version": 99})
    with pytest.raises(ValueError):
        DeadlineTable.from_dict({**d, "format": "other"})


def test_table_rejects_out_of_range_values():
    axes = [[0.0, 1.0]] * 4
    with pytest.raises(ValueError):
        DeadlineTable(axes, np.full((1, 1, 1, 1), 0.2), 0.08)
    with pytest.raises(ValueError):
        DeadlineTable(axes, np.zeros((2, 1, 1, 1)), 0.08)


def test_default_table_values_bounded(default_table):
    v = default_table.values
    assert v.min() >= 0.0 and v.max() <= default_table.horizon_cap
    assert barrier_value(1.0, 0.0, 0.0, BarrierParams(d_min=0.5)) == 0.5
