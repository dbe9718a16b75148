import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locorl.dynamics import (Health, IntegrationFault, TorqueOutOfRange, VehicleParams,
                             VehicleState, fault_check, resistance, rollout, step, substeps,
                             wheel_force)
from locorl.track import CURVE, STRAIGHT, Segment, TrackLayout, default_track

from oracles import point_mass_rollout

P = VehicleParams()
STRAIGHT_SEG = Segment(STRAIGHT, 50, 0.4, 2.83)
CURVE_SEG = Segment(CURVE, 50, 0.4, 1.42, radius=220.48)


def flat(mu=0.4, length=1000.0):
    return TrackLayout((Segment(STRAIGHT, length, mu, 2.83),), length)


@pytest.mark.parametrize("torque,mu,force", [(300, 0.4, 3108.8082901554406),
                                             (300, 0.2, 2943.0), (0, 0.3, 0.0),
                                             (-300, 0.2, -2943.0)])
def test_wheel_force(torque, mu, force):
    assert wheel_force(torque, P, mu) == pytest.approx(force, rel=1e-12)


def test_wheel_force_rejects_out_of_range():
    with pytest.raises(TorqueOutOfRange):
        wheel_force(301, P, 0.4)


@pytest.mark.parametrize("speed,seg,r", [(1.0, STRAIGHT_SEG, 58.86),
                                         (1.0, CURVE_SEG, 92.23037373004354),
                                         (-1.0, STRAIGHT_SEG, -58.86)])
def test_resistance_moving(speed, seg, r):
    assert resistance(speed, seg, P) == pytest.approx(r, rel=1e-12)


def test_static_friction_balances_small_force():
    assert resistance(0.0, STRAIGHT_SEG, P, applied_force=10.0) == 10.0
    assert resistance(0.0, STRAIGHT_SEG, P, applied_force=-10.0) == -10.0
    assert resistance(0.0, STRAIGHT_SEG, P, applied_force=500.0) == pytest.approx(58.86)


def test_rest_stays_at_rest():
    s = VehicleState()
    for _ in range(100):
        s = step(s, 0.0, default_track(), P)
    assert s.position == 0.0 and s.speed == 0.0
    assert s.t == pytest.approx(1.0)


def test_single_step_from_rest():
    s = step(VehicleState(), 100.0, default_track(), P, 0.01, 0.001)
    # exact: ten substeps of constant acceleration (200/0.193 - 58.86)/1500
    assert s.speed == pytest.approx(0.00651606286701209, abs=1e-14)
    assert s.position == pytest.approx(3.5838345768566494e-05, abs=1e-15)


def test_braking_reaches_rest_then_holds_without_torque():
    s = VehicleState(0.0, 0.0, 2.83)
    speeds = []
    while s.speed > 0.0:
        prev = s.speed
        # one substep per call, so the zero crossing is observed directly
        s = step(s, -300.0, flat(), P, dt_ctrl=0.001, dt_int=0.001)
        assert s.speed < prev
        speeds.append(s.speed)
        assert len(speeds) < 10000
    # the zero crossing lands exactly on rest, never overshoots into reverse
    assert s.speed == 0.0
    stop = len(speeds)
    # constant deceleration (600/0.193 + 58.86)/1500 gives the exact stopping time
    t_stop = 2.83 / ((600 / 0.193 + 58.86) / 1500)
    assert abs(stop * 0.001 - t_stop) <= 0.001
    for _ in range(50):
        s = step(s, 0.0, flat(), P)
    assert s.speed == 0.0


def test_reverse_only_when_torque_beats_static_friction():
    weak = step(VehicleState(), -5.0, flat(), P)  # 51.8 N < 58.86 N
    strong = step(VehicleState(), -6.0, flat(), P)  # 62.2 N > 58.86 N
    assert weak.speed == 0.0
    assert strong.speed < 0.0


def test_step_deterministic():
    a = step(VehicleState(1.0, 3.0, 1.2), 250.0, default_track(), P)
    b = step(VehicleState(1.0, 3.0, 1.2), 250.0, default_track(), P)
    assert a == b


def test_non_finite_input_raises():
    with pytest.raises(IntegrationFault):
        step(VehicleState(0.0, 0.0, math.nan), 0.0, default_track(), P)


@pytest.mark.parametrize("speed,health", [(1.0, Health.OK), (math.nan, Health.FAULT),
                                          (6.0, Health.FAULT), (-6.0, Health.FAULT)])
def test_fault_check(speed, health):
    assert fault_check(VehicleState(0, 0, speed), P) is health


def test_substeps():
    assert substeps(0.01, 0.001) == 10
    with pytest.raises(ValueError):
        substeps(0.01, 0.003)


def test_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(mass=-1)
    with pytest.raises(ValueError):
        VehicleParams(torque_max=400)


@pytest.mark.parametrize("torque", [-300.0, -100.0, 100.0, 300.0])
def test_matches_oracle_same_step(torque):
    v0 = 1.5
    s = rollout(VehicleState(0, 0, v0), torque, flat(), P, 1.0, 1e-3)
    x, v = point_mass_rollout(torque, 1.0, 1e-3, v0=v0)
    assert s.position == pytest.approx(x, abs=1e-10)
    assert s.speed == pytest.approx(v, abs=1e-10)


@settings(max_examples=300, deadline=None)
@given(st.floats(-300, 0), st.sampled_from([0.05, 0.2, 0.4, 0.6]),
       st.floats(0.001, 4.0), st.booleans())
def test_braking_or_coasting_never_gains_speed(torque, mu, v0, on_curve):
    seg = Segment(CURVE, 1000, mu, 1.42, radius=220.48) if on_curve else \
        Segment(STRAIGHT, 1000, mu, 2.83)
    layout = TrackLayout((seg,), 1000)
    s = step(VehicleState(0, 10.0, v0), torque, layout, P)
    assert s.speed < v0
    if s.speed < 0.0:
        # reversing needs a braking torque that outlasts the stop and beats static friction
        drive = min(abs(2 * torque / P.wheel_radius), mu * P.mass * P.gravity)
        assert drive > P.mass * P.gravity * P.rolling_coeff
