"""Point-mass longitudinal model of a small mining locomotive.

Axle torque becomes tractive force through the wheel radius and is clamped at
the wheel/rail adhesion limit ``mu * m * g``; slip and spin show up only as
that saturation. Running resistance is a rolling term plus a curve term
``curve_coeff / radius``. Motion is integrated with semi-implicit Euler.

The ``_``-prefixed kernels are compiled with numba and shared with the
episode loop, so the public functions and the training path run the same
arithmetic.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from numba import njit

from .track import Segment, TrackLayout

MAX_AXLE_TORQUE = 388.0  # largest axle torque ever applied to the model, Nm


class TorqueOutOfRange(ValueError):
    pass


class IntegrationFault(ArithmeticError):
    pass


class Health(enum.Enum):
    OK = "ok"
    FAULT = "fault"


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1500.0
    wheel_radius: float = 0.193
    driven_axles: int = 2
    torque_min: float = -300.0
    torque_max: float = 300.0
    rolling_coeff: float = 0.004
    curve_coeff: float = 0.5
    gravity: float = 9.81
    speed_cap: float = 5.0

    def __post_init__(self):
        if not self.mass > 0 or not self.wheel_radius > 0:
            raise ValueError("mass and wheel_radius must be positive")
        if int(self.driven_axles) != self.driven_axles or self.driven_axles < 1:
            raise ValueError("driven_axles must be a positive integer")
        if not self.torque_min < 0 < self.torque_max:
            raise ValueError("torque bounds must straddle zero")
        if max(-self.torque_min, self.torque_max) > MAX_AXLE_TORQUE:
            raise ValueError(f"torque bounds limited to +/-{MAX_AXLE_TORQUE} Nm")
        if self.rolling_coeff < 0 or self.curve_coeff < 0:
            raise ValueError("resistance coefficients must be non-negative")
        if not self.gravity > 0 or not self.speed_cap > 0:
            raise ValueError("gravity and speed_cap must be positive")


@dataclass(frozen=True)
class VehicleState:
    t: float = 0.0
    position: float = 0.0
    speed: float = 0.0

    def is_finite(self) -> bool:
        return all(math.isfinite(x) for x in (self.t, self.position, self.speed))


@njit(cache=True)
def _wheel_force(torque, axles, wheel_radius, mu, mass, g):
    force = axles * torque / wheel_radius
    cap = mu * mass * g
    if force > cap:
        return cap
    if force < -cap:
        return -cap
    return force


@njit(cache=True)
def _resistance_magnitude(mass, g, rolling, curve_coeff, radius):
    # radius is +inf on straight track
    return mass * g * (rolling + curve_coeff / radius)


@njit(cache=True)
def _resistance(speed, applied, r0):
    """Force to subtract from the wheel force. At rest it balances ``applied`` up to ``r0``."""
    if speed > 0.0:
        return r0
    if speed < 0.0:
        return -r0
    if applied > r0:
        return r0
    if applied < -r0:
        return -r0
    return applied


@njit(cache=True)
def _locate(pos, starts):
    # off-track positions use the nearest end segment
    i = starts.shape[0] - 1
    while i > 0 and pos < starts[i]:
        i -= 1
    return i


@njit(cache=True)
def _advance(t0, x, v, torque, starts, radius, mu, mass, g, axles, wheel_radius,
             rolling, curve_coeff, n_sub, dt):
    """Run ``n_sub`` semi-implicit Euler substeps. Returns (t, x, v, finite)."""
    for k in range(n_sub):
        i = _locate(x, starts)
        force = _wheel_force(torque, axles, wheel_radius, mu[i], mass, g)
        r0 = _resistance_magnitude(mass, g, rolling, curve_coeff, radius[i])
        v_new = v + (force - _resistance(v, force, r0)) / mass * dt
        if v != 0.0 and v_new * v < 0.0:
            # resistance and braking bring the vehicle to rest; they cannot reverse it
            v_new = 0.0
        v = v_new
        x = x + v * dt
        if not (math.isfinite(x) and math.isfinite(v)):
            return t0 + (k + 1) * dt, x, v, False
    return t0 + n_sub * dt, x, v, True


def substeps(dt_ctrl: float, dt_int: float) -> int:
    if not dt_ctrl > 0 or not dt_int > 0:
        raise ValueError("time steps must be positive")
    n = round(dt_ctrl / dt_int)
    if n < 1 or abs(n * dt_int - dt_ctrl) > 1e-9 * dt_ctrl:
        raise ValueError(f"dt_ctrl={dt_ctrl} is not an integer multiple of dt_int={dt_int}")
    return n


def check_torque(torque: float, params: VehicleParams):
    if not params.torque_min <= torque <= params.torque_max:
        raise TorqueOutOfRange(
            f"torque {torque} Nm outside [{params.torque_min}, {params.torque_max}]")


def wheel_force(torque: float, params: VehicleParams, mu: float) -> float:
    """Tractive (or braking) force at the rail, saturated at the adhesion limit."""
    check_torque(torque, params)
    if not mu > 0:
        raise ValueError("mu must be positive")
    return float(_wheel_force(float(torque), params.driven_axles, params.wheel_radius,
                              mu, params.mass, params.gravity))


def resistance(speed: float, segment: Segment, params: VehicleParams,
               applied_force: float = 0.0) -> float:
    """Running resistance, signed so that ``wheel_force - resistance`` is the net force.

    While moving it has magnitude ``m g (rolling_coeff + curve_coeff / radius)``
    in the direction of travel. At rest it is static friction: it cancels
    ``applied_force`` up to that same magnitude.
    """
    radius = segment.radius if segment.is_curve else math.inf
    r0 = _resistance_magnitude(params.mass, params.gravity, params.rolling_coeff,
                               params.curve_coeff, radius)
    return float(_resistance(float(speed), float(applied_force), r0))


def _integrate(state, torque, layout, params, n_sub, dt_int):
    starts, _, radius, mu, _, _ = layout.arrays()
    t, x, v, ok = _advance(state.t, state.position, state.speed, float(torque), starts,
                           radius, mu, params.mass, params.gravity,
                           float(params.driven_axles), params.wheel_radius,
                           params.rolling_coeff, params.curve_coeff, n_sub, dt_int)
    if not ok:
        raise IntegrationFault(f"non-finite state after integration at t={t}")
    return VehicleState(t, x, v)


def step(state: VehicleState, torque: float, layout: TrackLayout, params: VehicleParams,
         dt_ctrl: float = 0.01, dt_int: float = 0.001) -> VehicleState:
    """Hold ``torque`` for one control interval and integrate the motion."""
    check_torque(torque, params)
    if not state.is_finite():
        raise IntegrationFault(f"non-finite input state {state}")
    return _integrate(state, torque, layout, params, substeps(dt_ctrl, dt_int), dt_int)


def fault_check(state: VehicleState, params: VehicleParams) -> Health:
    if not state.is_finite() or abs(state.speed) > params.speed_cap:
        return Health.FAULT
    return Health.OK


def rollout(state: VehicleState, torque: float, layout: TrackLayout, params: VehicleParams,
            duration: float, dt_int: float) -> VehicleState:
    """Hold a constant torque for ``duration`` seconds in a single integration run."""
    check_torque(torque, params)
    return _integrate(state, torque, layout, params, substeps(duration, dt_int), dt_int)


def adhesion_limit(params: VehicleParams, mu: float) -> float:
    return mu * params.mass * params.gravity


__all__ = [
    "VehicleParams", "VehicleState", "Health", "TorqueOutOfRange", "IntegrationFault",
    "wheel_force", "resistance", "step", "fault_check", "rollout", "substeps",
    "adhesion_limit",
]
