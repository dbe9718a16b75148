"""Episode loop: state classification, termination rules and safety metrics.

One control step observes the current state, picks an action index
epsilon-greedily, rate-limits the torque, integrates the vehicle, classifies
the new state, pays the reward and updates the Q-table. The reward's sign
rule comes from the state the step ends in, and the update is credited to
the torque actually applied after rate limiting. The loop itself is a
compiled kernel; ``run_episode`` prepares its inputs and wraps the logs.

Every episode log starts with a row for t = 0 (the ``begin`` state), so the
initial gap counts toward the closest approach.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .dynamics import VehicleParams, VehicleState, _advance, substeps
from .rl import (
    _REWARD_CLASS, ActionSpace, DriveState, ExplorationSchedule, QTable, RLParams,
    _q_update, _reward, _select, _smooth,
)
from .track import Obstacle, PositionOutOfTrack, TrackLayout, obstacle_position

ROLLBACK_LIMIT = -0.05  # m
REWARD_FREE_STEPS = 5


class Termination(str, enum.Enum):
    REACHED_DESTINATION = "ReachedDestination"
    ROLLED_BACK = "RolledBack"
    COLLISION = "Collision"
    DYNAMICS_FAULT = "DynamicsFault"
    TIME_LIMIT = "TimeLimit"


_TERMINATIONS = list(Termination)


class NoObstacle(ValueError):
    pass


class DegenerateBaseline(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class ClassifierThresholds:
    speed_tolerance: float = 0.05
    safe_distance: float = 5.0
    near_end_window: float = 5.0
    turn_lookahead: float = 10.0
    stop_speed: float = 0.05

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class StepRecord:
    t: float
    position: float
    speed: float
    torque: float
    state: DriveState
    reward: float
    epsilon: float
    gap: float


@njit(cache=True)
def _band(speed, limit, tol, s_max, s_over, s_below):
    if speed > limit + tol:
        return s_over
    if speed < limit - tol:
        return s_below
    return s_max


@njit(cache=True)
def _classify(pos, speed, gap, first, starts, limits, is_curve, total, destination,
              speed_tol, safe_distance, near_window, lookahead, stop_speed):
    # state codes follow DriveState
    if first:
        return 0
    x = min(max(pos, 0.0), total)
    near = abs(destination - x) <= near_window
    if near:
        if abs(speed) <= stop_speed:
            return 1
        if speed > stop_speed:
            return 8
        return 9
    i = starts.shape[0] - 1
    while i > 0 and x < starts[i]:
        i -= 1
    if gap <= safe_distance:
        if abs(speed) <= stop_speed:
            return 2
        return 3 if is_curve[i] else 7
    if is_curve[i]:
        return _band(speed, limits[i], speed_tol, 4, 5, 6)
    curve_limit = math.inf
    for j in range(i + 1, starts.shape[0]):
        if starts[j] > x + lookahead:
            break
        if is_curve[j]:
            curve_limit = min(curve_limit, limits[j])
    if curve_limit < math.inf:
        return _band(speed, curve_limit, speed_tol, 10, 11, 12)
    return _band(speed, limits[i], speed_tol, 13, 14, 15)


def classify_state(v: VehicleState, layout: TrackLayout, obstacle_pos: float,
                   th: ClassifierThresholds = ClassifierThresholds(),
                   first_step: bool = False) -> DriveState:
    """Map a vehicle state to one of the 16 driving states.

    Precedence: destination stop, near-destination braking/reversing, obstacle
    stop, obstacle following, speed band against an upcoming curve, speed band
    against the local limit. ``begin`` is only returned for the first step.
    """
    if not v.is_finite():
        raise ValueError(f"non-finite vehicle state {v}")
    if not 0.0 <= v.position <= layout.total_length:
        raise PositionOutOfTrack(f"position {v.position} outside the track")
    starts, _, _, _, limits, is_curve = layout.arrays()
    code = _classify(v.position, v.speed, obstacle_pos - v.position, first_step, starts,
                     limits, is_curve, layout.total_length, layout.destination,
                     th.speed_tolerance, th.safe_distance, th.near_end_window,
                     th.turn_lookahead, th.stop_speed)
    return DriveState(code)


@njit(cache=True)
def _run_episode(q, visits, learn, eps, uniforms, forced, use_forced,
                 action_torques, min_torque, granularity, smoothing,
                 alpha, gamma, c, steady_tol, bonus, penalty, reward_class,
                 starts, radius, mu, limits, is_curve, total, destination,
                 speed_tol, safe_distance, near_window, lookahead, stop_speed,
                 mass, g, axles, wheel_radius, rolling, curve_coeff, speed_cap,
                 x0, obstacle_start, obstacle_speed, obstacle_active,
                 n_steps, n_sub, dt_ctrl, dt_int,
                 out_t, out_x, out_v, out_torque, out_state, out_reward, out_gap):
    """Fill the output rows (row 0 is t = 0) and return (steps, termination code)."""
    x = x0
    v = 0.0
    torque = 0.0
    s = 0
    gap0 = obstacle_start - x if obstacle_active else math.inf
    out_t[0] = 0.0
    out_x[0] = x
    out_v[0] = v
    out_torque[0] = torque
    out_state[0] = s
    out_reward[0] = 0.0
    out_gap[0] = gap0
    for k in range(1, n_steps + 1):
        if use_forced:
            a = -1
            torque = forced[k - 1]
        else:
            a = _select(q[s], eps, uniforms[k - 1, 0], uniforms[k - 1, 1], uniforms[k - 1, 2])
            torque = _smooth(action_torques[a], torque, smoothing, min_torque, granularity)
        t0 = (k - 1) * dt_ctrl
        _, x_new, v_new, finite = _advance(t0, x, v, torque, starts, radius, mu, mass, g,
                                           axles, wheel_radius, rolling, curve_coeff,
                                           n_sub, dt_int)
        if not finite or abs(v_new) > speed_cap:
            # extreme values from a failed integration are dropped, not learned from
            return k, 3
        t = k * dt_ctrl
        if obstacle_active:
            gap = obstacle_start + obstacle_speed * t - x_new
        else:
            gap = math.inf
        s_new = _classify(x_new, v_new, gap, False, starts, limits, is_curve, total,
                          destination, speed_tol, safe_distance, near_window, lookahead,
                          stop_speed)
        term = -1
        if gap <= 0.0:
            term = 2
        elif s_new == 1:
            term = 0
        elif x_new < -0.05:
            term = 1
        if k <= 5:
            r = 0.0
        else:
            r = _reward(reward_class[s_new], v, v_new, c, steady_tol)
            if term == 0:
                r += bonus
            elif term == 2:
                r += penalty
        if learn and a >= 0:
            # credit the torque actually applied, not the rate-limited request
            a_exec = int(round((torque - min_torque) / granularity))
            _q_update(q, visits, s, a_exec, r, s_new, term >= 0, alpha, gamma)
        out_t[k] = t
        out_x[k] = x_new
        out_v[k] = v_new
        out_torque[k] = torque
        out_state[k] = s_new
        out_reward[k] = r
        out_gap[k] = gap
        x = x_new
        v = v_new
        s = s_new
        if term >= 0:
            return k, term
    return n_steps, 4


class EpisodeResult:
    """Logs of one episode. Row 0 of every array is the t = 0 state."""

    def __init__(self, t, position, speed, torque, state, reward, gap, epsilon,
                 termination: Termination, safe_distance: float, obstacle_active: bool):
        self.t = t
        self.position = position
        self.speed = speed
        self.torque = torque
        self.state = state
        self.reward = reward
        self.gap = gap
        self.epsilon = epsilon
        self.termination = termination
        self.safe_distance = safe_distance
        self.obstacle_active = obstacle_active

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    @property
    def reward_sum(self) -> float:
        return float(np.sum(self.reward))

    @property
    def reward_avg(self) -> float:
        bearing = self.steps - REWARD_FREE_STEPS
        return self.reward_sum / bearing if bearing > 0 else 0.0

    @property
    def min_gap(self) -> float:
        return float(np.min(self.gap))

    @property
    def safety_index(self) -> float:
        return safety_index(self, self.safe_distance)

    @property
    def records(self) -> list:
        return [
            StepRecord(float(self.t[i]), float(self.position[i]), float(self.speed[i]),
                       float(self.torque[i]), DriveState(int(self.state[i])),
                       float(self.reward[i]), self.epsilon, float(self.gap[i]))
            for i in range(len(self.t))
        ]

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "reward_sum": self.reward_sum,
            "reward_avg": self.reward_avg,
            "safety_index": self.safety_index if self.obstacle_active else math.nan,
            "min_gap": self.min_gap,
            "termination": self.termination.value,
            "steps": self.steps,
        }


@dataclass(frozen=True)
class EpisodeSetup:
    """Everything an episode needs besides the Q-table and the random stream."""
    layout: TrackLayout
    obstacle: Obstacle
    vparams: VehicleParams = VehicleParams()
    rlparams: RLParams = RLParams()
    actions: ActionSpace = ActionSpace()
    thresholds: ClassifierThresholds = ClassifierThresholds()
    dt_ctrl: float = 0.01
    dt_int: float = 0.001
    run_time: float = 45.0
    vehicle_start: float = 0.0

    @property
    def n_steps(self) -> int:
        return substeps(self.run_time, self.dt_ctrl)


def run_episode(setup: EpisodeSetup, q: QTable, sched: ExplorationSchedule, episode: int,
                max_episodes: int, rng: np.random.Generator, *, learn: bool = True,
                epsilon: Optional[float] = None,
                forced_torque: Optional[Sequence[float]] = None) -> EpisodeResult:
    """Run one episode, updating ``q`` in place when ``learn`` is set.

    ``epsilon`` overrides the schedule. ``forced_torque`` replaces the agent by
    a fixed torque sequence (one value per control step); no learning happens then.
    """
    if q.n_actions != setup.actions.n_actions:
        raise ValueError("Q-table does not match the action space")
    if setup.actions.min_torque < setup.vparams.torque_min or \
            setup.actions.max_torque > setup.vparams.torque_max:
        raise ValueError("action space exceeds the vehicle torque bounds")
    n_steps = setup.n_steps
    n_sub = substeps(setup.dt_ctrl, setup.dt_int)
    eps = sched.epsilon(episode, max_episodes) if epsilon is None else float(epsilon)
    uniforms = rng.random((n_steps, 3))
    if forced_torque is None:
        forced = np.zeros(1)
    else:
        forced = np.asarray(forced_torque, dtype=np.float64)
        if forced.shape != (n_steps,):
            raise ValueError(f"forced torque needs {n_steps} values")
        for tq in forced:
            if not setup.vparams.torque_min <= tq <= setup.vparams.torque_max:
                raise ValueError(f"forced torque {tq} outside the vehicle bounds")
    layout, ob, vp, rp, th = setup.layout, setup.obstacle, setup.vparams, setup.rlparams, setup.thresholds
    starts, _, radius, mu, limits, is_curve = layout.arrays()
    out = [np.empty(n_steps + 1) for _ in range(7)]
    out[4] = np.empty(n_steps + 1, dtype=np.int64)
    ob_start = obstacle_position(ob, setup.vehicle_start, 0.0) if ob.active else 0.0
    steps, code = _run_episode(
        q.values, q.visits, learn and forced_torque is None, eps, uniforms, forced,
        forced_torque is not None, setup.actions.torques, setup.actions.min_torque,
        setup.actions.granularity, rp.smoothing_threshold, rp.alpha, rp.gamma,
        rp.reward_coeff_c, rp.steady_tolerance, rp.terminal_bonus, rp.collision_penalty,
        _REWARD_CLASS, starts, radius, mu, limits, is_curve, layout.total_length,
        layout.destination, th.speed_tolerance, th.safe_distance, th.near_end_window,
        th.turn_lookahead, th.stop_speed, vp.mass, vp.gravity, float(vp.driven_axles),
        vp.wheel_radius, vp.rolling_coeff, vp.curve_coeff, vp.speed_cap,
        setup.vehicle_start, ob_start, ob.speed, ob.active, n_steps, n_sub,
        setup.dt_ctrl, setup.dt_int, *out)
    # a faulted step leaves no row
    rows = steps + 1 if code != 3 else steps
    t, x, v, tq, st, rw, gp = (a[:rows].copy() for a in out)
    return EpisodeResult(t, x, v, tq, st, rw, gp, eps, _TERMINATIONS[code],
                         th.safe_distance, ob.active)


def safety_index(result: EpisodeResult, safe_distance: float) -> float:
    """Closest approach to the obstacle during the episode minus the safe distance."""
    if not result.obstacle_active:
        raise NoObstacle("episode ran without an active obstacle")
    return result.min_gap - safe_distance


def improvement_pct(series_a: Sequence[float], series_b: Sequence[float],
                    window: tuple[int, int]) -> float:
    """Percent by which the mean of ``series_a`` beats ``series_b`` over ``window``.

    ``window`` holds 1-based inclusive episode numbers. The baseline mean's
    magnitude is the denominator, so the sign says which series is larger.
    """
    lo, hi = window
    a = np.asarray(series_a, dtype=np.float64)
    b = np.asarray(series_b, dtype=np.float64)
    if not 1 <= lo <= hi or hi > min(len(a), len(b)):
        raise ValueError(f"window {window} not covered by both series")
    mean_a = float(np.mean(a[lo - 1:hi]))
    mean_b = float(np.mean(b[lo - 1:hi]))
    if mean_b == 0:
        raise DegenerateBaseline("baseline mean is zero over the window")
    return 100.0 * (mean_a - mean_b) / abs(mean_b)
