"""Tabular Q-learning over the 16 driving states.

Exploration follows one of three epsilon schedules: constant, linear decay,
or the improved epsilon-greedy (IEG) decay built from two quarter circles,
which stays above the linear schedule for the first half of training and
below it for the second half.

Random choices take pre-drawn uniforms so that the compiled episode loop
and the Python API consume a ``numpy.random.Generator`` identically:
``select_action`` uses three draws (explore coin, random action, tie break),
``greedy_action`` one.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numba import njit


class DriveState(enum.IntEnum):
    BEGIN = 0
    TO_THE_END = 1
    OBSTACLE_STOP = 2
    C_WITHIN_OBSTACLE = 3
    MAX_SPD_C_NO_OBSTACLE = 4
    OVER_SPD_C_NO_OBSTACLE = 5
    BELOW_SPD_C_NO_OBSTACLE = 6
    L_WITHIN_OBSTACLE = 7
    NEAR_TO_THE_END_BRAKE = 8
    NEAR_TO_THE_END_DRIVE = 9
    MAX_SPD_L_TO_C = 10
    OVER_SPD_L_TO_C = 11
    BELOW_SPD_L_TO_C = 12
    MAX_SPD_L_NO_OBSTACLE = 13
    OVER_SPD_L_NO_OBSTACLE = 14
    BELOW_SPD_L_NO_OBSTACLE = 15

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def is_terminal(self) -> bool:
        return self is DriveState.TO_THE_END

    @classmethod
    def from_label(cls, label: str) -> "DriveState":
        return cls[label.strip().upper()]


N_STATES = len(DriveState)

# reward sign classes used by the compiled reward kernel
_ACCEL_REWARDED = 0
_DECEL_REWARDED = 1
_STEADY_REWARDED = 2
_NO_REWARD = 3

_REWARD_CLASS = np.empty(N_STATES, dtype=np.int64)
for _s in DriveState:
    if _s.name.startswith("BELOW_SPD") or _s in (DriveState.BEGIN, DriveState.NEAR_TO_THE_END_DRIVE):
        _REWARD_CLASS[_s] = _ACCEL_REWARDED
    elif _s.name.startswith("MAX_SPD"):
        _REWARD_CLASS[_s] = _STEADY_REWARDED
    elif _s is DriveState.TO_THE_END:
        _REWARD_CLASS[_s] = _NO_REWARD
    else:
        _REWARD_CLASS[_s] = _DECEL_REWARDED
_REWARD_CLASS.setflags(write=False)


@dataclass(frozen=True)
class ActionSpace:
    min_torque: float = -300.0
    max_torque: float = 300.0
    granularity: float = 10.0

    def __post_init__(self):
        if not self.min_torque < self.max_torque:
            raise ValueError("min_torque must be below max_torque")
        if not self.granularity > 0:
            raise ValueError("granularity must be positive")
        span = (self.max_torque - self.min_torque) / self.granularity
        if abs(span - round(span)) > 1e-9:
            raise ValueError("granularity must divide the torque range evenly")

    @property
    def n_actions(self) -> int:
        return int(round((self.max_torque - self.min_torque) / self.granularity)) + 1

    @property
    def torques(self) -> np.ndarray:
        return self.min_torque + self.granularity * np.arange(self.n_actions, dtype=np.float64)

    def torque(self, index: int) -> float:
        if not 0 <= index < self.n_actions:
            raise IndexError(f"action index {index} out of range")
        return float(self.min_torque + self.granularity * index)

    def index(self, torque: float) -> int:
        k = (torque - self.min_torque) / self.granularity
        i = int(round(k))
        if abs(k - i) > 1e-9 or not 0 <= i < self.n_actions:
            raise ValueError(f"{torque} Nm is not an action value")
        return i


@dataclass(frozen=True)
class RLParams:
    alpha: float = 0.2
    gamma: float = 0.8
    smoothing_threshold: float = 50.0
    reward_coeff_c: float = 10.0
    steady_tolerance: float = 0.05
    terminal_bonus: float = 100.0
    collision_penalty: float = -100.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not self.smoothing_threshold > 0:
            raise ValueError("smoothing_threshold must be positive")
        if not self.steady_tolerance > 0:
            raise ValueError("steady_tolerance must be positive")


class ScheduleKind(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    IEG = "ieg"


@dataclass(frozen=True)
class ExplorationSchedule:
    kind: ScheduleKind = ScheduleKind.IEG
    eps_hi: float = 1.0
    eps_lo: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not 0 <= self.eps_lo < self.eps_hi <= 1:
            raise ValueError("need 0 <= eps_lo < eps_hi <= 1")

    @property
    def delta(self) -> float:
        return self.eps_hi - self.eps_lo

    def epsilon(self, episode: int, max_episodes: int) -> float:
        if self.kind is ScheduleKind.LINEAR:
            return epsilon_linear(episode, max_episodes, self)
        if self.kind is ScheduleKind.IEG:
            return epsilon_ieg(episode, max_episodes, self)
        return self.eps_hi


def _progress(episode, max_episodes):
    if not max_episodes > 0:
        raise ValueError("max_episodes must be positive")
    if not 0 <= episode <= max_episodes:
        raise ValueError(f"episode {episode} outside [0, {max_episodes}]")
    return episode / max_episodes


def epsilon_linear(episode: int, max_episodes: int, sched: ExplorationSchedule) -> float:
    r = _progress(episode, max_episodes)
    return sched.delta * (1.0 - r)


def epsilon_ieg(episode: int, max_episodes: int, sched: ExplorationSchedule) -> float:
    r = _progress(episode, max_episodes)
    if r <= 0.5:
        return sched.delta * (0.5 + math.sqrt(0.25 - r * r))
    return sched.delta * (0.5 - math.sqrt(0.25 - (1.0 - r) ** 2))


class ShapeMismatch(ValueError):
    pass


class QTable:
    """Action values and visit counts, shape (16, n_actions), zero-initialised."""

    def __init__(self, actions: ActionSpace, values=None, visits=None):
        self.actions = actions
        shape = (N_STATES, actions.n_actions)
        self.values = np.zeros(shape) if values is None else np.array(values, dtype=np.float64)
        self.visits = np.zeros(shape, dtype=np.int64) if visits is None else np.array(visits, dtype=np.int64)
        if self.values.shape != shape or self.visits.shape != shape:
            raise ShapeMismatch(f"expected table shape {shape}, got {self.values.shape}")

    @property
    def n_actions(self) -> int:
        return self.actions.n_actions

    def greedy_policy(self) -> np.ndarray:
        """Lowest-index argmax per state (deterministic, for inspection only)."""
        return np.argmax(self.values, axis=1)

    def copy(self) -> "QTable":
        return QTable(self.actions, self.values.copy(), self.visits.copy())

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["state"] + [repr(float(x)) for x in self.actions.torques])
        for s in DriveState:
            writer.writerow([s.label] + [repr(float(x)) for x in self.values[s]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: Union[str, Path], actions: ActionSpace) -> "QTable":
        """Load a table written by ``to_csv``. ``source`` is a path or the CSV text."""
        text = source
        if isinstance(source, Path) or "\n" not in str(source):
            text = Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        torques = np.array([float(x) for x in header[1:]])
        if len(torques) != actions.n_actions or not np.allclose(torques, actions.torques):
            raise ShapeMismatch(
                f"table has {len(torques)} actions, configuration expects {actions.n_actions}")
        if len(body) != N_STATES:
            raise ShapeMismatch(f"table has {len(body)} state rows, expected {N_STATES}")
        values = np.zeros((N_STATES, actions.n_actions))
        for row in body:
            values[DriveState.from_label(row[0])] = [float(x) for x in row[1:]]
        if not np.all(np.isfinite(values)):
            raise ValueError("Q-table contains non-finite values")
        return cls(actions, values)


@njit(cache=True)
def _greedy(row, u_tie):
    best = row[0]
    n_best = 0
    for v in row:
        if v > best:
            best = v
            n_best = 1
        elif v == best:
            n_best += 1
    pick = min(int(u_tie * n_best), n_best - 1)
    for i in range(row.shape[0]):
        if row[i] == best:
            if pick == 0:
                return i
            pick -= 1
    return -1


@njit(cache=True)
def _select(row, eps, u_explore, u_action, u_tie):
    if u_explore < eps:
        n = row.shape[0]
        return min(int(u_action * n), n - 1)
    return _greedy(row, u_tie)


@njit(cache=True)
def _smooth(a_t, a_prev, threshold, min_torque, granularity):
    diff = a_t - a_prev
    if abs(diff) <= threshold:
        return a_t
    if diff > 0:
        k = math.floor((a_prev + threshold - min_torque) / granularity + 1e-9)
    else:
        k = math.ceil((a_prev - threshold - min_torque) / granularity - 1e-9)
    return min_torque + k * granularity


@njit(cache=True)
def _q_update(values, visits, s, a, r, s_next, terminal, alpha, gamma):
    target = r
    if not terminal:
        row = values[s_next]
        best = row[0]
        for v in row:
            if v > best:
                best = v
        target += gamma * best
    values[s, a] += alpha * (target - values[s, a])
    visits[s, a] += 1


@njit(cache=True)
def _reward(reward_class, v_record, v_current, c, tolerance):
    dv = v_current - v_record
    if reward_class == 0:
        return c * dv
    if reward_class == 1:
        return c * (abs(v_record) - abs(v_current))
    if reward_class == 2:
        return max(c * (tolerance - abs(dv)), 0.0)
    return 0.0


def greedy_action(q: QTable, s: DriveState, rng: np.random.Generator) -> int:
    """An argmax action of ``q[s]``; ties are broken uniformly with ``rng``."""
    return int(_greedy(q.values[int(s)], rng.random()))


def select_action(q: QTable, s: DriveState, eps: float, rng: np.random.Generator) -> int:
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    u = rng.random(3)
    return int(_select(q.values[int(s)], eps, u[0], u[1], u[2]))


def smooth_action(a_t: float, a_prev: float, threshold: float,
                  actions: ActionSpace = ActionSpace()) -> float:
    """Limit the torque change per control step to ``threshold``.

    An oversize step moves ``threshold`` toward ``a_t`` and snaps back onto the
    action grid on the ``a_prev`` side.
    """
    for a in (a_t, a_prev):
        if not actions.min_torque <= a <= actions.max_torque:
            raise ValueError(f"torque {a} outside the action space")
    return float(_smooth(float(a_t), float(a_prev), float(threshold),
                         actions.min_torque, actions.granularity))


def q_update(q: QTable, s: DriveState, a: int, r: float, s_next: DriveState, p: RLParams):
    _q_update(q.values, q.visits, int(s), int(a), float(r), int(s_next),
              DriveState(s_next).is_terminal, p.alpha, p.gamma)


def tabular_update(values: np.ndarray, visits: np.ndarray, s: int, a: int, r: float,
                   s_next: int, terminal: bool, alpha: float, gamma: float):
    """The Q-learning update on bare arrays of any shape (states, actions)."""
    _q_update(values, visits, int(s), int(a), float(r), int(s_next), bool(terminal),
              float(alpha), float(gamma))


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    return float(sum(r * gamma ** i for i, r in enumerate(rewards)))


def compute_reward(s: DriveState, v_record: float, v_current: float, p: RLParams) -> float:
    """Per-step reward ``c * |v_current - v_record|`` signed by what the state asks for.

    Below-limit states (and ``begin``, ``near_to_the_end_drive``) reward a
    rising velocity; over-limit, obstacle and braking states reward a falling
    speed magnitude, so backing away from rest is not paid as braking; at-limit
    states pay ``c * (tolerance - |dv|)`` floored at zero. ``to_the_end`` pays
    nothing here; terminal bonuses are added by the episode loop.
    """
    return float(_reward(_REWARD_CLASS[int(s)], float(v_record), float(v_current),
                         p.reward_coeff_c, p.steady_tolerance))
