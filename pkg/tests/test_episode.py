import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locorl.dynamics import VehicleState
from locorl.episode import (ClassifierThresholds, DegenerateBaseline, EpisodeSetup, NoObstacle,
                            Termination, classify_state, improvement_pct, run_episode,
                            safety_index)
from locorl.rl import ActionSpace, DriveState, ExplorationSchedule, QTable, ScheduleKind
from locorl.track import Obstacle, PositionOutOfTrack, default_track

TRACK = default_track()
FAR = 1e9


def cls(pos, speed, gap=FAR, first=False):
    return classify_state(VehicleState(0.0, pos, speed), TRACK, pos + gap,
                          ClassifierThresholds(), first)


@pytest.mark.parametrize("pos,speed,gap,state", [
    (10, 2.83, 50, DriveState.MAX_SPD_L_NO_OBSTACLE),
    (75, 1.60, 50, DriveState.OVER_SPD_C_NO_OBSTACLE),
    (146, 0.01, FAR, DriveState.TO_THE_END),
    (146, 0.5, FAR, DriveState.NEAR_TO_THE_END_BRAKE),
    (146, -0.5, FAR, DriveState.NEAR_TO_THE_END_DRIVE),
    (20, 0.0, 3.0, DriveState.OBSTACLE_STOP),
    (20, 1.0, 3.0, DriveState.L_WITHIN_OBSTACLE),
    (60, 1.0, 3.0, DriveState.C_WITHIN_OBSTACLE),
    (45, 1.42, FAR, DriveState.MAX_SPD_L_TO_C),
    (45, 2.0, FAR, DriveState.OVER_SPD_L_TO_C),
    (45, 0.5, FAR, DriveState.BELOW_SPD_L_TO_C),
    (75, 1.0, FAR, DriveState.BELOW_SPD_C_NO_OBSTACLE),
    (75, 1.40, FAR, DriveState.MAX_SPD_C_NO_OBSTACLE),
    (120, 3.0, FAR, DriveState.OVER_SPD_L_NO_OBSTACLE),
    (120, 1.0, FAR, DriveState.BELOW_SPD_L_NO_OBSTACLE),
    (5, 0.0, 5.0, DriveState.OBSTACLE_STOP),
])
def test_classifier_examples(pos, speed, gap, state):
    assert cls(pos, speed, gap) is state


def test_begin_only_on_first_step():
    assert cls(0, 0, 5.0, first=True) is DriveState.BEGIN
    assert cls(0, 0, 5.0) is not DriveState.BEGIN


def test_classifier_rejects_off_track():
    with pytest.raises(PositionOutOfTrack):
        cls(-1.0, 0.0)


@settings(max_examples=500)
@given(st.floats(0, 150), st.floats(-5, 5), st.floats(-10, 200))
def test_classifier_total(pos, speed, gap):
    s = cls(pos, speed, gap)
    assert isinstance(s, DriveState) and s is not DriveState.BEGIN


def setup(**kw):
    return EpisodeSetup(TRACK, Obstacle(), **kw)


SCHED = ExplorationSchedule(ScheduleKind.IEG)


def test_zero_torque_stub():
    st_ = setup()
    r = run_episode(st_, QTable(ActionSpace()), SCHED, 1, 10, np.random.default_rng(0),
                    forced_torque=np.zeros(st_.n_steps))
    assert r.termination is Termination.TIME_LIMIT
    assert r.position[-1] == 0.0
    assert r.min_gap == 5.0
    assert r.safety_index == 0.0
    assert r.steps == 4500
    assert r.reward_sum == 0.0


def test_greedy_zero_table_terminates_once():
    r = run_episode(setup(), QTable(ActionSpace()), SCHED, 1, 1, np.random.default_rng(4),
                    epsilon=0.0)
    assert isinstance(r.termination, Termination)
    assert math.isfinite(r.reward_sum)


def test_episode_deterministic():
    runs = []
    for _ in range(2):
        q = QTable(ActionSpace())
        r = run_episode(setup(), q, SCHED, 3, 10, np.random.default_rng(11))
        runs.append((r, q))
    (a, qa), (b, qb) = runs
    for name in ("t", "position", "speed", "torque", "state", "reward", "gap"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.termination is b.termination
    assert np.array_equal(qa.values, qb.values)


def test_log_consistency():
    q = QTable(ActionSpace())
    rng = np.random.default_rng(5)
    for ep in range(1, 6):
        r = run_episode(setup(), q, SCHED, ep, 5, rng)
        assert r.state[0] == DriveState.BEGIN
        assert r.t[0] == 0.0 and r.gap[0] == 5.0
        assert np.allclose(np.diff(r.t), 0.01)
        assert np.all(np.abs(np.diff(r.torque)) <= 50 + 1e-9)
        assert np.all(r.reward[:6] == 0.0)
        # gap equals obstacle position minus vehicle position
        assert np.allclose(r.gap, 5.0 + 0.01 * r.t - r.position)
        assert r.min_gap <= 5.0
        end = r.termination
        if end is Termination.COLLISION:
            assert r.gap[-1] <= 0
        elif end is Termination.ROLLED_BACK:
            assert r.position[-1] < -0.05
        elif end is Termination.TIME_LIMIT:
            assert r.steps == setup().n_steps
    assert q.visits.sum() > 0


def test_inactive_obstacle():
    st_ = EpisodeSetup(TRACK, Obstacle(active=False))
    r = run_episode(st_, QTable(ActionSpace()), SCHED, 1, 10, np.random.default_rng(0))
    assert math.isinf(r.min_gap)
    assert math.isnan(r.summary()["safety_index"])
    with pytest.raises(NoObstacle):
        r.safety_index


class _Fake:
    def __init__(self, m):
        self.min_gap = m
        self.obstacle_active = True


@pytest.mark.parametrize("m,out", [(5.0, 0.0), (4.2, -0.8), (7.0, 2.0)])
def test_safety_index(m, out):
    assert safety_index(_Fake(m), 5.0) == pytest.approx(out)


def test_improvement_pct():
    b = np.linspace(1, 3, 50)
    assert improvement_pct(1.243 * b, b, (1, 50)) == pytest.approx(24.3)
    assert improvement_pct(b, b, (1, 50)) == 0.0
    assert improvement_pct([2, 2], [1, 3], (1, 2)) == 0.0
    assert improvement_pct([-1.0], [-2.0], (1, 1)) == pytest.approx(50.0)
    with pytest.raises(DegenerateBaseline):
        improvement_pct([1, 1], [0, 0], (1, 2))
    with pytest.raises(ValueError):
        improvement_pct([1, 1], [1, 1], (1, 3))
