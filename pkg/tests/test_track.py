import math

import pytest
from hypothesis import given, strategies as st

from locorl.track import (CURVE, STRAIGHT, Obstacle, PositionOutOfTrack, Segment,
                          TrackLayout, default_track, gap, obstacle_position, segment_at,
                          speed_limit_at)


@pytest.fixture
def track():
    return default_track()


def test_default_track_shape(track):
    assert track.total_length == 150.0
    assert track.destination == 150.0
    assert [s.kind for s in track.segments] == [STRAIGHT, CURVE, STRAIGHT]
    assert track.segments[1].radius == 220.48
    assert track.segments[0].speed_limit == 2.83
    assert track.segments[1].speed_limit == 1.42


@pytest.mark.parametrize("pos,idx", [(0.0, 0), (75.0, 1), (50.0, 1), (100.0, 2), (150.0, 2),
                                     (49.999, 0)])
def test_segment_at(track, pos, idx):
    assert segment_at(track, pos)[1] == idx


@pytest.mark.parametrize("pos", [-0.01, 150.01, math.nan])
def test_segment_at_off_track(track, pos):
    with pytest.raises(PositionOutOfTrack):
        segment_at(track, pos)


@pytest.mark.parametrize("pos,look,limit", [(75.0, 0.0, 1.42), (45.0, 10.0, 1.42),
                                            (10.0, 10.0, 2.83), (39.9, 10.0, 2.83)])
def test_speed_limit_at(track, pos, look, limit):
    assert speed_limit_at(track, pos, look) == limit


def test_obstacle_position():
    ob = Obstacle(5.0, 0.01)
    assert obstacle_position(ob, 0.0, 0.0) == 5.0
    assert obstacle_position(ob, 0.0, 100.0) == pytest.approx(6.0, abs=1e-12)
    assert obstacle_position(Obstacle(5.0, 0.01, active=False), 0.0, 3.0) == math.inf


@pytest.mark.parametrize("v,o,g", [(0, 5, 5), (4.9, 5.0, 0.1), (5.2, 5.0, -0.2)])
def test_gap(v, o, g):
    assert gap(v, o) == pytest.approx(g, abs=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(kind=CURVE, length=10, speed_limit=1.0, radius=3.9),
    dict(kind=CURVE, length=10, speed_limit=1.0),
    dict(kind=STRAIGHT, length=0, speed_limit=1.0),
    dict(kind=STRAIGHT, length=10, speed_limit=1.0, friction_mu=0.7),
    dict(kind=STRAIGHT, length=10, speed_limit=1.0, friction_mu=0.04),
    dict(kind=STRAIGHT, length=10, speed_limit=0.0),
])
def test_segment_validation(kwargs):
    with pytest.raises(ValueError):
        Segment(**kwargs)


segments = st.lists(
    st.builds(lambda curve, length, lim: Segment(CURVE if curve else STRAIGHT, length,
                                                 0.4, lim, radius=50.0 if curve else None),
              st.booleans(), st.floats(1.0, 100.0), st.floats(0.5, 3.0)),
    min_size=1, max_size=6)


@given(segments, st.floats(0.0, 1.0), st.floats(0.0, 50.0))
def test_lookahead_never_exceeds_local_limit(segs, frac, look):
    layout = TrackLayout(tuple(segs), sum(s.length for s in segs))
    pos = frac * layout.total_length
    seg, idx = segment_at(layout, pos)
    assert 0 <= idx < len(segs)
    assert layout.starts[idx] <= pos
    lim = speed_limit_at(layout, pos, look)
    assert lim <= seg.speed_limit
    assert lim >= min(s.speed_limit for s in segs)
    assert speed_limit_at(layout, pos, look) <= speed_limit_at(layout, pos, 0.0)


@given(st.floats(0.1, 100), st.floats(0, 1), st.floats(0, 1e4), st.floats(0, 1e4))
def test_obstacle_monotone_in_time(spawn, speed, t1, t2):
    ob = Obstacle(spawn, speed)
    lo, hi = sorted((t1, t2))
    assert obstacle_position(ob, 0.0, lo) <= obstacle_position(ob, 0.0, hi)
