"""Track geometry, speed limits and the leading obstacle.

Positions are measured in meters along the track from the start of the first
segment. A position exactly on a segment boundary belongs to the following
segment, except the end of the track, which belongs to the last segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

STRAIGHT = "straight"
CURVE = "curve"

MIN_CURVE_RADIUS = 4.0  # smallest negotiable radius, m
STRAIGHT_LIMIT = 2.83  # m/s
CURVE_LIMIT = 1.42  # m/s


class PositionOutOfTrack(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    kind: str
    length: float
    friction_mu: float = 0.4
    speed_limit: float = STRAIGHT_LIMIT
    radius: Optional[float] = None
    # m; carried for completeness, unused by the longitudinal model
    superelevation: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.kind not in (STRAIGHT, CURVE):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.length > 0:
            raise ValueError("segment length must be positive")
        if self.kind == CURVE:
            if self.radius is None or not self.radius >= MIN_CURVE_RADIUS:
                raise ValueError(f"curve radius must be >= {MIN_CURVE_RADIUS} m")
        elif self.radius is not None:
            raise ValueError("straight segments take no radius")
        if not 0.05 <= self.friction_mu <= 0.6:
            raise ValueError("friction_mu must lie in [0.05, 0.6]")
        if not self.speed_limit > 0:
            raise ValueError("speed_limit must be positive")

    @property
    def is_curve(self) -> bool:
        return self.kind == CURVE


@dataclass(frozen=True)
class TrackLayout:
    segments: tuple
    destination: float
    starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("track needs at least one segment")
        object.__setattr__(self, "segments", segs)
        starts = np.concatenate(([0.0], np.cumsum([s.length for s in segs])[:-1]))
        starts.setflags(write=False)
        object.__setattr__(self, "starts", starts)
        if not 0 < self.destination <= self.total_length:
            raise ValueError("destination must lie in (0, total_length]")

    @property
    def total_length(self) -> float:
        return float(sum(s.length for s in self.segments))

    def arrays(self):
        """Flat per-segment arrays (start, end, curve radius or inf, mu, limit, is_curve)."""
        start = np.array(self.starts, dtype=np.float64)
        end = start + np.array([s.length for s in self.segments])
        radius = np.array([s.radius if s.is_curve else np.inf for s in self.segments])
        mu = np.array([s.friction_mu for s in self.segments])
        limit = np.array([s.speed_limit for s in self.segments])
        is_curve = np.array([s.is_curve for s in self.segments], dtype=np.bool_)
        return start, end, radius, mu, limit, is_curve


@dataclass(frozen=True)
class Obstacle:
    spawn_offset: float = 5.0
    speed: float = 0.01
    active: bool = True

    def __post_init__(self):
        if not self.spawn_offset > 0:
            raise ValueError("spawn_offset must be positive")
        if not self.speed >= 0:
            raise ValueError("obstacle speed must be non-negative")


def default_track() -> TrackLayout:
    """Straight 50 m, curve 50 m of radius 220.48 m, straight 50 m; dry rail."""
    return TrackLayout(
        segments=(
            Segment(STRAIGHT, 50.0, 0.4, STRAIGHT_LIMIT),
            Segment(CURVE, 50.0, 0.4, CURVE_LIMIT, radius=220.48, superelevation=0.0038),
            Segment(STRAIGHT, 50.0, 0.4, STRAIGHT_LIMIT),
        ),
        destination=150.0,
    )


def _check_on_track(layout: TrackLayout, pos: float):
    if not 0.0 <= pos <= layout.total_length:
        raise PositionOutOfTrack(f"position {pos} outside [0, {layout.total_length}]")


def segment_at(layout: TrackLayout, pos: float) -> tuple[Segment, int]:
    _check_on_track(layout, pos)
    idx = int(np.searchsorted(layout.starts, pos, side="right")) - 1
    return layout.segments[idx], idx


def speed_limit_at(layout: TrackLayout, pos: float, lookahead: float = 0.0) -> float:
    """Lowest limit in force at ``pos`` or at any segment starting in (pos, pos + lookahead]."""
    if lookahead < 0:
        raise ValueError("lookahead must be non-negative")
    seg, idx = segment_at(layout, pos)
    limit = seg.speed_limit
    for start, nxt in zip(layout.starts[idx + 1:], layout.segments[idx + 1:]):
        if start > pos + lookahead:
            break
        limit = min(limit, nxt.speed_limit)
    return limit


def obstacle_position(obstacle: Obstacle, vehicle_start: float, t: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    if not obstacle.active:
        return math.inf
    return vehicle_start + obstacle.spawn_offset + obstacle.speed * t


def gap(vehicle_pos: float, obstacle_pos: float) -> float:
    return obstacle_pos - vehicle_pos
