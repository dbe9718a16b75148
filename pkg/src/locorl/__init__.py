"""Q-learning speed control for a mining locomotive on a simulated track."""
from .dynamics import VehicleParams, VehicleState
from .episode import ClassifierThresholds, EpisodeSetup, Termination, run_episode
from .rl import ActionSpace, DriveState, ExplorationSchedule, QTable, RLParams, ScheduleKind
from .track import Obstacle, Segment, TrackLayout, default_track

__all__ = [
    "VehicleParams", "VehicleState", "ClassifierThresholds", "EpisodeSetup", "Termination",
    "run_episode", "ActionSpace", "DriveState", "ExplorationSchedule", "QTable", "RLParams",
    "ScheduleKind", "Obstacle", "Segment", "TrackLayout", "default_track",
]
