"""Experiment configuration: an INI-style text file with four sections.

Every key has a default, so an empty file reproduces the reference setup
(500 episodes of 45 s, alpha 0.2, gamma 0.8, exploration between 0.01 and 1).
Unknown sections or keys are rejected.

    [track]
    segments = default            # or: straight 50 0.4 2.83; curve 50 0.4 1.42 220.48; ...
    destination = 150

    [vehicle]
    mass = 1500

    [rl]
    alpha = 0.2
    schedules = linear, ieg

    [experiment]
    max_episodes = 500
    seeds = 1, 2, 3, 4, 5
    obstacle = fixed              # or random
"""
from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .dynamics import VehicleParams
from .episode import ClassifierThresholds, EpisodeSetup
from .rl import ActionSpace, ExplorationSchedule, RLParams, ScheduleKind
from .track import CURVE, STRAIGHT, Obstacle, Segment, TrackLayout, default_track


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownKey(ConfigError):
    pass


class InvalidValue(ConfigError):
    pass


@dataclass(frozen=True)
class ExperimentSettings:
    max_episodes: int = 500
    run_time: float = 45.0
    dt_ctrl: float = 0.01
    dt_int: float = 0.001
    seeds: tuple = (1, 2, 3, 4, 5)
    obstacle: str = "fixed"
    obstacle_active: bool = True
    obstacle_offset: float = 5.0
    obstacle_speed: float = 0.01
    random_spawn_min: float = 5.0
    random_spawn_max: float = 100.0
    safe_distance: float = 5.0
    speed_tolerance: float = 0.05
    near_end_window: float = 5.0
    turn_lookahead: float = 10.0
    stop_speed: float = 0.05
    reward_window: tuple = (460, 500)
    safety_window: tuple = (441, 500)
    window_basis: int = 500
    step_csv_every: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    track: TrackLayout = field(default_factory=default_track)
    vehicle: VehicleParams = VehicleParams()
    rl: RLParams = RLParams()
    actions: ActionSpace = ActionSpace()
    initial_epsilon: float = 0.01
    final_epsilon: float = 1.0
    schedules: tuple = (ScheduleKind.LINEAR, ScheduleKind.IEG)
    experiment: ExperimentSettings = ExperimentSettings()

    def schedule(self, kind) -> ExplorationSchedule:
        # the reference table lists the two rates the other way round; the
        # schedules always decay from the larger to the smaller
        hi = max(self.initial_epsilon, self.final_epsilon)
        lo = min(self.initial_epsilon, self.final_epsilon)
        return ExplorationSchedule(ScheduleKind(kind), hi, lo)

    @property
    def thresholds(self) -> ClassifierThresholds:
        e = self.experiment
        return ClassifierThresholds(e.speed_tolerance, e.safe_distance, e.near_end_window,
                                    e.turn_lookahead, e.stop_speed)

    def obstacle(self, spawn_offset: float = None) -> Obstacle:
        e = self.experiment
        return Obstacle(e.obstacle_offset if spawn_offset is None else spawn_offset,
                        e.obstacle_speed, e.obstacle_active)

    def episode_setup(self, obstacle: Obstacle = None) -> EpisodeSetup:
        e = self.experiment
        return EpisodeSetup(self.track, obstacle or self.obstacle(), self.vehicle, self.rl,
                            self.actions, self.thresholds, e.dt_ctrl, e.dt_int, e.run_time)

    def window(self, which: str) -> tuple[int, int]:
        """Improvement window in episode numbers, rescaled to ``max_episodes``."""
        e = self.experiment
        lo, hi = e.reward_window if which == "reward" else e.safety_window
        scale = e.max_episodes / e.window_basis
        lo = max(1, math.floor(lo * scale + 0.5))
        hi = min(e.max_episodes, max(lo, math.floor(hi * scale + 0.5)))
        return lo, hi

    def with_overrides(self, **experiment) -> "ExperimentConfig":
        new = dataclasses.replace(self.experiment, **experiment)
        _validate_experiment(new)
        return dataclasses.replace(self, experiment=new)


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ints(text):
    return tuple(int(x) for x in re.split(r"[,\s]+", text.strip()) if x)


def _parse_window(text):
    parts = [int(x) for x in re.split(r"\s*[-,]\s*|\s+", text.strip()) if x]
    if len(parts) != 2:
        raise ValueError("window must be 'first-last'")
    return tuple(parts)


def _parse_schedules(text):
    return tuple(ScheduleKind(x.strip().lower()) for x in text.split(",") if x.strip())


def _parse_segments(text):
    if text.strip().lower() == "default":
        return "default"
    segs = []
    for chunk in text.split(";"):
        fields = chunk.split()
        if not fields:
            continue
        kind = fields[0].lower()
        nums = [float(x) for x in fields[1:]]
        if kind == STRAIGHT and len(nums) == 3:
            segs.append(Segment(STRAIGHT, nums[0], nums[1], nums[2]))
        elif kind == CURVE and len(nums) == 4:
            segs.append(Segment(CURVE, nums[0], nums[1], nums[2], radius=nums[3]))
        else:
            raise ValueError(f"bad segment {chunk.strip()!r}: expected "
                             "'straight LENGTH MU LIMIT' or 'curve LENGTH MU LIMIT RADIUS'")
    return tuple(segs)


_RL_KEYS = {f.name: float for f in dataclasses.fields(RLParams)}
_ACTION_KEYS = {"min_torque": float, "max_torque": float, "granularity": float}
_VEHICLE_KEYS = {f.name: (int if f.name == "driven_axles" else float)
                 for f in dataclasses.fields(VehicleParams)}
_EXPERIMENT_TYPES = {
    "seeds": _parse_ints, "obstacle_active": _parse_bool,
    "reward_window": _parse_window, "safety_window": _parse_window,
    "obstacle": lambda s: s.strip().lower(),
}
_EXPERIMENT_KEYS = {
    f.name: _EXPERIMENT_TYPES.get(f.name, int if f.type in ("int", int) else float)
    for f in dataclasses.fields(ExperimentSettings)
}
_SECTIONS = {
    "track": {"segments": _parse_segments, "destination": float},
    "vehicle": _VEHICLE_KEYS,
    "rl": {**_RL_KEYS, **_ACTION_KEYS, "initial_epsilon": float, "final_epsilon": float,
           "schedules": _parse_schedules},
    "experiment": _EXPERIMENT_KEYS,
}


def _key_line(lines, section, key):
    current = None
    for no, line in enumerate(lines, 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
        elif current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line, re.I):
            return no
    return 0


def _validate_experiment(e: ExperimentSettings):
    checks = [
        (e.max_episodes >= 1, "max_episodes must be >= 1"),
        (e.run_time > 0 and e.dt_ctrl > 0 and e.dt_int > 0, "times must be positive"),
        (len(e.seeds) >= 1, "seeds must list at least one seed"),
        (e.obstacle in ("fixed", "random"), "obstacle must be 'fixed' or 'random'"),
        (e.obstacle_offset > 0 and e.obstacle_speed >= 0, "bad obstacle offset/speed"),
        (0 < e.random_spawn_min <= e.random_spawn_max, "bad random spawn range"),
        (1 <= e.reward_window[0] <= e.reward_window[1], "bad reward_window"),
        (1 <= e.safety_window[0] <= e.safety_window[1], "bad safety_window"),
        (e.window_basis >= 1 and e.step_csv_every >= 0, "bad window_basis/step_csv_every"),
    ]
    for ok, message in checks:
        if not ok:
            raise InvalidValue(message)


def parse_config(source: Union[str, Path] = "") -> ExperimentConfig:
    """Parse configuration text, or a file when ``source`` is a ``Path``."""
    text = Path(source).read_text() if isinstance(source, Path) else source
    lines = text.splitlines()
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), comment_prefixes=("#",),
        interpolation=None, delimiters=("=",))
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any [section]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r}", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else 0
        raise ParseError("expected 'key = value'", line) from None

    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        name = section.strip().lower()
        if name not in _SECTIONS:
            raise UnknownKey(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            conv = _SECTIONS[name].get(key)
            if conv is None:
                raise UnknownKey(f"unknown key {key!r} in [{name}] "
                                 f"(line {_key_line(lines, name, key)})")
            try:
                values[name][key] = conv(raw)
            except (ValueError, KeyError) as exc:
                raise InvalidValue(f"[{name}] {key} = {raw!r}: {exc} "
                                   f"(line {_key_line(lines, name, key)})") from None
    try:
        return _build(values)
    except InvalidValue:
        raise
    except (ValueError, TypeError) as exc:
        raise InvalidValue(str(exc)) from None


def _build(values) -> ExperimentConfig:
    tv = values["track"]
    segs = tv.get("segments", "default")
    base = default_track()
    segments = base.segments if segs == "default" else segs
    if not segments:
        raise InvalidValue("track needs at least one segment")
    total = sum(s.length for s in segments)
    track = TrackLayout(segments, tv.get("destination", total))

    vehicle = VehicleParams(**values["vehicle"])
    rlv = dict(values["rl"])
    actions = ActionSpace(**{k: rlv.pop(k) for k in list(rlv) if k in _ACTION_KEYS})
    initial = rlv.pop("initial_epsilon", 0.01)
    final = rlv.pop("final_epsilon", 1.0)
    schedules = rlv.pop("schedules", (ScheduleKind.LINEAR, ScheduleKind.IEG))
    rl = RLParams(**rlv)
    for eps in (initial, final):
        if not 0 <= eps <= 1:
            raise InvalidValue("exploration rates must lie in [0, 1]")
    if initial == final:
        raise InvalidValue("initial_epsilon and final_epsilon must differ")
    if not schedules:
        raise InvalidValue("schedules must name at least one schedule")
    if actions.min_torque < vehicle.torque_min or actions.max_torque > vehicle.torque_max:
        raise InvalidValue("action space exceeds the vehicle torque bounds")

    experiment = ExperimentSettings(**values["experiment"])
    _validate_experiment(experiment)
    cfg = ExperimentConfig(track, vehicle, rl, actions, initial, final, schedules, experiment)
    try:
        cfg.episode_setup().n_steps
    except ValueError as exc:
        raise InvalidValue(str(exc)) from None
    return cfg


def echo_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` as configuration text that parses back to an equal config."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, ScheduleKind):
            return v.value
        return str(v)

    segs = []
    for s in cfg.track.segments:
        row = [s.kind, fmt(s.length), fmt(s.friction_mu), fmt(s.speed_limit)]
        if s.is_curve:
            row.append(fmt(s.radius))
        segs.append(" ".join(row))
    out = ["[track]", "segments = " + "; ".join(segs),
           f"destination = {fmt(cfg.track.destination)}", "", "[vehicle]"]
    out += [f"{f.name} = {fmt(getattr(cfg.vehicle, f.name))}"
            for f in dataclasses.fields(VehicleParams)]
    out += ["", "[rl]"]
    out += [f"{f.name} = {fmt(getattr(cfg.rl, f.name))}" for f in dataclasses.fields(RLParams)]
    out += [f"{k} = {fmt(getattr(cfg.actions, k))}" for k in _ACTION_KEYS]
    out += [f"initial_epsilon = {fmt(cfg.initial_epsilon)}",
            f"final_epsilon = {fmt(cfg.final_epsilon)}",
            "schedules = " + ", ".join(fmt(k) for k in cfg.schedules), "", "[experiment]"]
    for f in dataclasses.fields(ExperimentSettings):
        v = getattr(cfg.experiment, f.name)
        if f.name == "seeds":
            v = ", ".join(str(s) for s in v)
        elif f.name in ("reward_window", "safety_window"):
            v = f"{v[0]}-{v[1]}"
        out.append(f"{f.name} = {fmt(v)}")
    return "\n".join(out) + "\n"
