"""Training runs, schedule comparison, greedy replay and their CSV/text outputs.

A run owns one Q-table and one ``numpy.random.Generator`` seeded from the
configured seed, so its outputs depend only on (config, schedule, seed).
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ExperimentConfig, echo_config
from .episode import EpisodeResult, Termination, improvement_pct, run_episode
from .rl import DriveState, QTable, ScheduleKind

log = logging.getLogger(__name__)

REWARD_COLUMNS = ["episode", "epsilon", "reward_sum", "reward_avg", "safety_index",
                  "min_gap", "termination", "steps"]
STEP_COLUMNS = ["t", "position", "speed", "torque", "state", "reward", "gap"]


def fmt_num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class TrainingRun:
    schedule: ScheduleKind
    seed: int
    summaries: list
    q: QTable

    def series(self, key: str) -> np.ndarray:
        return np.array([s[key] for s in self.summaries], dtype=np.float64)

    def terminations(self) -> Counter:
        return Counter(s["termination"] for s in self.summaries)


def train(cfg: ExperimentConfig, schedule, seed: int,
          on_episode: Optional[Callable[[int, EpisodeResult], None]] = None) -> TrainingRun:
    """Train a fresh Q-table for ``max_episodes`` episodes (numbered from 1)."""
    kind = ScheduleKind(schedule)
    sched = cfg.schedule(kind)
    e = cfg.experiment
    rng = np.random.default_rng(seed)
    q = QTable(cfg.actions)
    fixed_setup = cfg.episode_setup()
    summaries = []
    for episode in range(1, e.max_episodes + 1):
        setup = fixed_setup
        if e.obstacle == "random":
            offset = rng.uniform(e.random_spawn_min, e.random_spawn_max)
            setup = cfg.episode_setup(cfg.obstacle(offset))
        result = run_episode(setup, q, sched, episode, e.max_episodes, rng)
        summary = {"episode": episode, **result.summary()}
        summaries.append(summary)
        if on_episode is not None:
            on_episode(episode, result)
        if episode % 50 == 0:
            log.info("%s seed=%d episode %d reward_sum=%.3f %s", kind.value, seed, episode,
                     summary["reward_sum"], summary["termination"])
    return TrainingRun(kind, seed, summaries, q)


def rewards_csv(summaries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REWARD_COLUMNS)
    for s in summaries:
        w.writerow([s["episode"], fmt_num(s["epsilon"]), fmt_num(s["reward_sum"]),
                    fmt_num(s["reward_avg"]), fmt_num(s["safety_index"]),
                    fmt_num(s["min_gap"]), s["termination"], s["steps"]])
    return buf.getvalue()


def steps_csv(result: EpisodeResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEP_COLUMNS)
    labels = [s.label for s in DriveState]
    for i in range(len(result.t)):
        w.writerow([repr(float(result.t[i])), repr(float(result.position[i])),
                    repr(float(result.speed[i])), repr(float(result.torque[i])),
                    labels[int(result.state[i])], repr(float(result.reward[i])),
                    repr(float(result.gap[i]))])
    return buf.getvalue()


def cmd_run(cfg: ExperimentConfig, schedule, seed: int, out_dir) -> TrainingRun:
    """Train one schedule and write rewards.csv, episodes/episode_<n>.csv and qtable.csv."""
    out = Path(out_dir)
    ep_dir = out / "episodes"
    ep_dir.mkdir(parents=True, exist_ok=True)
    every = cfg.experiment.step_csv_every

    def write_steps(episode, result):
        if every and (episode % every == 0 or episode == 1):
            (ep_dir / f"episode_{episode}.csv").write_text(steps_csv(result))

    run = train(cfg, schedule, seed, write_steps)
    (out / "rewards.csv").write_text(rewards_csv(run.summaries))
    run.q.to_csv(out / "qtable.csv")
    return run


@dataclass
class ExperimentReport:
    seeds: list
    reward_window: tuple
    safety_window: tuple
    reward_series: dict = field(default_factory=dict)  # (seed, schedule) -> array
    safety_series: dict = field(default_factory=dict)
    terminations: dict = field(default_factory=dict)
    reward_improvement: dict = field(default_factory=dict)  # seed -> percent
    safety_improvement: dict = field(default_factory=dict)
    window_means: dict = field(default_factory=dict)  # (seed, schedule) -> (reward, safety)
    config_echo: str = ""

    @property
    def mean_reward_improvement(self) -> float:
        return float(np.mean(list(self.reward_improvement.values())))

    @property
    def mean_safety_improvement(self) -> float:
        return float(np.mean(list(self.safety_improvement.values())))

    def render(self) -> str:
        lines = ["# schedule comparison: ieg vs linear", "",
                 f"seeds: {', '.join(str(s) for s in self.seeds)}",
                 f"reward window (episodes): {self.reward_window[0]}-{self.reward_window[1]}"
                 "  metric: mean reward_sum",
                 f"safety window (episodes): {self.safety_window[0]}-{self.safety_window[1]}"
                 "  metric: mean safety_index",
                 "improvement = 100 * (mean_ieg - mean_linear) / |mean_linear|", ""]
        lines.append("seed  reward_linear  reward_ieg  reward_impr_pct  "
                     "safety_linear  safety_ieg  safety_impr_pct")
        for s in self.seeds:
            rl, sl = self.window_means[(s, "linear")]
            ri, si = self.window_means[(s, "ieg")]
            lines.append(f"{s}  {rl!r}  {ri!r}  {self.reward_improvement[s]!r}  "
                         f"{sl!r}  {si!r}  {self.safety_improvement[s]!r}")
        lines += ["", f"cross-seed mean reward improvement pct: {self.mean_reward_improvement!r}",
                  f"cross-seed mean safety improvement pct: {self.mean_safety_improvement!r}",
                  "", "terminations per run:"]
        for (s, kind), hist in sorted(self.terminations.items()):
            counts = ", ".join(f"{t.value}={hist.get(t.value, 0)}" for t in Termination)
            lines.append(f"  seed {s} {kind}: {counts}")
        lines += ["", "# configuration", self.config_echo]
        return "\n".join(lines)


def _safe_improvement(a, b, window):
    try:
        return improvement_pct(a, b, window)
    except ZeroDivisionError:
        return math.nan


def cmd_compare(cfg: ExperimentConfig, seeds, out_dir=None,
                runner: Callable[..., TrainingRun] = train) -> ExperimentReport:
    """Train linear and IEG schedules per seed and compare their final windows.

    Outputs go to ``<out_dir>/seed_<s>/<schedule>/`` (rewards.csv, qtable.csv)
    and ``<out_dir>/report.txt``. A run's files are written once it completes.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    rw, sw = cfg.window("reward"), cfg.window("safety")
    report = ExperimentReport(seeds, rw, sw, config_echo=echo_config(cfg))
    out = Path(out_dir) if out_dir is not None else None
    for seed in seeds:
        for kind in (ScheduleKind.LINEAR, ScheduleKind.IEG):
            run = runner(cfg, kind, seed)
            key = (seed, kind.value)
            rewards, safety = run.series("reward_sum"), run.series("safety_index")
            report.reward_series[key] = rewards
            report.safety_series[key] = safety
            report.terminations[key] = run.terminations()
            report.window_means[key] = (float(np.mean(rewards[rw[0] - 1:rw[1]])),
                                        float(np.mean(safety[sw[0] - 1:sw[1]])))
            if out is not None:
                d = out / f"seed_{seed}" / kind.value
                d.mkdir(parents=True, exist_ok=True)
                (d / "rewards.csv").write_text(rewards_csv(run.summaries))
                run.q.to_csv(d / "qtable.csv")
        report.reward_improvement[seed] = _safe_improvement(
            report.reward_series[(seed, "ieg")], report.reward_series[(seed, "linear")], rw)
        report.safety_improvement[seed] = _safe_improvement(
            report.safety_series[(seed, "ieg")], report.safety_series[(seed, "linear")], sw)
    if out is not None:
        (out / "report.txt").write_text(report.render())
    return report


def cmd_replay(qtable_path, cfg: ExperimentConfig, out_path=None, seed: int = 0) -> EpisodeResult:
    """Run one greedy (epsilon = 0) episode with a saved table; no learning."""
    q = QTable.from_csv(Path(qtable_path), cfg.actions)
    rng = np.random.default_rng(seed)
    setup = cfg.episode_setup()
    if cfg.experiment.obstacle == "random":
        e = cfg.experiment
        setup = cfg.episode_setup(cfg.obstacle(rng.uniform(e.random_spawn_min, e.random_spawn_max)))
    result = run_episode(setup, q, cfg.schedule(ScheduleKind.CONSTANT), 0, 1, rng,
                         learn=False, epsilon=0.0)
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(steps_csv(result))
    return result
