"""Continual-learning harness: one persistent learner cycled through a
schedule of demand regimes.

At a phase boundary only the demand configuration changes; learner
parameters, optimizer state and the reward window all carry over, and the
switch takes effect at the first episode reset at or after the nominal
step threshold (mid-episode regime changes are not allowed). Each phase
reseeds its demand stream from (run seed, phase index) so schedules are
bit-reproducible and a single-task schedule consumes randomness exactly
like a plain training run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .demand import make_task
from .errors import ConfigError, MetricsError
from .training import (EnvRunner, RunRngs, RewardWindow, demand_seed,
                       make_env, run_training)

PRESETS = {
    "batch-up": ("Bat3", "Bat7", "Bat10"),
    "batch-down": ("Bat10", "Bat7", "Bat3"),
    "sto-up": ("Sto0", "Sto01", "Sto1"),
    "sto-down": ("Sto1", "Sto01", "Sto0"),
    "extreme-bat-to-sto": ("Bat10", "Sto0"),
    "extreme-sto-to-bat": ("Sto0", "Bat10"),
}


@dataclass(frozen=True)
class TaskSchedule:
    tasks: tuple          # one cycle's task names, in order
    phase_length: int     # env steps per phase
    cycles: int = 1

    def __post_init__(self):
        if self.cycles < 1:
            raise ConfigError(f"cycles must be >= 1, got {self.cycles}")
        if self.phase_length < 1:
            raise ConfigError("phase_length must be positive")
        for name in self.tasks:
            make_task(name)  # validates

    @property
    def phases(self) -> list:
        return list(self.tasks) * self.cycles

    @property
    def total_steps(self) -> int:
        return len(self.phases) * self.phase_length


def make_schedule(preset: str, phase_length: int, cycles: int = 1) -> TaskSchedule:
    if preset not in PRESETS:
        raise ConfigError(
            f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
    return TaskSchedule(PRESETS[preset], phase_length, cycles)


@dataclass
class PhaseLog:
    phase: int
    task: str
    start_step: int
    end_step: int
    end_window_mean: float
    best_window_mean: float
    window_snapshot: list = field(default_factory=list)


class ContinualDirector:
    """Switches the environment's demand regime at phase boundaries.

    Boundaries are realized at the first episode reset whose global step
    count has reached the nominal threshold, so logged phase ranges are
    contiguous, non-overlapping and partition the run exactly.
    """

    def __init__(self, schedule: TaskSchedule, run_seed: int,
                 window: RewardWindow):
        self.schedule = schedule
        self.phases = schedule.phases
        self.run_seed = run_seed
        self.window = window
        self.idx = 0
        self.boundaries = []       # records closing each finished phase
        self.phase_start_pending = True
        self.checkpoint_pending = False

    @property
    def current_task_name(self) -> str:
        return self.phases[self.idx]

    def initial_task(self):
        name = self.phases[0]
        return name, make_task(name), demand_seed(self.run_seed, 0)

    def on_episode_end(self, global_step: int):
        nxt = self.idx + 1
        if nxt >= len(self.phases):
            return None
        if global_step < nxt * self.schedule.phase_length:
            return None
        self.boundaries.append({
            "phase": self.idx,
            "task": self.phases[self.idx],
            "end_step": global_step,
            "end_window_mean": self.window.mean(),
            "window_snapshot": self.window.snapshot(),
        })
        self.idx = nxt
        self.phase_start_pending = True
        self.checkpoint_pending = True
        name = self.phases[self.idx]
        return name, make_task(name), demand_seed(self.run_seed, self.idx)

    def close_final(self, global_step: int):
        self.boundaries.append({
            "phase": self.idx,
            "task": self.phases[self.idx],
            "end_step": global_step,
            "end_window_mean": self.window.mean(),
            "window_snapshot": self.window.snapshot(),
        })

    def restore(self, phase_index: int):
        self.idx = int(phase_index)
        self.phase_start_pending = True
        self.checkpoint_pending = False


def run_continual(schedule: TaskSchedule, agent, run_seed: int,
                  trace=None, boundary_checkpoint=None,
                  resume_state: Optional[dict] = None):
    """Drive one agent across the schedule.

    ``boundary_checkpoint(phase_index, machine_state_fn)`` is invoked at
    the first update after each phase switch, with a callable producing
    the full resumable machine state. Returns (rows, phase_logs, runner).
    """
    if schedule.phase_length < agent.hp.n_steps:
        raise ConfigError("phase_length must be at least n_steps")
    window = RewardWindow(agent.hp.stats_window_size)
    director = ContinualDirector(schedule, run_seed, window)
    runner = EnvRunner(make_env(), window, director, trace=trace)
    rngs = RunRngs.for_seed(run_seed)

    if resume_state is not None:
        agent.load_state_dict(resume_state["agent"])
        runner.load_state_dict(resume_state["runner"])
        rngs.load_state_dict(resume_state["rngs"])
        director.restore(resume_state["harness"]["phase_index"])
        director.phase_start_pending = False

    def machine_state() -> dict:
        return {
            "agent": agent.state_dict(),
            "runner": runner.state_dict(),
            "rngs": rngs.state_dict(),
            "harness": {"phase_index": director.idx},
        }

    def after_update(row):
        row["phase"] = director.idx
        row["task"] = director.current_task_name
        row["phase_start"] = director.phase_start_pending
        director.phase_start_pending = False
        if director.checkpoint_pending:
            director.checkpoint_pending = False
            if boundary_checkpoint is not None:
                boundary_checkpoint(director.idx, machine_state)

    rows = run_training(agent, runner, rngs, schedule.total_steps, after_update)
    director.close_final(runner.global_step)

    phase_logs = []
    start = 0
    for rec in director.boundaries:
        means = [r["window_mean_reward"] for r in rows
                 if r["phase"] == rec["phase"]]
        best = max(means + [rec["end_window_mean"]])
        phase_logs.append(PhaseLog(
            phase=rec["phase"], task=rec["task"], start_step=start,
            end_step=rec["end_step"], end_window_mean=rec["end_window_mean"],
            best_window_mean=best, window_snapshot=rec["window_snapshot"]))
        start = rec["end_step"]
    return rows, phase_logs, runner


@dataclass
class PhaseSeries:
    """Reward-window means sampled through one phase, oldest first."""

    task: str
    means: list


def phase_series_from_rows(rows) -> list:
    series = []
    for row in rows:
        if not series or row["phase"] != series[-1][0]:
            series.append((row["phase"], PhaseSeries(row["task"], [])))
        series[-1][1].means.append(row["window_mean_reward"])
    return [s for _, s in series]


def transfer_metrics(phases: list) -> dict:
    """Transfer/forgetting metrics over an ordered list of PhaseSeries.

    Per task T (None where undefined, i.e. tasks seen only once):
      forward_transfer: window mean at the start of T's last phase minus at
        the start of its first phase;
      forgetting: the largest gap between the best window mean achieved on
        T in earlier phases and the mean at the start of a later T phase.
    Per phase p > 0, dip_depth[p] is the previous phase's final mean minus
    the lowest mean in the first 10% of phase p (positive = a dip).
    """
    if len(phases) < 2:
        raise MetricsError("transfer metrics need at least two phases")
    for s in phases:
        if not s.means:
            raise MetricsError(f"phase for task {s.task} has an empty series")

    per_task = {}
    occurrences = {}
    for i, s in enumerate(phases):
        occurrences.setdefault(s.task, []).append(i)
    for task, occ in occurrences.items():
        if len(occ) < 2:
            per_task[task] = {"forward_transfer": None, "forgetting": None}
            continue
        forward = phases[occ[-1]].means[0] - phases[occ[0]].means[0]
        forgetting = None
        best_so_far = None
        for j, i in enumerate(occ):
            if j > 0:
                gap = best_so_far - phases[i].means[0]
                forgetting = gap if forgetting is None else max(forgetting, gap)
            best = max(phases[i].means)
            best_so_far = best if best_so_far is None else max(best_so_far, best)
        per_task[task] = {"forward_transfer": forward, "forgetting": forgetting}

    dip_depth = [None]
    for p in range(1, len(phases)):
        head = phases[p].means[: max(1, math.ceil(0.1 * len(phases[p].means)))]
        dip_depth.append(phases[p - 1].means[-1] - min(head))
    return {"per_task": per_task, "dip_depth": dip_depth}
