"""Run orchestration shared by the CLI and the test-suite: training runs,
continual schedules, the random baseline, trace export and evaluation."""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, fields

import numpy as np

from . import __version__
from . import ppo as ppo_mod
from . import rppo as rppo_mod
from .artifacts import (CONTINUAL_COLUMNS, CURVE_COLUMNS, EPISODE_COLUMNS,
                        CsvAppender, write_csv, write_json)
from .checkpoint import VERSION as CKPT_VERSION
from .checkpoint import load_checkpoint, save_checkpoint
from .continual import (TaskSchedule, make_schedule, phase_series_from_rows,
                        run_continual, transfer_metrics)
from .demand import NORMAL_METHOD, RNG_FAMILY, make_task
from .env import TRACE_COLUMNS, Action, EnvConfig, trace_row
from .errors import ConfigError, MetricsError
from .kernels import BACKEND
from .ppo import PpoAgent, PpoHyperparams
from .rppo import RppoAgent, default_rppo_hyperparams
from .training import (NS_ACTIONS, NS_BASELINE, demand_seed, make_env,
                       seeded_rng)

ALGOS = ("ppo", "rppo")


def build_hyperparams(algo: str, overrides: dict | None = None) -> PpoHyperparams:
    """Algorithm defaults plus type-checked overrides."""
    overrides = dict(overrides or {})
    valid = {f.name: f.type for f in fields(PpoHyperparams)}
    for key in overrides:
        if key not in valid:
            raise ConfigError(f"unknown hyperparameter {key!r}")
    if "hidden_sizes" in overrides:
        overrides["hidden_sizes"] = tuple(overrides["hidden_sizes"])
    if algo == "ppo":
        return PpoHyperparams(**overrides)
    if algo == "rppo":
        return default_rppo_hyperparams(**overrides)
    raise ConfigError(f"unknown algo {algo!r}; expected one of {ALGOS}")


def make_agent(algo: str, hp: PpoHyperparams, seed: int):
    if algo == "ppo":
        return PpoAgent.create(hp, seed)
    if algo == "rppo":
        return RppoAgent.create(hp, seed)
    raise ConfigError(f"unknown algo {algo!r}; expected one of {ALGOS}")


def run_metadata(algo: str, hp: PpoHyperparams, seed: int, extra: dict) -> dict:
    meta = {
        "package": "echelonrl",
        "package_version": __version__,
        "checkpoint_format_version": CKPT_VERSION,
        "algo": algo,
        "seed": seed,
        "hyperparameters": asdict(hp),
        "env_config": asdict(EnvConfig()),
        "rng_family": RNG_FAMILY,
        "demand_sampling": NORMAL_METHOD,
        "kernel_backend": BACKEND,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
    }
    meta.update(extra)
    return meta


def _curve_rows(algo, task, seed, rows):
    return [[algo, task, seed, r["env_steps"], r["window_mean_reward"],
             r["policy_loss"], r["value_loss"], r["entropy"],
             r["clip_fraction"]] for r in rows]


def train_one_seed(algo: str, task: str, total_steps: int, seed: int,
                   out_dir: str, hp_overrides: dict | None = None) -> dict:
    """Train one seed; writes curve CSV, final checkpoint and metadata."""
    make_task(task)  # validate early
    if algo not in ALGOS:
        raise ConfigError(f"unknown algo {algo!r}; expected one of {ALGOS}")
    hp = build_hyperparams(algo, hp_overrides)
    mod = ppo_mod if algo == "ppo" else rppo_mod
    rows, agent, runner, rngs = mod.train(task, hp, total_steps, seed)

    stem = f"{algo}_{task}_seed{seed}"
    curve_path = os.path.join(out_dir, f"curve_{stem}.csv")
    ckpt_path = os.path.join(out_dir, f"ckpt_{stem}.json")
    meta_path = os.path.join(out_dir, f"meta_{stem}.json")
    write_csv(curve_path, CURVE_COLUMNS, _curve_rows(algo, task, seed, rows))
    machine = {"agent": agent.state_dict(), "runner": runner.state_dict(),
               "rngs": rngs.state_dict()}
    harness = {"kind": "train", "task": task, "seed": seed,
               "total_steps": total_steps}
    save_checkpoint(ckpt_path, algo, asdict(hp), machine, harness)
    write_json(meta_path, run_metadata(algo, hp, seed,
                                       {"task": task, "total_steps": total_steps}))
    return {"curve": curve_path, "checkpoint": ckpt_path, "metadata": meta_path,
            "rows": rows}


def continual_one_seed(algo: str, preset: str, phase_steps: int, cycles: int,
                       seed: int, out_dir: str,
                       hp_overrides: dict | None = None,
                       resume_from: str | None = None) -> dict:
    """One continual run; writes the phase-annotated curve CSV, transfer
    metrics JSON, boundary checkpoints and metadata."""
    resume_state = None
    if resume_from is not None:
        payload = load_checkpoint(resume_from)
        harness = payload["harness"]
        if harness.get("kind") != "continual":
            raise ConfigError("--resume expects a continual boundary checkpoint")
        algo = payload["algo"]
        preset = harness["preset"]
        phase_steps = int(harness["phase_length"])
        cycles = int(harness["cycles"])
        seed = int(harness["seed"])
        hp = hp_from_dict(payload["hp"])
        resume_state = payload["state"]
    else:
        hp = build_hyperparams(algo, hp_overrides)
    if cycles < 1:
        raise ConfigError(f"cycles must be >= 1, got {cycles}")

    schedule = make_schedule(preset, phase_steps, cycles)
    agent = make_agent(algo, hp, seed)

    stem = f"{algo}_{preset}_seed{seed}"
    if resume_from is not None:
        stem += "_resumed"

    def boundary_checkpoint(phase_idx, machine_state):
        path = os.path.join(out_dir, f"ckpt_{stem}_phase{phase_idx}.json")
        state = machine_state()
        harness = {"kind": "continual", "preset": preset,
                   "phase_length": schedule.phase_length,
                   "cycles": schedule.cycles, "seed": seed,
                   "phase_index": state["harness"]["phase_index"]}
        save_checkpoint(path, algo, asdict(hp), state, harness)

    rows, phase_logs, runner = run_continual(
        schedule, agent, seed, boundary_checkpoint=boundary_checkpoint,
        resume_state=resume_state)

    curve_path = os.path.join(out_dir, f"continual_{stem}.csv")
    csv_rows = [[algo, preset, seed, r["phase"], r["task"], r["env_steps"],
                 r["window_mean_reward"], r["phase_start"]] for r in rows]
    write_csv(curve_path, CONTINUAL_COLUMNS, csv_rows)

    metrics_path = os.path.join(out_dir, f"transfer_{stem}.json")
    try:
        metrics = transfer_metrics(phase_series_from_rows(rows))
    except MetricsError:
        metrics = {"per_task": {}, "dip_depth": [],
                   "note": "fewer than two phases in this run"}
    write_json(metrics_path, metrics)

    meta_path = os.path.join(out_dir, f"meta_{stem}.json")
    write_json(meta_path, run_metadata(
        agent.algo, hp, seed,
        {"preset": preset, "phase_length": schedule.phase_length,
         "cycles": schedule.cycles, "schedule": schedule.phases,
         "resumed_from": resume_from}))
    return {"curve": curve_path, "metrics": metrics_path, "metadata": meta_path,
            "rows": rows, "phase_logs": phase_logs}


def hp_from_dict(hp_dict: dict) -> PpoHyperparams:
    clean = dict(hp_dict)
    clean["hidden_sizes"] = tuple(clean.get("hidden_sizes", (64, 64)))
    return PpoHyperparams(**clean)


def random_action(rng: np.random.Generator, config: EnvConfig):
    return [int(rng.integers(0, config.max_order[0] + 1)),
            int(rng.integers(0, config.max_order[1] + 1)),
            int(rng.integers(0, config.max_order[2] + 1)),
            int(rng.integers(0, config.reorder_point_max + 1))]


def _episode_stats(rewards: list) -> dict:
    n = len(rewards)
    mean = float(np.mean(rewards)) if n else None
    if n > 1:
        std = float(np.std(rewards, ddof=1))
        se = std / float(np.sqrt(n))
    else:
        std = None
        se = None
    return {"episodes": n, "mean": mean, "std": std, "se": se}


def baseline_random(task: str, episodes: int, seed: int, out_dir: str) -> dict:
    """Uniform-random policy over N episodes; per-episode rewards, summary
    statistics and the full step trace (the no-agent action/inventory data)."""
    env = make_env(task)
    env.set_task(make_task(task), seed=demand_seed(seed, 0), task_name=task)
    rng = seeded_rng(seed, NS_BASELINE)

    stem = f"baseline_{task}_seed{seed}"
    trace_path = os.path.join(out_dir, f"trace_{stem}.csv")
    episodes_path = os.path.join(out_dir, f"episodes_{stem}.csv")
    stats_path = os.path.join(out_dir, f"stats_{stem}.json")

    totals = []
    episode_rows = []
    with CsvAppender(trace_path, TRACE_COLUMNS) as trace:
        for ep in range(episodes):
            env.reset()
            total = 0.0
            length = 0
            stockout_end = False
            done = False
            while not done:
                action = Action.from_sequence(random_action(rng, env.config))
                result = env.step(action)
                trace(trace_row(env, action, result))
                total += result.reward
                length += 1
                done = result.done
                if done:
                    stockout_end = (result.info["stockout_count"]
                                    > env.config.max_stockouts)
            totals.append(total)
            episode_rows.append([ep, total, length, int(stockout_end)])

    write_csv(episodes_path, EPISODE_COLUMNS, episode_rows)
    stats = {"task": task, "seed": seed, **_episode_stats(totals)}
    write_json(stats_path, stats)
    return {"stats": stats, "trace": trace_path, "episodes": episodes_path,
            "stats_path": stats_path}


def load_agent(checkpoint_path: str):
    payload = load_checkpoint(checkpoint_path)
    algo = payload["algo"]
    hp = hp_from_dict(payload["hp"])
    agent = make_agent(algo, hp, seed=0)
    agent.load_state_dict(payload["state"]["agent"])
    return agent, payload


def rollout_trace(checkpoint_path: str, task: str, episodes: int, seed: int,
                  deterministic: bool, out_dir: str) -> dict:
    """Run a trained policy for N episodes, exporting the step trace plus a
    behaviour summary (the stockout-loophole diagnostic)."""
    agent, payload = load_agent(checkpoint_path)
    env = make_env(task)
    env.set_task(make_task(task), seed=demand_seed(seed, 0), task_name=task)
    rng = seeded_rng(seed, NS_ACTIONS)

    mode = "det" if deterministic else "sampled"
    stem = f"rollout_{agent.algo}_{task}_{mode}_seed{seed}"
    trace_path = os.path.join(out_dir, f"trace_{stem}.csv")
    summary_path = os.path.join(out_dir, f"summary_{stem}.json")

    orders = np.zeros(3)
    reorder_sum = 0.0
    retailer_inv_sum = 0.0
    steps = 0
    stockout_ends = 0
    totals = []
    with CsvAppender(trace_path, TRACE_COLUMNS) as trace:
        for ep in range(episodes):
            obs = env.reset()
            agent.begin_episode()
            total = 0.0
            done = False
            while not done:
                indices = agent.act_for_eval(obs, rng, deterministic)
                action = Action.from_sequence(indices).clamped(env.config)
                result = env.step(action)
                trace(trace_row(env, action, result))
                orders += (action.q0, action.q1, action.q2)
                reorder_sum += action.r0
                retailer_inv_sum += env.inventories[0]
                steps += 1
                total += result.reward
                obs = result.observation
                done = result.done
            totals.append(total)
            if env.stockout_count > env.config.max_stockouts:
                stockout_ends += 1

    summary = {
        "task": task,
        "algo": agent.algo,
        "episodes": episodes,
        "deterministic": deterministic,
        "mean_order": [float(o / steps) for o in orders] if steps else None,
        "mean_reorder_point": reorder_sum / steps if steps else None,
        "mean_retailer_inventory": retailer_inv_sum / steps if steps else None,
        "stockout_termination_fraction":
            stockout_ends / episodes if episodes else None,
        **{f"reward_{k}": v for k, v in _episode_stats(totals).items()
           if k != "episodes"},
    }
    write_json(summary_path, summary)
    return {"summary": summary, "trace": trace_path,
            "summary_path": summary_path}


def evaluate(checkpoint_path: str, task: str, episodes: int, seed: int,
             deterministic: bool, out_dir: str) -> dict:
    """Episode-reward statistics for a trained policy, no trace export."""
    agent, payload = load_agent(checkpoint_path)
    env = make_env(task)
    env.reset(task=make_task(task),
              seed=np.random.SeedSequence([seed, NS_ACTIONS, 1]), task_name=task)
    rng = seeded_rng(seed, NS_ACTIONS)
    totals = []
    for ep in range(episodes):
        obs = env.reset() if ep > 0 else env.observation()
        agent.begin_episode()
        total = 0.0
        done = False
        while not done:
            indices = agent.act_for_eval(obs, rng, deterministic)
            result = env.step(indices)
            total += result.reward
            obs = result.observation
            done = result.done
        totals.append(total)
    stats = {"task": task, "algo": agent.algo, "seed": seed,
             "deterministic": deterministic, **_episode_stats(totals)}
    stats_path = os.path.join(out_dir, f"eval_{agent.algo}_{task}_seed{seed}.json")
    write_json(stats_path, stats)
    return {"stats": stats, "stats_path": stats_path}
