"""Shared training machinery: reward window, environment runner, seeding.

One run seed fans out into namespaced, independent PCG64 streams (policy
init, action sampling, minibatch shuffling, per-phase demand), so that any
run is bit-reproducible from (config, seed) alone and a single-task
continual schedule consumes randomness exactly like a plain training run.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .demand import DemandConfig, make_task
from .env import Action, EnvConfig, SupplyChainEnv, trace_row

# Seed namespaces (second entry of the SeedSequence key).
NS_INIT = 0
NS_ACTIONS = 1
NS_SHUFFLE = 2
NS_DEMAND = 3
NS_BASELINE = 4


def seeded_rng(run_seed: int, namespace: int, *extra) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([run_seed, namespace, *extra])))


def demand_seed(run_seed: int, phase: int):
    """Demand stream seed for a schedule phase; plain training is phase 0."""
    return np.random.SeedSequence([run_seed, NS_DEMAND, phase])


class RewardWindow:
    """Trailing window of completed-episode total rewards."""

    def __init__(self, size: int = 100):
        self.size = size
        self._buf = deque(maxlen=size)

    def push(self, episode_reward: float):
        self._buf.append(float(episode_reward))

    def mean(self) -> float:
        if not self._buf:
            return float("nan")
        return float(np.mean(self._buf))

    def snapshot(self) -> list:
        return list(self._buf)

    def load(self, values):
        self._buf = deque((float(v) for v in values), maxlen=self.size)

    def __len__(self):
        return len(self._buf)


class StaticDirector:
    """Single fixed task for the whole run."""

    def __init__(self, task_name: str, run_seed: int):
        self.task_name = task_name
        self.run_seed = run_seed

    def initial_task(self):
        return self.task_name, make_task(self.task_name), demand_seed(self.run_seed, 0)

    def on_episode_end(self, global_step: int):
        return None


class EnvRunner:
    """Steps one environment, handling episode resets, window bookkeeping,
    task switches (via the director) and optional step tracing."""

    def __init__(self, env: SupplyChainEnv, window: RewardWindow, director,
                 trace: Optional[Callable[[list], None]] = None):
        self.env = env
        self.window = window
        self.director = director
        self.trace = trace
        self.global_step = 0
        self.episode_reward = 0.0
        self.episode_len = 0
        self.next_episode_start = True
        self.obs: Optional[np.ndarray] = None

    def start(self):
        name, config, seed = self.director.initial_task()
        self.obs = self.env.reset(task=config, seed=seed, task_name=name)
        self.next_episode_start = True

    def step(self, action_indices):
        """Apply one action; returns (StepResult, started_episode) where the
        flag marks whether the pre-step observation opened an episode."""
        was_start = self.next_episode_start
        self.next_episode_start = False
        action = Action.from_sequence(action_indices).clamped(self.env.config)
        result = self.env.step(action)
        if self.trace is not None:
            self.trace(trace_row(self.env, action, result))
        self.global_step += 1
        self.episode_reward += result.reward
        self.episode_len += 1
        if result.done:
            self.window.push(self.episode_reward)
            self.episode_reward = 0.0
            self.episode_len = 0
            switch = self.director.on_episode_end(self.global_step)
            if switch is not None:
                name, config, seed = switch
                self.obs = self.env.reset(task=config, seed=seed, task_name=name)
            else:
                self.obs = self.env.reset()
            self.next_episode_start = True
        else:
            self.obs = result.observation
        return result, was_start

    # -- checkpoint support --------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "env": self.env.state_dict(),
            "global_step": self.global_step,
            "episode_reward": self.episode_reward,
            "episode_len": self.episode_len,
            "next_episode_start": self.next_episode_start,
            "window": self.window.snapshot(),
        }

    def load_state_dict(self, state: dict):
        self.env.load_state_dict(state["env"])
        self.global_step = int(state["global_step"])
        self.episode_reward = float(state["episode_reward"])
        self.episode_len = int(state["episode_len"])
        self.next_episode_start = bool(state["next_episode_start"])
        self.window.load(state["window"])
        self.obs = self.env.observation()


@dataclass
class RunRngs:
    actions: np.random.Generator
    shuffle: np.random.Generator

    @classmethod
    def for_seed(cls, run_seed: int) -> "RunRngs":
        return cls(actions=seeded_rng(run_seed, NS_ACTIONS),
                   shuffle=seeded_rng(run_seed, NS_SHUFFLE))

    def state_dict(self) -> dict:
        return {"actions": self.actions.bit_generator.state,
                "shuffle": self.shuffle.bit_generator.state}

    def load_state_dict(self, state: dict):
        self.actions.bit_generator.state = state["actions"]
        self.shuffle.bit_generator.state = state["shuffle"]


def run_training(agent, runner: EnvRunner, rngs: RunRngs, total_steps: int,
                 after_update: Optional[Callable] = None) -> list:
    """Collect/update until at least ``total_steps`` environment steps.

    Returns one log row per rollout: a dict with env_steps, the reward
    window mean, and the update's loss statistics. ``after_update`` (if
    given) is called with the row after each update, e.g. to write
    boundary checkpoints.
    """
    if runner.obs is None:
        runner.start()
    rows = []
    while runner.global_step < total_steps:
        buffer = agent.collect(runner, rngs.actions)
        stats = agent.update(buffer, rngs.shuffle)
        row = {
            "env_steps": runner.global_step,
            "window_mean_reward": runner.window.mean(),
            **stats,
        }
        rows.append(row)
        if after_update is not None:
            after_update(row)
    return rows


def make_env(task_name: str = "", config: Optional[EnvConfig] = None) -> SupplyChainEnv:
    return SupplyChainEnv(config or EnvConfig(), task_name=task_name)


def resolve_task(task_name: str) -> DemandConfig:
    return make_task(task_name)
