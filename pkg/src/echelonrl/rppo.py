"""Recurrent PPO: an LSTM between the observation projection and the
action/value heads.

The hidden state persists across rollout boundaries within an episode and
is zeroed exactly at episode starts. Updates replay the whole collected
window through the LSTM from the stored initial state (re-applying the
episode resets), so before the first gradient step the replayed
log-probabilities reproduce the collected ones and every ratio is 1.
The full window is one minibatch; gradients flow by backpropagation
through time, truncated at the window edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels as K
from .env import OBS_SIZE
from .errors import TrainingError
from .nn.adam import AdamState, adam_update
from .nn.categorical import batch_logp_entropy, categorical_argmax, categorical_sample
from .nn.layers import DenseLayer, dense_backward, dense_forward, init_dense
from .nn.lstm import LstmParams, init_lstm, lstm_bptt, lstm_step, zero_state
from .ppo import (HEAD_SIZES, N_HEADS, PpoHyperparams, RolloutBuffer,
                  compute_gae, global_grad_clip, heads_value_loss,
                  normalize_advantages)
from .training import (EnvRunner, NS_INIT, RunRngs, RewardWindow,
                       StaticDirector, make_env, run_training, seeded_rng)


def default_rppo_hyperparams(**overrides) -> PpoHyperparams:
    """Table of defaults for the recurrent learner: short 128-step windows
    consumed as a single minibatch."""
    base = dict(n_steps=128, minibatch_size=128)
    base.update(overrides)
    return PpoHyperparams(**base)


class RecurrentPolicy:
    """obs -> tanh projection -> LSTM -> categorical heads + value."""

    def __init__(self, projection: DenseLayer, lstm: LstmParams, heads,
                 value_head: DenseLayer):
        self.projection = projection
        self.lstm = lstm
        self.heads = heads
        self.value_head = value_head

    @classmethod
    def create(cls, rng: np.random.Generator, obs_size: int = OBS_SIZE,
               hidden: int = 64) -> "RecurrentPolicy":
        projection = init_dense(rng, hidden, obs_size, "tanh")
        lstm = init_lstm(rng, hidden, hidden)
        heads = [init_dense(rng, n, hidden, "identity") for n in HEAD_SIZES]
        value_head = init_dense(rng, 1, hidden, "identity")
        return cls(projection, lstm, heads, value_head)

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    def param_arrays(self):
        out = [self.projection.weights, self.projection.bias,
               self.lstm.wx, self.lstm.wh, self.lstm.bias]
        for head in self.heads:
            out.extend((head.weights, head.bias))
        out.extend((self.value_head.weights, self.value_head.bias))
        return out

    def step_features(self, obs, h, c):
        """Advance the recurrence one step; returns (h2, c2, caches)."""
        x, proj_post = dense_forward(self.projection, obs)
        h2, c2, lstm_cache = lstm_step(self.lstm, x, h, c)
        return h2, c2, (obs, proj_post, lstm_cache)

    def act(self, obs, h, c, rng):
        """Sample an action; returns (indices, joint log-prob, value, h2, c2)."""
        h2, c2, _ = self.step_features(obs, h, c)
        indices = np.empty(N_HEADS, dtype=np.int64)
        joint_logp = 0.0
        for k, head in enumerate(self.heads):
            logits = K.affine(h2, head.weights, head.bias)
            indices[k], logp = categorical_sample(logits, rng)
            joint_logp += logp
        value = float(K.affine(h2, self.value_head.weights,
                               self.value_head.bias)[0])
        return indices, joint_logp, value, h2, c2

    def act_deterministic(self, obs, h, c):
        h2, c2, _ = self.step_features(obs, h, c)
        indices = np.array(
            [categorical_argmax(K.affine(h2, hd.weights, hd.bias))
             for hd in self.heads], dtype=np.int64)
        return indices, h2, c2

    def value_of(self, obs, h, c) -> float:
        h2, _, _ = self.step_features(obs, h, c)
        return float(K.affine(h2, self.value_head.weights,
                              self.value_head.bias)[0])

    def replay(self, observations, episode_starts, h0, c0):
        """Run the stored window through the recurrence with episode resets.

        Returns (features (n, hidden), caches) where features[t] is the
        hidden output that fed the heads at step t.
        """
        n = observations.shape[0]
        feats = np.empty((n, self.hidden_size))
        caches = []
        h, c = h0, c0
        for t in range(n):
            if episode_starts[t]:
                h, c = zero_state(self.hidden_size)
            h, c, cache = self.step_features(observations[t], h, c)
            feats[t] = h
            caches.append(cache)
        return feats, caches

    # -- checkpoint support --------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "projection": (self.projection.weights, self.projection.bias,
                           self.projection.activation),
            "lstm": (self.lstm.wx, self.lstm.wh, self.lstm.bias),
            "heads": [(l.weights, l.bias, l.activation) for l in self.heads],
            "value": (self.value_head.weights, self.value_head.bias,
                      self.value_head.activation),
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "RecurrentPolicy":
        arr = lambda a: np.asarray(a, dtype=np.float64)
        mk = lambda t: DenseLayer(arr(t[0]), arr(t[1]), t[2])
        wx, wh, b = state["lstm"]
        return cls(mk(state["projection"]), LstmParams(arr(wx), arr(wh), arr(b)),
                   [mk(t) for t in state["heads"]], mk(state["value"]))


@dataclass
class RecurrentRolloutBuffer(RolloutBuffer):
    """Adds the hidden state at every step start (episode resets applied)."""

    h_states: Optional[np.ndarray] = None  # (n, hidden)
    c_states: Optional[np.ndarray] = None  # (n, hidden)


def collect_recurrent_rollout(policy: RecurrentPolicy, agent_state: dict,
                              runner: EnvRunner, n_steps: int,
                              rng: np.random.Generator) -> RecurrentRolloutBuffer:
    """Like the feedforward collector, but tracks and stores (h, c).

    ``agent_state`` carries the persistent hidden state between rollouts
    under keys "h" and "c"; it is mutated in place.
    """
    if runner.obs is None:
        runner.start()
    hidden = policy.hidden_size
    obs_buf = np.empty((n_steps, runner.obs.shape[0]))
    act_buf = np.empty((n_steps, N_HEADS), dtype=np.int64)
    logp_buf = np.empty(n_steps)
    rew_buf = np.empty(n_steps)
    val_buf = np.empty(n_steps)
    done_buf = np.empty(n_steps, dtype=bool)
    start_buf = np.empty(n_steps, dtype=bool)
    h_buf = np.empty((n_steps, hidden))
    c_buf = np.empty((n_steps, hidden))
    for t in range(n_steps):
        if runner.next_episode_start:
            agent_state["h"], agent_state["c"] = zero_state(hidden)
        obs = runner.obs
        h, c = agent_state["h"], agent_state["c"]
        indices, logp, value, h2, c2 = policy.act(obs, h, c, rng)
        result, was_start = runner.step(indices)
        obs_buf[t] = obs
        act_buf[t] = indices
        logp_buf[t] = logp
        rew_buf[t] = result.reward
        val_buf[t] = value
        done_buf[t] = result.done
        start_buf[t] = was_start
        h_buf[t] = h
        c_buf[t] = c
        agent_state["h"], agent_state["c"] = h2, c2
    if done_buf[-1]:
        bootstrap = 0.0
    else:
        bootstrap = policy.value_of(runner.obs, agent_state["h"],
                                    agent_state["c"])
    return RecurrentRolloutBuffer(obs_buf, act_buf, logp_buf, rew_buf, val_buf,
                                  done_buf, start_buf, bootstrap,
                                  h_states=h_buf, c_states=c_buf)


def replay_log_probs(policy: RecurrentPolicy, buffer: RecurrentRolloutBuffer):
    """Joint log-probabilities of the stored actions under the current
    parameters, replaying the stored window (hidden-state bookkeeping
    check: with unchanged parameters this reproduces buffer.log_probs)."""
    feats, _ = policy.replay(buffer.observations, buffer.episode_starts,
                             buffer.h_states[0], buffer.c_states[0])
    logp = np.zeros(len(buffer))
    for k, head in enumerate(policy.heads):
        logits = K.affine(feats, head.weights, head.bias)
        sel, _, _, _ = batch_logp_entropy(logits, buffer.actions[:, k])
        logp += sel
    return logp


def rppo_loss_and_grads(policy: RecurrentPolicy, buffer: RecurrentRolloutBuffer,
                        advantages, hp: PpoHyperparams):
    """Full-window loss with BPTT gradients, aligned to param_arrays()."""
    feats, caches = policy.replay(buffer.observations, buffer.episode_starts,
                                  buffer.h_states[0], buffer.c_states[0])
    stats, gfeat, head_grads, value_grad = heads_value_loss(
        policy.heads, policy.value_head, feats, buffer.actions,
        buffer.log_probs, advantages, buffer.returns, hp)

    lstm_caches = [c[2] for c in caches]
    dwx, dwh, dbias, dxs = lstm_bptt(policy.lstm, lstm_caches, gfeat,
                                     buffer.episode_starts)
    gproj_w = np.zeros_like(policy.projection.weights)
    gproj_b = np.zeros_like(policy.projection.bias)
    for t, (obs, proj_post, _) in enumerate(caches):
        _, gw, gb = dense_backward(policy.projection, obs, proj_post, dxs[t])
        gproj_w += gw
        gproj_b += gb

    grads = [gproj_w, gproj_b, dwx, dwh, dbias]
    for gw, gb in head_grads:
        grads.extend((gw, gb))
    grads.extend(value_grad)
    return stats, grads


def rppo_update(policy: RecurrentPolicy, buffer: RecurrentRolloutBuffer,
                hp: PpoHyperparams, adam_state: AdamState,
                rng: np.random.Generator) -> dict:
    """Epochs of single full-window minibatches with BPTT."""
    if buffer.advantages is None:
        compute_gae(buffer, hp.gamma, hp.gae_lambda)
    params = policy.param_arrays()
    agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
           "clip_fraction": 0.0}
    for _ in range(hp.epochs):
        adv = buffer.advantages
        if hp.normalize_advantage:
            adv = normalize_advantages(adv)
        stats, grads = rppo_loss_and_grads(policy, buffer, adv, hp)
        if not np.isfinite(stats["total_loss"]):
            raise TrainingError("non-finite RPPO loss", diagnostics=stats)
        global_grad_clip(grads, hp.max_grad_norm)
        adam_update(params, grads, adam_state)
        for key in agg:
            agg[key] += stats[key]
    return {key: value / hp.epochs for key, value in agg.items()}


class RppoAgent:
    """Recurrent twin of PpoAgent; owns the persistent hidden state."""

    algo = "rppo"

    def __init__(self, policy: RecurrentPolicy, hp: PpoHyperparams,
                 adam_state: AdamState):
        self.policy = policy
        self.hp = hp
        self.adam = adam_state
        h, c = zero_state(policy.hidden_size)
        self.hidden = {"h": h, "c": c}

    @classmethod
    def create(cls, hp: PpoHyperparams, run_seed: int) -> "RppoAgent":
        rng = seeded_rng(run_seed, NS_INIT)
        policy = RecurrentPolicy.create(rng, hidden=hp.lstm_hidden)
        adam_state = AdamState.for_params(policy.param_arrays(), hp.learning_rate)
        return cls(policy, hp, adam_state)

    def begin_episode(self):
        h, c = zero_state(self.policy.hidden_size)
        self.hidden["h"], self.hidden["c"] = h, c

    def collect(self, runner: EnvRunner, rng) -> RecurrentRolloutBuffer:
        return collect_recurrent_rollout(self.policy, self.hidden, runner,
                                         self.hp.n_steps, rng)

    def update(self, buffer: RecurrentRolloutBuffer, rng) -> dict:
        return rppo_update(self.policy, buffer, self.hp, self.adam, rng)

    def act_for_eval(self, obs, rng=None, deterministic=True):
        if deterministic:
            indices, h2, c2 = self.policy.act_deterministic(
                obs, self.hidden["h"], self.hidden["c"])
        else:
            indices, _, _, h2, c2 = self.policy.act(
                obs, self.hidden["h"], self.hidden["c"], rng)
        self.hidden["h"], self.hidden["c"] = h2, c2
        return indices

    # -- checkpoint support --------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "policy": self.policy.state_dict(),
            "adam": {"t": self.adam.t, "m": self.adam.m, "v": self.adam.v},
            "hidden": {"h": self.hidden["h"], "c": self.hidden["c"]},
        }

    def load_state_dict(self, state: dict):
        self.policy = RecurrentPolicy.from_state_dict(state["policy"])
        self.adam = AdamState.for_params(self.policy.param_arrays(),
                                         self.hp.learning_rate)
        self.adam.t = int(state["adam"]["t"])
        self.adam.m = [np.asarray(a, dtype=np.float64) for a in state["adam"]["m"]]
        self.adam.v = [np.asarray(a, dtype=np.float64) for a in state["adam"]["v"]]
        self.hidden = {"h": np.asarray(state["hidden"]["h"], dtype=np.float64),
                       "c": np.asarray(state["hidden"]["c"], dtype=np.float64)}


def train(task_name: str, hp: PpoHyperparams, total_steps: int, run_seed: int,
          trace=None, after_update=None):
    """Train RPPO on one task; mirrors ppo.train."""
    agent = RppoAgent.create(hp, run_seed)
    window = RewardWindow(hp.stats_window_size)
    runner = EnvRunner(make_env(task_name), window,
                       StaticDirector(task_name, run_seed), trace=trace)
    rngs = RunRngs.for_seed(run_seed)
    rows = run_training(agent, runner, rngs, total_steps, after_update)
    return rows, agent, runner, rngs
