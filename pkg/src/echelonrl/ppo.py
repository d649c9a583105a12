"""Proximal policy optimization with multi-discrete heads, built on the
dense NN core.

One network emits all four action components (three order quantities and
the retailer reorder point) from a shared tanh trunk, plus a scalar value
estimate. The joint log-probability of an action is the sum over heads,
i.e. the heads factorize independently. Updates run the clipped surrogate
objective over shuffled minibatches for a fixed number of epochs, with
per-minibatch advantage normalization, a value MSE term, an entropy bonus
and global gradient-norm clipping, all under bias-corrected Adam.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels as K
from .env import OBS_SIZE
from .errors import ConfigError, TrainingError
from .nn.adam import AdamState, adam_update
from .nn.categorical import (batch_logp_entropy, categorical_argmax,
                             categorical_sample, grad_entropy,
                             grad_selected_logp)
from .nn.layers import (DenseLayer, init_dense, mlp_backward, mlp_forward)
from .training import (EnvRunner, RunRngs, RewardWindow, StaticDirector,
                       make_env, run_training, seeded_rng, NS_INIT)

# Head sizes = cardinalities of (Q0, Q1, Q2, R0); indices map directly to
# order quantities / reorder points.
HEAD_SIZES = (11, 31, 31, 11)
N_HEADS = 4


@dataclass(frozen=True)
class PpoHyperparams:
    n_steps: int = 2048
    epochs: int = 10
    minibatch_size: int = 64
    learning_rate: float = 0.003
    clip_range: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    vf_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    normalize_advantage: bool = True
    stats_window_size: int = 100
    hidden_sizes: tuple = (64, 64)
    lstm_hidden: int = 64  # recurrent variant only

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_range <= 0.0:
            raise ConfigError("clip_range must be positive")
        if self.minibatch_size > self.n_steps:
            raise ConfigError("minibatch_size cannot exceed n_steps")

    def replace(self, **kw) -> "PpoHyperparams":
        from dataclasses import replace
        return replace(self, **kw)


class PpoPolicy:
    """Shared tanh trunk, four categorical action heads, scalar value head."""

    def __init__(self, trunk, heads, value_head):
        self.trunk = trunk
        self.heads = heads
        self.value_head = value_head

    @classmethod
    def create(cls, rng: np.random.Generator, obs_size: int = OBS_SIZE,
               hidden_sizes=(64, 64)) -> "PpoPolicy":
        trunk = []
        n_in = obs_size
        for width in hidden_sizes:
            trunk.append(init_dense(rng, width, n_in, "tanh"))
            n_in = width
        heads = [init_dense(rng, n, n_in, "identity") for n in HEAD_SIZES]
        value_head = init_dense(rng, 1, n_in, "identity")
        return cls(trunk, heads, value_head)

    def layers(self):
        return [*self.trunk, *self.heads, self.value_head]

    def param_arrays(self):
        out = []
        for layer in self.layers():
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def features(self, obs):
        return mlp_forward(self.trunk, obs)

    def head_logits(self, feat):
        return [K.affine(feat, h.weights, h.bias) for h in self.heads]

    def value(self, feat):
        return K.affine(feat, self.value_head.weights, self.value_head.bias)

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample one action; returns (indices (4,), joint log-prob, value)."""
        feat, _ = self.features(obs)
        indices = np.empty(N_HEADS, dtype=np.int64)
        joint_logp = 0.0
        for k, logits in enumerate(self.head_logits(feat)):
            indices[k], logp = categorical_sample(logits, rng)
            joint_logp += logp
        return indices, joint_logp, float(self.value(feat)[0])

    def act_deterministic(self, obs: np.ndarray):
        feat, _ = self.features(obs)
        return np.array([categorical_argmax(l) for l in self.head_logits(feat)],
                        dtype=np.int64)

    def value_of(self, obs: np.ndarray) -> float:
        feat, _ = self.features(obs)
        return float(self.value(feat)[0])

    # -- checkpoint support --------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "trunk": [(l.weights, l.bias, l.activation) for l in self.trunk],
            "heads": [(l.weights, l.bias, l.activation) for l in self.heads],
            "value": (self.value_head.weights, self.value_head.bias,
                      self.value_head.activation),
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "PpoPolicy":
        mk = lambda t: DenseLayer(np.asarray(t[0], dtype=np.float64),
                                  np.asarray(t[1], dtype=np.float64), t[2])
        return cls([mk(t) for t in state["trunk"]],
                   [mk(t) for t in state["heads"]],
                   mk(state["value"]))


@dataclass
class RolloutBuffer:
    """Fixed-horizon trajectory storage plus GAE results."""

    observations: np.ndarray      # (n, obs)
    actions: np.ndarray           # (n, 4) int64
    log_probs: np.ndarray         # (n,)
    rewards: np.ndarray           # (n,)
    values: np.ndarray            # (n,)
    dones: np.ndarray             # (n,) bool
    episode_starts: np.ndarray    # (n,) bool
    bootstrap_value: float
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self):
        return self.observations.shape[0]


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float):
    """Generalized advantage estimation over the buffer, in place.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    R_t     = A_t + V(s_t)
    """
    n = len(buffer)
    adv = np.zeros(n)
    last_adv = 0.0
    next_value = buffer.bootstrap_value
    for t in range(n - 1, -1, -1):
        not_done = 0.0 if buffer.dones[t] else 1.0
        delta = (buffer.rewards[t] + gamma * next_value * not_done
                 - buffer.values[t])
        last_adv = delta + gamma * lam * not_done * last_adv
        adv[t] = last_adv
        next_value = buffer.values[t]
    buffer.advantages = adv
    buffer.returns = adv + buffer.values
    return buffer.advantages, buffer.returns


def clipped_surrogate(ratio: float, advantage: float, epsilon: float) -> float:
    """PPO objective contribution for one sample:
    min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)."""
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage, clipped * advantage)


def collect_rollout(policy: PpoPolicy, runner: EnvRunner, n_steps: int,
                    rng: np.random.Generator) -> RolloutBuffer:
    """Gather exactly n_steps transitions, auto-resetting episodes; records
    the bootstrap value of the final (possibly mid-episode) state."""
    if runner.obs is None:
        runner.start()
    obs_buf = np.empty((n_steps, runner.obs.shape[0]))
    act_buf = np.empty((n_steps, N_HEADS), dtype=np.int64)
    logp_buf = np.empty(n_steps)
    rew_buf = np.empty(n_steps)
    val_buf = np.empty(n_steps)
    done_buf = np.empty(n_steps, dtype=bool)
    start_buf = np.empty(n_steps, dtype=bool)
    for t in range(n_steps):
        obs = runner.obs
        indices, logp, value = policy.act(obs, rng)
        result, was_start = runner.step(indices)
        obs_buf[t] = obs
        act_buf[t] = indices
        logp_buf[t] = logp
        rew_buf[t] = result.reward
        val_buf[t] = value
        done_buf[t] = result.done
        start_buf[t] = was_start
    bootstrap = 0.0 if done_buf[-1] else policy.value_of(runner.obs)
    return RolloutBuffer(obs_buf, act_buf, logp_buf, rew_buf, val_buf,
                         done_buf, start_buf, bootstrap)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if adv.shape[0] <= 1:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def heads_value_loss(heads, value_head, feat, actions, old_logp, advantages,
                     returns, hp: PpoHyperparams):
    """Clipped surrogate + value MSE + entropy terms above a feature batch.

    Shared by the feedforward and recurrent learners: everything from the
    features upward is identical, the caller only differs in how ``feat``
    was produced and how ``gfeat`` is propagated further down.

    Returns (stats, gfeat, head_grads, value_grad).
    """
    batch = feat.shape[0]
    new_logp = np.zeros(batch)
    entropies = np.zeros(batch)
    per_head = []
    for k in range(N_HEADS):
        logits = K.affine(feat, heads[k].weights, heads[k].bias)
        sel, ent, p, logp = batch_logp_entropy(logits, actions[:, k])
        new_logp += sel
        entropies += ent
        per_head.append((p, logp))

    ratio = np.exp(new_logp - old_logp)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - hp.clip_range, 1.0 + hp.clip_range) * advantages
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -surrogate.mean()

    values = K.affine(feat, value_head.weights, value_head.bias)[:, 0]
    value_err = values - returns
    value_loss = float(np.mean(value_err ** 2))

    entropy_mean = float(entropies.mean())
    total = float(policy_loss + hp.vf_coef * value_loss
                  - hp.entropy_coef * entropy_mean)

    # d total / d new_logp: the ratio path is active when the unclipped
    # branch attains the min (ties included; inside the band both branches
    # coincide, so the choice is immaterial there).
    active = unclipped <= clipped
    dlogp = np.where(active, -ratio * advantages / batch, 0.0)

    gfeat = np.zeros_like(feat)
    head_grads = []
    ent_coeff = np.full(batch, -hp.entropy_coef / batch)
    for k in range(N_HEADS):
        p, logp = per_head[k]
        glogits = grad_selected_logp(p, actions[:, k], dlogp)
        if hp.entropy_coef != 0.0:
            glogits += grad_entropy(p, logp, ent_coeff)
        gx, gw, gb = K.affine_backward(feat, heads[k].weights, glogits)
        gfeat += gx
        head_grads.append((gw, gb))

    gvalues = (hp.vf_coef * 2.0 / batch) * value_err
    gx, gw_val, gb_val = K.affine_backward(
        feat, value_head.weights, gvalues[:, None])
    gfeat += gx

    stats = {
        "total_loss": total,
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy_mean,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > hp.clip_range)),
    }
    return stats, gfeat, head_grads, (gw_val, gb_val)


def ppo_loss_and_grads(policy: PpoPolicy, obs, actions, old_logp, advantages,
                       returns, hp: PpoHyperparams):
    """Total clipped loss and its exact gradients for one minibatch.

    Returns (stats, grads) with grads aligned to policy.param_arrays().
    """
    feat, trunk_cache = policy.features(obs)
    stats, gfeat, head_grads, value_grad = heads_value_loss(
        policy.heads, policy.value_head, feat, actions, old_logp,
        advantages, returns, hp)
    trunk_grads, _ = mlp_backward(policy.trunk, trunk_cache, gfeat)

    grads = []
    for gw, gb in trunk_grads:
        grads.extend((gw, gb))
    for gw, gb in head_grads:
        grads.extend((gw, gb))
    grads.extend(value_grad)
    return stats, grads


def global_grad_clip(grads, max_norm: float) -> float:
    """Rescale grads in place so the global L2 norm is at most max_norm;
    returns the pre-clip norm."""
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def evaluate_ratios(policy: PpoPolicy, buffer: RolloutBuffer) -> np.ndarray:
    """exp(log pi_theta(a|s) - stored log-prob) for every transition; equals
    1 everywhere when the parameters have not moved since collection."""
    feat, _ = policy.features(buffer.observations)
    new_logp = np.zeros(len(buffer))
    for k, head in enumerate(policy.heads):
        logits = K.affine(feat, head.weights, head.bias)
        sel, _, _, _ = batch_logp_entropy(logits, buffer.actions[:, k])
        new_logp += sel
    return np.exp(new_logp - buffer.log_probs)


def ppo_update(policy: PpoPolicy, buffer: RolloutBuffer, hp: PpoHyperparams,
               adam_state: AdamState, rng: np.random.Generator) -> dict:
    """Epoch/minibatch clipped-objective update; returns mean loss stats."""
    if buffer.advantages is None:
        compute_gae(buffer, hp.gamma, hp.gae_lambda)
    n = len(buffer)
    params = policy.param_arrays()
    agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
           "clip_fraction": 0.0}
    batches = 0
    for _ in range(hp.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, hp.minibatch_size):
            idx = perm[start:start + hp.minibatch_size]
            adv = buffer.advantages[idx]
            if hp.normalize_advantage:
                adv = normalize_advantages(adv)
            stats, grads = ppo_loss_and_grads(
                policy, buffer.observations[idx], buffer.actions[idx],
                buffer.log_probs[idx], adv, buffer.returns[idx], hp)
            if not np.isfinite(stats["total_loss"]):
                raise TrainingError("non-finite PPO loss", diagnostics=stats)
            global_grad_clip(grads, hp.max_grad_norm)
            adam_update(params, grads, adam_state)
            for key in agg:
                agg[key] += stats[key]
            batches += 1
    return {key: value / batches for key, value in agg.items()}


class PpoAgent:
    """Bundles policy + optimizer + hyperparameters behind the common
    collect/update interface used by the training driver."""

    algo = "ppo"

    def __init__(self, policy: PpoPolicy, hp: PpoHyperparams,
                 adam_state: AdamState):
        self.policy = policy
        self.hp = hp
        self.adam = adam_state

    @classmethod
    def create(cls, hp: PpoHyperparams, run_seed: int) -> "PpoAgent":
        rng = seeded_rng(run_seed, NS_INIT)
        policy = PpoPolicy.create(rng, hidden_sizes=hp.hidden_sizes)
        adam_state = AdamState.for_params(policy.param_arrays(), hp.learning_rate)
        return cls(policy, hp, adam_state)

    def begin_episode(self):
        pass

    def collect(self, runner: EnvRunner, rng) -> RolloutBuffer:
        return collect_rollout(self.policy, runner, self.hp.n_steps, rng)

    def update(self, buffer: RolloutBuffer, rng) -> dict:
        return ppo_update(self.policy, buffer, self.hp, self.adam, rng)

    def act_for_eval(self, obs, rng=None, deterministic=True):
        if deterministic:
            return self.policy.act_deterministic(obs)
        indices, _, _ = self.policy.act(obs, rng)
        return indices

    # -- checkpoint support --------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "policy": self.policy.state_dict(),
            "adam": {
                "t": self.adam.t,
                "m": self.adam.m,
                "v": self.adam.v,
            },
        }

    def load_state_dict(self, state: dict):
        self.policy = PpoPolicy.from_state_dict(state["policy"])
        self.adam = AdamState.for_params(self.policy.param_arrays(),
                                         self.hp.learning_rate)
        self.adam.t = int(state["adam"]["t"])
        self.adam.m = [np.asarray(a, dtype=np.float64) for a in state["adam"]["m"]]
        self.adam.v = [np.asarray(a, dtype=np.float64) for a in state["adam"]["v"]]


def train(task_name: str, hp: PpoHyperparams, total_steps: int, run_seed: int,
          trace=None, after_update=None):
    """Train PPO on one task for at least ``total_steps`` env steps.

    Returns (rows, agent, runner, rngs): one log row per rollout plus the
    final learner, environment and generator state.
    """
    agent = PpoAgent.create(hp, run_seed)
    window = RewardWindow(hp.stats_window_size)
    runner = EnvRunner(make_env(task_name), window,
                       StaticDirector(task_name, run_seed), trace=trace)
    rngs = RunRngs.for_seed(run_seed)
    rows = run_training(agent, runner, rngs, total_steps, after_update)
    return rows, agent, runner, rngs
