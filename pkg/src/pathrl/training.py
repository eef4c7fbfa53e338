"""Training loops: path-consistency learning (separate and unified models),
the on-policy advantage-actor-critic baseline, and tabular one-step backups.

One iteration of the consistency trainers rolls out a batch of on-policy
episodes, applies their accumulated update, inserts them into the replay
buffer, then applies a second update from an equal-size batch sampled from
the buffer.  Everything is driven by a single seeded generator, so runs with
equal seeds produce bit-identical metric streams.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .episodes import Episode
from .losses import (LossConfig, a2c_gradient_weights, entropy_bonus_weights,
                     pcl_gradient_weights)
from .mdp import TabularMDP
from .optim import apply_update, make_optimizer
from .replay import ReplayBuffer
from .softmax_ops import softmax_value

__all__ = [
    "Hyperparams",
    "RunMetrics",
    "sample_action",
    "run_episode",
    "run_episode_batch",
    "train_pcl",
    "train_unified_pcl",
    "train_a2c",
    "train_tabular_q",
    "evaluate",
]


@dataclass
class Hyperparams:
    tau: float = 0.1
    gamma: float = 1.0
    rollout_d: int = 3
    batch_size: int = 10
    lr_pi: float = 0.05
    critic_weight: float = 0.5
    buffer_capacity: int = 10000
    replay_alpha: float = 1.0
    optimizer: str = "sgd"
    iterations: int = 1000
    eval_period: int = 1
    seed: int = 0
    replay_ratio: float = 1.0
    include_tail_windows: bool = True
    clip_norm: float | None = None

    def __post_init__(self):
        if self.rollout_d < 1 or self.batch_size < 1 or self.iterations < 0:
            raise ValueError("rollout, batch size and iterations must be positive")
        if self.lr_pi < 0 or self.critic_weight < 0:
            raise ValueError("learning rates must be non-negative")
        if self.eval_period < 1:
            raise ValueError("eval_period must be at least 1")

    @property
    def lr_v(self) -> float:
        return self.critic_weight * self.lr_pi

    def loss_config(self) -> LossConfig:
        return LossConfig(tau=self.tau, gamma=self.gamma,
                          rollout_d=self.rollout_d,
                          include_tail_windows=self.include_tail_windows)


@dataclass
class RunMetrics:
    iteration: int
    env_steps: int
    avg_reward: float
    loss: float
    buffer_size: int


def sample_action(rng, log_probs) -> int:
    """Draw an action index from log-probabilities via inverse CDF."""
    cdf = np.cumsum(np.exp(log_probs))
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def run_episode(env, model, rng, seed) -> Episode:
    obs = env.reset(int(seed))
    state = model.initial_state()
    observations, actions, rewards = [obs], [], []
    done = False
    while not done:
        state, log_probs = model.policy_step(state, obs)
        action = sample_action(rng, log_probs)
        obs, reward, done = env.step(action)
        observations.append(obs)
        actions.append(action)
        rewards.append(reward)
    return Episode(observations, actions, rewards, terminated=env.terminated)


def run_episode_batch(envs, model, rng, seeds):
    """Roll out several environments in lockstep (one batched policy pass
    per time step).  Action sampling consumes the generator in a fixed env
    order, so the result is deterministic for a given seed."""
    n = len(envs)
    data = []
    for env, seed in zip(envs, seeds):
        obs = env.reset(int(seed))
        data.append({"env": env, "obs": obs, "observations": [obs],
                     "actions": [], "rewards": [],
                     "state": model.initial_state()})
    active = list(range(n))
    while active:
        states = [data[i]["state"] for i in active]
        obs_arr = np.array([data[i]["obs"] for i in active])
        states, log_probs = model.policy_step_batch(states, obs_arr)
        still = []
        for row, i in enumerate(active):
            d = data[i]
            d["state"] = states[row]
            action = sample_action(rng, log_probs[row])
            obs, reward, done = d["env"].step(action)
            d["obs"] = obs
            d["observations"].append(obs)
            d["actions"].append(action)
            d["rewards"].append(reward)
            if not done:
                still.append(i)
        active = still
    return [Episode(d["observations"], d["actions"], d["rewards"],
                    terminated=d["env"].terminated) for d in data]


def _collect(env_factory, model, rng, batch_size):
    envs = [env_factory(rng) for _ in range(batch_size)]
    seeds = [int(rng.integers(0, 2 ** 62)) for _ in range(batch_size)]
    return run_episode_batch(envs, model, rng, seeds), envs


def _consistency_update(episodes, model, cfg, critic_weight, unified,
                        optimizer, hp):
    runs = model.run_batch([ep.observations for ep in episodes])
    acc = model.new_accumulator()
    dlogps, dvals = [], []
    objective = 0.0
    for ep, run in zip(episodes, runs):
        weight = critic_weight if unified else 1.0
        dlogp, dvalues, stats = pcl_gradient_weights(ep, run, cfg,
                                                     critic_weight=weight)
        dlogps.append(dlogp)
        dvals.append(dvalues)
        objective += stats.objective
    model.accumulate_batch(runs, dlogps, dvals, acc)
    apply_update(model, acc, optimizer, hp.lr_pi, hp.lr_v,
                 clip_norm=hp.clip_norm)
    return objective


def train_pcl(env_factory, model, hp: Hyperparams, *, unified=False,
              expert_episodes=None, curriculum=None, stop_condition=None):
    """Consistency training over on-policy and replayed episodes.

    ``env_factory(rng)`` must return a fresh environment (the generator lets
    curriculum-driven factories sample an input length).  Returns the list of
    emitted :class:`RunMetrics` rows.
    """
    rng = np.random.default_rng(hp.seed)
    cfg = hp.loss_config()
    optimizer = make_optimizer(hp.optimizer)
    buffer = ReplayBuffer(hp.buffer_capacity, hp.replay_alpha,
                          seed=int(rng.integers(0, 2 ** 62)))
    if expert_episodes:
        buffer.seed_experts(expert_episodes)
    reward_window = deque(maxlen=100)
    env_steps = 0
    metrics = []
    for iteration in range(1, hp.iterations + 1):
        episodes, envs = _collect(env_factory, model, rng, hp.batch_size)
        objective = _consistency_update(episodes, model, cfg,
                                        hp.critic_weight, unified,
                                        optimizer, hp)
        for ep, env in zip(episodes, envs):
            buffer.insert(ep)
            reward_window.append(ep.total_reward)
            env_steps += len(ep)
            if curriculum is not None:
                curriculum.record(ep.total_reward, env.max_episode_reward)
        replay_k = max(1, round(hp.batch_size * hp.replay_ratio))
        replayed = buffer.sample_batch(replay_k, rng)
        _consistency_update(replayed, model, cfg, hp.critic_weight, unified,
                            optimizer, hp)
        if curriculum is not None:
            curriculum.update()
        if iteration % hp.eval_period == 0 or iteration == hp.iterations:
            row = RunMetrics(iteration=iteration, env_steps=env_steps,
                             avg_reward=float(np.mean(reward_window)),
                             loss=objective, buffer_size=len(buffer))
            metrics.append(row)
            if stop_condition is not None and stop_condition(row):
                break
    return metrics


def train_unified_pcl(env_factory, model, hp, **kwargs):
    return train_pcl(env_factory, model, hp, unified=True, **kwargs)


def train_a2c(env_factory, model, hp: Hyperparams, *, curriculum=None,
              stop_condition=None):
    """On-policy advantage-actor-critic baseline with an entropy bonus of
    coefficient ``hp.tau`` on the policy; no replay buffer."""
    rng = np.random.default_rng(hp.seed)
    cfg = hp.loss_config()
    optimizer = make_optimizer(hp.optimizer)
    reward_window = deque(maxlen=100)
    env_steps = 0
    metrics = []
    for iteration in range(1, hp.iterations + 1):
        episodes, envs = _collect(env_factory, model, rng, hp.batch_size)
        runs = model.run_batch([ep.observations for ep in episodes])
        acc = model.new_accumulator()
        dlogps, dvals = [], []
        objective = 0.0
        for ep, run in zip(episodes, runs):
            dlogp, dvalues, stats = a2c_gradient_weights(ep, run, cfg)
            if hp.tau:
                dlogp = dlogp + entropy_bonus_weights(run, hp.tau)
            dlogps.append(dlogp)
            dvals.append(dvalues)
            objective += stats.objective
        model.accumulate_batch(runs, dlogps, dvals, acc)
        apply_update(model, acc, optimizer, hp.lr_pi, hp.lr_v,
                     clip_norm=hp.clip_norm)
        for ep, env in zip(episodes, envs):
            reward_window.append(ep.total_reward)
            env_steps += len(ep)
            if curriculum is not None:
                curriculum.record(ep.total_reward, env.max_episode_reward)
        if curriculum is not None:
            curriculum.update()
        if iteration % hp.eval_period == 0 or iteration == hp.iterations:
            row = RunMetrics(iteration=iteration, env_steps=env_steps,
                             avg_reward=float(np.mean(reward_window)),
                             loss=objective, buffer_size=0)
            metrics.append(row)
            if stop_condition is not None and stop_condition(row):
                break
    return metrics


def train_tabular_q(mdp: TabularMDP, hp: Hyperparams, soft=True,
                    lr_decay=0.05) -> np.ndarray:
    """Asynchronous one-step backups along sampled transitions.

    Uniformly samples a (state, action) pair, draws a successor from the
    kernel, and moves ``Q[s, a]`` toward ``r + gamma * backup(Q[s', :])``
    with a per-pair learning rate ``lr_pi / (1 + lr_decay * visits)``.
    ``soft=True`` uses the log-sum-exp backup at temperature ``hp.tau``,
    otherwise the hard max.  Terminal successors contribute zero.
    """
    rng = np.random.default_rng(hp.seed)
    S, A = mdp.n_states, mdp.n_actions
    Q = np.zeros((S, A))
    visits = np.zeros((S, A), dtype=np.int64)
    nonterminal = np.flatnonzero(mdp.nonterminal)
    if len(nonterminal) == 0:
        return Q
    for _ in range(hp.iterations):
        s = int(nonterminal[rng.integers(0, len(nonterminal))])
        a = int(rng.integers(0, A))
        s2 = int(rng.choice(S, p=mdp.transition[s, a]))
        if mdp.terminal[s2]:
            bootstrap = 0.0
        elif soft:
            bootstrap = softmax_value(Q[s2], hp.tau)
        else:
            bootstrap = float(np.max(Q[s2]))
        target = mdp.reward[s, a] + mdp.gamma * bootstrap
        lr = hp.lr_pi / (1.0 + lr_decay * visits[s, a])
        Q[s, a] += lr * (target - Q[s, a])
        visits[s, a] += 1
    return Q


def evaluate(model, env_factory, episodes, seed, batch_size=32):
    """Mean undiscounted episode reward with actions sampled from the
    policy, matching training-time behavior."""
    rng = np.random.default_rng(seed)
    totals = []
    remaining = int(episodes)
    while remaining > 0:
        k = min(batch_size, remaining)
        eps, _ = _collect(env_factory, model, rng, k)
        totals.extend(ep.total_reward for ep in eps)
        remaining -= k
    return float(np.mean(totals))
