"""Soft path-consistency error, its squared objective, and the update rules.

For a window starting at step ``i`` with effective length ``L`` the signed
consistency error is

    C = -V(s_i) + gamma^L V(s_{i+L})
        + sum_{j<L} gamma^j (r_{i+j} - tau * log pi(a_{i+j} | s_{i+j})),

with the value at a true terminal state pinned to zero.  At ``tau = 0`` the
log-policy term is skipped entirely, so the expression coincides bitwise
with the advantage estimate used by the actor-critic baseline.

Window enumeration covers every full length-``d`` window and, by default,
the truncated tail windows as well, so each action of an episode is covered
by at least one window; strict mode (``include_tail_windows=False``) keeps
only the full windows.

The update rules return *ascent* directions: applying them with ``p += lr *
delta`` descends the squared objective.  For the policy parameters the
ascent direction equals ``-(1/tau)`` times the objective gradient (the
temperature factor is conventionally absorbed into the policy learning
rate); for the value parameters it is exactly the negated gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episodes import Episode
from .models import GradAccumulator, Model

__all__ = [
    "LossConfig",
    "WindowView",
    "window_spans",
    "episode_windows",
    "soft_consistency",
    "a2c_advantage",
    "pcl_objective",
    "pcl_gradient_weights",
    "pcl_gradients",
    "unified_pcl_gradients",
    "a2c_gradient_weights",
    "a2c_gradients",
    "entropy_bonus_weights",
    "PclStats",
]


@dataclass(frozen=True)
class LossConfig:
    tau: float
    gamma: float
    rollout_d: int
    include_tail_windows: bool = True

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.rollout_d < 1:
            raise ValueError("rollout length must be at least 1")


@dataclass(frozen=True)
class WindowView:
    """A sub-trajectory of ``episode`` starting at ``start``; the nominal
    ``length`` truncates at the episode end."""

    episode: Episode
    start: int
    length: int

    def __post_init__(self):
        if not 0 <= self.start < len(self.episode):
            raise ValueError("window start out of range")
        if self.length < 1:
            raise ValueError("window length must be at least 1")

    @property
    def effective_length(self) -> int:
        return min(self.length, len(self.episode) - self.start)


def window_spans(n_steps, rollout_d, include_tail=True):
    """(start, effective_length) pairs covering an episode of ``n_steps``."""
    spans = [(t, rollout_d) for t in range(n_steps - rollout_d + 1)]
    if include_tail:
        first_tail = max(n_steps - rollout_d + 1, 0)
        spans.extend((t, n_steps - t) for t in range(first_tail, n_steps))
    return spans


def episode_windows(episode, cfg) -> list:
    return [WindowView(episode, start, length)
            for start, length in window_spans(len(episode), cfg.rollout_d,
                                              cfg.include_tail_windows)]


def _adjusted_values(episode, run) -> np.ndarray:
    values = np.array(run.values, dtype=np.float64)
    if episode.terminated:
        values[-1] = 0.0
    return values


def _per_step_terms(episode, run, tau) -> np.ndarray:
    """Reward minus tau-weighted log-probability of the taken action."""
    if tau == 0:
        return episode.rewards
    T = len(episode)
    logp = run.log_probs[np.arange(T), episode.actions]
    return episode.rewards - tau * logp


def _window_value(values, z, start, length, gamma) -> float:
    end = start + length
    discounts = gamma ** np.arange(length)
    return float(-values[start] + gamma ** length * values[end]
                 + discounts @ z[start:end])


def soft_consistency(window: WindowView, model: Model, cfg: LossConfig) -> float:
    """Signed consistency error of one window under the current model."""
    episode = window.episode
    run = model.episode_run(episode.observations)
    values = _adjusted_values(episode, run)
    z = _per_step_terms(episode, run, cfg.tau)
    return _window_value(values, z, window.start, window.effective_length,
                         cfg.gamma)


def a2c_advantage(window: WindowView, model: Model, cfg: LossConfig) -> float:
    """Multi-step advantage estimate; the tau = 0 consistency error."""
    episode = window.episode
    run = model.episode_run(episode.observations)
    values = _adjusted_values(episode, run)
    return _window_value(values, episode.rewards, window.start,
                         window.effective_length, cfg.gamma)


def _window_arrays(episode, run, cfg, tau=None):
    """Vectorized consistency errors for every window of an episode."""
    T = len(episode)
    tau = cfg.tau if tau is None else tau
    values = _adjusted_values(episode, run)
    z = _per_step_terms(episode, run, tau)
    G = np.zeros(T + 1)
    for t in reversed(range(T)):
        G[t] = z[t] + cfg.gamma * G[t + 1]
    spans = window_spans(T, cfg.rollout_d, cfg.include_tail_windows)
    if not spans:
        return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                np.zeros(0), values)
    starts = np.array([s for s, _ in spans], dtype=np.int64)
    lengths = np.array([n for _, n in spans], dtype=np.int64)
    ends = starts + lengths
    glen = cfg.gamma ** lengths
    C = -values[starts] + glen * values[ends] + G[starts] - glen * G[ends]
    return starts, lengths, C, values


def pcl_objective(windows, model: Model, cfg: LossConfig) -> float:
    """Half the sum of squared consistency errors over the given windows."""
    windows = list(windows)
    if not windows:
        raise ValueError("need at least one window")
    runs = {}
    total = 0.0
    for w in windows:
        key = id(w.episode)
        if key not in runs:
            run = model.episode_run(w.episode.observations)
            runs[key] = (_adjusted_values(w.episode, run),
                         _per_step_terms(w.episode, run, cfg.tau))
        values, z = runs[key]
        c = _window_value(values, z, w.start, w.effective_length, cfg.gamma)
        total += 0.5 * c * c
    return total


@dataclass
class PclStats:
    objective: float
    consistencies: np.ndarray


def pcl_gradient_weights(episode, run, cfg, critic_weight=1.0):
    """Log-policy and value weights realizing the consistency update.

    Per window with error C: every in-window action log-probability gets
    weight ``C * gamma^j`` and the window's endpoint values get ``+C`` and
    ``-C * gamma^L``.  A pinned terminal value receives no weight.
    """
    T = len(episode)
    starts, lengths, C, _ = _window_arrays(episode, run, cfg)
    dlogp = np.zeros((T + 1, run.log_probs.shape[-1]))
    dvalues = np.zeros(T + 1)
    if len(starts):
        logp_w = np.zeros(T)
        for j in range(int(lengths.max())):
            m = lengths > j
            np.add.at(logp_w, starts[m] + j, C[m] * cfg.gamma ** j)
        dlogp[np.arange(T), episode.actions] = logp_w
        np.add.at(dvalues, starts, C)
        np.add.at(dvalues, starts + lengths, -(cfg.gamma ** lengths) * C)
        dvalues *= critic_weight
        if episode.terminated:
            dvalues[T] = 0.0
    stats = PclStats(objective=float(0.5 * np.dot(C, C)), consistencies=C)
    return dlogp, dvalues, stats


def pcl_gradients(episode, model, cfg, acc=None):
    """Ascent directions for separate policy/value parameters; the optimizer
    applies the two learning rates by parameter group."""
    if acc is None:
        acc = model.new_accumulator()
    run = model.episode_run(episode.observations)
    dlogp, dvalues, stats = pcl_gradient_weights(episode, run, cfg)
    model.accumulate(run, dlogp, dvalues, acc)
    return acc, stats


def unified_pcl_gradients(episode, model, cfg, critic_weight=1.0, acc=None):
    """Single-parameter-set variant: the policy term enters with weight one
    and the value term with ``critic_weight`` (the value-to-policy learning
    rate ratio), since one shared parameter set cannot be split by group."""
    if acc is None:
        acc = model.new_accumulator()
    run = model.episode_run(episode.observations)
    dlogp, dvalues, stats = pcl_gradient_weights(episode, run, cfg,
                                                 critic_weight=critic_weight)
    model.accumulate(run, dlogp, dvalues, acc)
    return acc, stats


def a2c_gradient_weights(episode, run, cfg):
    """Advantage-weighted weights: only each window's first action and first
    value carry weight."""
    T = len(episode)
    starts, _, A, _ = _window_arrays(episode, run, cfg, tau=0.0)
    dlogp = np.zeros((T + 1, run.log_probs.shape[-1]))
    dvalues = np.zeros(T + 1)
    if len(starts):
        np.add.at(dlogp, (starts, episode.actions[starts]), A)
        np.add.at(dvalues, starts, A)
    stats = PclStats(objective=float(0.5 * np.dot(A, A)), consistencies=A)
    return dlogp, dvalues, stats


def a2c_gradients(episode, model, cfg, acc=None):
    if acc is None:
        acc = model.new_accumulator()
    run = model.episode_run(episode.observations)
    dlogp, dvalues, stats = a2c_gradient_weights(episode, run, cfg)
    model.accumulate(run, dlogp, dvalues, acc)
    return acc, stats


def entropy_bonus_weights(run, coef) -> np.ndarray:
    """Log-policy weights whose pullback is ``coef`` times the gradient of
    the per-step policy entropy (applied once per decision step)."""
    probs = np.exp(run.log_probs)
    dlogp = -coef * probs * run.log_probs
    dlogp[-1] = 0.0
    return dlogp
