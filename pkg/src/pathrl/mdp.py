"""Explicit finite MDPs with dense transition tables, plus an episodic wrapper.

A :class:`TabularMDP` stores the full transition kernel ``P[s, a, s']`` and
reward table ``r[s, a]``.  Terminal states absorb with zero reward and are
never stepped; exact dynamic programming treats their value as identically
zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .softmax_ops import PROB_ATOL

__all__ = ["TabularMDP", "TabularMDPEnv", "random_mdp"]


@dataclass(frozen=True)
class TabularMDP:
    """Finite MDP: transitions (S, A, S), rewards (S, A), terminal mask (S,)."""

    transition: np.ndarray
    reward: np.ndarray
    terminal: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=np.float64))
        object.__setattr__(self, "reward", np.asarray(self.reward, dtype=np.float64))
        object.__setattr__(self, "terminal", np.asarray(self.terminal, dtype=bool))
        P, r, t = self.transition, self.reward, self.terminal
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if r.shape != P.shape[:2]:
            raise ValueError("reward shape must be (S, A)")
        if t.shape != (P.shape[0],):
            raise ValueError("terminal mask shape must be (S,)")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(r))):
            raise ValueError("transition and reward tables must be finite")
        if np.any(P < 0.0) or np.any(np.abs(P.sum(axis=-1) - 1.0) > PROB_ATOL):
            raise ValueError("every transition row must be a probability vector")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def nonterminal(self) -> np.ndarray:
        return ~self.terminal


def random_mdp(n_states, n_actions, stochasticity, seed, gamma=0.9,
               terminal_states=()):
    """Random MDP fixture: rewards uniform on [-1, 1], random transition rows.

    ``stochasticity = 0`` gives one-hot (deterministic) rows; positive values
    are used as the concentration of a flat Dirichlet, so small values give
    spiky rows and 1.0 gives a uniform Dirichlet.  The same seed always
    produces the same MDP.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("need at least one state and one action")
    rng = np.random.default_rng(seed)
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    P = np.zeros((n_states, n_actions, n_states))
    if stochasticity == 0:
        targets = rng.integers(0, n_states, size=(n_states, n_actions))
        for s in range(n_states):
            for a in range(n_actions):
                P[s, a, targets[s, a]] = 1.0
    else:
        alpha = np.full(n_states, float(stochasticity))
        for s in range(n_states):
            for a in range(n_actions):
                P[s, a] = rng.dirichlet(alpha)
    terminal = np.zeros(n_states, dtype=bool)
    for s in terminal_states:
        terminal[s] = True
        P[s, :, :] = 0.0
        P[s, :, s] = 1.0
        reward[s, :] = 0.0
    return TabularMDP(transition=P, reward=reward, terminal=terminal, gamma=gamma)


class TabularMDPEnv:
    """Episodic interface over a :class:`TabularMDP`.

    Transitions are sampled from the MDP's kernel using a stream seeded at
    reset, so identical (seed, action sequence) pairs reproduce the same
    episode.  Stepping after the episode is done is an error.
    """

    def __init__(self, mdp: TabularMDP, start_state: int = 0, max_steps: int | None = None):
        self.mdp = mdp
        self.start_state = int(start_state)
        self.max_steps = max_steps
        self._rng = None
        self._state = None
        self._steps = 0
        self._done = True
        self.terminated = False

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def n_obs(self) -> int:
        return self.mdp.n_states

    max_episode_reward = None

    def reset(self, seed):
        self._rng = np.random.default_rng(seed)
        self._state = self.start_state
        self._steps = 0
        self._done = bool(self.mdp.terminal[self._state])
        self.terminated = self._done
        return self._state

    def step(self, action):
        if self._done:
            raise RuntimeError("episode is done; call reset() first")
        action = int(action)
        if not 0 <= action < self.mdp.n_actions:
            raise ValueError(f"action {action} out of range")
        s = self._state
        reward = float(self.mdp.reward[s, action])
        probs = self.mdp.transition[s, action]
        nxt = int(self._rng.choice(self.mdp.n_states, p=probs))
        self._state = nxt
        self._steps += 1
        if self.mdp.terminal[nxt]:
            self._done = True
            self.terminated = True
        elif self.max_steps is not None and self._steps >= self.max_steps:
            self._done = True
            self.terminated = False
        return nxt, reward, self._done
