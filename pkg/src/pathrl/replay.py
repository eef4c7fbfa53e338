"""Capacity-bounded episode store with exponentiated-reward sampling.

Episodes are sampled with probability

    p_i = 0.1 / N + 0.9 * exp(alpha * R_i) / Z,

where ``R_i`` is the episode's undiscounted reward total, ``N`` the current
number of stored episodes, and ``Z`` normalizes the exponentiated weights
(computed with a max shift so large ``alpha * R`` cannot overflow).  When the
buffer grows past capacity a uniformly random non-pinned entry is evicted;
pinned entries (expert demonstrations) are never removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episodes import Episode, format_episode_record

__all__ = ["BufferEntry", "ReplayBuffer"]

UNIFORM_MIX = 0.1


@dataclass
class BufferEntry:
    episode: Episode
    total_reward: float
    pinned: bool
    insertion_id: int
    seed: int = 0


class ReplayBuffer:
    def __init__(self, capacity, alpha, seed=None):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self._rng = np.random.default_rng(seed)
        self._entries: list[BufferEntry] = []
        self._next_id = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self):
        return tuple(self._entries)

    @property
    def pinned_count(self) -> int:
        return sum(1 for e in self._entries if e.pinned)

    def insert(self, episode: Episode, pinned=False, seed=0):
        self._entries.append(BufferEntry(
            episode=episode, total_reward=episode.total_reward,
            pinned=bool(pinned), insertion_id=self._next_id, seed=int(seed)))
        self._next_id += 1
        while len(self._entries) > self.capacity:
            candidates = [i for i, e in enumerate(self._entries) if not e.pinned]
            if not candidates:
                raise RuntimeError("buffer is over capacity but every entry "
                                   "is pinned")
            victim = candidates[self._rng.integers(0, len(candidates))]
            self._entries.pop(victim)

    def seed_experts(self, episodes):
        """Insert expert episodes pinned so they are never evicted."""
        for episode in episodes:
            self.insert(episode, pinned=True)

    def probabilities(self) -> np.ndarray:
        if not self._entries:
            raise ValueError("buffer is empty")
        R = np.array([e.total_reward for e in self._entries])
        w = self.alpha * R
        w -= w.max()
        expw = np.exp(w)
        return UNIFORM_MIX / len(R) + (1.0 - UNIFORM_MIX) * expw / expw.sum()

    def sample(self, rng=None) -> Episode:
        rng = self._rng if rng is None else rng
        probs = self.probabilities()
        idx = int(rng.choice(len(probs), p=probs))
        return self._entries[idx].episode

    def sample_batch(self, k, rng=None):
        rng = self._rng if rng is None else rng
        probs = self.probabilities()
        idxs = rng.choice(len(probs), size=int(k), p=probs, replace=True)
        return [self._entries[int(i)].episode for i in idxs]

    def dump(self, path):
        """Write the stored episodes in the shared episode-file format."""
        with open(path, "w", encoding="ascii") as fh:
            for entry in self._entries:
                fh.write(format_episode_record(entry.insertion_id, entry.seed,
                                               entry.episode) + "\n")
