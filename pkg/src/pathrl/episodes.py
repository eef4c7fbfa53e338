"""Episode container and its plain-text serialization.

An episode records the observation sequence (one longer than the action and
reward sequences) and whether the run ended in a true terminal state, as
opposed to hitting a step limit.  The on-disk format is line-delimited with
four tab-separated columns

    episode_id <TAB> seed <TAB> comma-joined actions <TAB> comma-joined rewards

which is enough to rebuild the full episode by replaying the actions through
the environment that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Episode",
    "EpisodeRecord",
    "format_episode_record",
    "parse_episode_line",
    "write_episode_file",
    "read_episode_file",
    "replay_episode",
]


@dataclass
class Episode:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminated: bool

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if len(self.observations) != len(self.actions) + 1:
            raise ValueError("need exactly one more observation than actions")
        if len(self.rewards) != len(self.actions):
            raise ValueError("need one reward per action")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


@dataclass(frozen=True)
class EpisodeRecord:
    episode_id: int
    seed: int
    actions: tuple
    rewards: tuple


def format_episode_record(episode_id: int, seed: int, episode: Episode) -> str:
    actions = ",".join(str(int(a)) for a in episode.actions)
    rewards = ",".join(repr(float(r)) for r in episode.rewards)
    return f"{int(episode_id)}\t{int(seed)}\t{actions}\t{rewards}"


def parse_episode_line(line: str) -> EpisodeRecord:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise ValueError(f"expected 4 tab-separated fields, got {len(parts)}")
    episode_id, seed, actions, rewards = parts
    acts = tuple(int(tok) for tok in actions.split(",")) if actions else ()
    rews = tuple(float(tok) for tok in rewards.split(",")) if rewards else ()
    if len(acts) != len(rews):
        raise ValueError("action and reward lists differ in length")
    return EpisodeRecord(int(episode_id), int(seed), acts, rews)


def write_episode_file(path, records):
    """Write (episode_id, seed, Episode) triples, one line each."""
    with open(path, "w", encoding="ascii") as fh:
        for episode_id, seed, episode in records:
            fh.write(format_episode_record(episode_id, seed, episode) + "\n")


def read_episode_file(path):
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(parse_episode_line(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def replay_episode(env, seed, actions, expected_rewards=None) -> Episode:
    """Re-run a recorded action sequence through ``env``.

    When ``expected_rewards`` is given it is checked exactly against the
    replayed rewards, which guards against replaying into a mismatched
    environment configuration.
    """
    obs = env.reset(int(seed))
    observations = [obs]
    rewards = []
    for i, action in enumerate(actions):
        obs, reward, done = env.step(int(action))
        observations.append(obs)
        rewards.append(reward)
        if expected_rewards is not None and reward != expected_rewards[i]:
            raise ValueError(
                f"replayed reward {reward!r} at step {i} does not match the "
                f"recorded {expected_rewards[i]!r}; wrong environment config?")
        if done and i != len(actions) - 1:
            raise ValueError("episode ended before the recorded action list did")
    return Episode(observations, list(actions), rewards, terminated=env.terminated)
