"""Tape and grid symbol-manipulation tasks behind the episodic interface.

The agent sees the symbol under its read head, one-hot-encodable as an index
in ``[0, vocab]`` where index ``vocab`` is the out-of-grid boundary token.
An action simultaneously picks a head movement and an optional symbol to
emit, flattened into a single categorical set:

    action = move * (vocab + 1) + w,   w = 0 for no write, w = k to emit k-1.

One-row tasks move left/right; the multi-row addition tasks also move
up/down.  Each correct emission earns +1; an incorrect emission earns -0.5
and ends the episode.  Episodes also end when the full target has been
emitted, or after ``2 * grid_cells + 4`` steps (a truncation, not a terminal
state).
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .episodes import Episode

__all__ = ["TapeEnv", "Curriculum", "make_task_env", "expert_rollout", "TASKS"]

TASKS = (
    "copy",
    "duplicated_input",
    "repeat_copy",
    "reverse",
    "reversed_addition",
    "reversed_addition3",
    "hard_reversed_addition",
)

_ADDITION_TASKS = {"reversed_addition", "reversed_addition3", "hard_reversed_addition"}

_TASK_ROWS = {
    "copy": 1,
    "duplicated_input": 1,
    "repeat_copy": 1,
    "reverse": 1,
    "reversed_addition": 2,
    "hard_reversed_addition": 2,
    "reversed_addition3": 3,
}

# 1-D moves: left, right.  2-D adds up/down first so indices stay stable.
_MOVES_1D = ((0, -1), (0, 1))
_MOVES_2D = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _target_for(task: str, grid: np.ndarray) -> list[int]:
    row0 = [int(x) for x in grid[0]]
    if task == "copy":
        return row0
    if task == "duplicated_input":
        return row0[::2]
    if task == "repeat_copy":
        return row0 + row0[::-1] + row0
    if task == "reverse":
        return row0[::-1]
    if task in _ADDITION_TASKS:
        digits = []
        carry = 0
        for col in range(grid.shape[1]):
            s = int(grid[:, col].sum()) + carry
            digits.append(s % 3)
            carry = s // 3
        while carry > 0:
            digits.append(carry % 3)
            carry //= 3
        return digits
    raise ValueError(f"unknown task {task!r}")


class TapeEnv:
    """One task instance; ``reset(seed)`` draws the input grid."""

    def __init__(self, task: str, length: int, vocab: int = 5, input_grid=None):
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
        if length < 1:
            raise ValueError("length must be at least 1")
        self.task = task
        self.rows = _TASK_ROWS[task]
        self.vocab = 3 if task in _ADDITION_TASKS else int(vocab)
        if self.vocab < 1:
            raise ValueError("vocab must be at least 1")
        if task == "duplicated_input":
            self.cols = 2 * ((length + 1) // 2)
        else:
            self.cols = int(length)
        self.moves = _MOVES_1D if self.rows == 1 else _MOVES_2D
        self.time_limit = 2 * self.rows * self.cols + 4
        self._fixed_grid = None
        if input_grid is not None:
            g = np.asarray(input_grid, dtype=np.int64)
            if g.shape != (self.rows, self.cols):
                raise ValueError(f"input grid must have shape {(self.rows, self.cols)}")
            if np.any(g < 0) or np.any(g >= self.vocab):
                raise ValueError("input grid symbols out of range")
            self._fixed_grid = g
        self.grid = None
        self.target = None
        self._row = 0
        self._col = 0
        self._write_idx = 0
        self._steps = 0
        self._done = True
        self.terminated = False

    @property
    def n_actions(self) -> int:
        return len(self.moves) * (self.vocab + 1)

    @property
    def n_obs(self) -> int:
        # Symbols plus the boundary token.
        return self.vocab + 1

    @property
    def boundary_token(self) -> int:
        return self.vocab

    @property
    def max_episode_reward(self) -> float:
        # One emission per step at most, so long targets are capped by time.
        return float(min(len(self.target), self.time_limit))

    def decode_action(self, action: int):
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} out of range")
        move, w = divmod(action, self.vocab + 1)
        return move, (w - 1 if w > 0 else None)

    def encode_action(self, move: int, symbol=None) -> int:
        w = 0 if symbol is None else int(symbol) + 1
        return int(move) * (self.vocab + 1) + w

    def _observe(self) -> int:
        if 0 <= self._row < self.rows and 0 <= self._col < self.cols:
            return int(self.grid[self._row, self._col])
        return self.boundary_token

    def reset(self, seed):
        if self._fixed_grid is not None:
            self.grid = self._fixed_grid
        else:
            rng = np.random.default_rng(seed)
            self.grid = rng.integers(0, self.vocab, size=(self.rows, self.cols))
        self.target = _target_for(self.task, self.grid)
        self._row = 0
        self._col = 0
        self._write_idx = 0
        self._steps = 0
        self._done = False
        self.terminated = False
        return self._observe()

    def step(self, action):
        if self._done:
            raise RuntimeError("episode is done; call reset() first")
        move, symbol = self.decode_action(action)
        reward = 0.0
        if symbol is not None:
            if symbol == self.target[self._write_idx]:
                reward = 1.0
                self._write_idx += 1
                if self._write_idx == len(self.target):
                    self._done = True
                    self.terminated = True
            else:
                reward = -0.5
                self._done = True
                self.terminated = True
        dr, dc = self.moves[move]
        self._row = min(max(self._row + dr, -1), self.rows)
        self._col = min(max(self._col + dc, -1), self.cols)
        self._steps += 1
        if not self._done and self._steps >= self.time_limit:
            self._done = True
            self.terminated = False
        return self._observe(), reward, self._done


def make_task_env(task, length, vocab=5) -> TapeEnv:
    """Build one of the named tasks (addition tasks always use 3 digits)."""
    return TapeEnv(task, length, vocab)


class Curriculum:
    """Input-length schedule driven by recent training success.

    Lengths are sampled uniformly between the starting length and the current
    maximum.  Once the average of ``reward / max_possible`` over the last
    ``window`` recorded episodes reaches ``threshold``, the maximum length
    grows by one (up to ``max_length``) and the window starts fresh.  With
    ``fixed=True`` the length never moves, as used by the no-curriculum
    addition variant.
    """

    def __init__(self, start_length, max_length, window=100, threshold=0.9,
                 fixed=False):
        if start_length < 1 or max_length < start_length:
            raise ValueError("need 1 <= start_length <= max_length")
        self.start_length = int(start_length)
        self.max_length = int(max_length)
        self.threshold = float(threshold)
        self.fixed = bool(fixed)
        self.current_max = self.max_length if fixed else self.start_length
        self._ratios = deque(maxlen=int(window))

    @property
    def lengths(self) -> tuple:
        if self.fixed:
            return (self.max_length,)
        return tuple(range(self.start_length, self.current_max + 1))

    def sample_length(self, rng) -> int:
        lengths = self.lengths
        return int(lengths[rng.integers(0, len(lengths))])

    def record(self, total_reward, max_possible):
        if max_possible > 0:
            self._ratios.append(min(float(total_reward) / float(max_possible), 1.0))

    @property
    def success_rate(self) -> float:
        if not self._ratios:
            return 0.0
        return float(np.mean(self._ratios))

    def update(self, success_rate=None) -> tuple:
        """Advance the schedule if warranted; returns the sampled lengths."""
        if success_rate is None:
            if len(self._ratios) < self._ratios.maxlen:
                return self.lengths
            success_rate = self.success_rate
        if not 0.0 <= success_rate <= 1.0:
            raise ValueError("success_rate must lie in [0, 1]")
        if self.fixed:
            return self.lengths
        if success_rate >= self.threshold and self.current_max < self.max_length:
            self.current_max += 1
            self._ratios.clear()
        return self.lengths


# ---------------------------------------------------------------------------
# Scripted optimal controllers (observation-driven)
# ---------------------------------------------------------------------------


def _expert_copy(env, obs):
    while True:
        obs = yield env.encode_action(1, obs)


def _expert_duplicated_input(env, obs):
    while True:
        obs = yield env.encode_action(1, obs)   # write at even columns
        obs = yield env.encode_action(1, None)  # skip the duplicate


def _expert_reverse(env, obs):
    while obs != env.boundary_token:
        obs = yield env.encode_action(1, None)
    obs = yield env.encode_action(0, None)
    while True:
        obs = yield env.encode_action(0, obs)


def _expert_repeat_copy(env, obs):
    while obs != env.boundary_token:
        obs = yield env.encode_action(1, obs)   # forward pass
    obs = yield env.encode_action(0, None)
    while obs != env.boundary_token:
        obs = yield env.encode_action(0, obs)   # reverse pass
    obs = yield env.encode_action(1, None)
    while True:
        obs = yield env.encode_action(1, obs)   # forward again


def _expert_addition(env, obs):
    down, up, right = 1, 0, 3
    carry = 0
    while obs != env.boundary_token:
        column = [obs]
        for _ in range(env.rows - 1):
            obs = yield env.encode_action(down, None)
            column.append(obs)
        s = sum(column) + carry
        digit, carry = s % 3, s // 3
        obs = yield env.encode_action(up, digit)
        for _ in range(env.rows - 2):
            obs = yield env.encode_action(up, None)
        obs = yield env.encode_action(right, None)
    # Past the last column; flush any remaining carry digits.
    while True:
        digit, carry = carry % 3, carry // 3
        obs = yield env.encode_action(right, digit)


_EXPERTS = {
    "copy": _expert_copy,
    "duplicated_input": _expert_duplicated_input,
    "repeat_copy": _expert_repeat_copy,
    "reverse": _expert_reverse,
    "reversed_addition": _expert_addition,
    "reversed_addition3": _expert_addition,
    "hard_reversed_addition": _expert_addition,
}


def expert_rollout(env: TapeEnv, seed) -> Episode:
    """Run the task's scripted controller and return the episode."""
    obs = env.reset(seed)
    controller = _EXPERTS[env.task](env, obs)
    action = controller.send(None)
    observations, actions, rewards = [obs], [], []
    while True:
        obs, reward, done = env.step(action)
        observations.append(obs)
        actions.append(action)
        rewards.append(reward)
        if done:
            break
        action = controller.send(obs)
    return Episode(observations, actions, rewards, terminated=env.terminated)
