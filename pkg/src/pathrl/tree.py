"""Random binary decision-tree benchmark with normalized edge rewards.

Nodes are numbered in level order (children of ``v`` are ``2v+1`` and
``2v+2``); the first ``2**depth - 1`` ids are internal, the rest are leaves.
Edge rewards are drawn uniformly from [-1, 1] and then rescaled so the best
root-to-leaf trajectory totals exactly 20.  Dynamics are deterministic and
every leaf is terminal, so an episode is exactly ``depth`` steps.
"""

from __future__ import annotations

import numpy as np

from .mdp import TabularMDP
from .softmax_ops import softmax_value

__all__ = ["SyntheticTree", "SyntheticTreeEnv", "build_synthetic_tree"]

BEST_TOTAL = 20.0

#: Largest tree (in states) that may be densified into a TabularMDP.
_DENSE_STATE_CAP = 2048


class SyntheticTree:
    """Depth-``d`` full binary tree with one reward per edge."""

    def __init__(self, depth: int, edge_rewards: np.ndarray):
        if depth < 1:
            raise ValueError("depth must be at least 1")
        self.depth = int(depth)
        self.n_internal = 2 ** self.depth - 1
        self.n_nodes = 2 ** (self.depth + 1) - 1
        self.edge_rewards = np.asarray(edge_rewards, dtype=np.float64)
        if self.edge_rewards.shape != (self.n_internal, 2):
            raise ValueError("edge_rewards must have shape (n_internal, 2)")

    def is_leaf(self, node: int) -> bool:
        return node >= self.n_internal

    def child(self, node: int, action: int) -> int:
        return 2 * node + 1 + action

    def _levels(self):
        """Yield internal-node id ranges, deepest level first."""
        for level in reversed(range(self.depth)):
            yield np.arange(2 ** level - 1, 2 ** (level + 1) - 1)

    def backward_values(self, tau=None, gamma=1.0) -> np.ndarray:
        """Per-node values by backward induction; log-sum-exp backup when
        ``tau`` is given, hard max otherwise.  Leaves are worth 0."""
        V = np.zeros(self.n_nodes)
        for ids in self._levels():
            kids = V[2 * ids[:, None] + np.array([1, 2])]
            q = self.edge_rewards[ids] + gamma * kids
            V[ids] = np.max(q, axis=-1) if tau is None else softmax_value(q, tau)
        return V

    @property
    def best_total(self) -> float:
        return float(self.backward_values()[0])

    def optimal_actions(self) -> list[int]:
        """Greedy root-to-leaf action sequence (lowest index on ties)."""
        V = self.backward_values()
        node, actions = 0, []
        while not self.is_leaf(node):
            q = self.edge_rewards[node] + V[[2 * node + 1, 2 * node + 2]]
            a = int(np.argmax(q))
            actions.append(a)
            node = self.child(node, a)
        return actions

    def to_tabular_mdp(self, gamma=1.0) -> TabularMDP:
        """Dense MDP form; only sensible for small depths."""
        if self.n_nodes > _DENSE_STATE_CAP:
            raise ValueError(f"tree with {self.n_nodes} nodes is too large to densify")
        S = self.n_nodes
        P = np.zeros((S, 2, S))
        r = np.zeros((S, 2))
        terminal = np.zeros(S, dtype=bool)
        for v in range(S):
            if self.is_leaf(v):
                terminal[v] = True
                P[v, :, v] = 1.0
            else:
                for a in (0, 1):
                    P[v, a, self.child(v, a)] = 1.0
                    r[v, a] = self.edge_rewards[v, a]
        return TabularMDP(transition=P, reward=r, terminal=terminal, gamma=gamma)


def build_synthetic_tree(depth, rng) -> SyntheticTree:
    """Sample a tree instance whose best root-to-leaf total is exactly 20.

    Raw edge rewards are uniform on [-1, 1]; the whole table is scaled by
    ``20 / M`` with ``M`` the best raw total.  A draw with ``M <= 0`` would
    flip reward signs under that scaling, so it is rejected and resampled.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    n_internal = 2 ** depth - 1
    while True:
        raw = rng.uniform(-1.0, 1.0, size=(n_internal, 2))
        tree = SyntheticTree(depth, raw)
        best = tree.best_total
        if best > 0.0:
            tree.edge_rewards *= BEST_TOTAL / best
            return tree


class SyntheticTreeEnv:
    """Episodic wrapper over a fixed tree instance; reset ignores the seed
    beyond accepting it (dynamics and start node are deterministic)."""

    def __init__(self, tree: SyntheticTree):
        self.tree = tree
        self._node = None
        self._done = True
        self.terminated = False

    n_actions = 2

    @property
    def n_obs(self) -> int:
        return self.tree.n_nodes

    @property
    def max_episode_reward(self) -> float:
        return self.tree.best_total

    def reset(self, seed=None):
        self._node = 0
        self._done = self.tree.is_leaf(0)
        self.terminated = self._done
        return 0

    def step(self, action):
        if self._done:
            raise RuntimeError("episode is done; call reset() first")
        action = int(action)
        if action not in (0, 1):
            raise ValueError(f"action {action} out of range")
        reward = float(self.tree.edge_rewards[self._node, action])
        self._node = self.tree.child(self._node, action)
        if self.tree.is_leaf(self._node):
            self._done = True
            self.terminated = True
        return self._node, reward, self._done
