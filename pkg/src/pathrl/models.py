"""Parametric policy and value representations with exact analytic gradients.

Every model exposes the same small surface: run an episode's observation
sequence forward to per-step action log-probabilities and state values, and
accumulate weighted gradients of those quantities into a
:class:`GradAccumulator`.  The weights say "add w times the gradient of
log pi(a | s_t)" and "add u times the gradient of V(s_t)"; the training
losses are built entirely out of such terms, so no general autodiff is
needed.

Two parameterizations exist: separate policy/value parameter sets (the
"policy" and "value" groups, which the optimizer scales with different
learning rates), and a unified action-value table from which both the values
(via the log-sum-exp) and the policy (via the soft indmax) are derived.

All parameters are float64 and all computations are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .softmax_ops import log_soft_indmax, softmax_value

__all__ = [
    "GradientError",
    "GradAccumulator",
    "EpisodeRun",
    "Model",
    "TabularPolicyValueModel",
    "TabularQModel",
    "LinearPolicyValueModel",
]

#: Tables larger than this accumulate sparsely by default.
SPARSE_TABLE_THRESHOLD = 65536


class GradientError(RuntimeError):
    """Raised when a gradient turns non-finite; training must halt loudly."""


class GradAccumulator:
    """Parameter-shaped gradient buffers, dense or scatter-indexed.

    Dense entries live in full arrays matching the parameter shapes.  Names
    listed in ``sparse`` instead collect (row-index, values) chunks, which
    keeps huge lookup tables cheap; chunks are applied with ``np.add.at`` so
    duplicate indices accumulate.
    """

    def __init__(self, shapes: dict, sparse=frozenset()):
        self.shapes = dict(shapes)
        self.sparse_names = frozenset(sparse) & set(self.shapes)
        self._dense = {}
        self._chunks = {name: [] for name in self.sparse_names}

    def add(self, name, values, index=None):
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise GradientError(f"non-finite gradient for parameter {name!r}")
        if name in self.sparse_names:
            if index is None:
                raise GradientError(f"parameter {name!r} accumulates sparsely; "
                                    "an index is required")
            self._chunks[name].append((np.asarray(index), values))
            return
        if name not in self._dense:
            self._dense[name] = np.zeros(self.shapes[name])
        if index is None:
            self._dense[name] += values
        else:
            np.add.at(self._dense[name], index, values)

    def chunks(self, name):
        """Yield (index | None, values) pieces for one parameter."""
        if name in self.sparse_names:
            yield from self._chunks[name]
        elif name in self._dense:
            yield None, self._dense[name]

    def to_dense(self) -> dict:
        out = {}
        for name, shape in self.shapes.items():
            arr = np.zeros(shape)
            for index, values in self.chunks(name):
                if index is None:
                    arr += values
                else:
                    np.add.at(arr, index, values)
            out[name] = arr
        return out

    def global_norm(self) -> float:
        total = 0.0
        for name in self.shapes:
            for _, values in self.chunks(name):
                total += float(np.sum(values * values))
        return float(np.sqrt(total))

    def scale(self, factor: float):
        for name in self.sparse_names:
            self._chunks[name] = [(idx, vals * factor)
                                  for idx, vals in self._chunks[name]]
        for name in self._dense:
            self._dense[name] *= factor


@dataclass
class EpisodeRun:
    """Cached forward pass: per-step log-policies and values."""

    observations: np.ndarray
    log_probs: np.ndarray   # (T+1, n_actions)
    values: np.ndarray      # (T+1,)
    cache: Any = None


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


class Model:
    """Shared plumbing; subclasses fill in the forward/backward specifics."""

    params: dict
    groups: dict
    n_actions: int
    sparse_grads = False

    def param_group(self, name: str) -> str:
        return self.groups[name]

    def new_accumulator(self) -> GradAccumulator:
        shapes = {name: p.shape for name, p in self.params.items()}
        sparse = set(shapes) if self.sparse_grads else frozenset()
        return GradAccumulator(shapes, sparse=sparse)

    # -- rollout interface -------------------------------------------------
    def initial_state(self):
        return None

    def policy_step(self, state, obs):
        """Advance one observation; returns (state, action log-probs)."""
        raise NotImplementedError

    def policy_step_batch(self, states, obs_array):
        out = np.empty((len(states), self.n_actions))
        new_states = []
        for i, (st, obs) in enumerate(zip(states, obs_array)):
            st, logp = self.policy_step(st, obs)
            new_states.append(st)
            out[i] = logp
        return new_states, out

    # -- training interface ------------------------------------------------
    def episode_run(self, observations) -> EpisodeRun:
        raise NotImplementedError

    def accumulate(self, run: EpisodeRun, dlogp, dvalues, acc: GradAccumulator):
        """acc += sum_t,a dlogp[t,a] * grad(log pi(a|s_t))
                + sum_t dvalues[t] * grad(V(s_t))."""
        raise NotImplementedError

    def run_batch(self, observation_seqs):
        return [self.episode_run(obs) for obs in observation_seqs]

    def accumulate_batch(self, runs, dlogp_list, dvalues_list, acc):
        for run, dlogp, dvalues in zip(runs, dlogp_list, dvalues_list):
            self.accumulate(run, dlogp, dvalues, acc)

    def descriptor(self) -> dict:
        raise NotImplementedError


def _policy_weight_pullback(dlogp, probs):
    """Convert log-policy weights into logit-space gradients.

    d/dz sum_a w_a log softmax(z)_a = w - (sum_a w_a) * probs.
    """
    dlogp = np.asarray(dlogp, dtype=np.float64)
    return dlogp - dlogp.sum(axis=-1, keepdims=True) * probs


class TabularPolicyValueModel(Model):
    """One logit row per state plus one value entry per state."""

    def __init__(self, n_states, n_actions, sparse_grads=None):
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self.params = {
            "policy_logits": np.zeros((self.n_states, self.n_actions)),
            "values": np.zeros(self.n_states),
        }
        self.groups = {"policy_logits": "policy", "values": "value"}
        if sparse_grads is None:
            sparse_grads = self.n_states * self.n_actions > SPARSE_TABLE_THRESHOLD
        self.sparse_grads = bool(sparse_grads)

    def policy_step(self, state, obs):
        logits = self.params["policy_logits"][int(obs)]
        return None, _log_softmax(logits)

    def episode_run(self, observations) -> EpisodeRun:
        states = np.asarray(observations, dtype=np.int64)
        log_probs = _log_softmax(self.params["policy_logits"][states])
        values = self.params["values"][states].copy()
        return EpisodeRun(states, log_probs, values, cache=states)

    def accumulate(self, run, dlogp, dvalues, acc):
        states = run.cache
        dlogits = _policy_weight_pullback(dlogp, np.exp(run.log_probs))
        acc.add("policy_logits", dlogits, index=states)
        acc.add("values", np.asarray(dvalues, dtype=np.float64), index=states)

    def descriptor(self):
        return {"kind": "tabular_pv", "n_states": self.n_states,
                "n_actions": self.n_actions, "sparse_grads": self.sparse_grads}


class TabularQModel(Model):
    """Unified tabular model: a single action-value table.

    State values are the temperature-scaled log-sum-exp of the row and the
    policy is its soft indmax, so policy and values share one parameter set
    (group "policy"; relative value weighting is applied by the loss).
    """

    def __init__(self, n_states, n_actions, tau, sparse_grads=None):
        if not tau > 0:
            raise ValueError("the unified parameterization needs tau > 0")
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self.tau = float(tau)
        self.params = {"q_table": np.zeros((self.n_states, self.n_actions))}
        self.groups = {"q_table": "policy"}
        if sparse_grads is None:
            sparse_grads = self.n_states * self.n_actions > SPARSE_TABLE_THRESHOLD
        self.sparse_grads = bool(sparse_grads)

    def policy_step(self, state, obs):
        q = self.params["q_table"][int(obs)]
        return None, log_soft_indmax(q, self.tau)

    def episode_run(self, observations) -> EpisodeRun:
        states = np.asarray(observations, dtype=np.int64)
        q = self.params["q_table"][states]
        log_probs = log_soft_indmax(q, self.tau)
        values = softmax_value(q, self.tau)
        return EpisodeRun(states, log_probs, np.atleast_1d(values), cache=states)

    def accumulate(self, run, dlogp, dvalues, acc):
        states = run.cache
        probs = np.exp(run.log_probs)
        dq = _policy_weight_pullback(dlogp, probs) / self.tau
        dq += np.asarray(dvalues, dtype=np.float64)[:, None] * probs
        acc.add("q_table", dq, index=states)

    def descriptor(self):
        return {"kind": "tabular_q", "n_states": self.n_states,
                "n_actions": self.n_actions, "tau": self.tau,
                "sparse_grads": self.sparse_grads}


class LinearPolicyValueModel(Model):
    """Linear policy logits and value over a feature map of the observation.

    The default feature map one-hot encodes integer observations, which makes
    the model an exact tabular equivalent; any callable returning a fixed
    length float vector may be supplied instead.
    """

    def __init__(self, n_features, n_actions, feature_fn=None, rng=None):
        self.n_features = int(n_features)
        self.n_actions = int(n_actions)
        self._feature_fn = feature_fn
        if rng is None:
            init_w = np.zeros((self.n_features, self.n_actions))
            init_v = np.zeros(self.n_features)
        else:
            init_w = rng.uniform(-0.08, 0.08, (self.n_features, self.n_actions))
            init_v = rng.uniform(-0.08, 0.08, self.n_features)
        self.params = {
            "policy_w": init_w,
            "policy_b": np.zeros(self.n_actions),
            "value_w": init_v,
            "value_b": np.zeros(1),
        }
        self.groups = {"policy_w": "policy", "policy_b": "policy",
                       "value_w": "value", "value_b": "value"}

    def features(self, obs) -> np.ndarray:
        if self._feature_fn is not None:
            return np.asarray(self._feature_fn(obs), dtype=np.float64)
        x = np.zeros(self.n_features)
        x[int(obs)] = 1.0
        return x

    def policy_step(self, state, obs):
        x = self.features(obs)
        logits = x @ self.params["policy_w"] + self.params["policy_b"]
        return None, _log_softmax(logits)

    def episode_run(self, observations) -> EpisodeRun:
        X = np.stack([self.features(obs) for obs in observations])
        logits = X @ self.params["policy_w"] + self.params["policy_b"]
        values = X @ self.params["value_w"] + self.params["value_b"][0]
        return EpisodeRun(np.asarray(observations), _log_softmax(logits),
                          values, cache=X)

    def accumulate(self, run, dlogp, dvalues, acc):
        X = run.cache
        dlogits = _policy_weight_pullback(dlogp, np.exp(run.log_probs))
        dvalues = np.asarray(dvalues, dtype=np.float64)
        acc.add("policy_w", X.T @ dlogits)
        acc.add("policy_b", dlogits.sum(axis=0))
        acc.add("value_w", X.T @ dvalues)
        acc.add("value_b", np.array([dvalues.sum()]))

    def descriptor(self):
        if self._feature_fn is not None:
            raise ValueError("custom feature maps cannot be checkpointed")
        return {"kind": "linear_pv", "n_features": self.n_features,
                "n_actions": self.n_actions}
