"""Single-layer LSTM models with hand-written backpropagation through time.

Weights are initialized uniformly in [-0.08, 0.08] with a +1 forget-gate
bias.  The forward pass is batched internally (sequences padded to a common
length; padding sits at the end and receives zero output weight, so it
contributes nothing to gradients).  Gradients are exact and are checked
against finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as _sigmoid

from .models import EpisodeRun, Model, _log_softmax, _policy_weight_pullback
from .softmax_ops import log_soft_indmax, softmax_value

__all__ = ["RecurrentPolicyValueModel", "RecurrentQModel"]

INIT_SCALE = 0.08
FORGET_BIAS = 1.0


class _LSTMCore:
    """One LSTM layer plus a linear head, reading weights from a shared
    parameter dict under ``<prefix>_W``, ``<prefix>_b``, ``<prefix>_head_w``
    and ``<prefix>_head_b``."""

    def __init__(self, params, prefix, n_inputs, n_hidden, n_outputs):
        self.params = params
        self.prefix = prefix
        self.n_inputs = n_inputs
        self.n_hidden = n_hidden
        self.n_outputs = n_outputs

    @staticmethod
    def init_params(prefix, n_inputs, n_hidden, n_outputs, rng):
        H = n_hidden
        b = np.zeros(4 * H)
        b[H:2 * H] = FORGET_BIAS
        return {
            f"{prefix}_W": rng.uniform(-INIT_SCALE, INIT_SCALE,
                                       (n_inputs + H, 4 * H)),
            f"{prefix}_b": b,
            f"{prefix}_head_w": rng.uniform(-INIT_SCALE, INIT_SCALE,
                                            (H, n_outputs)),
            f"{prefix}_head_b": np.zeros(n_outputs),
        }

    def _weights(self):
        p = self.params
        return (p[f"{self.prefix}_W"], p[f"{self.prefix}_b"],
                p[f"{self.prefix}_head_w"], p[f"{self.prefix}_head_b"])

    def zero_state(self):
        return np.zeros(self.n_hidden), np.zeros(self.n_hidden)

    def step(self, h, c, x):
        """Single unbatched step used during rollouts; no cache is kept."""
        W, b, head_w, head_b = self._weights()
        H = self.n_hidden
        z = np.concatenate([x, h]) @ W + b
        i, f = _sigmoid(z[:H]), _sigmoid(z[H:2 * H])
        g, o = np.tanh(z[2 * H:3 * H]), _sigmoid(z[3 * H:])
        c2 = f * c + i * g
        h2 = o * np.tanh(c2)
        return h2, c2, h2 @ head_w + head_b

    def step_batch(self, h, c, x):
        """Stacked rollout step over (B, ...) rows; no cache is kept."""
        W, b, head_w, head_b = self._weights()
        H = self.n_hidden
        z = np.concatenate([x, h], axis=1) @ W + b
        i, f = _sigmoid(z[:, :H]), _sigmoid(z[:, H:2 * H])
        g, o = np.tanh(z[:, 2 * H:3 * H]), _sigmoid(z[:, 3 * H:])
        c2 = f * c + i * g
        h2 = o * np.tanh(c2)
        return h2, c2, h2 @ head_w + head_b

    def forward(self, X):
        """Batched forward over (B, L, n_inputs); returns (outs, cache)."""
        W, b, head_w, head_b = self._weights()
        B, L, _ = X.shape
        H = self.n_hidden
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        keys = ("h_prev", "c_prev", "i", "f", "g", "o", "tc", "h")
        cache = {k: np.empty((B, L, H)) for k in keys}
        for t in range(L):
            cache["h_prev"][:, t] = h
            cache["c_prev"][:, t] = c
            z = np.concatenate([X[:, t], h], axis=1) @ W + b
            i, f = _sigmoid(z[:, :H]), _sigmoid(z[:, H:2 * H])
            g, o = np.tanh(z[:, 2 * H:3 * H]), _sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            for k, v in (("i", i), ("f", f), ("g", g), ("o", o),
                         ("tc", tc), ("h", h)):
                cache[k][:, t] = v
        cache["X"] = X
        outs = cache["h"] @ head_w + head_b
        return outs, cache

    def backward(self, cache, douts, acc):
        """Accumulate gradients for ``sum(douts * outs)`` over the batch."""
        W, b, head_w, head_b = self._weights()
        B, L, H = cache["h"].shape
        X = cache["X"]
        flat_h = cache["h"].reshape(B * L, H)
        flat_d = douts.reshape(B * L, self.n_outputs)
        dW = np.zeros_like(W)
        db = np.zeros_like(b)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dh_head = douts @ head_w.T
        W_h = W[self.n_inputs:]
        for t in reversed(range(L)):
            i, f = cache["i"][:, t], cache["f"][:, t]
            g, o = cache["g"][:, t], cache["o"][:, t]
            tc = cache["tc"][:, t]
            dh = dh_head[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * cache["c_prev"][:, t]
            dc_next = dc * f
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            cat = np.concatenate([X[:, t], cache["h_prev"][:, t]], axis=1)
            dW += cat.T @ dz
            db += dz.sum(axis=0)
            dh_next = dz @ W_h.T
        acc.add(f"{self.prefix}_W", dW)
        acc.add(f"{self.prefix}_b", db)
        acc.add(f"{self.prefix}_head_w", flat_h.T @ flat_d)
        acc.add(f"{self.prefix}_head_b", flat_d.sum(axis=0))


class _RecurrentBase(Model):
    """Batching and one-hot plumbing shared by both recurrent models."""

    def _onehot_batch(self, observation_seqs):
        lengths = [len(obs) for obs in observation_seqs]
        L = max(lengths)
        X = np.zeros((len(observation_seqs), L, self.n_obs))
        for b, obs in enumerate(observation_seqs):
            X[b, np.arange(len(obs)), np.asarray(obs, dtype=np.int64)] = 1.0
        return X, lengths

    def episode_run(self, observations) -> EpisodeRun:
        return self.run_batch([observations])[0]

    def accumulate(self, run, dlogp, dvalues, acc):
        self.accumulate_batch([run], [dlogp], [dvalues], acc)

    def accumulate_batch(self, runs, dlogp_list, dvalues_list, acc):
        # Runs from different forward batches are grouped by shared cache.
        groups = {}
        for run, dlogp, dvalues in zip(runs, dlogp_list, dvalues_list):
            batch_cache = run.cache[0]
            groups.setdefault(id(batch_cache), (batch_cache, []))[1].append(
                (run, dlogp, dvalues))
        for batch_cache, members in groups.values():
            self._backward_group(batch_cache, members, acc)


class RecurrentPolicyValueModel(_RecurrentBase):
    """Separate policy and value LSTMs over one-hot observation streams."""

    def __init__(self, n_obs, n_actions, hidden=32, seed=0):
        self.n_obs = int(n_obs)
        self.n_actions = int(n_actions)
        self.hidden = int(hidden)
        rng = np.random.default_rng(seed)
        self.params = {}
        self.params.update(_LSTMCore.init_params("policy", self.n_obs,
                                                 self.hidden, self.n_actions, rng))
        self.params.update(_LSTMCore.init_params("value", self.n_obs,
                                                 self.hidden, 1, rng))
        self.groups = {name: name.split("_")[0] for name in self.params}
        self._policy = _LSTMCore(self.params, "policy", self.n_obs,
                                 self.hidden, self.n_actions)
        self._value = _LSTMCore(self.params, "value", self.n_obs,
                                self.hidden, 1)

    def initial_state(self):
        return self._policy.zero_state()

    def _onehot(self, obs):
        x = np.zeros(self.n_obs)
        x[int(obs)] = 1.0
        return x

    def policy_step(self, state, obs):
        h, c, out = self._policy.step(*state, self._onehot(obs))
        return (h, c), _log_softmax(out)

    def policy_step_batch(self, states, obs_array):
        h = np.stack([s[0] for s in states])
        c = np.stack([s[1] for s in states])
        X = np.zeros((len(states), self.n_obs))
        X[np.arange(len(states)), np.asarray(obs_array, dtype=np.int64)] = 1.0
        h2, c2, out = self._policy.step_batch(h, c, X)
        return list(zip(h2, c2)), _log_softmax(out)

    def run_batch(self, observation_seqs):
        X, lengths = self._onehot_batch(observation_seqs)
        p_outs, p_cache = self._policy.forward(X)
        v_outs, v_cache = self._value.forward(X)
        batch_cache = (p_cache, v_cache)
        runs = []
        for b, (obs, n) in enumerate(zip(observation_seqs, lengths)):
            runs.append(EpisodeRun(
                np.asarray(obs, dtype=np.int64),
                _log_softmax(p_outs[b, :n]),
                v_outs[b, :n, 0].copy(),
                cache=(batch_cache, b, n)))
        return runs

    def _backward_group(self, batch_cache, members, acc):
        p_cache, v_cache = batch_cache
        B, L = p_cache["h"].shape[:2]
        dp = np.zeros((B, L, self.n_actions))
        dv = np.zeros((B, L, 1))
        for run, dlogp, dvalues in members:
            _, b, n = run.cache
            dp[b, :n] = _policy_weight_pullback(dlogp, np.exp(run.log_probs))
            dv[b, :n, 0] = np.asarray(dvalues, dtype=np.float64)
        self._policy.backward(p_cache, dp, acc)
        self._value.backward(v_cache, dv, acc)

    def descriptor(self):
        return {"kind": "recurrent_pv", "n_obs": self.n_obs,
                "n_actions": self.n_actions, "hidden": self.hidden}


class RecurrentQModel(_RecurrentBase):
    """Unified recurrent model; the head emits action values and both the
    policy and the state value are derived from them."""

    def __init__(self, n_obs, n_actions, tau, hidden=32, seed=0):
        if not tau > 0:
            raise ValueError("the unified parameterization needs tau > 0")
        self.n_obs = int(n_obs)
        self.n_actions = int(n_actions)
        self.tau = float(tau)
        self.hidden = int(hidden)
        rng = np.random.default_rng(seed)
        self.params = dict(_LSTMCore.init_params("q", self.n_obs, self.hidden,
                                                 self.n_actions, rng))
        self.groups = {name: "policy" for name in self.params}
        self._core = _LSTMCore(self.params, "q", self.n_obs, self.hidden,
                               self.n_actions)

    def initial_state(self):
        return self._core.zero_state()

    def policy_step(self, state, obs):
        x = np.zeros(self.n_obs)
        x[int(obs)] = 1.0
        h, c, out = self._core.step(*state, x)
        return (h, c), log_soft_indmax(out, self.tau)

    def policy_step_batch(self, states, obs_array):
        h = np.stack([s[0] for s in states])
        c = np.stack([s[1] for s in states])
        X = np.zeros((len(states), self.n_obs))
        X[np.arange(len(states)), np.asarray(obs_array, dtype=np.int64)] = 1.0
        h2, c2, out = self._core.step_batch(h, c, X)
        return list(zip(h2, c2)), log_soft_indmax(out, self.tau)

    def run_batch(self, observation_seqs):
        X, lengths = self._onehot_batch(observation_seqs)
        q_outs, q_cache = self._core.forward(X)
        runs = []
        for b, (obs, n) in enumerate(zip(observation_seqs, lengths)):
            q = q_outs[b, :n]
            runs.append(EpisodeRun(
                np.asarray(obs, dtype=np.int64),
                log_soft_indmax(q, self.tau),
                np.atleast_1d(softmax_value(q, self.tau)),
                cache=(q_cache, b, n)))
        return runs

    def _backward_group(self, q_cache, members, acc):
        B, L = q_cache["h"].shape[:2]
        dq = np.zeros((B, L, self.n_actions))
        for run, dlogp, dvalues in members:
            _, b, n = run.cache
            probs = np.exp(run.log_probs)
            dq[b, :n] = (_policy_weight_pullback(dlogp, probs) / self.tau
                         + np.asarray(dvalues, dtype=np.float64)[:, None] * probs)
        self._core.backward(q_cache, dq, acc)

    def descriptor(self):
        return {"kind": "recurrent_q", "n_obs": self.n_obs,
                "n_actions": self.n_actions, "tau": self.tau,
                "hidden": self.hidden}
