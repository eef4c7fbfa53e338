"""Exact dynamic programming on tabular MDPs.

Everything here treats terminal states as absorbing with value identically
zero; backups and policies are only defined on non-terminal states.  The
module provides log-sum-exp and hard-max value iteration, entropy-regularized
on-policy evaluation (a direct linear solve), one-step and multi-step
consistency residuals, and two mechanical verifiers: one for the converse
direction (residuals near zero force the optimal solution) and one for the
sup-norm contraction of the backup operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import TabularMDP
from .softmax_ops import entropy, soft_indmax, softmax_value

__all__ = [
    "ConvergenceError",
    "ValueIterationResult",
    "q_values",
    "softmax_backup",
    "hardmax_backup",
    "on_policy_backup",
    "softmax_value_iteration",
    "hardmax_value_iteration",
    "boltzmann_policy",
    "greedy_policy",
    "on_policy_eval",
    "discounted_entropy",
    "consistency_residual",
    "consistency_residuals",
    "path_residual",
    "solve_consistency",
    "verify_converse",
    "verify_contraction",
    "ConverseReport",
    "ContractionReport",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = float(residual)


@dataclass
class ValueIterationResult:
    values: np.ndarray
    iterations: int
    residual: float
    residual_history: list = field(default_factory=list)


def q_values(mdp: TabularMDP, V) -> np.ndarray:
    """Action values ``r(s,a) + gamma * E[V(s')]`` as an (S, A) table."""
    V = np.asarray(V, dtype=np.float64)
    return mdp.reward + mdp.gamma * (mdp.transition @ V)


def softmax_backup(mdp: TabularMDP, V, tau) -> np.ndarray:
    """One log-sum-exp backup sweep; terminal states stay at zero."""
    out = np.zeros(mdp.n_states)
    nt = mdp.nonterminal
    if nt.any():
        out[nt] = softmax_value(q_values(mdp, V)[nt], tau)
    return out


def hardmax_backup(mdp: TabularMDP, V) -> np.ndarray:
    out = np.zeros(mdp.n_states)
    nt = mdp.nonterminal
    if nt.any():
        out[nt] = np.max(q_values(mdp, V)[nt], axis=-1)
    return out


def on_policy_backup(mdp: TabularMDP, pi, tau, V) -> np.ndarray:
    """One sweep of the entropy-regularized on-policy operator."""
    pi = np.asarray(pi, dtype=np.float64)
    Q = q_values(mdp, V)
    out = np.zeros(mdp.n_states)
    nt = mdp.nonterminal
    reg = float(tau) * entropy(pi[nt]) if tau else 0.0
    out[nt] = np.sum(pi[nt] * Q[nt], axis=-1) + reg
    return out


def _default_max_iters(mdp: TabularMDP, tol: float) -> int:
    if mdp.gamma < 1.0:
        r_max = max(float(np.max(np.abs(mdp.reward))), 1e-6)
        need = math.log(tol * (1.0 - mdp.gamma) / r_max) / math.log(mdp.gamma)
        return int(math.ceil(max(need, 1.0))) + 100
    # gamma = 1 is only valid on acyclic MDPs, where one sweep per level
    # suffices; allow generous slack.
    return 10 * mdp.n_states + 100


def _value_iteration(mdp, backup, tol, max_iters, v0):
    if max_iters is None:
        max_iters = _default_max_iters(mdp, tol)
    V = np.zeros(mdp.n_states) if v0 is None else np.array(v0, dtype=np.float64)
    V[mdp.terminal] = 0.0
    history = []
    for it in range(1, max_iters + 1):
        new = backup(V)
        residual = float(np.max(np.abs(new - V))) if len(V) else 0.0
        history.append(residual)
        V = new
        if residual <= tol:
            return ValueIterationResult(V, it, residual, history)
    raise ConvergenceError(
        f"value iteration did not reach tol={tol} in {max_iters} sweeps "
        f"(last residual {history[-1]:.3e})", history[-1])


def softmax_value_iteration(mdp, tau, tol=1e-10, max_iters=None, v0=None):
    """Fixed point of the log-sum-exp backup to within ``tol`` (sup-norm)."""
    return _value_iteration(mdp, lambda V: softmax_backup(mdp, V, tau), tol,
                            max_iters, v0)


def hardmax_value_iteration(mdp, tol=1e-10, max_iters=None, v0=None):
    return _value_iteration(mdp, lambda V: hardmax_backup(mdp, V), tol,
                            max_iters, v0)


def boltzmann_policy(mdp: TabularMDP, V, tau) -> np.ndarray:
    """Per-state soft-indmax of the action values; uniform at terminals."""
    pi = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    nt = mdp.nonterminal
    if nt.any():
        pi[nt] = soft_indmax(q_values(mdp, V)[nt], tau)
    return pi


def greedy_policy(mdp: TabularMDP, V) -> np.ndarray:
    """One-hot argmax policy (lowest index on ties); uniform at terminals."""
    pi = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    nt = np.flatnonzero(mdp.nonterminal)
    Q = q_values(mdp, V)
    pi[nt] = 0.0
    pi[nt, np.argmax(Q[nt], axis=-1)] = 1.0
    return pi


def _policy_mean_rewards(mdp, pi, tau):
    """Per-state expected reward plus tau-weighted policy entropy."""
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy table has the wrong shape")
    nt = mdp.nonterminal
    if tau > 0 and np.any(pi[nt] <= 0.0):
        raise ValueError("tau > 0 requires strictly positive policies "
                         "(log-probabilities must be finite)")
    c = np.sum(pi * mdp.reward, axis=-1)
    if tau:
        c[nt] += float(tau) * entropy(pi[nt])
    return pi, c


def _solve_linear(mdp, pi, c):
    """Solve V = c + gamma * P_pi V on the non-terminal block."""
    nt = np.flatnonzero(mdp.nonterminal)
    V = np.zeros(mdp.n_states)
    if len(nt) == 0:
        return V
    P_pi = np.einsum("sa,saz->sz", pi, mdp.transition)
    A = np.eye(len(nt)) - mdp.gamma * P_pi[np.ix_(nt, nt)]
    V[nt] = np.linalg.solve(A, c[nt])
    return V


def on_policy_eval(mdp: TabularMDP, pi, tau) -> np.ndarray:
    """Entropy-regularized value of a fixed policy, by direct linear solve."""
    pi, c = _policy_mean_rewards(mdp, pi, tau)
    return _solve_linear(mdp, pi, c)


def discounted_entropy(mdp: TabularMDP, pi) -> np.ndarray:
    """Fixed point of H(s) = E_pi[-log pi + gamma H(s')], terminals at zero."""
    pi = np.asarray(pi, dtype=np.float64)
    c = np.zeros(mdp.n_states)
    nt = mdp.nonterminal
    c[nt] = entropy(pi[nt])
    return _solve_linear(mdp, pi, c)


def consistency_residuals(mdp: TabularMDP, V, pi, tau) -> np.ndarray:
    """One-step residual ``-V(s) + E[gamma V(s') + r] - tau log pi(a|s)``
    for every non-terminal (s, a); terminal rows are reported as zero."""
    V = np.asarray(V, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    nt = mdp.nonterminal
    if tau > 0 and np.any(pi[nt] <= 0.0):
        raise ValueError("residuals need pi > 0 wherever tau > 0")
    res = q_values(mdp, V) - V[:, None]
    if tau:
        res = res - float(tau) * np.log(pi)
    res[mdp.terminal] = 0.0
    return res


def consistency_residual(mdp, V, pi, tau, state, action) -> float:
    return float(consistency_residuals(mdp, V, pi, tau)[int(state), int(action)])


def path_residual(mdp, V, pi, tau, states, actions) -> float:
    """Discounted sum of exact one-step residuals along a realized path.

    For deterministic dynamics the intermediate values telescope and this
    equals ``-V(s_1) + gamma^(t-1) V(s_t) + sum gamma^(i-1) (r_i - tau log
    pi)``; for stochastic dynamics each step keeps its exact transition
    expectation.
    """
    if len(states) != len(actions):
        raise ValueError("need one state per action along the path")
    res = consistency_residuals(mdp, V, pi, tau)
    total = 0.0
    for i, (s, a) in enumerate(zip(states, actions)):
        total += mdp.gamma ** i * res[int(s), int(a)]
    return float(total)


@dataclass
class ConverseReport:
    value_gap: float
    policy_tv: float
    residual: float
    iterations: int
    converged: bool
    bound: float

    @property
    def passed(self) -> bool:
        return self.converged and self.value_gap <= self.bound and \
            self.policy_tv <= self.bound


def solve_consistency(mdp, tau, tol, damping=0.5, max_iters=100000, v0=None,
                      seed=None):
    """Drive all one-step residuals below ``tol`` from a generic start.

    Alternates extracting the soft-indmax policy of the current values with a
    damped value move toward the implied targets.  Returns (V, pi, iters,
    residual, converged).
    """
    if v0 is not None:
        V = np.array(v0, dtype=np.float64)
    else:
        rng = np.random.default_rng(seed)
        V = rng.uniform(-1.0, 1.0, size=mdp.n_states)
    V[mdp.terminal] = 0.0
    nt = mdp.nonterminal
    residual = math.inf
    for it in range(1, max_iters + 1):
        target = softmax_backup(mdp, V, tau)
        residual = float(np.max(np.abs(target - V)[nt])) if nt.any() else 0.0
        if residual <= tol:
            return V, boltzmann_policy(mdp, V, tau), it, residual, True
        V = V + damping * (target - V)
    return V, boltzmann_policy(mdp, V, tau), max_iters, residual, False


def verify_converse(mdp, tau, solver_tol, seed=None) -> ConverseReport:
    """Solve the consistency equations from random values, then measure how
    far the result sits from the independently computed optimum.

    The distance bound ``10 * solver_tol / (1 - gamma)`` is an engineering
    bound (reported, not claimed tight); the policy part of it needs the
    temperature to not be much smaller than ``gamma / 10``.
    """
    V, pi, iters, residual, converged = solve_consistency(
        mdp, tau, solver_tol, seed=seed)
    ref = softmax_value_iteration(mdp, tau, tol=min(solver_tol * 1e-3, 1e-12))
    pi_star = boltzmann_policy(mdp, ref.values, tau)
    nt = mdp.nonterminal
    value_gap = float(np.max(np.abs(V - ref.values)[nt])) if nt.any() else 0.0
    tv = 0.5 * np.sum(np.abs(pi - pi_star), axis=-1)
    policy_tv = float(np.max(tv[nt])) if nt.any() else 0.0
    denom = max(1.0 - mdp.gamma, 1e-12)
    return ConverseReport(value_gap=value_gap, policy_tv=policy_tv,
                          residual=residual, iterations=iters,
                          converged=converged, bound=10.0 * solver_tol / denom)


@dataclass
class ContractionReport:
    max_excess: float
    pairs_checked: int
    init_agreement: float
    passed: bool


def verify_contraction(mdp, tau, trials, seed=None, slack=1e-12) -> ContractionReport:
    """Check ``|B V1 - B V2|_inf <= gamma |V1 - V2|_inf`` on random pairs and
    that value iteration lands on the same fixed point from two starts."""
    rng = np.random.default_rng(seed)
    max_excess = -math.inf
    ok = True
    for _ in range(int(trials)):
        V1 = rng.uniform(-5.0, 5.0, size=mdp.n_states)
        V2 = rng.uniform(-5.0, 5.0, size=mdp.n_states)
        lhs = float(np.max(np.abs(softmax_backup(mdp, V1, tau) -
                                  softmax_backup(mdp, V2, tau))))
        rhs = mdp.gamma * float(np.max(np.abs(V1 - V2)))
        excess = lhs - rhs
        max_excess = max(max_excess, excess)
        ok = ok and excess <= slack
    a = softmax_value_iteration(mdp, tau, v0=rng.uniform(-5, 5, mdp.n_states))
    b = softmax_value_iteration(mdp, tau, v0=rng.uniform(-5, 5, mdp.n_states))
    agreement = float(np.max(np.abs(a.values - b.values)))
    ok = ok and agreement <= 1e-8
    if trials == 0:
        max_excess = 0.0
    return ContractionReport(max_excess=max_excess, pairs_checked=int(trials),
                             init_agreement=agreement, passed=ok)
