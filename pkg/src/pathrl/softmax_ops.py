"""Temperature-scaled log-sum-exp kernels.

The central operator is the "softmax" in the log-sum-exp sense,

    softmax_value(q, tau) = tau * log(sum_a exp(q_a / tau)),

together with its gradient, the "soft indmax"

    soft_indmax(q, tau) = exp((q - softmax_value(q, tau)) / tau),

which maps any real score vector onto the probability simplex.  Everything
is computed in float64 with max-subtraction so that small temperatures do
not overflow.  The zero-temperature limit is deliberately not handled by
these functions; use :func:`hard_max` for that.

All reductions run over the last axis, so a matrix of per-state score rows
can be processed in one call.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "softmax_value",
    "soft_indmax",
    "log_soft_indmax",
    "entropy",
    "hard_max",
    "check_prob_vector",
]

#: Tolerance on "sums to one" for probability vectors.
PROB_ATOL = 1e-12


def _check_scores(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] == 0:
        raise ValueError("score vector must be non-empty")
    if not np.all(np.isfinite(q)):
        raise ValueError("score vector must be finite")
    return q


def _check_temperature(tau: float) -> float:
    tau = float(tau)
    if not tau > 0.0:
        raise ValueError(f"temperature must be positive, got {tau}; "
                         "use hard_max for the zero-temperature limit")
    return tau


def softmax_value(q, tau):
    """Temperature-scaled log-sum-exp of ``q`` over the last axis.

    Satisfies ``max(q) <= softmax_value(q, tau) <= max(q) + tau*log(n)``.
    Returns a float for 1-D input, otherwise an array with the last axis
    reduced.
    """
    q = _check_scores(q)
    tau = _check_temperature(tau)
    m = np.max(q, axis=-1)
    out = m + tau * np.log(np.sum(np.exp((q - m[..., None]) / tau), axis=-1))
    return float(out) if out.ndim == 0 else out


def log_soft_indmax(q, tau):
    """Componentwise ``(q - softmax_value(q, tau)) / tau``, the log-probabilities."""
    q = _check_scores(q)
    tau = _check_temperature(tau)
    m = np.max(q, axis=-1, keepdims=True)
    shifted = (q - m) / tau
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def soft_indmax(q, tau):
    """Normalized exponential of ``q / tau``; the gradient of :func:`softmax_value`.

    The output rows are valid probability vectors (non-negative, summing to
    one up to roundoff).
    """
    return np.exp(log_soft_indmax(q, tau))


def check_prob_vector(p, atol=PROB_ATOL) -> np.ndarray:
    """Validate that ``p`` lies on the probability simplex (last axis)."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] == 0:
        raise ValueError("probability vector must be non-empty")
    if not np.all(np.isfinite(p)):
        raise ValueError("probability vector must be finite")
    if np.any(p < 0.0):
        raise ValueError("probability vector has negative entries")
    sums = np.sum(p, axis=-1)
    if not np.all(np.abs(sums - 1.0) <= atol):
        raise ValueError("probability vector does not sum to 1")
    return p


def entropy(p):
    """Shannon entropy ``-sum_a p_a log p_a`` with ``0*log(0) := 0``.

    ``p`` must be a valid probability vector (or stack of them); the result
    is always non-negative.
    """
    p = check_prob_vector(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    out = -np.sum(terms, axis=-1)
    # Clamp the tiny negative roundoff a one-hot vector can produce.
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def hard_max(q):
    """Maximum of a 1-D score vector and the smallest index attaining it."""
    q = _check_scores(np.atleast_1d(q))
    if q.ndim != 1:
        raise ValueError("hard_max expects a 1-D score vector")
    idx = int(np.argmax(q))
    return float(q[idx]), idx
