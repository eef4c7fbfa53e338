"""Gradient-ascent optimizers over named parameter groups.

Updates follow the ``p += lr * delta`` convention: the training rules hand
over ascent directions (which descend the squared consistency objective).
Policy-group and value-group parameters receive separate learning rates.
"""

from __future__ import annotations

import numpy as np

from .models import GradAccumulator, GradientError, Model

__all__ = ["SGDOptimizer", "AdamOptimizer", "make_optimizer", "apply_update"]


class SGDOptimizer:
    kind = "sgd"

    def apply(self, model: Model, acc: GradAccumulator, lrs: dict):
        for name, p in model.params.items():
            lr = lrs[model.param_group(name)]
            for index, values in acc.chunks(name):
                if index is None:
                    p += lr * values
                else:
                    np.add.at(p, index, lr * values)

    def state_dict(self):
        return {"kind": self.kind}, {}

    def load_state(self, meta, arrays):
        pass


class AdamOptimizer:
    """Adam with bias correction, applied in ascent direction.

    The very first step has magnitude close to ``lr`` regardless of the
    gradient scale.  Needs dense gradients, so it cannot drive models that
    accumulate sparsely.
    """

    kind = "adam"

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {}
        self.v = {}

    def apply(self, model: Model, acc: GradAccumulator, lrs: dict):
        if model.sparse_grads:
            raise GradientError("Adam needs dense gradients; use SGD for "
                                "models with sparse lookup tables")
        grads = acc.to_dense()
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in model.params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            lr = lrs[model.param_group(name)]
            p += lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        meta = {"kind": self.kind, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "t": self.t}
        arrays = {}
        for name, arr in self.m.items():
            arrays[f"m::{name}"] = arr
        for name, arr in self.v.items():
            arrays[f"v::{name}"] = arr
        return meta, arrays

    def load_state(self, meta, arrays):
        self.beta1 = float(meta["beta1"])
        self.beta2 = float(meta["beta2"])
        self.eps = float(meta["eps"])
        self.t = int(meta["t"])
        for key, arr in arrays.items():
            which, name = key.split("::", 1)
            (self.m if which == "m" else self.v)[name] = arr.copy()


def make_optimizer(kind: str):
    if kind == "sgd":
        return SGDOptimizer()
    if kind == "adam":
        return AdamOptimizer()
    raise ValueError(f"unknown optimizer {kind!r}")


def apply_update(model, acc, optimizer, lr_policy, lr_value, clip_norm=None):
    """Clip (optionally) and apply one accumulated update.

    Non-finite gradients were already rejected at accumulation time; the
    global-norm clip rescales the whole accumulator when it exceeds
    ``clip_norm``.
    """
    if lr_policy < 0 or lr_value < 0:
        raise ValueError("learning rates must be non-negative")
    if clip_norm is not None:
        norm = acc.global_norm()
        if norm > clip_norm:
            acc.scale(clip_norm / norm)
    optimizer.apply(model, acc, {"policy": lr_policy, "value": lr_value})
