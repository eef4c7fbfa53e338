"""Checkpoint save/load for models and optimizer state.

A checkpoint is a single ``.npz`` archive holding every parameter array plus
a JSON metadata blob with the architecture descriptor; float64 arrays
round-trip bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .models import (LinearPolicyValueModel, TabularPolicyValueModel,
                     TabularQModel)
from .optim import AdamOptimizer, SGDOptimizer
from .recurrent import RecurrentPolicyValueModel, RecurrentQModel

__all__ = ["save_checkpoint", "load_checkpoint"]

FORMAT_VERSION = 1


def _build_model(desc: dict):
    kind = desc["kind"]
    if kind == "tabular_pv":
        return TabularPolicyValueModel(desc["n_states"], desc["n_actions"],
                                       sparse_grads=desc.get("sparse_grads", False))
    if kind == "tabular_q":
        return TabularQModel(desc["n_states"], desc["n_actions"], desc["tau"],
                             sparse_grads=desc.get("sparse_grads", False))
    if kind == "linear_pv":
        return LinearPolicyValueModel(desc["n_features"], desc["n_actions"])
    if kind == "recurrent_pv":
        return RecurrentPolicyValueModel(desc["n_obs"], desc["n_actions"],
                                         hidden=desc["hidden"])
    if kind == "recurrent_q":
        return RecurrentQModel(desc["n_obs"], desc["n_actions"], desc["tau"],
                               hidden=desc["hidden"])
    raise ValueError(f"unknown model kind {kind!r}")


def save_checkpoint(path, model, optimizer=None, extra=None):
    meta = {"format_version": FORMAT_VERSION,
            "model": model.descriptor(),
            "extra": extra or {}}
    arrays = {}
    for name, p in model.params.items():
        arrays[f"param::{name}"] = p
    if optimizer is not None:
        opt_meta, opt_arrays = optimizer.state_dict()
        meta["optimizer"] = opt_meta
        for key, arr in opt_arrays.items():
            arrays[f"opt::{key}"] = arr
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Returns (model, optimizer | None, extra dict)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{meta['format_version']}")
        model = _build_model(meta["model"])
        for name, p in model.params.items():
            saved = data[f"param::{name}"]
            if saved.shape != p.shape:
                raise ValueError(f"checkpoint parameter {name!r} has shape "
                                 f"{saved.shape}, expected {p.shape}")
            p[...] = saved
        optimizer = None
        if "optimizer" in meta:
            opt_meta = meta["optimizer"]
            optimizer = (SGDOptimizer() if opt_meta["kind"] == "sgd"
                         else AdamOptimizer())
            opt_arrays = {key[len("opt::"):]: data[key]
                          for key in data.files if key.startswith("opt::")}
            optimizer.load_state(opt_meta, opt_arrays)
        return model, optimizer, meta.get("extra", {})
