"""Adam optimizer over a ParamStore."""
from __future__ import annotations

import numpy as np

from .tensor import ConfigError


def adam_step(params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place.

    Optimizer state lives on the store and is created lazily (zeros) the
    first time a parameter is updated.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    for name, t in params.items():
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float32)
        state = params.opt_state.get(name)
        if state is None:
            state = {"m": np.zeros_like(t.data), "v": np.zeros_like(t.data), "t": 0}
            params.opt_state[name] = state
        state["t"] += 1
        state["m"] = beta1 * state["m"] + (1 - beta1) * g
        state["v"] = beta2 * state["v"] + (1 - beta2) * g * g
        mhat = state["m"] / (1 - beta1 ** state["t"])
        vhat = state["v"] / (1 - beta2 ** state["t"])
        t.data = t.data - np.float32(lr) * mhat / (np.sqrt(vhat) + np.float32(eps))
