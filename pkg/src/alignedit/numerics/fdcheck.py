"""Finite-difference gradient oracle.

Central differences in float64 against the analytic gradients from the same
graph, also evaluated in float64. The oracle only re-runs forward passes,
so it stays independent of the backward code it is checking.
"""
from __future__ import annotations

import numpy as np

from .params import ParamStore, forward_backward
from .rng import RngStream
from .tensor import ConfigError, Tensor


def _loss_value(loss_fn, arrays, inputs):
    tensors = {name: Tensor(arr, requires_grad=False, op=f"fd:{name}")
               for name, arr in arrays.items()}
    loss = loss_fn(tensors, *inputs)
    return float(loss.data)


def fd_check(loss_fn, params, *inputs, h=1e-3, max_coords=16, seed=0, analytic=None):
    """Max relative error per parameter between analytic and central-difference grads.

    relative error = |analytic - central| / (|central| + 1e-8), maximised over
    up to `max_coords` sampled coordinates of each parameter. Pass `analytic`
    to check externally produced gradients instead of the graph's own.
    """
    if params.n_scalars() > 10 ** 5:
        raise ConfigError("fd_check: parameter count exceeds 1e5 scalars")
    base64 = {name: t.data.astype(np.float64) for name, t in params.items()}

    if analytic is None:
        p64 = ParamStore()
        for name, arr in base64.items():
            p64.add(name, arr)
            p64[name].data = arr.copy()  # keep float64 for the oracle run
        _, analytic = forward_backward(loss_fn, p64, *inputs)

    rng = RngStream(seed, "fdcheck")
    errors = {}
    for name in sorted(base64):
        arr = base64[name]
        flat = arr.reshape(-1)
        n = flat.size
        if n <= max_coords:
            coords = np.arange(n)
        else:
            coords = rng.spawn(name).integers(0, n, shape=(max_coords,))
        worst = 0.0
        grad_flat = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        for c in coords:
            c = int(c)
            orig = flat[c]
            flat[c] = orig + h
            up = _loss_value(loss_fn, base64, inputs)
            flat[c] = orig - h
            down = _loss_value(loss_fn, base64, inputs)
            flat[c] = orig
            central = (up - down) / (2.0 * h)
            rel = abs(grad_flat[c] - central) / (abs(central) + 1e-8)
            worst = max(worst, rel)
        errors[name] = worst
    return errors
