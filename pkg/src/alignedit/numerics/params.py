"""Named parameter collection with deterministic iteration order."""
from __future__ import annotations

import numpy as np

from .tensor import ConfigError, Tensor


class ParamStore:
    """Ordered map name -> trainable Tensor plus per-parameter optimizer slots.

    Iteration is always lexicographic by name, so training trajectories do
    not depend on insertion order.
    """

    def __init__(self):
        self._params = {}
        self.opt_state = {}

    def add(self, name, array):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float32), requires_grad=True, op=f"param:{name}")
        self._params[name] = t
        return t

    def adopt(self, name, tensor):
        """Register an existing leaf Tensor (shared with another store)."""
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        self._params[name] = tensor
        return tensor

    def names(self):
        return sorted(self._params)

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        return self._params[name]

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self.names())

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def tensors(self):
        """Live name -> Tensor mapping for building graphs."""
        return dict(self._params)

    def const_tensors(self):
        """Gradient-blocking view, for frozen models inside a training graph."""
        return {name: Tensor(t.data, requires_grad=False, op=f"frozen:{name}")
                for name, t in self.items()}

    def arrays(self):
        return {name: t.data.copy() for name, t in self.items()}

    def n_scalars(self):
        return sum(t.data.size for t in self._params.values())

    def load_arrays(self, arrays, prefix=""):
        """Overwrite matching parameters in place from name -> array."""
        for name, t in self.items():
            key = prefix + name
            if key in arrays:
                src = np.asarray(arrays[key], dtype=np.float32)
                if src.shape != t.data.shape:
                    raise ConfigError(
                        f"checkpoint shape mismatch for {name}: {src.shape} vs {t.data.shape}")
                t.data = src.copy()

    def subset(self, prefix):
        names = [n for n in self.names() if n.startswith(prefix)]
        return names


def forward_backward(loss_fn, params, *inputs):
    """Build the graph with `loss_fn(tensors, *inputs)` and backpropagate.

    Returns (loss value, grads dict). Parameters not reachable from the loss
    get exact-zero gradients.
    """
    tensors = params.tensors()
    loss = loss_fn(tensors, *inputs)
    if not isinstance(loss, Tensor):
        raise ConfigError("loss_fn must return a Tensor")
    loss.backward()
    grads = {}
    for name, t in params.items():
        grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        t.grad = None
    return float(loss.data), grads
