"""Reverse-mode autodiff over numpy arrays.

Storage is float32 by default; the finite-difference oracle runs the same
graphs in float64. Every op validates shapes and rejects non-finite values
at its output boundary.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "NumericsError", "ShapeError", "ConfigError", "no_grad",
    "add", "sub", "mul", "neg", "matmul", "affine", "relu", "gelu",
    "exp", "log", "tsum", "tmean", "reshape", "transpose", "concat",
    "softmax", "layer_norm", "cosine_sim", "cross_entropy", "mse",
    "COSINE_EPS",
]

COSINE_EPS = 1e-8


class NumericsError(RuntimeError):
    """Numerical failure inside the graph (non-finite value, bad input)."""


class ShapeError(NumericsError):
    """Shape mismatch, reported with the op name and offending dims."""


class ConfigError(ValueError):
    """Invalid hyperparameter or configuration value."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that skips graph construction (forward values only)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _as_array(x, like=None):
    if isinstance(x, np.ndarray):
        return x
    dtype = like.dtype if like is not None else np.float32
    return np.asarray(x, dtype=dtype)


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite value produced by op '{op}'")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph holding a numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        _check_finite(arr, op)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False, op="detach")

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, grad={self.requires_grad})"

    # -- graph traversal -------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, pgrad in node._backward(node.grad):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pgrad.astype(parent.data.dtype, copy=True)
                else:
                    parent.grad += pgrad.astype(parent.data.dtype, copy=False)

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(_as_array(x, like), op="const")


def _make(data, op, parents, backward):
    _check_finite(data, op)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward, op=op)
    return Tensor(data, op=op)


# -- elementwise arithmetic ------------------------------------------------

def add(a, b):
    a = _lift(a)
    b = _lift(b, like=a.data)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def backward(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return _make(out, "add", (a, b), backward)


def sub(a, b):
    a = _lift(a)
    b = _lift(b, like=a.data)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}")

    def backward(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(-g, b.data.shape)))

    return _make(out, "sub", (a, b), backward)


def mul(a, b):
    a = _lift(a)
    b = _lift(b, like=a.data)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.data.shape)),
                (b, _unbroadcast(g * a.data, b.data.shape)))

    return _make(out, "mul", (a, b), backward)


def neg(a):
    a = _lift(a)

    def backward(g):
        return ((a, -g),)

    return _make(-a.data, "neg", (a,), backward)


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.data.ndim < 1 or b.data.ndim < 2:
        raise ShapeError(f"matmul: needs ndim>=2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ((a, _unbroadcast(ga, a.data.shape)), (b, _unbroadcast(gb, b.data.shape)))

    return _make(out, "matmul", (a, b), backward)


def affine(x, w, b):
    """x @ w + b."""
    return add(matmul(x, w), b)


# -- nonlinearities ----------------------------------------------------------

def relu(a):
    a = _lift(a)
    mask = a.data > 0

    def backward(g):
        return ((a, g * mask),)

    return _make(np.where(mask, a.data, 0), "relu", (a,), backward)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a):
    """tanh-approximation GELU with its exact derivative."""
    a = _lift(a)
    x = a.data
    u = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(u)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * (x * x))
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
        return ((a, g * local),)

    return _make(out, "gelu", (a,), backward)


def exp(a):
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def backward(g):
        return ((a, g * out),)

    return _make(out, "exp", (a,), backward)


def log(a):
    a = _lift(a)
    if np.any(a.data <= 0):
        raise NumericsError("log: non-positive input")
    out = np.log(a.data)

    def backward(g):
        return ((a, g / a.data),)

    return _make(out, "log", (a,), backward)


# -- reductions --------------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = _lift(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.data.shape).copy()),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return ((a, np.broadcast_to(gg, a.data.shape).copy()),)

    return _make(out, "sum", (a,), backward)


def tmean(a, axis=None, keepdims=False):
    a = _lift(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g / n, a.data.shape).copy()),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return ((a, np.broadcast_to(gg / n, a.data.shape).copy()),)

    return _make(out, "mean", (a,), backward)


# -- shape plumbing ----------------------------------------------------------

def reshape(a, shape):
    a = _lift(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")

    def backward(g):
        return ((a, g.reshape(a.data.shape)),)

    return _make(out, "reshape", (a,), backward)


def transpose(a, axes=None):
    a = _lift(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        return ((a, np.transpose(g, inv)),)

    return _make(out, "transpose", (a,), backward)


def _getitem(a, idx):
    a = _lift(a)
    out = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return ((a, full),)

    return _make(out, "slice", (a,), backward)


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}")
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        return tuple((t, p) for t, p in zip(tensors, parts))

    return _make(out, "concat", tuple(tensors), backward)


# -- fused ops ---------------------------------------------------------------

def softmax(a, axis=-1):
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((a, (g - dot) * out),)

    return _make(out, "softmax", (a,), backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis, then scale and shift."""
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeError(
            f"layer_norm: gain/bias {gain.shape}/{bias.shape} do not match feature dim of {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    n = x.data.shape[-1]

    def backward(g):
        ggain = _unbroadcast(g * xhat, gain.data.shape)
        gbias = _unbroadcast(g, bias.data.shape)
        gx_hat = g * gain.data
        gx = inv * (gx_hat
                    - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return ((x, gx), (gain, ggain), (bias, gbias))

    return _make(out, "layer_norm", (x, gain, bias), backward)


def cosine_sim(a, b, eps=COSINE_EPS):
    """Cosine similarity over the last axis, broadcasting the leading axes.

    The denominator carries +eps so an all-zero vector yields similarity 0
    instead of NaN.
    """
    a, b = _lift(a), _lift(b)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"cosine_sim: last dims differ, {a.shape} vs {b.shape}")
    dot = (a.data * b.data).sum(axis=-1)
    na = np.sqrt((a.data * a.data).sum(axis=-1))
    nb = np.sqrt((b.data * b.data).sum(axis=-1))
    denom = na * nb + eps
    out = dot / denom

    def backward(g):
        na_s = np.maximum(na, 1e-12)
        nb_s = np.maximum(nb, 1e-12)
        ge = (g / denom)[..., None]
        gproj = (g * out / denom)[..., None]
        ga = ge * b.data - gproj * (nb / na_s)[..., None] * a.data
        gb = ge * a.data - gproj * (na / nb_s)[..., None] * b.data
        return ((a, _unbroadcast(ga, a.data.shape)), (b, _unbroadcast(gb, b.data.shape)))

    return _make(out, "cosine_sim", (a, b), backward)


def cross_entropy(logits, target_ids):
    """Per-position cross-entropy from raw logits and integer class ids."""
    logits = _lift(logits)
    ids = np.asarray(target_ids)
    if ids.shape != logits.shape[:-1]:
        raise ShapeError(
            f"cross_entropy: targets {ids.shape} do not match logits {logits.shape}")
    if np.any(ids < 0) or np.any(ids >= logits.shape[-1]):
        raise NumericsError("cross_entropy: target id out of range")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1)) + logits.data.max(axis=-1)
    picked = np.take_along_axis(logits.data, ids[..., None], axis=-1)[..., 0]
    out = lse - picked

    def backward(g):
        p = np.exp(shifted)
        p /= p.sum(axis=-1, keepdims=True)
        onehot = np.zeros_like(logits.data)
        np.put_along_axis(onehot, ids[..., None], 1.0, axis=-1)
        return ((logits, g[..., None] * (p - onehot)),)

    return _make(out, "cross_entropy", (logits,), backward)


def mse(a, b):
    """Mean squared error over all elements (scalar)."""
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes differ, {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = np.asarray((diff * diff).mean(), dtype=a.data.dtype)
    n = a.data.size

    def backward(g):
        scale = 2.0 * g / n
        return ((a, scale * diff), (b, -scale * diff))

    return _make(out, "mse", (a, b), backward)
