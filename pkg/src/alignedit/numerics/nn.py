"""Model building blocks over the autodiff core.

Everything here is a thin composition of the primitive op set; parameters
live in a ParamStore under slash-separated name prefixes.
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T


def xavier_uniform(rng, fan_in, fan_out, shape=None):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, shape or (fan_in, fan_out))


def add_affine(store, rng, name, fan_in, fan_out):
    store.add(f"{name}/w", xavier_uniform(rng.spawn(name), fan_in, fan_out))
    store.add(f"{name}/b", np.zeros(fan_out, dtype=np.float32))


def affine(P, name, x):
    return T.affine(x, P[f"{name}/w"], P[f"{name}/b"])


def add_layer_norm(store, name, width):
    store.add(f"{name}/g", np.ones(width, dtype=np.float32))
    store.add(f"{name}/b", np.zeros(width, dtype=np.float32))


def layer_norm(P, name, x):
    return T.layer_norm(x, P[f"{name}/g"], P[f"{name}/b"])


def add_mlp(store, rng, name, width, hidden):
    add_layer_norm(store, f"{name}/ln", width)
    add_affine(store, rng, f"{name}/fc1", width, hidden)
    add_affine(store, rng, f"{name}/fc2", hidden, width)


def mlp(P, name, x):
    """Pre-LN residual MLP sub-block."""
    h = layer_norm(P, f"{name}/ln", x)
    h = affine(P, f"{name}/fc2", T.gelu(affine(P, f"{name}/fc1", h)))
    return T.add(x, h)


def add_mixer_block(store, rng, name, n_tokens, width, hidden=None):
    hidden = hidden or width
    add_layer_norm(store, f"{name}/ln_tok", width)
    add_affine(store, rng, f"{name}/tok", n_tokens, n_tokens)
    add_mlp(store, rng, f"{name}/mlp", width, hidden)


def mixer_block(P, name, x):
    """Token-mixing + channel-MLP residual block; x is (B, tokens, width)."""
    u = layer_norm(P, f"{name}/ln_tok", x)
    u = T.transpose(u, (0, 2, 1))
    u = affine(P, f"{name}/tok", u)
    u = T.transpose(u, (0, 2, 1))
    x = T.add(x, u)
    return mlp(P, f"{name}/mlp", x)


def add_attention_block(store, rng, name, width, hidden=None):
    hidden = hidden or width
    add_layer_norm(store, f"{name}/ln_attn", width)
    for proj in ("q", "k", "v", "o"):
        add_affine(store, rng, f"{name}/{proj}", width, width)
    add_mlp(store, rng, f"{name}/mlp", width, hidden)


def attention_block(P, name, x, mask=None):
    """Single-head pre-LN attention block; x is (B, tokens, width).

    `mask` is an additive (tokens, tokens) numpy array (-inf style) for
    causal decoding.
    """
    width = x.shape[-1]
    u = layer_norm(P, f"{name}/ln_attn", x)
    q = affine(P, f"{name}/q", u)
    k = affine(P, f"{name}/k", u)
    v = affine(P, f"{name}/v", u)
    scores = T.matmul(q, T.transpose(k, (0, 2, 1)))
    scores = T.mul(scores, np.float32(1.0 / math.sqrt(width)))
    if mask is not None:
        scores = T.add(scores, mask.astype(np.float32))
    attn = T.softmax(scores, axis=-1)
    x = T.add(x, affine(P, f"{name}/o", T.matmul(attn, v)))
    return mlp(P, f"{name}/mlp", x)


def causal_mask(n):
    m = np.triu(np.full((n, n), -1e9, dtype=np.float32), k=1)
    return m


def one_hot(ids, depth, dtype=np.float32):
    ids = np.asarray(ids)
    out = np.zeros(ids.shape + (depth,), dtype=dtype)
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def embed_tokens(P, name, ids, vocab):
    """Token embedding lookup as one-hot @ table (stays in the primitive op set)."""
    return T.matmul(T.Tensor(one_hot(ids, vocab), op="onehot"), P[f"{name}/table"])


def add_token_embedding(store, rng, name, vocab, width):
    store.add(f"{name}/table", 0.02 * rng.spawn(name).normal((vocab, width)))


def sinusoidal_embedding(t, width):
    """Standard sinusoidal position/timestep features; t is an int array."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = width // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=-1)
    return emb.astype(np.float32)


def patchify(x, patch):
    """(B, H, W, C) -> (B, tokens, patch*patch*C) in raster order."""
    b, h, w, c = x.shape
    gh, gw = h // patch, w // patch
    t = T.reshape(x, (b, gh, patch, gw, patch, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (b, gh * gw, patch * patch * c))


def unpatchify(x, patch, grid, channels):
    """Inverse of patchify: (B, tokens, patch*patch*C) -> (B, H, W, C)."""
    b = x.shape[0]
    t = T.reshape(x, (b, grid, grid, patch, patch, channels))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (b, grid * patch, grid * patch, channels))


def add_conv3x3(store, rng, name, c_in, c_out):
    add_affine(store, rng, name, 9 * c_in, c_out)


def conv3x3(P, name, x):
    """3x3 same-padding convolution as shifted slices + matmul; x is (B,H,W,C)."""
    b, h, w, c = x.shape
    zrow = T.Tensor(np.zeros((b, 1, w, c), dtype=np.float32), op="pad")
    t = T.concat([zrow, x, zrow], axis=1)
    zcol = T.Tensor(np.zeros((b, h + 2, 1, c), dtype=np.float32), op="pad")
    t = T.concat([zcol, t, zcol], axis=2)
    shifts = [t[:, dy:dy + h, dx:dx + w, :] for dy in range(3) for dx in range(3)]
    stacked = T.concat(shifts, axis=-1)
    flat = T.reshape(stacked, (b * h * w, 9 * c))
    out = affine(P, name, flat)
    return T.reshape(out, (b, h, w, out.shape[-1]))
