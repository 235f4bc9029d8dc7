"""Latent image codec: 32x32x3 renders <-> 8x8x4 latents.

A small patch autoencoder stands in for a pretrained VAE. After training it
is frozen and a global latent scale is fixed so latents are roughly unit
variance, which keeps the noise schedule meaningful.
"""
from __future__ import annotations

import numpy as np

from ..numerics import (ParamStore, RngStream, Tensor, adam_step,
                        forward_backward, nn, no_grad)
from ..numerics import tensor as T
from .schedule import LATENT_SHAPE

_PATCH = 4
_GRID = 8
_HIDDEN = 128
_PATCH_DIM = _PATCH * _PATCH * 3


class CodecError(RuntimeError):
    pass


class LatentCodec:
    """Frozen after training; encode/decode are then deterministic."""

    def __init__(self, params=None, latent_scale=1.0, frozen=False):
        self.params = params or ParamStore()
        self.latent_scale = float(latent_scale)
        self.frozen = bool(frozen)

    @classmethod
    def build(cls, rng):
        codec = cls()
        p, r = codec.params, rng.spawn("codec")
        nn.add_affine(p, r, "enc/fc1", _PATCH_DIM, _HIDDEN)
        nn.add_affine(p, r, "enc/fc2", _HIDDEN, LATENT_SHAPE[-1])
        nn.add_affine(p, r, "dec/fc1", LATENT_SHAPE[-1], _HIDDEN)
        nn.add_affine(p, r, "dec/fc2", _HIDDEN, _PATCH_DIM)
        return codec

    # -- graph-mode ----------------------------------------------------

    def encode_graph(self, P, x):
        h = nn.patchify(x, _PATCH)
        h = T.gelu(nn.affine(P, "enc/fc1", h))
        h = nn.affine(P, "enc/fc2", h)
        z = T.reshape(h, (x.shape[0],) + LATENT_SHAPE)
        return T.mul(z, np.float32(self.latent_scale))

    def decode_graph(self, P, z):
        b = z.shape[0]
        h = T.mul(z, np.float32(1.0 / self.latent_scale))
        h = T.reshape(h, (b, _GRID * _GRID, LATENT_SHAPE[-1]))
        h = T.gelu(nn.affine(P, "dec/fc1", h))
        h = nn.affine(P, "dec/fc2", h)
        return nn.unpatchify(h, _PATCH, _GRID, 3)

    # -- array-mode ----------------------------------------------------

    def encode(self, images):
        with no_grad():
            return self.encode_graph(self.params.tensors(), Tensor(images)).data

    def decode(self, latents):
        with no_grad():
            return self.decode_graph(self.params.tensors(), Tensor(latents)).data

    # -- persistence ---------------------------------------------------

    def state_arrays(self):
        out = {f"codec/{k}": v for k, v in self.params.arrays().items()}
        out["codec_meta/latent_scale"] = np.array([self.latent_scale], dtype=np.float32)
        out["codec_meta/frozen"] = np.array([1.0 if self.frozen else 0.0], dtype=np.float32)
        return out

    @classmethod
    def from_arrays(cls, arrays):
        codec = cls.build(RngStream(0, "init"))
        codec.params.load_arrays(arrays, prefix="codec/")
        codec.latent_scale = float(arrays["codec_meta/latent_scale"][0])
        codec.frozen = bool(arrays["codec_meta/frozen"][0] > 0.5)
        return codec


def train_codec(corpus, seed, steps, batch_size=32, lr=1e-3, holdout=200):
    """Train, freeze, and calibrate the latent scale. Returns (codec, report)."""
    rng = RngStream(seed, "init/codec")
    codec = LatentCodec.build(rng)
    train_ids, holdout_ids = corpus.split()
    holdout_ids = holdout_ids[:holdout]
    data_rng = RngStream(seed, "batch/codec")

    def loss_fn(P, x):
        recon = codec.decode_graph(P, codec.encode_graph(P, x))
        return T.mse(recon, x)

    last = None
    for step in range(steps):
        ids = data_rng.integers(0, len(train_ids), (batch_size,))
        which = "original" if step % 2 == 0 else "edited"
        x = corpus.images([train_ids[i] for i in ids], which)
        try:
            last, grads = forward_backward(loss_fn, codec.params, Tensor(x))
        except Exception as exc:
            raise CodecError(f"codec training diverged at step {step} (seed {seed}): {exc}")
        adam_step(codec.params, grads, lr=lr)

    # calibrate the latent scale on the training split, then freeze
    sample = corpus.images(train_ids[:256], "original")
    raw = codec.encode(sample)
    codec.latent_scale = float(1.0 / max(raw.std(), 1e-6))
    codec.frozen = True

    ho = corpus.images(holdout_ids, "original")
    recon = codec.decode(codec.encode(ho))
    holdout_mse = float(((recon - ho) ** 2).mean())
    report = {"steps": steps, "final_train_loss": last,
              "holdout_mse": holdout_mse, "latent_scale": codec.latent_scale}
    return codec, report
