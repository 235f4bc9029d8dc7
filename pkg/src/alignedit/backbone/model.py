"""Feature backbone emitting a final pooled feature plus per-block features.

Two input modes share the architecture: `image` consumes 32x32x3 renders,
`latent` consumes 8x8x4 latents together with a timestep whose sinusoidal
embedding is added to every block input. Per-block intermediates are pooled
over tokens so stacks from either mode compare one-to-one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import ParamStore, RngStream, Tensor, nn, no_grad
from ..numerics import tensor as T
from ..numerics.tensor import ShapeError

WIDTH = 64
N_BLOCKS = 4
PATCH = 4


@dataclass
class FeatureStack:
    final: object                 # (B, WIDTH)
    intermediates: list           # N_BLOCKS entries of (B, WIDTH)

    def __post_init__(self):
        if len(self.intermediates) != N_BLOCKS:
            raise ShapeError(
                f"feature stack needs {N_BLOCKS} intermediates, got {len(self.intermediates)}")

    def as_arrays(self):
        def arr(x):
            return x.data if isinstance(x, Tensor) else np.asarray(x)
        return FeatureStack(arr(self.final), [arr(i) for i in self.intermediates])


@dataclass
class BackboneConfig:
    mode: str                     # "image" | "latent"
    in_size: int = 32
    in_channels: int = 3
    width: int = WIDTH
    blocks: int = N_BLOCKS
    patch: int = PATCH

    @classmethod
    def image(cls):
        return cls(mode="image", in_size=32, in_channels=3)

    @classmethod
    def latent(cls):
        return cls(mode="latent", in_size=8, in_channels=4)

    @property
    def tokens(self):
        return (self.in_size // self.patch) ** 2

    @property
    def patch_dim(self):
        return self.patch * self.patch * self.in_channels


class FeatureBackbone:
    def __init__(self, config, params=None, frozen=False):
        self.config = config
        self.params = params or ParamStore()
        self.frozen = bool(frozen)

    @classmethod
    def build(cls, config, rng):
        model = cls(config)
        p, r = model.params, rng.spawn(f"backbone/{config.mode}")
        nn.add_affine(p, r, "embed", config.patch_dim, config.width)
        if config.mode == "latent":
            nn.add_affine(p, r, "temb", config.width, config.width)
        for i in range(config.blocks):
            nn.add_mixer_block(p, r, f"block{i}", config.tokens, config.width)
        nn.add_affine(p, r, "head", config.width, config.width)
        return model

    def forward(self, P, x, t=None):
        """x: (B, H, W, C) Tensor; t: per-sample int array in latent mode."""
        cfg = self.config
        if x.shape[1:] != (cfg.in_size, cfg.in_size, cfg.in_channels):
            raise ShapeError(f"backbone[{cfg.mode}]: expected "
                             f"(B,{cfg.in_size},{cfg.in_size},{cfg.in_channels}), got {x.shape}")
        if cfg.mode == "latent":
            if t is None:
                raise ShapeError("backbone[latent]: timestep input required")
            temb = nn.sinusoidal_embedding(t, cfg.width)
            temb = nn.affine(P, "temb", Tensor(temb, op="temb"))
            temb = T.reshape(temb, (temb.shape[0], 1, cfg.width))
        h = nn.affine(P, "embed", nn.patchify(x, cfg.patch))
        inters = []
        for i in range(cfg.blocks):
            if cfg.mode == "latent":
                h = T.add(h, temb)
            h = nn.mixer_block(P, f"block{i}", h)
            inters.append(T.tmean(h, axis=1))
        final = nn.affine(P, "head", T.tmean(h, axis=1))
        return FeatureStack(final, inters)

    def features(self, x, t=None):
        """Array-mode forward (no graph)."""
        with no_grad():
            return self.forward(self.params.tensors(), Tensor(x), t).as_arrays()

    def state_arrays(self, prefix):
        out = {f"{prefix}/{k}": v for k, v in self.params.arrays().items()}
        out[f"{prefix}_meta/mode"] = np.array(
            [0.0 if self.config.mode == "image" else 1.0], dtype=np.float32)
        out[f"{prefix}_meta/frozen"] = np.array([1.0 if self.frozen else 0.0], dtype=np.float32)
        return out

    @classmethod
    def from_arrays(cls, arrays, prefix):
        mode = "image" if arrays[f"{prefix}_meta/mode"][0] < 0.5 else "latent"
        config = BackboneConfig.image() if mode == "image" else BackboneConfig.latent()
        model = cls.build(config, RngStream(0, "init"))
        model.params.load_arrays(arrays, prefix=f"{prefix}/")
        model.frozen = bool(arrays[f"{prefix}_meta/frozen"][0] > 0.5)
        return model
