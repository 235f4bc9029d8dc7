"""Visual-change and instruction encoders sharing one embedding space.

The change encoder applies one shared feature backbone to both inputs, feeds
the final-feature difference into a residual trunk, and adds each per-block
intermediate difference to the matching trunk layer input, so the output
depends on the input pair only through those differences. The text encoder
is a small token-mixer over the fixed-length instruction with PAD positions
masked out of the pooling.
"""
from __future__ import annotations

import math

import numpy as np

from ..backbone import N_BLOCKS, WIDTH
from ..corpus.vocab import N_TOK, PAD_ID, VOCAB_SIZE
from ..numerics import ParamStore, RngStream, Tensor, nn, no_grad
from ..numerics import tensor as T
from ..numerics.tensor import ShapeError

TAU_MIN, TAU_MAX = 0.01, 1.0
TAU_INIT = 0.07


class ChangeEncoder:
    """Trunk over backbone feature differences; the backbone stays frozen."""

    def __init__(self, backbone, params=None):
        self.backbone = backbone
        self.params = params or ParamStore()

    @classmethod
    def build(cls, backbone, rng):
        enc = cls(backbone)
        p, r = enc.params, rng.spawn("trunk")
        nn.add_layer_norm(p, "ln_in", WIDTH)
        for i in range(N_BLOCKS):
            nn.add_layer_norm(p, f"ln_inj{i}", WIDTH)
            nn.add_mlp(p, r, f"block{i}", WIDTH, WIDTH)
        nn.add_affine(p, r, "proj", WIDTH, WIDTH)
        return enc

    def encode_stacks(self, P, stack_o, stack_e):
        """Embedding from two feature stacks (graph mode).

        Differences are layer-normalized on the way in: edit magnitudes vary
        by orders of magnitude (background recolor vs one shape) and the
        cosine-based objective only cares about direction. LN(0) is still a
        constant, so identical pairs keep collapsing to one output.
        """
        h = nn.layer_norm(P, "ln_in", T.sub(stack_e.final, stack_o.final))
        for i in range(N_BLOCKS):
            diff_i = T.sub(stack_e.intermediates[i], stack_o.intermediates[i])
            h = nn.mlp(P, f"block{i}", T.add(h, nn.layer_norm(P, f"ln_inj{i}", diff_i)))
        return nn.affine(P, "proj", h)

    def encode_graph(self, P, backbone_P, x_o, x_e, t_o=None, t_e=None):
        mode = self.backbone.config.mode
        if x_o.shape != x_e.shape:
            raise ShapeError(
                f"encode_change: mixed or mismatched inputs {x_o.shape} vs {x_e.shape}")
        if mode == "latent" and (t_o is None or t_e is None):
            raise ShapeError("encode_change: latent mode requires both timesteps")
        stack_o = self.backbone.forward(backbone_P, x_o, t_o)
        stack_e = self.backbone.forward(backbone_P, x_e, t_e)
        return self.encode_stacks(P, stack_o, stack_e)

    def encode(self, x_o, x_e, t_o=None, t_e=None):
        """Array-mode embedding of a pair batch."""
        with no_grad():
            out = self.encode_graph(self.params.tensors(),
                                    self.backbone.params.tensors(),
                                    Tensor(x_o), Tensor(x_e), t_o, t_e)
            return out.data


class TextEncoder:
    def __init__(self, params=None):
        self.params = params or ParamStore()

    @classmethod
    def build(cls, rng):
        enc = cls()
        p, r = enc.params, rng.spawn("txt")
        nn.add_token_embedding(p, r, "emb", VOCAB_SIZE, WIDTH)
        p.add("pos", 0.02 * r.spawn("pos").normal((N_TOK, WIDTH)))
        for i in range(N_BLOCKS):
            nn.add_mixer_block(p, r, f"block{i}", N_TOK, WIDTH)
        nn.add_affine(p, r, "proj", WIDTH, WIDTH)
        return enc

    def encode_graph(self, P, token_ids):
        token_ids = np.asarray(token_ids)
        if token_ids.ndim != 2 or token_ids.shape[1] != N_TOK:
            raise ShapeError(f"text encoder expects (B, {N_TOK}) ids, got {token_ids.shape}")
        h = T.add(nn.embed_tokens(P, "emb", token_ids, VOCAB_SIZE), P["pos"])
        for i in range(N_BLOCKS):
            h = nn.mixer_block(P, f"block{i}", h)
        # mean over non-PAD positions only
        keep = (token_ids != PAD_ID).astype(np.float32)
        weights = keep / keep.sum(axis=1, keepdims=True)
        pooled = T.tsum(T.mul(h, weights[:, :, None]), axis=1)
        return nn.affine(P, "proj", pooled)

    def encode(self, token_ids):
        with no_grad():
            return self.encode_graph(self.params.tensors(), token_ids).data


class ContrastiveHead:
    """Learnable log-temperature, clamped to keep tau inside [0.01, 1.0]."""

    def __init__(self, params=None):
        self.params = params or ParamStore()
        if "log_tau" not in self.params:
            self.params.add("log_tau", np.array([math.log(TAU_INIT)], dtype=np.float32))

    @property
    def tau(self):
        return float(np.exp(self.params["log_tau"].data[0]))

    def clamp(self):
        t = self.params["log_tau"]
        t.data = np.clip(t.data, math.log(TAU_MIN), math.log(TAU_MAX))
