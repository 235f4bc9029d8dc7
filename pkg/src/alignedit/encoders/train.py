"""Joint contrastive training of the change/text encoder pair.

The latent-mode backbone is frozen; only the trunk, the text encoder, and
the temperature train. Pairs are embedded from independently noised latents
at per-sample random timesteps; scoring-time use is always clean (k=0).
"""
from __future__ import annotations

import numpy as np

from ..backbone import FeatureBackbone, FeatureStack
from ..diffusion import LatentCodec, fd_batch
from ..numerics import (RngStream, Tensor, adam_step, forward_backward,
                        no_grad)
from ..numerics import tensor as T
from .losses import contrastive_loss
from .model import ChangeEncoder, ContrastiveHead, TextEncoder


class AlignmentModel:
    """Frozen bundle: latent backbone + change trunk + text encoder + tau."""

    def __init__(self, backbone, change_encoder, text_encoder, head):
        self.backbone = backbone
        self.change_encoder = change_encoder
        self.text_encoder = text_encoder
        self.head = head

    def embed_pairs_clean(self, codec, images_o, images_e):
        """Embed image pairs through clean (k=0) latents."""
        z_o, z_e = codec.encode(images_o), codec.encode(images_e)
        ks = np.zeros(len(images_o), dtype=np.int64)
        return self.change_encoder.encode(z_o, z_e, ks, ks)

    def embed_latent_pairs(self, latents_o, ks_o, latents_e, ks_e):
        return self.change_encoder.encode(latents_o, latents_e, ks_o, ks_e)

    def embed_text(self, token_ids):
        return self.text_encoder.encode(np.asarray(token_ids))

    def state_arrays(self):
        out = self.backbone.state_arrays("ld")
        out.update({f"trunk/{k}": v for k, v in self.change_encoder.params.arrays().items()})
        out.update({f"txt/{k}": v for k, v in self.text_encoder.params.arrays().items()})
        out.update({f"contrast/{k}": v for k, v in self.head.params.arrays().items()})
        return out

    @classmethod
    def from_arrays(cls, arrays):
        backbone = FeatureBackbone.from_arrays(arrays, "ld")
        rng = RngStream(0, "init")
        change = ChangeEncoder.build(backbone, rng)
        change.params.load_arrays(arrays, prefix="trunk/")
        text = TextEncoder.build(rng)
        text.params.load_arrays(arrays, prefix="txt/")
        head = ContrastiveHead()
        head.params.load_arrays(arrays, prefix="contrast/")
        return cls(backbone, change, text, head)


def _merged_tensors(*stores_with_prefix):
    merged = {}
    for store, prefix in stores_with_prefix:
        for name, t in store.items():
            merged[f"{prefix}{name}"] = t
    return merged


def in_batch_top1(z_vis, z_txt, tokens=None):
    """Fraction of rows whose cosine argmax column carries the right text.

    Instructions repeat across samples, so a hit is "argmax text equals own
    text", not "argmax index equals own index".
    """
    a = z_vis / (np.linalg.norm(z_vis, axis=1, keepdims=True) + 1e-8)
    b = z_txt / (np.linalg.norm(z_txt, axis=1, keepdims=True) + 1e-8)
    winners = np.argmax(a @ b.T, axis=1)
    if tokens is None:
        return float((winners == np.arange(len(a))).mean())
    tokens = np.asarray(tokens)
    return float((tokens[winners] == tokens).all(axis=1).mean())


def retrieval_accuracy(model, codec, corpus, ids, group=32):
    """Mean in-batch top-1 accuracy over clean holdout groups."""
    accs = []
    for lo in range(0, len(ids) - len(ids) % group, group):
        chunk = ids[lo:lo + group]
        z_vis = model.embed_pairs_clean(codec,
                                        corpus.images(chunk, "original"),
                                        corpus.images(chunk, "edited"))
        tokens = corpus.instructions(chunk)
        z_txt = model.embed_text(tokens)
        accs.append(in_batch_top1(z_vis, z_txt, tokens))
    return float(np.mean(accs)) if accs else 0.0


def clean_vs_corrupted_similarity(model, codec, corpus, ids):
    """Mean stored-instruction alignment score, split by the corruption flag."""
    z_vis = model.embed_pairs_clean(codec,
                                    corpus.images(ids, "original"),
                                    corpus.images(ids, "edited"))
    z_txt = model.embed_text(corpus.instructions(ids))
    with no_grad():
        sims = T.cosine_sim(Tensor(z_vis), Tensor(z_txt)).data
    flags = np.array([corpus.records[i].corrupted for i in ids])
    out = {}
    if (~flags).any():
        out["clean_mean_sim"] = float(sims[~flags].mean())
    if flags.any():
        out["corrupted_mean_sim"] = float(sims[flags].mean())
    return out


def train_iclip(ld_student, codec, schedule, corpus, seed, steps,
                batch_size=32, lr=1e-3):
    """Returns (AlignmentModel, report)."""
    if not ld_student.frozen:
        raise ValueError("latent backbone must be frozen for contrastive training")
    if not codec.frozen:
        raise ValueError("codec must be frozen for contrastive training")
    if not isinstance(codec, LatentCodec):
        raise TypeError("codec must be a LatentCodec")

    rng = RngStream(seed, "init/iclip")
    change = ChangeEncoder.build(ld_student, rng)
    text = TextEncoder.build(rng)
    head = ContrastiveHead()
    model = AlignmentModel(ld_student, change, text, head)

    train_ids, holdout_ids = corpus.split()
    originals = np.stack([corpus.original(i) for i in train_ids])
    edited = np.stack([corpus.edited(i) for i in train_ids])
    latents_o = codec.encode(originals)
    latents_e = codec.encode(edited)
    tokens = np.array([corpus.records[i].instruction for i in train_ids], dtype=np.int64)

    data_rng = RngStream(seed, "batch/iclip")
    k_rng = RngStream(seed, "data/iclip-timesteps")
    noise_rng = RngStream(seed, "noise/iclip")

    # one optimizer over all trainable pieces, leaf tensors shared by prefix
    from ..numerics import ParamStore
    trainable = ParamStore()
    for prefix, store in (("trunk/", change.params), ("txt/", text.params),
                          ("contrast/", head.params)):
        for name, t in store.items():
            trainable.adopt(f"{prefix}{name}", t)

    backbone_P = ld_student.params.tensors()
    losses = []
    for step in range(steps):
        picks = data_rng.integers(0, len(train_ids), (batch_size,))
        k1 = k_rng.integers(0, schedule.T + 1, (batch_size,))
        k2 = k_rng.integers(0, schedule.T + 1, (batch_size,))
        noisy_o = fd_batch(latents_o[picks], noise_rng.normal(latents_o[picks].shape),
                           k1, schedule)
        noisy_e = fd_batch(latents_e[picks], noise_rng.normal(latents_e[picks].shape),
                           k2, schedule)
        batch_tokens = tokens[picks]

        def loss_fn(P):
            trunk_P = {n[len("trunk/"):]: t for n, t in P.items() if n.startswith("trunk/")}
            txt_P = {n[len("txt/"):]: t for n, t in P.items() if n.startswith("txt/")}
            z_vis = change.encode_graph(trunk_P, backbone_P,
                                        Tensor(noisy_o.astype(np.float32)),
                                        Tensor(noisy_e.astype(np.float32)), k1, k2)
            z_txt = text.encode_graph(txt_P, batch_tokens)
            return contrastive_loss(z_vis, z_txt, P["contrast/log_tau"])

        loss, grads = forward_backward(loss_fn, trainable)
        losses.append(loss)
        adam_step(trainable, grads, lr=lr)
        head.clamp()

    report = {
        "steps": steps,
        "final_loss": losses[-1] if losses else None,
        "tau": head.tau,
        "holdout_top1": retrieval_accuracy(model, codec, corpus, holdout_ids),
    }
    report.update(clean_vs_corrupted_similarity(model, codec, corpus, holdout_ids))
    return model, report
