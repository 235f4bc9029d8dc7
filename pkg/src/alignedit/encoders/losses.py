"""Symmetric in-batch contrastive objective over cosine similarities."""
from __future__ import annotations

import numpy as np

from ..numerics import tensor as T
from ..numerics.tensor import ConfigError


def pairwise_cosine(z_a, z_b):
    """(B, B) cosine matrix between two embedding batches."""
    n_a, n_b = z_a.shape[0], z_b.shape[0]
    width = z_a.shape[-1]
    a = T.reshape(z_a, (n_a, 1, width))
    b = T.reshape(z_b, (1, n_b, width))
    return T.cosine_sim(a, b)


def contrastive_loss(z_vis, z_txt, log_tau):
    """Both-direction InfoNCE averaged over the batch.

    Each direction contributes -log softmax of the matched pair; the two
    terms are summed per sample and averaged by 1/n, so a batch of identical
    embeddings scores exactly 2*ln(n).
    """
    n = z_vis.shape[0]
    if n < 1 or z_txt.shape[0] != n:
        raise ConfigError(f"contrastive_loss: bad batch sizes {z_vis.shape} vs {z_txt.shape}")
    sims = pairwise_cosine(z_vis, z_txt)
    inv_tau = T.exp(T.neg(log_tau))
    logits = T.mul(sims, inv_tau)
    targets = np.arange(n)
    loss_vis = T.tmean(T.cross_entropy(logits, targets))
    loss_txt = T.tmean(T.cross_entropy(T.transpose(logits, (1, 0)), targets))
    return T.add(loss_vis, loss_txt)
