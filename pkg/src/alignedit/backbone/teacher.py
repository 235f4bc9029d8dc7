"""Teacher backbone trained on scene-attribute supervision, then frozen.

The attribute head (background color, per-kind presence, per-kind color) is
discarded after training; only the backbone ships. Labels come from the
exact inverse rasterizer, so no extra manifest columns are needed.
"""
from __future__ import annotations

import numpy as np

from ..corpus import scenes
from ..numerics import (ParamStore, RngStream, Tensor, adam_step,
                        forward_backward, nn, no_grad)
from ..numerics import tensor as T
from .model import BackboneConfig, FeatureBackbone


class TrainingDiverged(RuntimeError):
    pass


def scene_labels(scene):
    """(background id, presence[3], color id per kind or -1)."""
    presence = np.zeros(3, dtype=np.int64)
    colors = np.full(3, -1, dtype=np.int64)
    for s in scene.shapes:
        ki = scenes.KINDS.index(s.kind)
        presence[ki] = 1
        colors[ki] = s.color
    return scene.background, presence, colors


def _label_arrays(images):
    bgs, pres, cols = [], [], []
    for img in images:
        bg, p, c = scene_labels(scenes.scene_from_image(img))
        bgs.append(bg)
        pres.append(p)
        cols.append(c)
    return np.array(bgs), np.stack(pres), np.stack(cols)


def _add_attribute_head(store, rng):
    nn.add_affine(store, rng, "head_trunk", 64, 64)
    nn.add_affine(store, rng, "head_bg", 64, scenes.N_COLORS)
    for i in range(3):
        nn.add_affine(store, rng, f"head_presence{i}", 64, 2)
        nn.add_affine(store, rng, f"head_color{i}", 64, scenes.N_COLORS)


def _head_feature(P, stack):
    return T.gelu(nn.affine(P, "head_trunk", stack.final))


def _attribute_loss(model, P, x, bgs, pres, cols):
    f = _head_feature(P, model.forward(P, x))
    total = T.tmean(T.cross_entropy(nn.affine(P, "head_bg", f), bgs))
    for i in range(3):
        ce_p = T.tmean(T.cross_entropy(nn.affine(P, f"head_presence{i}", f), pres[:, i]))
        total = T.add(total, ce_p)
        mask = (cols[:, i] >= 0).astype(np.float32)
        if mask.any():
            safe = np.where(cols[:, i] >= 0, cols[:, i], 0)
            ce_c = T.cross_entropy(nn.affine(P, f"head_color{i}", f), safe)
            total = T.add(total, T.mul(T.tmean(T.mul(ce_c, mask)),
                                       np.float32(1.0 / max(mask.mean(), 1e-6))))
    return total


def _attribute_accuracy(model, P, x, bgs, pres, cols):
    with no_grad():
        f = _head_feature(P, model.forward(P, Tensor(x)))
        bg_acc = float((np.argmax(nn.affine(P, "head_bg", f).data, -1) == bgs).mean())
        pres_accs, col_accs = [], []
        for i in range(3):
            pred = np.argmax(nn.affine(P, f"head_presence{i}", f).data, -1)
            pres_accs.append(float((pred == pres[:, i]).mean()))
            mask = cols[:, i] >= 0
            if mask.any():
                pred_c = np.argmax(nn.affine(P, f"head_color{i}", f).data, -1)
                col_accs.append(float((pred_c[mask] == cols[:, i][mask]).mean()))
    presence_acc = float(np.mean(pres_accs))
    color_acc = float(np.mean(col_accs)) if col_accs else 1.0
    macro = float(np.mean([bg_acc, presence_acc, color_acc]))
    return {"bg_acc": bg_acc, "presence_acc": presence_acc,
            "color_acc": color_acc, "macro_acc": macro}


def train_teacher(corpus, seed, steps, batch_size=32, lr=1e-3):
    """Returns (frozen image-mode FeatureBackbone, report)."""
    rng = RngStream(seed, "init/teacher")
    model = FeatureBackbone.build(BackboneConfig.image(), rng)
    _add_attribute_head(model.params, rng.spawn("head"))

    train_ids, holdout_ids = corpus.split()
    # train on originals and edited renders alike; both are scene images
    pool = np.concatenate([np.stack([corpus.original(i) for i in train_ids]),
                           np.stack([corpus.edited(i) for i in train_ids])])
    pool_bgs, pool_pres, pool_cols = _label_arrays(pool)
    data_rng = RngStream(seed, "batch/teacher")

    for step in range(steps):
        picks = data_rng.integers(0, len(pool), (batch_size,))
        x = pool[picks]
        bgs, pres, cols = pool_bgs[picks], pool_pres[picks], pool_cols[picks]
        try:
            _, grads = forward_backward(
                lambda P: _attribute_loss(model, P, Tensor(x), bgs, pres, cols), model.params)
        except Exception as exc:
            raise TrainingDiverged(f"teacher diverged at step {step} (seed {seed}): {exc}")
        adam_step(model.params, grads, lr=lr)

    ho = corpus.images(holdout_ids, "original")
    bgs, pres, cols = _label_arrays(ho)
    report = _attribute_accuracy(model, model.params.tensors(), ho, bgs, pres, cols)
    report["steps"] = steps

    # discard the head; ship the frozen backbone alone
    frozen = FeatureBackbone.build(BackboneConfig.image(), RngStream(0, "init"))
    head_names = {n for n in model.params.names()
                  if n.startswith("head_")}
    arrays = {n: a for n, a in model.params.arrays().items() if n not in head_names}
    frozen.params.load_arrays(arrays)
    frozen.frozen = True
    return frozen, report
