"""Noisy-latent student distillation under the three-phase timestep curriculum.

The student sees forward-diffused latents plus their timestep and learns to
reproduce the frozen teacher's clean-image features: final feature cosine
plus the mean of per-block cosines, each written as (1 - sim).
"""
from __future__ import annotations

import numpy as np

from ..diffusion import fd_batch
from ..numerics import RngStream, Tensor, adam_step, forward_backward, no_grad
from ..numerics import tensor as T
from ..numerics.tensor import ShapeError
from .model import BackboneConfig, FeatureBackbone, FeatureStack, N_BLOCKS
from .teacher import TrainingDiverged

PHASE1_FRACTION = 0.1   # timestep pinned to 0
PHASE2_FRACTION = 0.8   # upper bound rises linearly to T


def lddino_loss(student_stack, teacher_stack):
    """(1 - sim(final)) + mean_i (1 - sim(intermediate_i)), averaged over batch."""
    s_int, t_int = student_stack.intermediates, teacher_stack.intermediates
    if len(s_int) != len(t_int):
        raise ShapeError(f"feature stacks disagree on depth: {len(s_int)} vs {len(t_int)}")
    loss = T.tmean(T.sub(1.0, T.cosine_sim(student_stack.final, teacher_stack.final)))
    per_layer = np.float32(1.0 / len(s_int))
    for s, t in zip(s_int, t_int):
        term = T.tmean(T.sub(1.0, T.cosine_sim(s, t)))
        loss = T.add(loss, T.mul(term, per_layer))
    return loss


def curriculum_upper_bound(step, total_steps, t_max):
    """Piecewise-linear sampling upper bound for the timestep."""
    p1 = int(total_steps * PHASE1_FRACTION)
    p2 = int(total_steps * (PHASE1_FRACTION + PHASE2_FRACTION))
    if step < p1:
        return 0
    if step >= p2:
        return t_max
    return int(round(t_max * (step - p1) / (p2 - p1)))


def _tensor_stack(stack):
    return FeatureStack(Tensor(stack.final), [Tensor(i) for i in stack.intermediates])


def holdout_distill_loss(student, teacher, codec, schedule, images, k, seed):
    """Mean distillation loss on fixed images at one timestep."""
    noise_rng = RngStream(seed, f"noise/eval-distill/k{k}")
    latents = codec.encode(images)
    ks = np.full(len(images), k, dtype=np.int64)
    noisy = fd_batch(latents, noise_rng.normal(latents.shape), ks, schedule)
    t_stack = teacher.features(images)
    with no_grad():
        s_stack = student.forward(student.params.tensors(), Tensor(noisy), ks)
        return float(lddino_loss(s_stack, _tensor_stack(t_stack)).data)


def train_ld_student(teacher, codec, schedule, corpus, seed, steps,
                     batch_size=32, lr=1e-3):
    """Returns (frozen latent-mode student, report, ub trace).

    Teacher and codec must already be frozen.
    """
    if not teacher.frozen:
        raise ValueError("teacher backbone must be frozen before distillation")
    if not codec.frozen:
        raise ValueError("codec must be frozen before distillation")

    rng = RngStream(seed, "init/ld")
    student = FeatureBackbone.build(BackboneConfig.latent(), rng)
    untrained = FeatureBackbone.build(BackboneConfig.latent(), RngStream(seed, "init/ld"))

    train_ids, holdout_ids = corpus.split()
    pool = [(i, "original") for i in train_ids] + [(i, "edited") for i in train_ids]
    data_rng = RngStream(seed, "batch/ld")
    k_rng = RngStream(seed, "data/ld-timesteps")
    noise_rng = RngStream(seed, "noise/ld")

    # teacher features and latents are frozen; compute the pool once
    all_images = np.stack([corpus.original(i) if w == "original" else corpus.edited(i)
                           for i, w in pool])
    all_latents = codec.encode(all_images)
    chunks = [teacher.features(all_images[lo:lo + 256])
              for lo in range(0, len(all_images), 256)]
    teacher_final = np.concatenate([c.final for c in chunks])
    teacher_inters = [np.concatenate([c.intermediates[i] for c in chunks])
                      for i in range(N_BLOCKS)]

    ub_trace = []
    for step in range(steps):
        ub = curriculum_upper_bound(step, steps, schedule.T)
        ub_trace.append(ub)
        k = int(k_rng.integers(0, ub + 1)) if ub > 0 else 0
        picks = data_rng.integers(0, len(pool), (batch_size,))
        ks = np.full(batch_size, k, dtype=np.int64)
        noisy = fd_batch(all_latents[picks], noise_rng.normal(all_latents[picks].shape),
                         ks, schedule)
        t_stack = FeatureStack(Tensor(teacher_final[picks]),
                               [Tensor(ti[picks]) for ti in teacher_inters])

        def loss_fn(P):
            return lddino_loss(student.forward(P, Tensor(noisy), ks), t_stack)

        try:
            _, grads = forward_backward(loss_fn, student.params)
        except Exception as exc:
            raise TrainingDiverged(f"ld student diverged at step {step} (seed {seed}): {exc}")
        adam_step(student.params, grads, lr=lr)

    student.frozen = True

    ho_images = corpus.images(holdout_ids, "original")
    report = {
        "steps": steps,
        "holdout_loss_k0": holdout_distill_loss(student, teacher, codec, schedule,
                                                ho_images, 0, seed),
        "holdout_loss_kT": holdout_distill_loss(student, teacher, codec, schedule,
                                                ho_images, schedule.T, seed),
        "untrained_loss_k0": holdout_distill_loss(untrained, teacher, codec, schedule,
                                                  ho_images, 0, seed),
    }
    s_stack = student.features(codec.encode(ho_images),
                               np.zeros(len(ho_images), dtype=np.int64))
    t_stack = teacher.features(ho_images)
    cos = T.cosine_sim(Tensor(s_stack.final), Tensor(t_stack.final)).data
    report["holdout_final_cosine_k0"] = float(cos.mean())
    return student, report, ub_trace
