"""Variance-preserving noise schedule with a reserved clean step at k=0.

The forward step mixes signal and noise as sqrt(abar_k)*L + sqrt(1-abar_k)*N;
the reverse step is the deterministic (eta=0) form so it stays differentiable
with respect to the predicted noise. Index 0 always means "clean", so
abar[0] == 1 exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Tensor
from ..numerics import tensor as T

DEFAULT_T = 50

LATENT_SHAPE = (8, 8, 4)


class ScheduleError(ValueError):
    pass


@dataclass
class NoiseSchedule:
    T: int
    betas: np.ndarray       # betas[k-1] applies at step k, k in 1..T
    alpha_bar: np.ndarray   # length T+1, alpha_bar[0] == 1

    @classmethod
    def linear(cls, T=DEFAULT_T, beta_lo=1e-4, beta_hi=0.02, reference_T=1000):
        # rescale the endpoints so per-step SNR loss roughly matches a
        # reference_T-step schedule
        scale = reference_T / T
        betas = np.linspace(beta_lo * scale, beta_hi * scale, T, dtype=np.float64)
        return cls.from_betas(betas)

    @classmethod
    def from_betas(cls, betas):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ScheduleError("betas must be a non-empty vector")
        if not (np.all(betas > 0) and np.all(betas < 1)):
            raise ScheduleError("betas must lie strictly inside (0, 1)")
        if not np.all(np.diff(betas) > 0):
            raise ScheduleError("betas must be strictly increasing")
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if not np.all(np.diff(alpha_bar) < 0):
            raise ScheduleError("alpha_bar must be strictly decreasing")
        return cls(T=len(betas), betas=betas, alpha_bar=alpha_bar)

    def check_k(self, k):
        k = int(k)
        if not 0 <= k <= self.T:
            raise ScheduleError(f"timestep {k} outside [0, {self.T}]")
        return k

    def coeffs(self, k):
        """(sqrt(abar_k), sqrt(1 - abar_k)) as float32 scalars."""
        k = self.check_k(k)
        ab = self.alpha_bar[k]
        return np.float32(np.sqrt(ab)), np.float32(np.sqrt(1.0 - ab))


@dataclass
class LatentState:
    latent: object  # numpy array or graph Tensor, shape LATENT_SHAPE (+batch)
    k: int
    noise: object = None


def fd(latent, noise, k, schedule):
    """Forward diffusion to step k. k=0 returns the latent unchanged."""
    k = schedule.check_k(k)
    latent_arr = latent.data if isinstance(latent, Tensor) else np.asarray(latent)
    noise_arr = noise.data if isinstance(noise, Tensor) else np.asarray(noise)
    if latent_arr.shape != noise_arr.shape:
        raise ScheduleError(f"fd: noise shape {noise_arr.shape} != latent {latent_arr.shape}")
    if k == 0:
        return LatentState(latent_arr.copy() if not isinstance(latent, Tensor) else latent,
                           0, noise)
    s, n = schedule.coeffs(k)
    if isinstance(latent, Tensor) or isinstance(noise, Tensor):
        out = T.add(T.mul(latent, s), T.mul(noise, n))
    else:
        # float64 transient so long fd/rd chains stay bit-accurate
        out = np.float64(s) * latent_arr.astype(np.float64) \
            + np.float64(n) * noise_arr.astype(np.float64)
    return LatentState(out, k, noise)


def _rd_coeffs(schedule, k, j):
    """Fused-form coefficients for the deterministic reverse step.

    The step is algebraically x0 = (L - sqrt(1-abar_k) N) / sqrt(abar_k)
    followed by re-noising to level j, but is evaluated as c1*L + c2*N with
    float64 scalar coefficients so iterating all the way down to k=0 does
    not accumulate float32 cancellation error.
    """
    abk, abj = schedule.alpha_bar[k], schedule.alpha_bar[j]
    c1 = np.sqrt(abj / abk)
    c2 = np.sqrt(1.0 - abj) - c1 * np.sqrt(1.0 - abk)
    return np.float32(c1), np.float32(c2)


def rd(state, predicted_noise, schedule, to_k=None):
    """One deterministic reverse step k -> to_k (default k-1).

    Differentiable in `predicted_noise` when given graph Tensors; the editor
    objective backpropagates through this.
    """
    k = schedule.check_k(state.k)
    if k == 0:
        raise ScheduleError("rd: already at the clean step, nothing below k=0")
    j = k - 1 if to_k is None else schedule.check_k(to_k)
    if j >= k:
        raise ScheduleError(f"rd: target step {j} must be below {k}")
    c1, c2 = _rd_coeffs(schedule, k, j)
    latent, noise = state.latent, predicted_noise
    if isinstance(latent, Tensor) or isinstance(noise, Tensor):
        out = T.add(T.mul(latent, c1), T.mul(noise, c2))
    else:
        out = np.float64(c1) * np.asarray(latent, dtype=np.float64) \
            + np.float64(c2) * np.asarray(noise, dtype=np.float64)
    return LatentState(out, j, state.noise)


def fd_batch(latents, noises, ks, schedule):
    """Vectorized forward diffusion with a per-sample timestep vector."""
    ks = np.asarray(ks, dtype=np.int64)
    ab = schedule.alpha_bar[ks].astype(np.float32)
    shape = (-1,) + (1,) * (latents.ndim - 1)
    s = np.sqrt(ab).reshape(shape)
    n = np.sqrt(1.0 - ab).reshape(shape)
    return s * latents + n * noises


def rd_batch_graph(latent, predicted_noise, ks, js, schedule):
    """Graph-mode reverse step with per-sample source/target timesteps."""
    ks = np.asarray(ks, dtype=np.int64)
    js = np.asarray(js, dtype=np.int64)
    if np.any(ks < 1) or np.any(js >= ks):
        raise ScheduleError("rd: need ks >= 1 and js < ks")
    shape = (-1,) + (1,) * (len(latent.shape) - 1)
    abk = schedule.alpha_bar[ks].reshape(shape)
    abj = schedule.alpha_bar[js].reshape(shape)
    c1 = np.sqrt(abj / abk)
    c2 = np.sqrt(1.0 - abj) - c1 * np.sqrt(1.0 - abk)
    return T.add(T.mul(latent, c1.astype(np.float32)),
                 T.mul(predicted_noise, c2.astype(np.float32)))
