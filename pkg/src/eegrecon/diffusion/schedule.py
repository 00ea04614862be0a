"""Noise schedule and the closed-form forward jump.

Timesteps run 0..T with t = 0 the clean latent (alpha_bar[0] = 1). The
forward jump uses the cumulative product alpha_bar_t:

    z_t = sqrt(alpha_bar_t) * z_0 + sqrt(1 - alpha_bar_t) * eps

(the per-step alpha would not give a single-shot jump to step t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import TimestepOutOfRange, ValidationError


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    T: int
    beta_start: float
    beta_end: float
    betas: np.ndarray  # [T + 1], betas[0] = 0
    alpha_bar: np.ndarray  # [T + 1], alpha_bar[0] = 1

    @classmethod
    def linear(cls, T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02):
        if T < 1:
            raise ValidationError("T must be >= 1")
        if not 0 < beta_start <= beta_end < 1:
            raise ValidationError("need 0 < beta_start <= beta_end < 1")
        betas = np.concatenate([[0.0], np.linspace(beta_start, beta_end, T, dtype=np.float64)])
        alpha_bar = np.cumprod(1.0 - betas)
        return cls(T, beta_start, beta_end, betas, alpha_bar)

    def to_dict(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end,
                "kind": "linear"}

    def check(self, t):
        tt = np.asarray(t)
        if tt.size and (tt.min() < 0 or tt.max() > self.T):
            raise TimestepOutOfRange(f"timestep outside [0, {self.T}]: {t}")

    def coefficients(self, t, like: torch.Tensor):
        """(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t)) broadcastable against ``like``."""
        if isinstance(t, torch.Tensor):
            t = t.detach().cpu().numpy()
        self.check(t)
        ab = self.alpha_bar[np.asarray(t, dtype=np.int64)]
        a = torch.as_tensor(np.sqrt(ab), dtype=like.dtype)
        b = torch.as_tensor(np.sqrt(1.0 - ab), dtype=like.dtype)
        if a.ndim == 1:
            shape = (-1,) + (1,) * (like.ndim - 1)
            a, b = a.reshape(shape), b.reshape(shape)
        return a, b

    def timesteps(self, t_start: int, steps: int) -> list[int]:
        """Descending respaced timesteps from ``t_start`` to 0 (both included)."""
        self.check(t_start)
        steps = max(1, min(int(steps), int(t_start)))
        ts = np.unique(np.round(np.linspace(0, t_start, steps + 1)).astype(int))[::-1]
        return [int(t) for t in ts]


def forward_diffuse(z0, t, eps, schedule: DiffusionSchedule):
    """Noise ``z0`` to step ``t`` in one jump. ``t`` may be an int or one
    timestep per batch element. Accepts torch tensors or numpy arrays."""
    if isinstance(z0, np.ndarray):
        out = forward_diffuse(torch.from_numpy(z0), t, torch.from_numpy(np.asarray(eps)), schedule)
        return out.numpy()
    if z0.shape != eps.shape:
        raise ValidationError(f"noise shape {tuple(eps.shape)} != latent shape {tuple(z0.shape)}")
    a, b = schedule.coefficients(t, z0)
    return a * z0 + b * eps
