"""Small convolutional VAE mapping 32x32 RGB images to an 8x8x4 latent.

``pixel_space=True`` replaces it with an identity map onto the normalized
pixels, for debugging the diffusion stack without an autoencoder.
"""

from __future__ import annotations

import math

import torch
from torch import nn
import torch.nn.functional as F


def _gn(ch):
    return nn.GroupNorm(min(8, ch), ch)


class AutoencoderKL(nn.Module):
    def __init__(self, latent_channels: int = 4, base: int = 32, factor: int = 4,
                 pixel_space: bool = False):
        super().__init__()
        self.pixel_space = pixel_space
        self.factor = 1 if pixel_space else factor
        self.latent_channels = 3 if pixel_space else latent_channels
        if pixel_space:
            return
        n_down = int(round(math.log2(factor)))
        if 2 ** n_down != factor:
            raise ValueError("factor must be a power of two")
        enc = [nn.Conv2d(3, base, 3, padding=1)]
        ch = base
        for i in range(n_down):
            out = base * 2 if i == n_down - 1 else base
            enc += [nn.SiLU(), nn.Conv2d(ch, ch, 3, stride=2, padding=1),
                    _gn(ch), nn.SiLU(), nn.Conv2d(ch, out, 3, padding=1)]
            ch = out
        enc += [_gn(ch), nn.SiLU(), nn.Conv2d(ch, 2 * latent_channels, 3, padding=1)]
        self.encoder = nn.Sequential(*enc)

        dec = [nn.Conv2d(latent_channels, ch, 3, padding=1)]
        for i in range(n_down):
            out = base
            dec += [_gn(ch), nn.SiLU(), nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(ch, out, 3, padding=1)]
            ch = out
        dec += [_gn(ch), nn.SiLU(), nn.Conv2d(ch, 3, 3, padding=1)]
        self.decoder = nn.Sequential(*dec)

    def encode(self, x):
        """x in [-1, 1], NCHW. Returns (mean, logvar) of the posterior."""
        if self.pixel_space:
            return x, torch.full_like(x, -30.0)
        h = self.encoder(x)
        mean, logvar = h.chunk(2, dim=1)
        return mean, logvar.clamp(-30.0, 20.0)

    def decode(self, z):
        if self.pixel_space:
            return z
        return self.decoder(z)

    def loss(self, x, generator=None, kl_weight: float = 1e-6):
        mean, logvar = self.encode(x)
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        z = mean + torch.exp(0.5 * logvar) * noise
        rec = self.decode(z)
        kl = 0.5 * torch.mean(mean ** 2 + logvar.exp() - 1.0 - logvar)
        return F.mse_loss(rec, x) + kl_weight * kl
