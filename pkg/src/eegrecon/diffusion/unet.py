"""Denoiser backbone, ControlNet-style adapter and EEG projection.

The backbone is split into an encoder (conv_in, two resolution levels, mid
block) and a decoder consuming the encoder's skip features. The adapter is
a trainable copy of the embedding and encoder whose per-skip outputs go
through zero-initialized 1x1 convs and are added to the backbone's skips.
"""

from __future__ import annotations

import copy
import math

import torch
from torch import nn
import torch.nn.functional as F


def _gn(ch):
    return nn.GroupNorm(min(8, ch), ch)


def zero_module(m: nn.Module) -> nn.Module:
    for p in m.parameters():
        nn.init.zeros_(p)
    return m


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    return emb


class ResBlock(nn.Module):
    def __init__(self, cin, cout, emb_dim):
        super().__init__()
        self.norm1 = _gn(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.emb = nn.Linear(emb_dim, cout)
        self.norm2 = _gn(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class Embedding(nn.Module):
    """Timestep + text conditioning vector shared by all blocks."""

    def __init__(self, emb_dim, text_dim):
        super().__init__()
        self.freq_dim = emb_dim // 2
        self.time_mlp = nn.Sequential(nn.Linear(self.freq_dim, emb_dim), nn.SiLU(),
                                      nn.Linear(emb_dim, emb_dim))
        self.text_proj = nn.Linear(text_dim, emb_dim)

    def forward(self, t, text_emb):
        te = timestep_embedding(t, self.freq_dim).to(text_emb.dtype)
        return self.time_mlp(te) + self.text_proj(text_emb)


class Encoder(nn.Module):
    def __init__(self, in_ch, ch, emb_dim):
        super().__init__()
        self.conv_in = nn.Conv2d(in_ch, ch, 3, padding=1)
        self.res0 = ResBlock(ch, ch, emb_dim)
        self.down = nn.Conv2d(ch, ch, 3, stride=2, padding=1)
        self.res1 = ResBlock(ch, 2 * ch, emb_dim)
        self.mid = ResBlock(2 * ch, 2 * ch, emb_dim)
        self.skip_channels = [ch, ch, ch, 2 * ch]
        self.mid_channels = 2 * ch

    def forward(self, x, emb):
        h_in = self.conv_in(x)
        h0 = self.res0(h_in, emb)
        hd = self.down(h0)
        h1 = self.res1(hd, emb)
        mid = self.mid(h1, emb)
        return [h_in, h0, hd, h1], mid


class Decoder(nn.Module):
    def __init__(self, out_ch, ch, emb_dim):
        super().__init__()
        self.res_a = ResBlock(4 * ch, 2 * ch, emb_dim)  # mid + h1
        self.res_b = ResBlock(3 * ch, 2 * ch, emb_dim)  # + hd
        self.up = nn.Conv2d(2 * ch, 2 * ch, 3, padding=1)
        self.res_c = ResBlock(3 * ch, ch, emb_dim)  # + h0
        self.res_d = ResBlock(2 * ch, ch, emb_dim)  # + h_in
        self.norm_out = _gn(ch)
        self.conv_out = nn.Conv2d(ch, out_ch, 3, padding=1)

    def forward(self, skips, mid, emb):
        h_in, h0, hd, h1 = skips
        h = self.res_a(torch.cat([mid, h1], 1), emb)
        h = self.res_b(torch.cat([h, hd], 1), emb)
        h = self.up(F.interpolate(h, scale_factor=2, mode="nearest"))
        h = self.res_c(torch.cat([h, h0], 1), emb)
        h = self.res_d(torch.cat([h, h_in], 1), emb)
        return self.conv_out(F.silu(self.norm_out(h)))


class UNet(nn.Module):
    def __init__(self, latent_channels=4, ch=48, emb_dim=128, text_dim=64):
        super().__init__()
        self.embed = Embedding(emb_dim, text_dim)
        self.encoder = Encoder(latent_channels, ch, emb_dim)
        self.decoder = Decoder(latent_channels, ch, emb_dim)

    def forward(self, z, t, text_emb, residuals=None):
        emb = self.embed(t, text_emb)
        skips, mid = self.encoder(z, emb)
        if residuals is not None:
            res_skips, res_mid = residuals
            skips = [s + r for s, r in zip(skips, res_skips)]
            mid = mid + res_mid
        return self.decoder(skips, mid, emb)


class ControlAdapter(nn.Module):
    """Trainable copy of the backbone embedding + encoder with zero-conv outputs."""

    def __init__(self, backbone: UNet):
        super().__init__()
        self.embed = copy.deepcopy(backbone.embed)
        self.encoder = copy.deepcopy(backbone.encoder)
        self.zero_skips = nn.ModuleList(
            zero_module(nn.Conv2d(c, c, 1)) for c in self.encoder.skip_channels)
        self.zero_mid = zero_module(nn.Conv2d(self.encoder.mid_channels, self.encoder.mid_channels, 1))

    def copy_from(self, backbone: UNet):
        self.embed.load_state_dict(backbone.embed.state_dict())
        self.encoder.load_state_dict(backbone.encoder.state_dict())
        for m in list(self.zero_skips) + [self.zero_mid]:
            zero_module(m)

    def forward(self, c_eeg, t, text_emb):
        emb = self.embed(t, text_emb)
        skips, mid = self.encoder(c_eeg, emb)
        return [z(s) for z, s in zip(self.zero_skips, skips)], self.zero_mid(mid)


class EegProjector(nn.Module):
    """Stacked temporal 1-D convs, pooled and reshaped to the latent grid."""

    def __init__(self, channels, samples, latent_shape, hidden=64, pooled=8):
        super().__init__()
        self.channels = channels
        self.latent_shape = tuple(latent_shape)  # (D, H, W)
        pooled = min(pooled, max(1, samples // 4))
        self.convs = nn.Sequential(
            nn.Conv1d(channels, hidden, 7, stride=2, padding=3), nn.SiLU(),
            nn.Conv1d(hidden, hidden, 5, stride=2, padding=2), nn.SiLU(),
            nn.AdaptiveAvgPool1d(pooled))
        n_out = int(math.prod(self.latent_shape))
        self.fc = nn.Linear(hidden * pooled, n_out)

    def forward(self, y):
        h = self.convs(y).flatten(1)
        return self.fc(h).view(-1, *self.latent_shape)
