"""Toy latent diffusion engine with EEG control.

Frozen set: autoencoder, text encoder, UNet backbone. Trainable set: the
adapter (encoder copy + zero-conv outputs), the EEG projector and the
zero-initialized 1x1 injection conv. Tensors are NCHW internally; a latent
of shape [D, H_z, W_z] is one item.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .. import checkpoint
from ..errors import (
    BadDimensions,
    BadStrength,
    ChannelMismatch,
    NotTrained,
    ShapeMismatch,
    ValidationError,
)
from ..records import EegTrial, StimulusImage
from .autoencoder import AutoencoderKL
from .schedule import DiffusionSchedule, forward_diffuse
from .text import TextEncoder
from .unet import ControlAdapter, EegProjector, UNet, zero_module

log = logging.getLogger(__name__)

FROZEN = ("ae", "text", "unet")
TRAINABLE = ("adapter", "proj", "zero_inject")


@dataclass
class EngineConfig:
    image_size: int = 32
    latent_channels: int = 4
    ae_factor: int = 4
    ae_base: int = 32
    pixel_space: bool = False
    unet_ch: int = 48
    emb_dim: int = 128
    text_dim: int = 64
    # 1000 steps keeps alpha_bar_T near zero with the standard linear betas
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    eeg_channels: int = 128
    eeg_samples: int = 128
    proj_hidden: int = 64
    proj_pooled: int = 8
    latent_scale: float = 1.0

    @property
    def factor(self) -> int:
        return 1 if self.pixel_space else self.ae_factor

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        d = 3 if self.pixel_space else self.latent_channels
        s = self.image_size // self.factor
        return (d, s, s)


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """uint8 [N, H, W, 3] -> float32 [N, 3, H, W] in [-1, 1]."""
    x = torch.from_numpy(np.ascontiguousarray(images)).to(torch.float32)
    return x.permute(0, 3, 1, 2) / 127.5 - 1.0


def tensor_to_images(x: torch.Tensor) -> np.ndarray:
    x = ((x.detach().to(torch.float32).clamp(-1, 1) + 1.0) * 127.5).round()
    return x.permute(0, 2, 3, 1).numpy().astype(np.uint8)


def _as_pixels(images) -> np.ndarray:
    if isinstance(images, StimulusImage):
        return images.pixels[None]
    if isinstance(images, (list, tuple)):
        return np.stack([i.pixels if isinstance(i, StimulusImage) else i for i in images])
    arr = np.asarray(images)
    return arr[None] if arr.ndim == 3 else arr


def _as_eeg(eeg) -> np.ndarray:
    if isinstance(eeg, EegTrial):
        return eeg.data[None]
    if isinstance(eeg, (list, tuple)):
        return np.stack([t.data if isinstance(t, EegTrial) else t for t in eeg])
    arr = np.asarray(eeg)
    return arr[None] if arr.ndim == 2 else arr


def _seeds(seed, n) -> list[int]:
    if isinstance(seed, (list, tuple, np.ndarray)):
        if len(seed) != n:
            raise ValidationError("need one seed per item")
        return [int(s) for s in seed]
    return [int(seed) + i for i in range(n)]


class DiffusionEngine(nn.Module):
    def __init__(self, config: EngineConfig | None = None, montage_name: str | None = None):
        super().__init__()
        self.config = c = config or EngineConfig()
        if c.image_size % c.factor or (c.image_size // c.factor) % 2:
            raise BadDimensions("image size must divide into an even latent grid")
        self.montage_name = montage_name
        self.schedule = DiffusionSchedule.linear(c.T, c.beta_start, c.beta_end)
        self.ae = AutoencoderKL(c.latent_channels, c.ae_base, c.ae_factor, c.pixel_space)
        D = c.latent_shape[0]
        self.text = TextEncoder(dim=c.text_dim)
        self.unet = UNet(D, c.unet_ch, c.emb_dim, c.text_dim)
        self.adapter = ControlAdapter(self.unet)
        self.proj = EegProjector(c.eeg_channels, c.eeg_samples, c.latent_shape,
                                 c.proj_hidden, c.proj_pooled)
        self.zero_inject = zero_module(nn.Conv2d(D, D, 1))
        self.status = {"ae_trained": c.pixel_space, "base_trained": False,
                       "adapter_initialized": False, "adapter_steps": 0}
        # the projector depth and kernels are a pinned toy choice, not a documented one
        self.meta: dict = {"f_proj": f"toy stand-in: conv1d k7 s2, conv1d k5 s2, pool {c.proj_pooled}, "
                                     f"linear; hidden {c.proj_hidden}"}
        self.freeze()

    # ------------------------------------------------------------ weights
    def freeze(self):
        for name in FROZEN:
            for p in getattr(self, name).parameters():
                p.requires_grad_(False)
        for name in TRAINABLE:
            for p in getattr(self, name).parameters():
                p.requires_grad_(True)

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for name in TRAINABLE for p in getattr(self, name).parameters()]

    def named_groups(self) -> dict[str, dict[str, torch.Tensor]]:
        return {name: getattr(self, name).state_dict() for name in FROZEN + TRAINABLE}

    def frozen_hash(self) -> str:
        h = hashlib.sha256()
        for name in FROZEN:
            for key, tensor in sorted(getattr(self, name).state_dict().items()):
                t = tensor.detach().contiguous().cpu()
                h.update(f"{name}.{key}:{t.dtype}:{tuple(t.shape)}".encode())
                h.update(t.numpy().tobytes())
        h.update(repr(self.text.vocab).encode())
        h.update(repr(self.config.latent_scale).encode())
        return h.hexdigest()

    @property
    def adapter_trained(self) -> bool:
        return self.status["adapter_steps"] > 0

    def init_adapter(self):
        """Copy backbone encoder weights into the adapter and zero its outputs."""
        self.adapter.copy_from(self.unet)
        zero_module(self.zero_inject)
        self.status["adapter_initialized"] = True
        self.freeze()

    def for_montage(self, montage_name: str, channels: int, seed: int = 0):
        """Fresh projector for a montage's channel count; adapter state is reset."""
        c = self.config
        c.eeg_channels = channels
        self.montage_name = montage_name
        torch.manual_seed(seed)
        self.proj = EegProjector(channels, c.eeg_samples, c.latent_shape, c.proj_hidden,
                                 c.proj_pooled)
        self.status["adapter_initialized"] = False
        self.status["adapter_steps"] = 0
        self.freeze()
        return self

    def save(self, path: str | Path):
        header = {"kind": "engine", "config": asdict(self.config),
                  "schedule": self.schedule.to_dict(), "montage": self.montage_name,
                  "status": self.status, "vocab": self.text.vocab, "meta": self.meta,
                  "frozen_sha256": self.frozen_hash()}
        checkpoint.save(path, header, {"weights": self.state_dict()})

    @classmethod
    def load(cls, path: str | Path) -> "DiffusionEngine":
        header, state = checkpoint.load(path)
        if header.get("kind") != "engine":
            raise ValidationError(f"{path} is not an engine checkpoint")
        eng = cls(EngineConfig(**header["config"]), header["montage"])
        eng.text.set_vocab(header["vocab"])
        eng.load_state_dict(state["weights"])
        eng.status = header["status"]
        eng.meta = header["meta"]
        eng.eval()
        return eng

    # ------------------------------------------------------------- images
    def _check_images(self, pixels: np.ndarray):
        c = self.config
        if pixels.ndim != 4 or pixels.shape[-1] != 3:
            raise BadDimensions(f"expected [N, H, W, 3] images, got {pixels.shape}")
        h, w = pixels.shape[1:3]
        if h % c.factor or w % c.factor:
            raise BadDimensions(f"{h}x{w} image is not divisible by factor {c.factor}")
        if (h, w) != (c.image_size, c.image_size):
            raise BadDimensions(f"{h}x{w} image, engine expects {c.image_size}x{c.image_size}")

    @torch.no_grad()
    def encode_image(self, images) -> torch.Tensor:
        """Posterior-mean latents (scaled), [N, D, H_z, W_z]."""
        pixels = _as_pixels(images)
        self._check_images(pixels)
        self.ae.eval()
        mean, _ = self.ae.encode(images_to_tensor(pixels))
        return mean * self.config.latent_scale

    @torch.no_grad()
    def decode_latent(self, z: torch.Tensor) -> np.ndarray:
        self.ae.eval()
        return tensor_to_images(self.ae.decode(z / self.config.latent_scale))

    # ---------------------------------------------------------- conditions
    def project_eeg(self, eeg) -> torch.Tensor:
        y = eeg if isinstance(eeg, torch.Tensor) else torch.from_numpy(
            np.ascontiguousarray(_as_eeg(eeg), dtype=np.float32))
        if y.ndim == 2:
            y = y[None]
        if y.shape[1] != self.config.eeg_channels:
            raise ChannelMismatch(
                f"engine projects {self.config.eeg_channels} channels, got {y.shape[1]}")
        return self.proj(y.to(self.zero_inject.weight.dtype))

    def inject(self, z_t: torch.Tensor, z_eeg: torch.Tensor) -> torch.Tensor:
        """EEG control tensor: z_t + Z(z_eeg) with Z a zero-initialized 1x1 conv."""
        if z_t.shape != z_eeg.shape:
            raise ShapeMismatch(f"z_eeg {tuple(z_eeg.shape)} vs z_t {tuple(z_t.shape)}")
        return z_t + self.zero_inject(z_eeg)

    def embed_text(self, texts: Sequence[str]) -> torch.Tensor:
        return self.text(list(texts))

    def null_text(self, n: int) -> torch.Tensor:
        return self.text([""] * n)

    # ----------------------------------------------------------- denoisers
    def eps_controlled(self, z_t, t, z_eeg, text_emb):
        """Backbone noise prediction with adapter residuals from the EEG control."""
        t = self._t(t, z_t)
        residuals = self.adapter(self.inject(z_t, z_eeg), t, text_emb)
        return self.unet(z_t, t, text_emb, residuals)

    def eps_text(self, z_t, t, text_emb):
        return self.unet(z_t, self._t(t, z_t), text_emb)

    @staticmethod
    def _t(t, like):
        if isinstance(t, torch.Tensor):
            return t.reshape(-1).expand(like.shape[0]) if t.numel() == 1 else t
        return torch.full((like.shape[0],), int(t), dtype=torch.int64)

    @staticmethod
    def guide(eps_u, eps_c, gamma: float):
        # the endpoints are returned as-is: in floating point eps_u + (eps_c - eps_u)
        # need not reproduce eps_c bit-for-bit
        if gamma == 0:
            return eps_u
        if gamma == 1:
            return eps_c
        return eps_u + gamma * (eps_c - eps_u)

    # ------------------------------------------------------------ sampling
    def _step(self, z, t, t_prev, eps, gens):
        ab = self.schedule.alpha_bar
        ab_t, ab_p = float(ab[t]), float(ab[t_prev])
        # posterior q(z_{t_prev} | z_t, x0) of the respaced chain
        x0 = (z - math.sqrt(1.0 - ab_t) * eps) / math.sqrt(ab_t)
        beta = 1.0 - ab_t / ab_p
        mean = (math.sqrt(ab_p) * beta / (1.0 - ab_t)) * x0 \
            + (math.sqrt(1.0 - beta) * (1.0 - ab_p) / (1.0 - ab_t)) * z
        var = (1.0 - ab_p) / (1.0 - ab_t) * beta
        if t_prev == 0 or var <= 0:
            return mean
        noise = torch.stack([torch.randn(z.shape[1:], generator=g, dtype=z.dtype) for g in gens])
        return mean + math.sqrt(var) * noise

    def _denoise(self, z, t_start, steps, eps_fn, gens, trace=None):
        ts = self.schedule.timesteps(t_start, steps)
        for t, t_prev in zip(ts[:-1], ts[1:]):
            eps_hat, eps_u, eps_c = eps_fn(z, t)
            if trace is not None:
                trace(t, eps_u, eps_c, eps_hat)
            z = self._step(z, t, t_prev, eps_hat, gens)
        return z

    @torch.no_grad()
    def sample_latents(self, eeg, captions: Sequence[str], gamma: float = 7.5, steps: int = 50,
                       seed=0, trace: Callable | None = None) -> torch.Tensor:
        if not self.adapter_trained:
            raise NotTrained("sample() needs a trained adapter (run train_controlnet)")
        if gamma < 0:
            raise ValidationError("guidance scale must be >= 0")
        self.eval()
        y = _as_eeg(eeg)
        n = len(y)
        if len(captions) != n:
            raise ValidationError("need one caption per EEG trial")
        gens = [torch.Generator().manual_seed(s) for s in _seeds(seed, n)]
        shape = self.config.latent_shape
        z = torch.stack([torch.randn(shape, generator=g) for g in gens])
        z_eeg = self.project_eeg(y)
        cond = self.embed_text(captions)
        null = self.null_text(n)

        def eps_fn(z_t, t):
            # unconditional branch: no caption and no EEG residuals
            eps_u = self.eps_text(z_t, t, null)
            eps_c = self.eps_controlled(z_t, t, z_eeg, cond)
            return self.guide(eps_u, eps_c, gamma), eps_u, eps_c

        return self._denoise(z, self.config.T, steps, eps_fn, gens, trace)

    def sample(self, eeg, captions: Sequence[str], gamma: float = 7.5, steps: int = 50,
               seed=0, trace: Callable | None = None) -> np.ndarray:
        """Reconstruct images (uint8 [N, H, W, 3]) from EEG trials and captions."""
        return self.decode_latent(self.sample_latents(eeg, captions, gamma, steps, seed, trace))

    @torch.no_grad()
    def img2img(self, images, prompts, strength: float = 0.4, gamma: float = 7.5,
                steps: int = 50, seed=0, trace: Callable | None = None) -> np.ndarray:
        """Encode, noise to t = round(strength * T), then denoise under the
        prompt with classifier-free guidance over the text. ``prompts`` is a
        list of strings or a precomputed embedding tensor."""
        if not (0.0 < strength <= 1.0):
            raise BadStrength(f"strength must be in (0, 1], got {strength}")
        if not self.status["base_trained"]:
            raise NotTrained("img2img needs a pretrained backbone")
        self.eval()
        pixels = _as_pixels(images)
        n = len(pixels)
        gens = [torch.Generator().manual_seed(s) for s in _seeds(seed, n)]
        z0 = self.encode_image(pixels)
        t_start = max(1, int(round(strength * self.config.T)))
        eps = torch.stack([torch.randn(z0.shape[1:], generator=g) for g in gens])
        z = forward_diffuse(z0, t_start, eps, self.schedule)
        cond = prompts if isinstance(prompts, torch.Tensor) else self.embed_text(prompts)
        if cond.shape[0] == 1 and n > 1:
            cond = cond.expand(n, -1)
        null = self.null_text(n)

        def eps_fn(z_t, t):
            eps_u = self.eps_text(z_t, t, null)
            eps_c = self.eps_text(z_t, t, cond)
            return self.guide(eps_u, eps_c, gamma), eps_u, eps_c

        n_steps = max(1, int(round(steps * strength)))
        z = self._denoise(z, t_start, n_steps, eps_fn, gens, trace)
        return self.decode_latent(z)

    def roundtrip(self, images) -> np.ndarray:
        """Autoencoder encode/decode of ``images`` (the strength -> 0 limit of img2img)."""
        return self.decode_latent(self.encode_image(images))
