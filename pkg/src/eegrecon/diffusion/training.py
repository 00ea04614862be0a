"""Training loops: autoencoder and text-conditional backbone pretraining (the
stand-in for a pretrained latent diffusion model), then adapter training
with the backbone frozen."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import DivergenceError, FrozenWeightMutation, ValidationError
from ..prompts import mock_description, refinement_text
from .engine import DiffusionEngine, images_to_tensor
from .schedule import forward_diffuse

log = logging.getLogger(__name__)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    return float("inf") if mse == 0 else float(10 * np.log10(255.0 ** 2 / mse))


def _batches(rng, n, batch, steps):
    order = np.array([], dtype=np.int64)
    for _ in range(steps):
        if len(order) < batch:
            order = np.concatenate([order, rng.permutation(n)])
        idx, order = order[:batch], order[batch:]
        yield idx


def pretrain_autoencoder(engine: DiffusionEngine, images: np.ndarray, steps: int = 800,
                         batch: int = 32, lr: float = 2e-3, seed: int = 0) -> list[float]:
    """Fit the VAE on uint8 images, then set ``latent_scale`` so encoded
    latents have unit standard deviation."""
    if engine.config.pixel_space:
        engine.status["ae_trained"] = True
        return []
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    x_all = images_to_tensor(images)
    ae = engine.ae
    for p in ae.parameters():
        p.requires_grad_(True)
    opt = torch.optim.Adam(ae.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, max(1, steps))
    ae.train()
    history = []
    for idx in _batches(rng, len(x_all), batch, steps):
        loss = ae.loss(x_all[torch.from_numpy(idx)], gen)
        if not torch.isfinite(loss):
            raise DivergenceError("autoencoder loss is not finite")
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        history.append(loss.item())
    ae.eval()
    engine.config.latent_scale = 1.0
    with torch.no_grad():
        z = torch.cat([engine.encode_image(images[i:i + 256]) for i in range(0, len(images), 256)])
    engine.config.latent_scale = float(1.0 / z.std().clamp_min(1e-6))
    engine.status["ae_trained"] = True
    engine.freeze()
    return history


def base_captions(class_names: Sequence[str]) -> list[str]:
    out = []
    for name in class_names:
        out += [f"Image of {name}", refinement_text(mock_description(name))]
    return out


def pretrain_backbone(engine: DiffusionEngine, images: np.ndarray, labels: np.ndarray,
                      class_names: Sequence[str], steps: int = 1500, batch: int = 32,
                      lr: float = 1e-3, seed: int = 0, p_uncond: float = 0.1) -> list[float]:
    """Train text encoder + UNet as a text-conditional denoiser.

    Captions are drawn per example: the decoder-style caption, the
    refinement prompt built from the mock description, or the empty prompt
    (probability ``p_uncond``) for the unconditional branch.
    """
    if not engine.status["ae_trained"]:
        raise ValidationError("pretrain the autoencoder first")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    engine.text.build_vocab(base_captions(class_names))
    with torch.no_grad():
        z_all = torch.cat([engine.encode_image(images[i:i + 256]) for i in range(0, len(images), 256)])
    params = list(engine.unet.parameters()) + list(engine.text.parameters())
    for p in params:
        p.requires_grad_(True)
    opt = torch.optim.Adam(params, lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, max(1, steps))
    caption = [f"Image of {n}" for n in class_names]
    refine = [refinement_text(mock_description(n)) for n in class_names]
    engine.unet.train()
    engine.text.train()
    history = []
    T = engine.config.T
    for idx in _batches(rng, len(z_all), batch, steps):
        z0 = z_all[torch.from_numpy(idx)]
        u = rng.random(len(idx))
        texts = []
        for i, r in zip(idx, u):
            k = int(labels[i])
            texts.append("" if r < p_uncond else caption[k] if r < p_uncond + 0.5 else refine[k])
        t = torch.randint(1, T + 1, (len(idx),), generator=gen)
        eps = torch.randn(z0.shape, generator=gen)
        z_t = forward_diffuse(z0, t, eps, engine.schedule)
        pred = engine.unet(z_t, t, engine.text(texts))
        loss = F.mse_loss(pred, eps)
        if not torch.isfinite(loss):
            raise DivergenceError("backbone loss is not finite")
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        history.append(loss.item())
    engine.unet.eval()
    engine.text.eval()
    engine.status["base_trained"] = True
    engine.freeze()
    return history


@dataclass
class ControlNetHyper:
    lr: float = 1e-4
    batch: int = 32
    epochs: int = 30
    max_steps: int | None = None  # caps the run regardless of epochs
    p_uncond: float = 0.1

    def __post_init__(self):
        if self.lr < 0 or self.batch < 1 or self.epochs < 0:
            raise ValidationError(f"bad adapter hyperparameters: {self}")

    @classmethod
    def reference(cls):
        """Full-scale settings; desk runs use the defaults."""
        return cls(lr=1e-5, batch=32, epochs=100)


def diffusion_loss(engine: DiffusionEngine, z0, eeg, text_emb, t, eps) -> torch.Tensor:
    """Mean squared error between the noise and the EEG-controlled prediction."""
    z_t = forward_diffuse(z0, t, eps, engine.schedule)
    z_eeg = engine.project_eeg(eeg)
    return F.mse_loss(engine.eps_controlled(z_t, t, z_eeg, text_emb), eps)


@torch.no_grad()
def _val_loss(engine, eeg, z0, captions, seed, batch=64):
    gen = torch.Generator().manual_seed(seed)
    total, n = 0.0, 0
    for s in range(0, len(z0), batch):
        zb = z0[s:s + batch]
        t = torch.randint(1, engine.config.T + 1, (len(zb),), generator=gen)
        eps = torch.randn(zb.shape, generator=gen)
        loss = diffusion_loss(engine, zb, eeg[s:s + batch], engine.embed_text(captions[s:s + batch]), t, eps)
        total += loss.item() * len(zb)
        n += len(zb)
    return total / max(n, 1)


def train_controlnet(engine: DiffusionEngine, eeg: np.ndarray, latents: torch.Tensor,
                     captions: Sequence[str], hyper: ControlNetHyper | None = None,
                     seed: int = 0, val: tuple | None = None) -> dict:
    """Optimize adapter, projector and injection conv on the diffusion loss.

    ``latents`` are scaled image latents aligned with ``eeg`` [N, C, L] and
    the decoder captions. With ``val`` = (eeg, latents, captions) the
    validation loss is tracked per epoch and the best weights are kept.
    Raises FrozenWeightMutation if any frozen weight changes.
    """
    hyper = hyper or ControlNetHyper()
    if not engine.status["base_trained"]:
        log.warning("training the adapter on a backbone that was never pretrained")
    if not engine.status["adapter_initialized"]:
        engine.init_adapter()
    n = len(eeg)
    if n == 0 or len(latents) != n or len(captions) != n:
        raise ValidationError("eeg, latents and captions must be non-empty and aligned")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    before = engine.frozen_hash()
    engine.freeze()
    params = engine.trainable_parameters()
    opt = torch.optim.Adam(params, lr=hyper.lr)
    eeg_t = torch.from_numpy(np.ascontiguousarray(eeg, dtype=np.float32))
    steps_per_epoch = -(-n // hyper.batch)
    total_steps = hyper.epochs * steps_per_epoch
    if hyper.max_steps is not None:
        total_steps = min(total_steps, hyper.max_steps)
    history = {"train_loss": [], "val_loss": [], "hyper": asdict(hyper), "seed": seed}
    best = (float("inf"), None)
    T = engine.config.T
    t0 = time.time()
    engine.adapter.train()
    engine.proj.train()
    for step, idx in enumerate(_batches(rng, n, hyper.batch, total_steps)):
        ib = torch.from_numpy(idx)
        texts = ["" if rng.random() < hyper.p_uncond else captions[i] for i in idx]
        t = torch.randint(1, T + 1, (len(idx),), generator=gen)
        eps = torch.randn(latents[ib].shape, generator=gen)
        loss = diffusion_loss(engine, latents[ib], eeg_t[ib], engine.embed_text(texts), t, eps)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite adapter loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        engine.status["adapter_steps"] += 1
        history["train_loss"].append(loss.item())
        end_of_epoch = (step + 1) % steps_per_epoch == 0 or step + 1 == total_steps
        if val is not None and end_of_epoch:
            v_eeg, v_lat, v_cap = val
            vl = _val_loss(engine, torch.from_numpy(np.ascontiguousarray(v_eeg, dtype=np.float32)),
                           v_lat, list(v_cap), seed + 1)
            history["val_loss"].append(vl)
            if vl < best[0]:
                best = (vl, {k: {n_: p.clone() for n_, p in getattr(engine, k).state_dict().items()}
                             for k in ("adapter", "proj", "zero_inject")})
    if best[1] is not None:
        for k, sd in best[1].items():
            getattr(engine, k).load_state_dict(sd)
        history["best_val_loss"] = best[0]
    engine.eval()
    after = engine.frozen_hash()
    history["frozen_sha256"] = after
    history["seconds"] = time.time() - t0
    if after != before:
        raise FrozenWeightMutation(f"frozen weights changed during adapter training "
                                   f"({before[:12]} -> {after[:12]})")
    return history
