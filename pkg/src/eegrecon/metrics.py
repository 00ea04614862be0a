"""Image-set metrics over a pluggable feature backbone.

A backbone exposes three views of a batch of uint8 images [N, H, W, 3]:
``probs`` (softmax rows, [N, K']), ``taps`` (list of [N, C, h, w] feature
maps) and ``embed`` (penultimate features, [N, d]). The desk-scale default
is a small CNN trained on the synthetic icon set; its ``tag`` goes into every
report row so numbers from different backbones are never compared.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from . import checkpoint
from .errors import (
    DimMismatch,
    NonPSDProduct,
    TooFewImages,
    ValidationError,
    ZeroEmbedding,
)

log = logging.getLogger(__name__)

PSD_TOL = 1e-6


class FeatureBackbone(Protocol):
    tag: str

    def probs(self, images: np.ndarray) -> np.ndarray: ...

    def taps(self, images: np.ndarray) -> list[np.ndarray]: ...

    def embed(self, images: np.ndarray) -> np.ndarray: ...


# ---------------------------------------------------------------- backbone

class ToyCNN(nn.Module):
    def __init__(self, num_classes: int, width: int = 16, embed_dim: int = 64):
        super().__init__()
        w = width
        self.stage1 = nn.Sequential(nn.Conv2d(3, w, 3, padding=1), nn.ReLU())
        self.stage2 = nn.Sequential(nn.MaxPool2d(2), nn.Conv2d(w, 2 * w, 3, padding=1), nn.ReLU())
        self.stage3 = nn.Sequential(nn.MaxPool2d(2), nn.Conv2d(2 * w, 4 * w, 3, padding=1), nn.ReLU())
        self.fc = nn.Linear(4 * w, embed_dim)
        self.head = nn.Linear(embed_dim, num_classes)

    def features(self, x):
        t1 = self.stage1(x)
        t2 = self.stage2(t1)
        t3 = self.stage3(t2)
        emb = F.relu(self.fc(t3.mean((2, 3))))
        return [t1, t2, t3], emb

    def forward(self, x):
        return self.head(self.features(x)[1])


def _to_input(images: np.ndarray) -> torch.Tensor:
    x = torch.from_numpy(np.ascontiguousarray(images)).to(torch.float32)
    return x.permute(0, 3, 1, 2) / 127.5 - 1.0


class CnnBackbone:
    """FeatureBackbone over a trained ToyCNN."""

    def __init__(self, net: ToyCNN, tag: str = "toy-cnn-v1", batch: int = 256):
        self.net = net.eval()
        self.tag = tag
        self.batch = batch

    @property
    def num_classes(self) -> int:
        return self.net.head.out_features

    @torch.no_grad()
    def _run(self, images):
        images = np.asarray(images)
        if images.ndim != 4 or images.shape[-1] != 3:
            raise DimMismatch(f"expected [N, H, W, 3] images, got {images.shape}")
        taps, embs, logits = [], [], []
        for s in range(0, len(images), self.batch):
            t, e = self.net.features(_to_input(images[s:s + self.batch]))
            taps.append([x.double().numpy() for x in t])
            embs.append(e.double().numpy())
            logits.append(self.net.head(e).double().numpy())
        return ([np.concatenate(layer) for layer in zip(*taps)],
                np.concatenate(embs), np.concatenate(logits))

    def probs(self, images):
        logits = self._run(images)[2]
        z = logits - logits.max(1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(1, keepdims=True)

    def taps(self, images):
        return self._run(images)[0]

    def embed(self, images):
        return self._run(images)[1]

    def save(self, path):
        checkpoint.save(path, {"kind": "backbone", "tag": self.tag,
                               "num_classes": self.num_classes,
                               "width": self.net.stage1[0].out_channels,
                               "embed_dim": self.net.fc.out_features},
                        {"weights": self.net.state_dict()})

    @classmethod
    def load(cls, path):
        header, state = checkpoint.load(path)
        if header.get("kind") != "backbone":
            raise ValidationError(f"{path} is not a backbone checkpoint")
        net = ToyCNN(header["num_classes"], header["width"], header["embed_dim"])
        net.load_state_dict(state["weights"])
        return cls(net, header["tag"])


def train_backbone(images: np.ndarray, labels: np.ndarray, num_classes: int, steps: int = 400,
                   batch: int = 64, lr: float = 2e-3, seed: int = 0,
                   tag: str = "toy-cnn-v1") -> CnnBackbone:
    """Fit the metric CNN on labelled images with flip/shift augmentation."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    net = ToyCNN(num_classes)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    x_all = _to_input(images)
    y_all = torch.as_tensor(labels, dtype=torch.int64)
    net.train()
    for _ in range(steps):
        idx = torch.from_numpy(rng.integers(0, len(x_all), batch))
        x = x_all[idx]
        if rng.random() < 0.5:
            x = x.flip(3)
        dx, dy = (int(v) for v in rng.integers(-2, 3, 2))
        x = torch.roll(x, (dy, dx), (2, 3))
        loss = F.cross_entropy(net(x), y_all[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
    net.eval()
    return CnnBackbone(net, tag)


# ---------------------------------------------------------- inception score

def inception_score_from_probs(p: np.ndarray, splits: int = 10) -> float:
    """exp of the split-averaged mean KL(p(y|x) || p(y))."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise DimMismatch("probability rows must be [N, K]")
    if splits < 1 or len(p) < 2 * splits:
        raise TooFewImages(f"{len(p)} images for {splits} splits (need >= {2 * splits})")
    scores = []
    for part in np.array_split(p, splits):
        py = part.mean(0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            kl = np.where(part > 0, part * (np.log(part) - np.log(py)), 0.0)
        scores.append(kl.sum(1).mean())
    return float(np.exp(np.mean(scores)))


def inception_score(images: np.ndarray, backbone: FeatureBackbone, splits: int = 10) -> float:
    if len(images) < 2 * splits:
        raise TooFewImages(f"{len(images)} images for {splits} splits (need >= {2 * splits})")
    return inception_score_from_probs(backbone.probs(images), splits)


# -------------------------------------------------------------------- FID

@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, np.float64)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, np.float64)))
        if self.n < 2:
            raise ValidationError("a Gaussian summary needs n >= 2")
        if self.sigma.shape != (len(self.mu), len(self.mu)):
            raise DimMismatch("covariance does not match mean dimension")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-9, rtol=0):
            raise ValidationError("covariance is not symmetric")

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "GaussianSummary":
        f = np.asarray(feats, dtype=np.float64)
        if f.ndim != 2 or len(f) < 2:
            raise TooFewImages("need at least two feature rows")
        sigma = np.cov(f, rowvar=False, ddof=1).reshape(f.shape[1], f.shape[1])
        return cls(f.mean(0), (sigma + sigma.T) / 2, len(f))

    def merge(self, other: "GaussianSummary") -> "GaussianSummary":
        """Pooled summary, as if computed from the concatenated features."""
        if len(self.mu) != len(other.mu):
            raise DimMismatch("cannot merge summaries of different dimension")
        n = self.n + other.n
        mu = (self.n * self.mu + other.n * other.mu) / n
        d = (self.mu - other.mu)[:, None]
        scatter = (self.n - 1) * self.sigma + (other.n - 1) * other.sigma \
            + (self.n * other.n / n) * (d @ d.T)
        sigma = scatter / (n - 1)
        return GaussianSummary(mu, (sigma + sigma.T) / 2, n)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    if w.min(initial=0.0) < -PSD_TOL:
        raise NonPSDProduct(f"eigenvalue {w.min():.3g} below -{PSD_TOL}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def fid(a: GaussianSummary, b: GaussianSummary) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The trace of (S_a S_b)^(1/2) equals that of (S_a^(1/2) S_b S_a^(1/2))^(1/2),
    a symmetric product we can eigendecompose.
    """
    if len(a.mu) != len(b.mu):
        raise DimMismatch(f"feature dims differ: {len(a.mu)} vs {len(b.mu)}")
    ra = _psd_sqrt(a.sigma)
    prod = ra @ b.sigma @ ra
    w = np.linalg.eigvalsh((prod + prod.T) / 2)
    if w.min(initial=0.0) < -PSD_TOL:
        raise NonPSDProduct(f"product eigenvalue {w.min():.3g} below -{PSD_TOL}")
    tr_covmean = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = a.mu - b.mu
    val = diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * tr_covmean
    return float(max(val, 0.0)) if val > -PSD_TOL else float(val)


def fid_images(x: np.ndarray, y: np.ndarray, backbone: FeatureBackbone) -> float:
    return fid(GaussianSummary.from_features(backbone.embed(x)),
               GaussianSummary.from_features(backbone.embed(y)))


# ------------------------------------------------------ perceptual distance

def _unit(f: np.ndarray) -> np.ndarray:
    return f / (np.sqrt((f ** 2).sum(1, keepdims=True)) + 1e-10)


def perceptual_distance_from_taps(taps_x: Sequence[np.ndarray],
                                  taps_y: Sequence[np.ndarray]) -> np.ndarray:
    """Per-pair distance: channel-normalize each tap, squared difference summed
    over channels, averaged over positions, then averaged over taps."""
    if len(taps_x) != len(taps_y):
        raise DimMismatch("tap lists differ in length")
    per_layer = []
    for fx, fy in zip(taps_x, taps_y):
        fx, fy = np.asarray(fx, np.float64), np.asarray(fy, np.float64)
        if fx.shape != fy.shape:
            raise DimMismatch(f"tap shapes differ: {fx.shape} vs {fy.shape}")
        d = ((_unit(fx) - _unit(fy)) ** 2).sum(1)
        per_layer.append(d.reshape(len(d), -1).mean(1))
    return np.mean(per_layer, axis=0)


def perceptual_distances(x: np.ndarray, y: np.ndarray, backbone: FeatureBackbone) -> np.ndarray:
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape:
        raise DimMismatch(f"image shapes differ: {x.shape} vs {y.shape}")
    return perceptual_distance_from_taps(backbone.taps(x), backbone.taps(y))


def perceptual_distance(x: np.ndarray, y: np.ndarray, backbone: FeatureBackbone) -> float:
    """Mean LPIPS-style distance over aligned pairs (single images allowed)."""
    x, y = np.asarray(x), np.asarray(y)
    if x.ndim == 3:
        x, y = x[None], y[None]
    return float(perceptual_distances(x, y, backbone).mean())


# ------------------------------------------------------ embedding similarity

def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a, axis=-1), np.linalg.norm(b, axis=-1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroEmbedding("cosine similarity undefined for a zero embedding")
    return np.clip((a * b).sum(-1) / (na * nb), -1.0, 1.0)


def embedding_similarity(x: np.ndarray, y: np.ndarray, backbone: FeatureBackbone) -> float:
    """Mean cosine similarity of penultimate embeddings over aligned pairs."""
    x, y = np.asarray(x), np.asarray(y)
    if x.ndim == 3:
        x, y = x[None], y[None]
    if x.shape != y.shape:
        raise DimMismatch(f"image shapes differ: {x.shape} vs {y.shape}")
    return float(cosine_rows(backbone.embed(x), backbone.embed(y)).mean())


# ------------------------------------------------------------------ report

REPORT_COLUMNS = ("run_id", "montage", "channels", "gamma", "boosted", "n_images",
                  "is", "fid", "lpips", "clip_sim", "backbone_tag", "seed")


def evaluate_images(generated: np.ndarray, reference: np.ndarray, backbone: FeatureBackbone,
                    boosted: bool, splits: int = 10) -> dict:
    """IS, FID and LPIPS for a generated set against its aligned references.
    CLIP-Sim is computed for raw sets only; boosted rows leave it empty."""
    splits = min(splits, max(1, len(generated) // 2))
    # sets arrive grouped by trial and class; split over a fixed shuffle so
    # every IS split sees the class mix of the whole set
    order = np.random.default_rng(0).permutation(len(generated))
    out = {"is": inception_score(np.asarray(generated)[order], backbone, splits),
           "fid": fid_images(generated, reference, backbone),
           "lpips": perceptual_distance(generated, reference, backbone),
           "clip_sim": None if boosted else embedding_similarity(generated, reference, backbone),
           "is_splits": splits}
    return out
