"""EEG -> class decoder supplying the coarse semantic prior.

A small LSTM over time with the montage channels as input features. One
model per montage: ``decode`` refuses trials recorded or projected with a
different montage.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import checkpoint
from .errors import BadK, BadWays, ChannelMismatch, DivergenceError, EmptySplit, ValidationError
from .records import EegTrial

log = logging.getLogger(__name__)

CAPTION_PREFIX = "Image of "


@dataclass
class DecoderConfig:
    hidden: int = 128
    layers: int = 1
    pool: int = 4  # temporal average pooling before the LSTM
    spatial: int = 32  # learned linear channel mixing in front of the LSTM; 0 disables
    # probability of zeroing each input channel during training; makes the
    # decoder tolerate the zeroed rows used by knockout ablations
    channel_dropout: float = 0.1


@dataclass
class DecoderHyper:
    epochs: int = 200
    batch: int = 32
    lr: float = 3e-4

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.lr < 0:
            raise ValidationError(f"bad decoder hyperparameters: {self}")

    @classmethod
    def reference(cls):
        """Full-scale settings; desk runs use the defaults."""
        return cls(epochs=8192, batch=256, lr=3e-4)


class DecoderModel(nn.Module):
    def __init__(self, channels: int, num_classes: int, montage_name: str | None = None,
                 config: DecoderConfig | None = None):
        super().__init__()
        self.config = config or DecoderConfig()
        self.channels = channels
        self.num_classes = num_classes
        self.montage_name = montage_name
        c = self.config
        self.pool = nn.AvgPool1d(c.pool) if c.pool > 1 else nn.Identity()
        self.mix = nn.Conv1d(channels, c.spatial, 1, bias=False) if c.spatial else nn.Identity()
        self.rnn = nn.LSTM(c.spatial or channels, c.hidden, num_layers=c.layers, batch_first=True)
        self.head = nn.Linear(c.hidden, num_classes)
        self.history: dict = {"train_loss": [], "train_acc": [], "val_acc": []}
        self.meta: dict = {}

    def forward(self, x):
        # x: [B, C, L]
        h = self.mix(self.pool(x)).transpose(1, 2)
        out, _ = self.rnn(h)
        return self.head(out[:, -1])

    def header(self) -> dict:
        return {"kind": "decoder", "channels": self.channels, "num_classes": self.num_classes,
                "montage": self.montage_name, "config": asdict(self.config),
                "history": self.history, "meta": self.meta}

    def save(self, path: str | Path):
        checkpoint.save(path, self.header(), {"model": self.state_dict()})

    @classmethod
    def load(cls, path: str | Path) -> "DecoderModel":
        header, state = checkpoint.load(path)
        if header.get("kind") != "decoder":
            raise ValidationError(f"{path} is not a decoder checkpoint")
        m = cls(header["channels"], header["num_classes"], header["montage"],
                DecoderConfig(**header["config"]))
        m.load_state_dict(state["model"])
        m.history = header["history"]
        m.meta = header["meta"]
        m.eval()
        return m


@dataclass
class CaptionControl:
    text: str
    source_label: int


def _accuracy(model, X, y, batch=256):
    if len(y) == 0:
        return float("nan")
    scores = decode_batch(model, X, batch)
    return float(np.mean(predict_labels(scores) == y))


def train_decoder(train: tuple[np.ndarray, np.ndarray], val: tuple[np.ndarray, np.ndarray],
                  montage_name: str | None, num_classes: int,
                  hyper: DecoderHyper | None = None, seed: int = 0,
                  config: DecoderConfig | None = None) -> DecoderModel:
    """Fit a decoder on (X [N,C,L], labels) arrays already projected through
    the montage. Deterministic for a fixed seed in single-threaded mode."""
    hyper = hyper or DecoderHyper()
    Xtr, ytr = train
    Xva, yva = val
    if len(ytr) == 0:
        raise EmptySplit("training split is empty")
    if len(yva) == 0:
        raise EmptySplit("validation split is empty")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = DecoderModel(Xtr.shape[1], num_classes, montage_name, config)
    model.meta = {"hyper": asdict(hyper), "seed": seed, "n_train": int(len(ytr)),
                  "n_val": int(len(yva))}
    opt = torch.optim.Adam(model.parameters(), lr=hyper.lr)
    lossf = nn.CrossEntropyLoss()
    Xt = torch.from_numpy(np.ascontiguousarray(Xtr, dtype=np.float32))
    yt = torch.from_numpy(ytr.astype(np.int64))
    p_drop = model.config.channel_dropout
    for epoch in range(hyper.epochs):
        model.train()
        order = rng.permutation(len(ytr))
        total, correct, seen = 0.0, 0, 0
        for start in range(0, len(order), hyper.batch):
            idx = torch.from_numpy(order[start:start + hyper.batch])
            xb, yb = Xt[idx], yt[idx]
            if p_drop > 0:
                keep = torch.from_numpy(
                    (rng.random((len(idx), xb.shape[1], 1)) >= p_drop).astype(np.float32))
                xb = xb * keep
            logits = model(xb)
            loss = lossf(logits, yb)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite decoder loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            correct += int((logits.argmax(1) == yb).sum())
            seen += len(idx)
        model.history["train_loss"].append(total / seen)
        model.history["train_acc"].append(correct / seen)
        model.history["val_acc"].append(_accuracy(model, Xva, yva))
    model.eval()
    log.info("decoder %s: val top-1 %.3f", montage_name,
             model.history["val_acc"][-1] if hyper.epochs else float("nan"))
    return model


def decode_batch(model: DecoderModel, X: np.ndarray, batch: int = 256) -> np.ndarray:
    if X.ndim != 3 or X.shape[1] != model.channels:
        raise ChannelMismatch(f"decoder expects {model.channels} channels, got shape {X.shape}")
    model.eval()
    out = []
    with torch.no_grad():
        for s in range(0, len(X), batch):
            xb = torch.from_numpy(np.ascontiguousarray(X[s:s + batch], dtype=np.float32))
            out.append(model(xb).double().numpy())
    if not out:
        return np.zeros((0, model.num_classes))
    return np.concatenate(out)


def decode(model: DecoderModel, trial: EegTrial) -> np.ndarray:
    """Class scores for one trial; argmax (lowest index on ties) is the label."""
    if trial.channels != model.channels:
        raise ChannelMismatch(f"trial has {trial.channels} channels, decoder was trained on "
                              f"{model.channels} ({model.montage_name})")
    if trial.montage and model.montage_name and trial.montage != model.montage_name:
        raise ChannelMismatch(f"trial montage {trial.montage} != decoder montage {model.montage_name}")
    return decode_batch(model, trial.data[None])[0]


def predict_labels(scores: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(np.asarray(scores), axis=-1)


def make_caption(scores: Sequence[float], class_names: Sequence[str]) -> CaptionControl:
    label = int(predict_labels(np.asarray(scores, dtype=np.float64)))
    return CaptionControl(CAPTION_PREFIX + class_names[label], label)


def topk_accuracy(scores: np.ndarray, labels: Sequence[int], n_ways: int, k: int,
                  seed: int = 0) -> float:
    """N-way top-k accuracy.

    Each sample is ranked among its true class plus ``n_ways - 1`` distractors
    drawn without replacement from the other classes. The true class counts
    as a hit when fewer than k candidates outrank it; equal scores are broken
    towards the lower class index, as in ``predict_labels``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2:
        raise ValidationError("scores must be [n_samples, n_classes]")
    n, K = scores.shape
    if n_ways < 2 or n_ways > K:
        raise BadWays(f"n_ways must be in [2, {K}], got {n_ways}")
    if k < 1 or k > n_ways:
        raise BadK(f"k must be in [1, {n_ways}], got {k}")
    if n == 0:
        return float("nan")
    rng = np.random.default_rng(seed)
    hits = 0
    for s, y in zip(scores, labels):
        others = np.delete(np.arange(K), y)
        if n_ways - 1 < len(others):
            others = rng.choice(others, size=n_ways - 1, replace=False)
        above = np.sum(s[others] > s[y]) + np.sum((s[others] == s[y]) & (others < y))
        hits += int(above < k)
    return hits / n


@dataclass
class TopKReport:
    ways: int
    top1: float
    top5: float
    k5: int = field(default=5)


def topk_report(scores: np.ndarray, labels: Sequence[int], ways: int = 50, seed: int = 0) -> TopKReport:
    """Top-1 / top-5 with the way count capped at the number of classes."""
    K = np.asarray(scores).shape[1]
    n = min(ways, K)
    k5 = min(5, n)
    return TopKReport(n, topk_accuracy(scores, labels, n, 1, seed),
                      topk_accuracy(scores, labels, n, k5, seed), k5)


def train_for_montage(dataset, montage=None, hyper: DecoderHyper | None = None, seed: int = 0,
                      config: DecoderConfig | None = None) -> DecoderModel:
    """Project the dataset's train/val splits through ``montage`` (the root
    montage when None) and train a decoder dedicated to it."""
    name = montage.name if montage is not None else dataset.root_montage().name
    Xtr, ytr, _ = dataset.arrays("train", montage)
    Xva, yva, _ = dataset.arrays("val", montage)
    model = train_decoder((Xtr, ytr), (Xva, yva), name, dataset.manifest.num_classes,
                          hyper, seed, config)
    model.meta["dataset"] = dataset.manifest.name
    return model
