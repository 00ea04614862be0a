"""Paired EEG/image datasets on disk.

Layout of a dataset directory::

    manifest.json          DatasetManifest fields (+ trial index, normalization)
    trials/<trial_id>.bin  row-major C x L float32, little-endian
    images/<image_id>.png  8-bit RGB

Trials are z-scored per channel at load time with train-split statistics
stored in the manifest; pass ``normalize=False`` to get the raw values.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, ImageDraw

from . import montage as mt
from .errors import (
    InvalidChannelIndex,
    MissingManifest,
    RatioSumError,
    ShapeMismatch,
    UnknownTrialId,
    ValidationError,
)
from .records import EegTrial, StimulusImage

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass
class DatasetManifest:
    name: str
    num_classes: int
    class_names: list[str]
    channels: int
    samples_per_trial: int
    sampling_rate_hz: float
    electrode_labels: list[str]
    splits: dict[str, list[str]] = field(default_factory=lambda: {s: [] for s in SPLITS})
    # per-trial index: {trial_id, subject, class_label, image_id}
    trials: list[dict] = field(default_factory=list)
    image_size: list[int] = field(default_factory=lambda: [32, 32])
    montage: str | None = None
    normalization: dict | None = None

    def __post_init__(self):
        if len(self.class_names) != self.num_classes:
            raise ValidationError("class_names length must equal num_classes")
        if len(self.electrode_labels) != self.channels:
            raise ValidationError("electrode_labels length must equal channels")
        for s in SPLITS:
            self.splits.setdefault(s, [])

    def trial_index(self) -> dict[str, dict]:
        return {t["trial_id"]: t for t in self.trials}

    def validate_splits(self):
        index = self.trial_index()
        seen: set[str] = set()
        for s in SPLITS:
            for tid in self.splits[s]:
                if tid not in index:
                    raise UnknownTrialId(f"split {s} references unknown trial {tid!r}")
                if tid in seen:
                    raise ValidationError(f"trial {tid!r} appears in more than one split")
                seen.add(tid)
        for t in self.trials:
            if not 0 <= int(t["class_label"]) < self.num_classes:
                raise ValidationError(f"trial {t['trial_id']} label out of range")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        raw = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})


# ------------------------------------------------------------------ I/O

def trial_nbytes(manifest: DatasetManifest) -> int:
    return manifest.channels * manifest.samples_per_trial * 4


def write_trial(root: Path, trial_id: str, data: np.ndarray):
    arr = np.ascontiguousarray(data, dtype="<f4")
    (root / "trials" / f"{trial_id}.bin").write_bytes(arr.tobytes(order="C"))


def read_trial_raw(root: Path, manifest: DatasetManifest, trial_id: str) -> np.ndarray:
    path = Path(root) / "trials" / f"{trial_id}.bin"
    buf = path.read_bytes()
    if len(buf) != trial_nbytes(manifest):
        raise ShapeMismatch(
            f"{path.name}: {len(buf)} bytes, expected {trial_nbytes(manifest)} "
            f"({manifest.channels}x{manifest.samples_per_trial} float32)")
    arr = np.frombuffer(buf, dtype="<f4").reshape(manifest.channels, manifest.samples_per_trial)
    return arr.astype(np.float32)


def write_image(root: Path, image_id: str, pixels: np.ndarray):
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(
        Path(root) / "images" / f"{image_id}.png", format="PNG")


def read_image(path: Path | str, image_id: str | None = None) -> StimulusImage:
    path = Path(path)
    with Image.open(path) as im:
        pixels = np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    return StimulusImage(image_id or path.stem, pixels)


def write_dataset(root: str | Path, manifest: DatasetManifest,
                  trials: dict[str, np.ndarray], images: dict[str, np.ndarray]):
    root = Path(root)
    (root / "trials").mkdir(parents=True, exist_ok=True)
    (root / "images").mkdir(parents=True, exist_ok=True)
    for tid, data in trials.items():
        if data.shape != (manifest.channels, manifest.samples_per_trial):
            raise ShapeMismatch(f"trial {tid} has shape {data.shape}")
        write_trial(root, tid, data)
    for iid, pix in images.items():
        write_image(root, iid, pix)
    (root / "manifest.json").write_text(manifest.to_json())


def read_manifest(root: str | Path) -> DatasetManifest:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise MissingManifest(path, "dataset manifest")
    return DatasetManifest.from_json(path.read_text())


def normalize(data: np.ndarray, manifest: DatasetManifest) -> np.ndarray:
    stats = manifest.normalization
    if not stats:
        return data
    mean = np.asarray(stats["mean"], dtype=np.float64)[:, None]
    std = np.asarray(stats["std"], dtype=np.float64)[:, None]
    return ((data - mean) / std).astype(np.float32)


def load_dataset(root: str | Path, normalize_trials: bool = True
                 ) -> tuple[DatasetManifest, Iterator[EegTrial]]:
    """Validate a dataset directory and return its manifest plus a lazy
    iterator over every indexed trial."""
    root = Path(root)
    manifest = read_manifest(root)
    manifest.validate_splits()
    expected = trial_nbytes(manifest)
    for t in manifest.trials:
        p = root / "trials" / f"{t['trial_id']}.bin"
        if not p.is_file():
            raise UnknownTrialId(f"trial file missing: {p}")
        if p.stat().st_size != expected:
            raise ShapeMismatch(f"{p.name}: {p.stat().st_size} bytes, expected {expected}")
        if not (root / "images" / f"{t['image_id']}.png").is_file():
            raise ValidationError(f"image missing for trial {t['trial_id']}: {t['image_id']}")

    def gen():
        for t in manifest.trials:
            data = read_trial_raw(root, manifest, t["trial_id"])
            if normalize_trials:
                data = normalize(data, manifest)
            yield EegTrial(t["trial_id"], int(t["subject"]), int(t["class_label"]),
                           t["image_id"], data, manifest.montage)

    return manifest, gen()


class EegDataset:
    """In-memory view of a dataset directory with split-level array access."""

    def __init__(self, root: str | Path, normalize_trials: bool = True):
        self.root = Path(root)
        self.manifest, it = load_dataset(self.root, normalize_trials)
        self._trials = {t.trial_id: t for t in it}

    def __len__(self):
        return len(self._trials)

    @property
    def class_names(self) -> list[str]:
        return self.manifest.class_names

    def trial(self, trial_id: str) -> EegTrial:
        return self._trials[trial_id]

    def split(self, name: str) -> list[EegTrial]:
        return [self._trials[t] for t in self.manifest.splits[name]]

    def arrays(self, name: str, montage: mt.Montage | None = None):
        """(X [N,C,L] float32, labels [N] int64, trial ids) for one split."""
        trials = self.split(name)
        if montage is not None:
            trials = [mt.project_trial(t, montage) for t in trials]
        if not trials:
            c = len(montage) if montage is not None else self.manifest.channels
            return (np.zeros((0, c, self.manifest.samples_per_trial), np.float32),
                    np.zeros(0, np.int64), [])
        X = np.stack([t.data for t in trials]).astype(np.float32)
        y = np.array([t.class_label for t in trials], dtype=np.int64)
        return X, y, [t.trial_id for t in trials]

    def image(self, image_id: str) -> StimulusImage:
        img = read_image(self.root / "images" / f"{image_id}.png", image_id)
        h, w = self.manifest.image_size
        if img.size != (h, w):
            raise ShapeMismatch(f"image {image_id} is {img.size}, manifest says {(h, w)}")
        return img

    def root_montage(self) -> mt.Montage:
        """Montage matching the stored channel order. Falls back to std-128
        coordinates for known labels (origin for unknown ones)."""
        name = self.manifest.montage or self.manifest.name
        try:
            m = mt.load_fixture(name)
            if m.labels == self.manifest.electrode_labels:
                return m
        except Exception:
            pass
        ref = mt.load_fixture("std-128")
        known = {e.label: (e.x, e.y) for e in ref.electrodes}
        recs = [{"label": lab, "x": known.get(lab, (0.0, 0.0))[0], "y": known.get(lab, (0.0, 0.0))[1]}
                for lab in self.manifest.electrode_labels]
        return mt.root_from_records(name, recs)


# -------------------------------------------------------------- splitting

def split_trials(manifest: DatasetManifest, ratios: Sequence[float] = (0.8, 0.1, 0.1),
                 seed: int = 0) -> DatasetManifest:
    """Stratified split: within each class, counts follow ``ratios`` by the
    largest-remainder rule, so every count is within 1 of ratio * n_class."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise RatioSumError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[str]] = {}
    for t in manifest.trials:
        by_class.setdefault(int(t["class_label"]), []).append(t["trial_id"])
    splits = {s: [] for s in SPLITS}
    for k in sorted(by_class):
        ids = sorted(by_class[k])
        ids = [ids[i] for i in rng.permutation(len(ids))]
        n = len(ids)
        ideal = [r * n for r in ratios]
        counts = [int(math.floor(x)) for x in ideal]
        rest = n - sum(counts)
        order = sorted(range(3), key=lambda i: (-(ideal[i] - counts[i]), i))
        for i in order[:rest]:
            counts[i] += 1
        start = 0
        for s, c in zip(SPLITS, counts):
            splits[s].extend(ids[start:start + c])
            start += c
    out = DatasetManifest(**{**asdict(manifest), "splits": splits})
    return out


def compute_normalization(root: Path, manifest: DatasetManifest) -> dict:
    ids = manifest.splits["train"] or [t["trial_id"] for t in manifest.trials]
    if not ids:
        return {"mean": [0.0] * manifest.channels, "std": [1.0] * manifest.channels}
    total = np.zeros(manifest.channels)
    sq = np.zeros(manifest.channels)
    count = 0
    for tid in ids:
        x = read_trial_raw(root, manifest, tid).astype(np.float64)
        total += x.sum(1)
        sq += (x * x).sum(1)
        count += x.shape[1]
    mean = total / count
    std = np.sqrt(np.maximum(sq / count - mean ** 2, 0.0))
    std[std < 1e-8] = 1.0
    return {"mean": mean.tolist(), "std": std.tolist()}


# --------------------------------------------------------------- synthetic

PALETTE = [
    ("red", (220, 30, 30)), ("blue", (30, 60, 220)), ("green", (30, 160, 50)),
    ("orange", (240, 140, 20)), ("purple", (140, 40, 180)), ("teal", (20, 150, 150)),
    ("black", (20, 20, 20)), ("pink", (230, 90, 170)), ("brown", (120, 70, 30)),
    ("navy", (20, 30, 100)), ("olive", (120, 130, 20)), ("maroon", (120, 20, 40)),
]
SHAPES = ("circle", "square", "triangle", "diamond", "cross", "ring")


def synthetic_class(k: int) -> tuple[str, tuple[int, int, int], str]:
    color_name, rgb = PALETTE[k % len(PALETTE)]
    # (k mod 12, (k + k // 12) mod 6) is unique for k < 72
    shape = SHAPES[(k + k // len(PALETTE)) % len(SHAPES)]
    name = f"{color_name} {shape}"
    if k >= len(PALETTE) * len(SHAPES):
        name += f" {k}"
    return name, rgb, shape


def draw_icon(k: int, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    _, rgb, shape = synthetic_class(k)
    bg = int(rng.integers(200, 246))
    im = Image.new("RGB", (size, size), (bg, bg, bg))
    d = ImageDraw.Draw(im)
    cx = size / 2 + rng.uniform(-size / 10, size / 10)
    cy = size / 2 + rng.uniform(-size / 10, size / 10)
    r = size * (0.28 + rng.uniform(-0.04, 0.04))
    box = [cx - r, cy - r, cx + r, cy + r]
    if shape == "circle":
        d.ellipse(box, fill=rgb)
    elif shape == "square":
        d.rectangle(box, fill=rgb)
    elif shape == "triangle":
        d.polygon([(cx, cy - r), (cx + r, cy + r), (cx - r, cy + r)], fill=rgb)
    elif shape == "diamond":
        d.polygon([(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)], fill=rgb)
    elif shape == "cross":
        w = r / 3
        d.rectangle([cx - w, cy - r, cx + w, cy + r], fill=rgb)
        d.rectangle([cx - r, cy - w, cx + r, cy + w], fill=rgb)
    else:
        d.ellipse(box, fill=rgb)
        ri = r * 0.55
        d.ellipse([cx - ri, cy - ri, cx + ri, cy + ri], fill=(bg, bg, bg))
    return np.asarray(im, dtype=np.uint8)


def synthetic_labels(channels: int) -> tuple[list[str], str | None]:
    """Electrode labels for a synthetic recording of ``channels`` channels."""
    root = mt.load_fixture("std-128")
    if channels == len(root):
        return root.labels, root.name
    if channels >= 2 * len(mt.REGIONS) and channels < len(root):
        sub = mt.subsample(root, channels, policy="coverage", name=f"syn-{channels}")
        return sub.labels, sub.name
    if channels < len(root):
        return root.labels[:channels], f"syn-{channels}"
    raise ValidationError(f"synthetic recordings support at most {len(root)} channels")


def generate_synthetic(root: str | Path, num_classes: int = 4, channels: int = 16,
                       samples: int = 128, n_per_class: int = 50,
                       informative_channels: Sequence[int] = (0, 1, 14, 15), seed: int = 7,
                       amplitude: float = 1.0, sampling_rate_hz: float = 256.0,
                       image_size: int = 32, ratios=(0.8, 0.1, 0.1), n_subjects: int = 6,
                       name: str = "synthetic") -> DatasetManifest:
    """Write a planted-signal dataset.

    Class k puts ``amplitude * sin(2 pi (4 + 2k) t)`` on every informative
    channel; all channels get N(0, 1) noise. Each trial is paired with its own
    procedurally drawn class icon. Same arguments give byte-identical files.
    """
    if num_classes < 2:
        raise ValidationError("need at least two classes")
    informative = sorted(int(c) for c in informative_channels)
    bad = [c for c in informative if not 0 <= c < channels]
    if bad:
        raise InvalidChannelIndex(f"informative channels {bad} outside [0, {channels})")
    labels, montage_name = synthetic_labels(channels)
    root = Path(root)
    (root / "trials").mkdir(parents=True, exist_ok=True)
    (root / "images").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    t = np.arange(samples) / sampling_rate_hz
    records = []
    for k in range(num_classes):
        template = amplitude * np.sin(2 * np.pi * (4 + 2 * k) * t)
        for j in range(n_per_class):
            data = rng.standard_normal((channels, samples))
            if informative:
                data[informative] += template
            tid = f"t{k:03d}_{j:04d}"
            iid = f"img{k:03d}_{j:04d}"
            write_trial(root, tid, data.astype(np.float32))
            write_image(root, iid, draw_icon(k, rng, image_size))
            records.append({"trial_id": tid, "subject": (k * n_per_class + j) % n_subjects,
                            "class_label": k, "image_id": iid})

    manifest = DatasetManifest(
        name=name, num_classes=num_classes,
        class_names=[synthetic_class(k)[0] for k in range(num_classes)],
        channels=channels, samples_per_trial=samples, sampling_rate_hz=sampling_rate_hz,
        electrode_labels=labels, trials=records, image_size=[image_size, image_size],
        montage=montage_name)
    manifest = split_trials(manifest, ratios, seed)
    manifest.normalization = compute_normalization(root, manifest)
    (root / "manifest.json").write_text(manifest.to_json())
    log.info("wrote synthetic dataset %s: %d trials", root, len(records))
    return manifest
