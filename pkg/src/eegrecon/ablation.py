"""Electrode and region knockout studies against a trained decoder, plus
topographic export of per-electrode values."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import matplotlib
import numpy as np
from PIL import Image, ImageDraw

from . import montage as mt
from .decoder import DecoderModel, decode_batch, topk_report
from .errors import ChannelMismatch, CountMismatch, EmptyRegion, IndexOutOfRange, ValidationError
from .records import EegTrial

log = logging.getLogger(__name__)

MODES = ("zero-fill", "retrain")


@dataclass(frozen=True)
class ElectrodeKnockoutResult:
    label: str
    top1: float
    top5: float
    drop_top1: float = 0.0
    drop_top5: float = 0.0


@dataclass(frozen=True)
class RegionKnockoutResult:
    region: str
    remaining_channels: int
    top1: float
    top5: float
    mode: str = "zero-fill"
    drop_top1: float = 0.0
    drop_top5: float = 0.0


def knockout_electrode(trial: EegTrial, channel_index: int) -> EegTrial:
    """Copy of ``trial`` with one channel set to zero. The input is untouched."""
    if not 0 <= channel_index < trial.channels:
        raise IndexOutOfRange(f"channel {channel_index} outside [0, {trial.channels})")
    data = trial.data.copy()
    data[channel_index] = 0.0
    return trial.with_data(data, trial.montage)


def knockout_rows(X: np.ndarray, rows: Sequence[int]) -> np.ndarray:
    """Batch version on [N, C, L] arrays; returns a zeroed copy."""
    rows = list(rows)
    for r in rows:
        if not 0 <= r < X.shape[1]:
            raise IndexOutOfRange(f"channel {r} outside [0, {X.shape[1]})")
    out = X.copy()
    out[:, rows] = 0.0
    return out


def _check_decoder(decoder: DecoderModel, montage: mt.Montage):
    if decoder.channels != len(montage):
        raise ChannelMismatch(f"decoder has {decoder.channels} inputs, montage "
                              f"{montage.name} has {len(montage)} electrodes")
    if decoder.montage_name and decoder.montage_name != montage.name:
        raise ChannelMismatch(f"decoder trained for {decoder.montage_name}, not {montage.name}")


def _score(decoder, X, y, ways, seed):
    r = topk_report(decode_batch(decoder, X), y, ways, seed)
    return r.top1, r.top5


def baseline(X, y, decoder, montage, ways: int = 50, seed: int = 0) -> dict:
    _check_decoder(decoder, montage)
    top1, top5 = _score(decoder, X, y, ways, seed)
    return {"top1": top1, "top5": top5, "n": int(len(y))}


def electrode_sweep(X: np.ndarray, y: np.ndarray, decoder: DecoderModel, montage: mt.Montage,
                    ways: int = 50, seed: int = 0) -> list[ElectrodeKnockoutResult]:
    """Zero each electrode in turn over the whole split ([N, C, L], already
    in montage order) and record top-1 / top-5 against the intact baseline."""
    base = baseline(X, y, decoder, montage, ways, seed)
    out = []
    for i, label in enumerate(montage.labels):
        top1, top5 = _score(decoder, knockout_rows(X, [i]), y, ways, seed)
        out.append(ElectrodeKnockoutResult(label, top1, top5, base["top1"] - top1,
                                           base["top5"] - top5))
    return out


def region_sweep(X: np.ndarray, y: np.ndarray, montage: mt.Montage, mode: str = "zero-fill",
                 decoder: DecoderModel | None = None,
                 decoder_factory: Callable[[mt.Montage], DecoderModel] | None = None,
                 ways: int = 50, seed: int = 0,
                 regions: Sequence[str] = mt.REGIONS) -> list[RegionKnockoutResult]:
    """Remove each region in turn.

    zero-fill: one decoder, the region's rows zeroed. retrain:
    ``decoder_factory(reduced_montage)`` trains a decoder on the remaining
    channels and the split is evaluated on those channels only. Baseline
    deltas need ``decoder`` in both modes.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    if mode == "zero-fill" and decoder is None:
        raise ValidationError("zero-fill mode needs a trained decoder")
    if mode == "retrain" and decoder_factory is None:
        raise ValidationError("retrain mode needs a decoder factory")
    for r in regions:
        if not montage.region_indices(r):
            raise EmptyRegion(f"montage {montage.name} has no {r} electrodes")
    base = baseline(X, y, decoder, montage, ways, seed) if decoder is not None else None
    out = []
    for r in regions:
        rows = montage.region_indices(r)
        if mode == "zero-fill":
            top1, top5 = _score(decoder, knockout_rows(X, rows), y, ways, seed)
        else:
            reduced = montage.without_region(r)
            keep = [i for i in range(len(montage)) if i not in set(rows)]
            model = decoder_factory(reduced)
            top1, top5 = _score(model, X[:, keep], y, ways, seed)
        d1 = base["top1"] - top1 if base else float("nan")
        d5 = base["top5"] - top5 if base else float("nan")
        out.append(RegionKnockoutResult(r, len(montage) - len(rows), top1, top5, mode, d1, d5))
    return out


# ----------------------------------------------------------------- topomap

def interpolate_grid(values: Sequence[float], coords: np.ndarray, res: int = 128,
                     power: float = 2.0) -> np.ndarray:
    """Inverse-distance-weighted map on a res x res grid over [-1, 1]^2.
    Points outside the unit disc are NaN. Row 0 is the top (anterior) edge."""
    values = np.asarray(values, np.float64)
    coords = np.asarray(coords, np.float64)
    axis = np.linspace(-1.0, 1.0, res)
    gx, gy = np.meshgrid(axis, axis[::-1])
    pts = np.stack([gx.ravel(), gy.ravel()], 1)
    d = np.linalg.norm(pts[:, None, :] - coords[None, :, :], axis=2)
    exact = d < 1e-12
    with np.errstate(divide="ignore"):
        w = 1.0 / d ** power
    w[exact.any(1)] = exact[exact.any(1)].astype(np.float64)
    grid = (w @ values) / w.sum(1)
    grid[np.hypot(pts[:, 0], pts[:, 1]) > 1.0] = np.nan
    return grid.reshape(res, res)


def render_topomap(grid: np.ndarray, coords: np.ndarray | None = None, cmap: str = "viridis",
                   vmin: float | None = None, vmax: float | None = None,
                   scale: int = 2) -> Image.Image:
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if vmin is None else vmin
    hi = float(finite.max()) if vmax is None else vmax
    norm = np.full_like(grid, 0.5) if hi <= lo else (grid - lo) / (hi - lo)
    rgba = matplotlib.colormaps[cmap](np.nan_to_num(np.clip(norm, 0, 1)))
    rgb = (rgba[..., :3] * 255).round().astype(np.uint8)
    rgb[~np.isfinite(grid)] = 255
    img = Image.fromarray(rgb, "RGB")
    res = grid.shape[0]
    if scale > 1:
        img = img.resize((res * scale, res * scale), Image.NEAREST)
    if coords is not None:
        draw = ImageDraw.Draw(img)
        size = res * scale
        for x, y in np.asarray(coords):
            px = (x + 1) / 2 * (size - 1)
            py = (1 - (y + 1) / 2) * (size - 1)
            draw.ellipse([px - 2, py - 2, px + 2, py + 2], fill=(0, 0, 0))
    return img


def topomap_export(values: Sequence[float], montage: mt.Montage, path: str | Path,
                   drops: Sequence[float] | None = None, res: int = 128,
                   dots: bool = True) -> dict:
    """Write <path>.csv (label,x,y,value[,drop]) and <path>.png."""
    values = np.asarray(values, np.float64)
    if len(values) != len(montage):
        raise CountMismatch(f"{len(values)} values for {len(montage)} electrodes")
    if drops is not None and len(drops) != len(montage):
        raise CountMismatch(f"{len(drops)} drops for {len(montage)} electrodes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_path, png_path = path.with_suffix(".csv"), path.with_suffix(".png")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "x", "y", "value"] + (["drop"] if drops is not None else []))
        for i, e in enumerate(montage.electrodes):
            row = [e.label, f"{e.x:.6f}", f"{e.y:.6f}", f"{values[i]:.6f}"]
            if drops is not None:
                row.append(f"{drops[i]:.6f}")
            w.writerow(row)
    grid = interpolate_grid(values, montage.coords, res)
    render_topomap(grid, montage.coords if dots else None).save(png_path)
    return {"csv": str(csv_path), "png": str(png_path)}


def write_summary(path: str | Path, base: dict, electrodes: Sequence[ElectrodeKnockoutResult],
                  regions: Sequence[RegionKnockoutResult], montage_name: str, ways: int):
    summary = {"montage": montage_name, "ways": ways, "baseline": base,
               "electrodes": [asdict(r) for r in electrodes],
               "regions": [asdict(r) for r in regions],
               "region_mode": regions[0].mode if regions else None}
    Path(path).write_text(json.dumps(summary, indent=2) + "\n")
    return summary
