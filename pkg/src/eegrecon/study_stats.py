"""Two-alternative forced-choice preference statistics.

Each row records whether a rater picked the boosted image over the raw one
and how confident they were (1-5). The weighted rate is the confidence-
weighted mean of the choice indicator.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyInput, TooFewTrials, ValidationError

ALLOWED_CHANNELS = (24, 32, 64, 128)
_TRUE = {"1", "true", "yes", "y", "t", "boosted"}
_FALSE = {"0", "false", "no", "n", "f", "raw"}


@dataclass(frozen=True)
class PreferenceTrial:
    trial_id: str
    channels: int
    chose_boosted: bool
    confidence: int

    def __post_init__(self):
        if self.channels not in ALLOWED_CHANNELS:
            raise ValidationError(f"channels must be one of {ALLOWED_CHANNELS}, got {self.channels}")
        if not 1 <= self.confidence <= 5:
            raise ValidationError(f"confidence must be in [1, 5], got {self.confidence}")


def _nonempty(trials) -> list[PreferenceTrial]:
    trials = list(trials)
    if not trials:
        raise EmptyInput("no preference trials")
    return trials


def preference_rate(trials: Iterable[PreferenceTrial]) -> float:
    trials = _nonempty(trials)
    return sum(t.chose_boosted for t in trials) / len(trials)


def weighted_preference_rate(trials: Iterable[PreferenceTrial]) -> float:
    trials = _nonempty(trials)
    return sum(t.confidence * t.chose_boosted for t in trials) / sum(t.confidence for t in trials)


def mean_confidence(trials: Iterable[PreferenceTrial]) -> float:
    trials = _nonempty(trials)
    return sum(t.confidence for t in trials) / len(trials)


def binomial_z(p_hat: float, n: int, p0: float = 0.5) -> tuple[float, float]:
    """Two-sided normal approximation: (z, p-value)."""
    if n < 10:
        raise TooFewTrials(f"normal approximation needs n >= 10, got {n}")
    if not 0 < p0 < 1:
        raise ValidationError("p0 must be in (0, 1)")
    z = (p_hat - p0) / math.sqrt(p0 * (1 - p0) / n)
    return z, math.erfc(abs(z) / math.sqrt(2))


def binomial_test(trials: Iterable[PreferenceTrial], p0: float = 0.5) -> dict:
    trials = list(trials)
    if len(trials) < 10:
        raise TooFewTrials(f"normal approximation needs n >= 10, got {len(trials)}")
    z, p = binomial_z(preference_rate(trials), len(trials), p0)
    return {"z": z, "p": p, "n": len(trials), "p0": p0}


def _parse_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in _TRUE:
        return True
    if s in _FALSE:
        return False
    raise ValidationError(f"cannot read chose_boosted value {v!r}")


def read_csv(path: str | Path) -> list[PreferenceTrial]:
    """Columns trial_id,channels,chose_boosted,confidence; extra columns ignored."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"trial_id", "channels", "chose_boosted", "confidence"}
        missing = need - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        try:
            return [PreferenceTrial(r["trial_id"], int(r["channels"]), _parse_bool(r["chose_boosted"]),
                                    int(r["confidence"])) for r in reader]
        except ValueError as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"{path}: {e}") from e


def _block(trials: Sequence[PreferenceTrial]) -> dict:
    return {"n": len(trials), "preference_rate": preference_rate(trials),
            "weighted_preference_rate": weighted_preference_rate(trials),
            "mean_confidence": mean_confidence(trials)}


def summarize(trials: Iterable[PreferenceTrial], p0: float = 0.5) -> dict:
    """Per-montage and pooled rates plus the pooled binomial test."""
    trials = _nonempty(trials)
    per = {}
    for c in sorted({t.channels for t in trials}, reverse=True):
        per[str(c)] = _block([t for t in trials if t.channels == c])
    out = {"per_montage": per, "overall": _block(trials)}
    if len(trials) >= 10:
        b = binomial_test(trials, p0)
        out["binomial"] = {"z": b["z"], "p": b["p"]}
    else:
        out["binomial"] = None
    return out


def write_summary(summary: dict, path: str | Path):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
