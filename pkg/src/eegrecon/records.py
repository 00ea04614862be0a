"""Plain records shared between modules (kept here to avoid import cycles)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class EegTrial:
    """One recording: ``data`` is a C x L float32 matrix (microvolts, or
    z-scored units once normalized). ``montage`` names the electrode layout
    the rows follow, when known."""

    trial_id: str
    subject: int
    class_label: int
    image_id: str
    data: np.ndarray
    montage: str | None = None

    def __post_init__(self):
        if np.ndim(self.data) != 2:
            raise ValidationError(f"trial {self.trial_id}: data must be C x L, got {np.shape(self.data)}")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError(f"trial {self.trial_id}: data contains NaN or Inf")

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def samples(self) -> int:
        return int(self.data.shape[1])

    def with_data(self, data: np.ndarray, montage: str | None = None) -> "EegTrial":
        return replace(self, data=data, montage=montage if montage is not None else self.montage)


@dataclass(frozen=True, eq=False)
class StimulusImage:
    image_id: str
    pixels: np.ndarray  # uint8 H x W x 3

    def __post_init__(self):
        p = self.pixels
        if p.dtype != np.uint8 or p.ndim != 3 or p.shape[2] != 3:
            raise ValidationError(f"image {self.image_id}: expected uint8 H x W x 3, got "
                             f"{p.dtype} {p.shape}")

    @property
    def size(self) -> tuple[int, int]:
        return int(self.pixels.shape[0]), int(self.pixels.shape[1])
