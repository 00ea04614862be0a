"""Run configuration: one JSON file, nested sections, flag overrides on top.

Unknown keys are rejected so a typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigValidationError, MissingPrerequisite


@dataclass
class SyntheticSection:
    num_classes: int = 4
    channels: int = 128
    samples: int = 128
    n_per_class: int = 50
    # "occipital" plants the signal on every occipital electrode; a list of
    # indices is used verbatim
    informative: Any = "occipital"
    amplitude: float = 0.25
    seed: int = 7


@dataclass
class DecoderSection:
    epochs: int = 100
    batch: int = 32
    lr: float = 3e-4
    hidden: int = 128
    layers: int = 1
    pool: int = 4
    spatial: int = 32
    channel_dropout: float = 0.1


@dataclass
class EngineSection:
    image_size: int = 32
    latent_channels: int = 4
    pixel_space: bool = False
    unet_ch: int = 48
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    ae_steps: int = 600
    ae_lr: float = 2e-3
    base_steps: int = 1200
    base_lr: float = 1e-3
    batch: int = 32


@dataclass
class ControlNetSection:
    lr: float = 1e-4
    batch: int = 32
    epochs: int = 30
    max_steps: int | None = 150
    p_uncond: float = 0.1


@dataclass
class RemoteSection:
    url: str = ""
    timeout: float = 30.0
    retries: int = 2
    max_concurrency: int = 4


@dataclass
class BoostSection:
    strength: float = 0.4
    gamma: float = 7.5
    steps: int = 50
    describer: str = "mock"
    remote: RemoteSection = field(default_factory=RemoteSection)


@dataclass
class MetricsSection:
    backbone_steps: int = 300
    is_splits: int = 10
    ways: int = 50


@dataclass
class AblationSection:
    montage: str = "std-128"
    mode: str = "zero-fill"
    ways: int = 50


@dataclass
class RunConfig:
    output: str = "runs/synthetic"
    dataset: str = ""  # defaults to <output>/data
    montage_dir: str = ""  # extra montage fixtures, checked before packaged ones
    montages: list = field(default_factory=lambda: ["std-128", "std-64", "std-32", "std-24"])
    gammas: list = field(default_factory=lambda: [4.0, 7.5])
    samples_per_trial: int = 4
    sample_steps: int = 50
    seed: int = 0
    study_csv: str = ""
    synthetic: SyntheticSection | None = field(default_factory=SyntheticSection)
    decoder: DecoderSection = field(default_factory=DecoderSection)
    engine: EngineSection = field(default_factory=EngineSection)
    controlnet: ControlNetSection = field(default_factory=ControlNetSection)
    boost: BoostSection = field(default_factory=BoostSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    ablation: AblationSection = field(default_factory=AblationSection)

    @property
    def dataset_path(self) -> Path:
        return Path(self.dataset) if self.dataset else Path(self.output) / "data"

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def validate(self):
        if not self.montages:
            raise ConfigValidationError("at least one montage is required")
        if len(set(self.montages)) != len(self.montages):
            raise ConfigValidationError("duplicate montage names")
        if not self.gammas or any(g < 0 for g in self.gammas):
            raise ConfigValidationError("gammas must be a non-empty list of values >= 0")
        if self.samples_per_trial < 1 or self.sample_steps < 1:
            raise ConfigValidationError("samples_per_trial and sample_steps must be >= 1")
        if not 0 < self.boost.strength <= 1:
            raise ConfigValidationError(f"boost strength {self.boost.strength} outside (0, 1]")
        if self.boost.describer not in ("mock", "remote"):
            raise ConfigValidationError("boost.describer must be 'mock' or 'remote'")
        if self.boost.describer == "remote" and not self.boost.remote.url:
            raise ConfigValidationError("remote describer needs boost.remote.url")
        if self.ablation.mode not in ("zero-fill", "retrain"):
            raise ConfigValidationError("ablation.mode must be 'zero-fill' or 'retrain'")
        from . import montage as mt
        for name in set(self.montages) | {self.ablation.montage}:
            try:
                mt.load_fixture(name, self.montage_dir or None)
            except MissingPrerequisite as e:
                raise ConfigValidationError(f"unknown montage {name!r}") from e
        return self


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigValidationError(f"{where or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigValidationError(f"unknown keys in {where or 'config'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory \
            is not dataclasses.MISSING else fields[name].default
        if dataclasses.is_dataclass(default) and value is not None:
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigValidationError(str(e)) from e


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise MissingPrerequisite(p, "config file")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"{p}: {e}") from e
    return from_dict(data)
