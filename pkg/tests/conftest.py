import os

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

torch.set_num_threads(1)

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow,
                                                 HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance outcomes, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {name}: {detail}")


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Default planted-signal recording: 4 classes, 16 channels, 50 trials per class."""
    from eegrecon.dataset_io import EegDataset, generate_synthetic
    root = tmp_path_factory.mktemp("small_ds")
    generate_synthetic(root, n_per_class=50)
    return EegDataset(root)


def dataset_images(ds, ids):
    return np.stack([ds.image(ds.trial(i).image_id).pixels for i in ids])


@pytest.fixture(scope="session")
def toy_engine(small_dataset):
    """Small latent engine: autoencoder and backbone pretrained, adapter trained briefly."""
    from eegrecon.diffusion import (ControlNetHyper, DiffusionEngine, EngineConfig,
                                    pretrain_autoencoder, pretrain_backbone, train_controlnet)
    ds = small_dataset
    X, y, ids = ds.arrays("train")
    imgs = dataset_images(ds, ids)
    eng = DiffusionEngine(EngineConfig(eeg_channels=16, unet_ch=16, emb_dim=64, text_dim=32,
                                       ae_base=16))
    pretrain_autoencoder(eng, imgs, steps=300, seed=0)
    pretrain_backbone(eng, imgs, y, ds.class_names, steps=400, seed=0)
    caps = ["Image of " + ds.class_names[k] for k in y]
    train_controlnet(eng, X, eng.encode_image(imgs), caps, ControlNetHyper(max_steps=30), seed=0)
    eng.eval()
    return eng
