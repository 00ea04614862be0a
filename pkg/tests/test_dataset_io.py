import hashlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eegrecon import dataset_io as dio
from eegrecon import decoder as dec
from eegrecon.errors import (InvalidChannelIndex, MissingManifest, RatioSumError, ShapeMismatch,
                             UnknownTrialId, ValidationError)
from eegrecon.records import EegTrial, StimulusImage


def _tree_hashes(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _manifest(n_per_class=5, K=2, C=3, L=4):
    trials = [{"trial_id": f"t{k}_{j}", "subject": 0, "class_label": k, "image_id": f"i{k}_{j}"}
              for k in range(K) for j in range(n_per_class)]
    return dio.DatasetManifest(name="m", num_classes=K, class_names=[f"c{k}" for k in range(K)],
                               channels=C, samples_per_trial=L, sampling_rate_hz=100.0,
                               electrode_labels=["Oz", "Cz", "Fz"][:C], trials=trials,
                               image_size=[8, 8])


def test_synthetic_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    dio.generate_synthetic(a, num_classes=4, channels=16, samples=128, n_per_class=50,
                           informative_channels=[0, 1, 14, 15], seed=7)
    dio.generate_synthetic(b, num_classes=4, channels=16, samples=128, n_per_class=50,
                           informative_channels=[0, 1, 14, 15], seed=7)
    assert _tree_hashes(a) == _tree_hashes(b)
    c = tmp_path / "c"
    dio.generate_synthetic(c, n_per_class=50, seed=8)
    assert _tree_hashes(a) != _tree_hashes(c)


def test_synthetic_bad_channel(tmp_path):
    with pytest.raises(InvalidChannelIndex):
        dio.generate_synthetic(tmp_path, channels=16, informative_channels=[20])
    with pytest.raises(ValidationError):
        dio.generate_synthetic(tmp_path, num_classes=1)


def test_synthetic_default_split_and_shapes(small_dataset):
    m = small_dataset.manifest
    counts = {s: len(v) for s, v in m.splits.items()}
    assert counts == {"train": 160, "val": 20, "test": 20}
    for s in dio.SPLITS:
        labels = [small_dataset.trial(t).class_label for t in m.splits[s]]
        assert np.bincount(labels, minlength=4).tolist() == [counts[s] // 4] * 4
    t = small_dataset.trial(m.splits["train"][0])
    assert t.data.shape == (16, 128) and t.data.dtype == np.float32
    img = small_dataset.image(t.image_id)
    assert img.pixels.shape == (32, 32, 3) and img.pixels.dtype == np.uint8


def test_normalization_uses_train_split(small_dataset):
    X, _, _ = small_dataset.arrays("train")
    # z-scored with train statistics: per-channel mean 0 and std 1 over the train split
    assert np.allclose(X.mean(axis=(0, 2)), 0, atol=1e-4)
    assert np.allclose(X.std(axis=(0, 2)), 1, atol=1e-3)


def test_synthetic_separability_oracle(tmp_path):
    # five times chance needs K >= 6; the 4-class default is checked against the 0.9 bar
    dio.generate_synthetic(tmp_path, num_classes=10, channels=16, n_per_class=30,
                           informative_channels=[0, 1, 14, 15], seed=7)
    ds = dio.EegDataset(tmp_path)
    Xtr, ytr, _ = ds.arrays("train")
    Xte, yte, _ = ds.arrays("test")
    f = lambda X: np.c_[X[:, [0, 1, 14, 15]].mean(1), np.ones(len(X))]
    W, *_ = np.linalg.lstsq(f(Xtr), np.eye(10)[ytr], rcond=None)
    acc = np.mean(np.argmax(f(Xte) @ W, 1) == yte)
    assert acc > 5 * (1 / 10)


def test_no_informative_channels_is_chance(tmp_path):
    dio.generate_synthetic(tmp_path, n_per_class=250, informative_channels=[], seed=5)
    ds = dio.EegDataset(tmp_path)
    model = dec.train_for_montage(ds, hyper=dec.DecoderHyper(epochs=20), seed=0)
    X, y, _ = ds.arrays("test")
    acc = float(np.mean(dec.predict_labels(dec.decode_batch(model, X)) == y))
    assert abs(acc - 0.25) <= 0.1


def test_round_trip_bit_exact(tmp_path):
    m = _manifest()
    m = dio.split_trials(m, (0.6, 0.2, 0.2), 0)
    rng = np.random.default_rng(0)
    trials = {t["trial_id"]: rng.standard_normal((3, 4)).astype(np.float32) * 1e3
              for t in m.trials}
    trials["t0_0"][0, 0] = np.float32(1.2345678e-30)
    images = {t["image_id"]: rng.integers(0, 256, (8, 8, 3), dtype=np.uint8) for t in m.trials}
    dio.write_dataset(tmp_path, m, trials, images)
    ds = dio.EegDataset(tmp_path, normalize_trials=False)
    for tid, data in trials.items():
        assert ds.trial(tid).data.tobytes() == data.tobytes()
    for t in m.trials:
        assert np.array_equal(ds.image(t["image_id"]).pixels, images[t["image_id"]])


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=32), min_size=12, max_size=12))
def test_round_trip_property(tmp_path_factory, values):
    root = tmp_path_factory.mktemp("rt")
    m = _manifest(n_per_class=1, K=2)
    data = np.array(values, dtype=np.float32).reshape(3, 4)
    trials = {"t0_0": data, "t1_0": -data}
    images = {"i0_0": np.zeros((8, 8, 3), np.uint8), "i1_0": np.zeros((8, 8, 3), np.uint8)}
    dio.write_dataset(root, m, trials, images)
    mf, it = dio.load_dataset(root, normalize_trials=False)
    got = {t.trial_id: t.data for t in it}
    assert got["t0_0"].tobytes() == data.tobytes()
    assert got["t1_0"].tobytes() == (-data).tobytes()


def test_empty_dataset_is_valid(tmp_path):
    m = dio.DatasetManifest(name="e", num_classes=2, class_names=["a", "b"], channels=1,
                            samples_per_trial=4, sampling_rate_hz=1.0, electrode_labels=["Oz"])
    dio.write_dataset(tmp_path, m, {}, {})
    mf, it = dio.load_dataset(tmp_path)
    assert list(it) == [] and all(v == [] for v in mf.splits.values())


def test_eegcvpr40_shaped_manifest_validates():
    from eegrecon import montage as mt
    labels = mt.load_fixture("std-128").labels
    trials = [{"trial_id": f"t{k}_{j}", "subject": j % 6, "class_label": k, "image_id": f"i{k}_{j}"}
              for k in range(40) for j in range(50)]
    m = dio.DatasetManifest(name="eegcvpr40", num_classes=40, class_names=[f"c{k}" for k in range(40)],
                            channels=128, samples_per_trial=440, sampling_rate_hz=1000.0,
                            electrode_labels=labels, trials=trials)
    m = dio.split_trials(m)
    m.validate_splits()
    assert [len(m.splits[s]) for s in dio.SPLITS] == [1600, 200, 200]


def test_truncated_trial_is_shape_mismatch(tmp_path):
    m = _manifest()
    trials = {t["trial_id"]: np.zeros((3, 4), np.float32) for t in m.trials}
    images = {t["image_id"]: np.zeros((8, 8, 3), np.uint8) for t in m.trials}
    dio.write_dataset(tmp_path, m, trials, images)
    p = tmp_path / "trials" / "t0_0.bin"
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(ShapeMismatch):
        dio.load_dataset(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingManifest):
        dio.load_dataset(tmp_path)


def test_unknown_trial_in_split(tmp_path):
    m = _manifest()
    m.splits["test"] = ["nope"]
    dio.write_dataset(tmp_path, m, {t["trial_id"]: np.zeros((3, 4), np.float32) for t in m.trials},
                      {t["image_id"]: np.zeros((8, 8, 3), np.uint8) for t in m.trials})
    with pytest.raises(UnknownTrialId):
        dio.load_dataset(tmp_path)


def test_split_80_10_10():
    m = dio.split_trials(_manifest(n_per_class=50, K=3), (0.8, 0.1, 0.1), 0)
    idx = m.trial_index()
    for k in range(3):
        per = [sum(idx[t]["class_label"] == k for t in m.splits[s]) for s in dio.SPLITS]
        assert per == [40, 5, 5]


def test_split_all_train():
    m = dio.split_trials(_manifest(), (1, 0, 0), 0)
    assert len(m.splits["train"]) == 10 and not m.splits["val"] and not m.splits["test"]


def test_split_bad_ratios():
    with pytest.raises(RatioSumError):
        dio.split_trials(_manifest(), (0.5, 0.5, 0.1), 0)


@given(n=st.integers(1, 40), K=st.integers(2, 5),
       r=st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)).filter(lambda t: sum(t) > 0),
       seed=st.integers(0, 10))
def test_split_stratification_property(n, K, r, seed):
    ratios = tuple(x / sum(r) for x in r)
    ratios = (ratios[0], ratios[1], max(0.0, 1.0 - ratios[0] - ratios[1]))
    m = dio.split_trials(_manifest(n_per_class=n, K=K), ratios, seed)
    idx = m.trial_index()
    all_ids = [t for s in dio.SPLITS for t in m.splits[s]]
    assert sorted(all_ids) == sorted(idx) and len(set(all_ids)) == len(all_ids)
    for k in range(K):
        for s, ratio in zip(dio.SPLITS, ratios):
            c = sum(idx[t]["class_label"] == k for t in m.splits[s])
            assert abs(c - ratio * n) <= 1 + 1e-9
    assert m.splits == dio.split_trials(_manifest(n_per_class=n, K=K), ratios, seed).splits


def test_records_reject_bad_data():
    with pytest.raises(ValidationError):
        EegTrial("t", 0, 0, "i", np.array([[np.nan, 0.0]], np.float32))
    with pytest.raises(ValidationError):
        StimulusImage("i", np.zeros((4, 4, 3), np.float32))
