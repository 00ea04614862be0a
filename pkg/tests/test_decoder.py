import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from eegrecon import decoder as dec
from eegrecon import montage as mt
from eegrecon.errors import BadK, BadWays, ChannelMismatch, EmptySplit, ValidationError
from eegrecon.records import EegTrial


@pytest.fixture(scope="module")
def trained(small_dataset):
    return dec.train_for_montage(small_dataset, hyper=dec.DecoderHyper(epochs=100), seed=0)


def test_history_and_determinism(small_dataset, trained):
    assert len(trained.history["val_acc"]) == 100
    assert trained.meta["hyper"] == {"epochs": 100, "batch": 32, "lr": 3e-4}
    again = dec.train_for_montage(small_dataset, hyper=dec.DecoderHyper(epochs=3), seed=1)
    other = dec.train_for_montage(small_dataset, hyper=dec.DecoderHyper(epochs=3), seed=1)
    for a, b in zip(again.state_dict().values(), other.state_dict().values()):
        assert torch.equal(a, b)


def test_planted_class_decodes(small_dataset, trained):
    ds = small_dataset
    X, y, ids = ds.arrays("test")
    for k in range(4):
        i = int(np.flatnonzero(y == k)[0])
        trial = ds.trial(ids[i])
        assert int(np.argmax(dec.decode(trained, trial))) == k


def test_reference_hyper_echo(small_dataset):
    h = dec.DecoderHyper.reference()
    assert (h.epochs, h.batch, h.lr) == (8192, 256, 3e-4)
    # accepted and recorded; zero epochs keeps the smoke cheap
    m = dec.train_for_montage(small_dataset, hyper=dec.DecoderHyper(0, 256, 3e-4), seed=0)
    assert m.meta["hyper"] == {"epochs": 0, "batch": 256, "lr": 3e-4}


def test_zero_lr_leaves_weights(small_dataset):
    torch.manual_seed(0)
    init = dec.DecoderModel(16, 4, "syn-16")
    m = dec.train_for_montage(small_dataset, hyper=dec.DecoderHyper(epochs=2, lr=0.0), seed=0)
    for a, b in zip(init.state_dict().values(), m.state_dict().values()):
        assert torch.equal(a, b)
    X, y, _ = small_dataset.arrays("val")
    assert m.history["val_acc"][-1] == dec._accuracy(init, X, y)


def test_empty_split():
    X = np.zeros((0, 4, 16), np.float32)
    with pytest.raises(EmptySplit):
        dec.train_decoder((X, np.zeros(0, int)), (X, np.zeros(0, int)), None, 2)


def test_bad_hyper():
    with pytest.raises(ValidationError):
        dec.DecoderHyper(epochs=-1)


def test_zero_trial_is_finite():
    torch.manual_seed(0)
    m = dec.DecoderModel(8, 3)
    s = dec.decode(m, EegTrial("t", 0, 0, "i", np.zeros((8, 32), np.float32)))
    assert s.shape == (3,) and np.all(np.isfinite(s))


def test_channel_mismatch(trained):
    with pytest.raises(ChannelMismatch):
        dec.decode(trained, EegTrial("t", 0, 0, "i", np.zeros((32, 128), np.float32)))
    with pytest.raises(ChannelMismatch):
        dec.decode(trained, EegTrial("t", 0, 0, "i", np.zeros((16, 128), np.float32), "other"))


def test_save_load_round_trip(tmp_path, trained, small_dataset):
    trained.save(tmp_path / "d.ckpt")
    back = dec.DecoderModel.load(tmp_path / "d.ckpt")
    X, _, _ = small_dataset.arrays("test")
    assert np.array_equal(dec.decode_batch(trained, X), dec.decode_batch(back, X))
    assert back.montage_name == trained.montage_name


def test_captions():
    names = ["panda", "car", "dog"]
    assert dec.make_caption([0.1, -1, 0.0], names).text == "Image of panda"
    c = dec.make_caption([0.0, 2.0, 1.0], names)
    assert c.text == "Image of car" and c.source_label == 1
    assert dec.make_caption([1.0, 1.0, 1.0], names).text == "Image of panda"
    assert dec.make_caption([3.0], ["only"]).source_label == 0


def test_topk_hand_oracle():
    scores = np.array([[3.0, 2.0, 1.0],    # true 0 ranked first: hit
                       [3.0, 2.0, 1.0],    # true 1 ranked second: miss
                       [0.0, 1.0, 5.0]])   # true 2 ranked first: hit
    assert dec.topk_accuracy(scores, [0, 1, 2], 3, 1) == pytest.approx(2 / 3, abs=0)
    assert dec.topk_accuracy(scores, [0, 1, 2], 3, 3) == 1.0


def test_topk_errors():
    s = np.zeros((2, 4))
    with pytest.raises(BadWays):
        dec.topk_accuracy(s, [0, 1], 1, 1)
    with pytest.raises(BadWays):
        dec.topk_accuracy(s, [0, 1], 5, 1)
    with pytest.raises(BadK):
        dec.topk_accuracy(s, [0, 1], 3, 4)


def test_report_caps_ways():
    r = dec.topk_report(np.eye(4), [0, 1, 2, 3], ways=50)
    assert (r.ways, r.k5, r.top1, r.top5) == (4, 4, 1.0, 1.0)


scores_st = st.integers(2, 8).flatmap(lambda K: st.tuples(
    hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.just(K)),
               elements=st.floats(-10, 10, allow_nan=False)),
    st.just(K)))


@given(scores_st, st.integers(0, 5), st.data())
def test_topk_monotone_in_k(sk, seed, data):
    scores, K = sk
    labels = data.draw(st.lists(st.integers(0, K - 1), min_size=len(scores), max_size=len(scores)))
    N = data.draw(st.integers(2, K))
    accs = [dec.topk_accuracy(scores, labels, N, k, seed) for k in range(1, N + 1)]
    assert all(a <= b for a, b in zip(accs, accs[1:]))
    assert accs[-1] == 1.0


@given(scores_st, st.floats(0.01, 100), st.integers(0, 5), st.data())
def test_positive_scaling_invariance(sk, c, seed, data):
    scores, K = sk
    # integer-valued scores: scaling cannot merge two distinct values into a tie
    scores = np.round(scores)
    labels = data.draw(st.lists(st.integers(0, K - 1), min_size=len(scores), max_size=len(scores)))
    N = data.draw(st.integers(2, K))
    k = data.draw(st.integers(1, N))
    assert np.array_equal(dec.predict_labels(scores), dec.predict_labels(scores * c))
    assert dec.topk_accuracy(scores, labels, N, k, seed) == \
        dec.topk_accuracy(scores * c, labels, N, k, seed)


def test_montage_retraining_contract(small_dataset):
    """Each montage gets its own decoder; a decoder refuses another montage's trials."""
    sub = mt.subsample(small_dataset.root_montage(), 10, name="syn-10")
    m = dec.train_for_montage(small_dataset, sub, dec.DecoderHyper(epochs=1), seed=0)
    assert m.channels == 10 and m.montage_name == "syn-10"
    t = mt.project_trial(small_dataset.trial(small_dataset.manifest.splits["test"][0]), sub)
    assert dec.decode(m, t).shape == (4,)
    with pytest.raises(ChannelMismatch):
        dec.decode(m, small_dataset.trial(small_dataset.manifest.splits["test"][0]))
