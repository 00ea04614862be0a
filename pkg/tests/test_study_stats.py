import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eegrecon import study_stats as ss
from eegrecon.errors import EmptyInput, TooFewTrials, ValidationError


def _t(i, chose, conf=3, ch=128):
    return ss.PreferenceTrial(f"t{i}", ch, chose, conf)


def test_rates_hand_values():
    trials = [_t(0, True, 5), _t(1, True, 1), _t(2, False, 2), _t(3, True, 4)]
    assert ss.preference_rate(trials) == 0.75
    assert ss.weighted_preference_rate(trials) == pytest.approx(10 / 12, abs=1e-15)
    assert ss.mean_confidence(trials) == 3.0


def test_weighted_rate_five_sixths():
    # all confidence 5, five of six boosted
    trials = [_t(i, i != 0, 5) for i in range(6)]
    assert ss.weighted_preference_rate(trials) == pytest.approx(5 / 6, abs=1e-15)


def test_empty_input():
    for f in (ss.preference_rate, ss.weighted_preference_rate, ss.mean_confidence, ss.summarize):
        with pytest.raises(EmptyInput):
            f([])


def test_too_few_trials():
    with pytest.raises(TooFewTrials):
        ss.binomial_z(0.9, 9)
    with pytest.raises(TooFewTrials):
        ss.binomial_test([_t(i, True) for i in range(9)])
    assert ss.summarize([_t(i, True) for i in range(9)])["binomial"] is None


def test_null_rate_gives_zero():
    z, p = ss.binomial_z(0.5, 100)
    assert z == 0.0 and p == 1.0


def test_z_hand_value():
    # n = 100, p = 0.6: z = 0.1 / sqrt(0.25 / 100) = 2
    z, p = ss.binomial_z(0.6, 100)
    assert z == pytest.approx(2.0, abs=1e-12)
    assert p == pytest.approx(0.04550026389635842, abs=1e-12)


def test_bad_records():
    with pytest.raises(ValidationError):
        ss.PreferenceTrial("x", 16, True, 3)
    with pytest.raises(ValidationError):
        ss.PreferenceTrial("x", 128, True, 6)
    with pytest.raises(ValidationError):
        ss.binomial_z(0.5, 20, p0=1.0)


@given(st.lists(st.tuples(st.sampled_from(ss.ALLOWED_CHANNELS), st.booleans(), st.integers(1, 5)),
                min_size=1, max_size=60))
def test_per_montage_recombines(rows):
    trials = [ss.PreferenceTrial(f"t{i}", c, b, k) for i, (c, b, k) in enumerate(rows)]
    s = ss.summarize(trials)
    per = s["per_montage"].values()
    n = sum(b["n"] for b in per)
    assert n == len(trials)
    pooled = sum(b["preference_rate"] * b["n"] for b in per) / n
    assert abs(pooled - s["overall"]["preference_rate"]) <= 1e-12
    assert 0 <= s["overall"]["weighted_preference_rate"] <= 1
    assert list(s["per_montage"]) == sorted(s["per_montage"], key=int, reverse=True)


@given(st.integers(10, 500), st.data())
def test_z_monotone_in_rate(n, data):
    k1 = data.draw(st.integers(0, n - 1))
    k2 = data.draw(st.integers(k1 + 1, n))
    z1, _ = ss.binomial_z(k1 / n, n)
    z2, _ = ss.binomial_z(k2 / n, n)
    assert z1 < z2


@given(st.floats(0, 1), st.integers(10, 1000))
def test_p_value_in_unit_interval(p_hat, n):
    z, p = ss.binomial_z(p_hat, n)
    assert 0 <= p <= 1
    assert math.isclose(p, math.erfc(abs(z) / math.sqrt(2)))


def test_read_csv_ignores_extra_columns(tmp_path):
    p = tmp_path / "choices.csv"
    p.write_text("rater,trial_id,channels,chose_boosted,confidence,notes\n"
                 "r1,a,128,1,5,x\nr2,b,24,false,2,\nr1,c,64,boosted,3,y\n")
    trials = ss.read_csv(p)
    assert [(t.trial_id, t.channels, t.chose_boosted, t.confidence) for t in trials] == [
        ("a", 128, True, 5), ("b", 24, False, 2), ("c", 64, True, 3)]


@pytest.mark.parametrize("body", [
    "trial_id,channels,confidence\na,128,3\n",
    "trial_id,channels,chose_boosted,confidence\na,128,maybe,3\n",
    "trial_id,channels,chose_boosted,confidence\na,abc,1,3\n",
    "trial_id,channels,chose_boosted,confidence\na,128,1,9\n",
])
def test_read_csv_rejects(tmp_path, body):
    p = tmp_path / "c.csv"
    p.write_text(body)
    with pytest.raises(ValidationError):
        ss.read_csv(p)


def test_summary_written(tmp_path):
    trials = [_t(i, i % 4 != 0, 4, ch) for i, ch in enumerate([128, 24] * 10)]
    s = ss.summarize(trials)
    ss.write_summary(s, tmp_path / "s.json")
    back = json.loads((tmp_path / "s.json").read_text())
    assert set(back["per_montage"]) == {"128", "24"}
    assert back["binomial"]["z"] == pytest.approx(s["binomial"]["z"])
    assert back["overall"]["preference_rate"] == 0.75
