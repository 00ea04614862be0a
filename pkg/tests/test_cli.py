import json
import math
import subprocess
import sys

import pytest
from filelock import FileLock

from eegrecon import cli
from eegrecon import config as cfgmod
from eegrecon.errors import ConfigValidationError, MissingPrerequisite


def _csv(path, n=20):
    rows = ["trial_id,channels,chose_boosted,confidence"]
    rows += [f"t{i},{128 if i % 2 else 24},{int(i % 5 != 0)},{1 + i % 5}" for i in range(n)]
    path.write_text("\n".join(rows) + "\n")
    return path


def test_study_stats_end_to_end(tmp_path, capsys):
    src = _csv(tmp_path / "choices.csv")
    out = tmp_path / "run"
    assert cli.main(["study-stats", "--output", str(out), "--input", str(src)]) == 0
    summary = json.loads((out / "reports" / "study_stats.json").read_text())
    assert summary["overall"]["n"] == 20 and summary["overall"]["preference_rate"] == 0.8
    assert summary["binomial"]["z"] == pytest.approx(0.3 / math.sqrt(0.25 / 20))
    man = json.loads((out / "manifests" / "study-stats.json").read_text())
    assert man["command"] == "study-stats"
    assert man["artifacts"] == ["reports/study_stats.json"]
    assert man["config_hash"] == cfgmod.from_dict(man["config"]).hash()
    assert "rate=0.8000" in capsys.readouterr().out


def test_missing_prerequisites_exit_2(tmp_path, capsys):
    out = str(tmp_path / "empty")
    for cmd in ("train-decoder", "generate", "boost", "evaluate", "ablate"):
        assert cli.main([cmd, "--output", out]) == 2
    assert "run prepare" in capsys.readouterr().err
    assert cli.main(["study-stats", "--output", out, "--input", str(tmp_path / "none.csv")]) == 2


def test_config_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    for body in ({"gammas": [-1.0]}, {"montages": ["std-7"]}, {"boost": {"strength": 2.0}},
                 {"decoder": {"nope": 1}}, {"colour": "red"}):
        bad.write_text(json.dumps(body))
        assert cli.main(["prepare", "--config", str(bad), "--output", str(tmp_path / "o")]) == 1
    bad.write_text("{not json")
    assert cli.main(["prepare", "--config", str(bad)]) == 1
    assert cli.main(["study-stats", "--output", str(tmp_path / "o")]) == 1
    assert cli.main(["prepare", "--config", str(tmp_path / "missing.json")]) == 2


def test_lock_contention(tmp_path):
    src = _csv(tmp_path / "c.csv")
    out = tmp_path / "run"
    out.mkdir()
    with FileLock(str(out / ".eegrecon.lock")):
        assert cli.main(["study-stats", "--output", str(out), "--input", str(src)]) == 1
    assert cli.main(["study-stats", "--output", str(out), "--input", str(src)]) == 0


def test_overrides(tmp_path):
    args = cli.build_parser().parse_args(
        ["generate", "--output", "o", "--seed", "3", "--montage", "std-24", "--gamma", "2",
         "--gamma", "5", "--boost-strength", "0.3"])
    cfg = cli.apply_overrides(cfgmod.RunConfig(), args).validate()
    assert (cfg.output, cfg.seed, cfg.montages, cfg.gammas, cfg.boost.strength) == \
        ("o", 3, ["std-24"], [2.0, 5.0], 0.3)
    assert cfg.dataset_path.as_posix() == "o/data"


def test_derive_seed_is_stable_and_distinct():
    assert cli.derive_seed(0, "generate", "std-24") == cli.derive_seed(0, "generate", "std-24")
    seeds = {cli.derive_seed(s, "x", m) for s in range(3) for m in ("std-128", "std-24")}
    assert len(seeds) == 6
    assert all(0 <= s < 2 ** 31 for s in seeds)


def test_gain_sign_convention():
    assert cli.gain(2.0, 3.0, True) == 0.5
    assert cli.gain(100.0, 80.0, False) == pytest.approx(0.2)
    assert cli.gain(0.5, 0.6, False) < 0
    assert math.isnan(cli.gain(0.0, 1.0, True))
    assert cli.gamma_tag(7.5) == "7.5" and cli.gamma_tag(4) == "4"


def test_config_round_trip_and_hash(tmp_path):
    cfg = cfgmod.RunConfig(seed=5, gammas=[1.0])
    back = cfgmod.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.hash() == cfg.hash()
    assert cfgmod.RunConfig(seed=6).hash() != cfg.hash()
    with pytest.raises(ConfigValidationError):
        cfgmod.from_dict({"engine": {"T": 1000, "bogus": 0}})
    with pytest.raises(MissingPrerequisite):
        cfgmod.load(tmp_path / "nope.json")
    assert cfgmod.load(None) == cfgmod.RunConfig()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "eegrecon.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in cli.COMMANDS:
        assert cmd in r.stdout
    assert "study-stats" not in cli.PIPELINE
