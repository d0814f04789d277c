import json
import sys

import pytest

from qrmexec.cli import main
from qrmexec.config import ConfigError, RunConfig, config_from_dict, dump_config, load_config
from qrmexec.io import read_csv, run_manifest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SMALL = """
seed = 11
[env]
norm_warmup = 5
[train]
episodes = 4
batch = 16
buffer_size = 64
target_sync = 10
hidden = [8, 8]
[experiment.simulate]
seconds = 5.0
[experiment.impact]
n_sims = 50
horizon = 5
lag = 5
[experiment.evaluate]
episodes = 6
[experiment.sweep]
thetas = [0.7]
theta_reinits = [0.85]
episodes = 3
"""


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == RunConfig()
    assert (cfg.env.horizon, cfg.env.n_intervals, cfg.env.shares) == (600.0, 25, 25)
    assert cfg.train.gamma == 0.995 and cfg.train.batch == 1024
    assert (cfg.qrm.theta, cfg.qrm.theta_reinit, cfg.qrm.tick) == (0.7, 0.85, 0.01)


def test_every_violation_is_listed():
    with pytest.raises(ConfigError) as ei:
        config_from_dict({"qrm": {"theta": 1.3}, "env": {"shares": 0}, "bogus": 1,
                          "train": {"gamma": 2.0, "colour": "red"}})
    text = "\n".join(ei.value.errors)
    assert "theta=1.3 outside [0, 1]" in text
    assert "shares" in text and "bogus" in text and "gamma" in text and "colour" in text


def test_negative_intensity_names_level_and_index():
    table = {"limit": [[1.0, 1.0, 1.0]], "market": [[0.0, 1.0, 1.0]], "cancel": [[0.0, 1.0, -2.0]]}
    with pytest.raises(ConfigError, match="level 1, n=2"):
        config_from_dict({"qrm": {"intensities": table, "aes": [1.0]}})


def test_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL)
    cfg = load_config(p)
    q = tmp_path / "again.toml"
    q.write_text(dump_config(cfg))
    assert load_config(q) == cfg
    assert tomllib.loads(dump_config(cfg))["seed"] == 11


def test_parse_error_is_config_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("seed = = 3")
    with pytest.raises(ConfigError, match="parse"):
        load_config(p)


def test_manifest_creates_directory_and_lists_files(tmp_path):
    out = tmp_path / "new" / "dir"
    m = run_manifest(RunConfig(), out, files=[], timestamp="t")
    assert m.exists() and json.loads(m.read_text())["files"] == []


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(SMALL)
    return p


def load_manifest(out):
    m = json.loads((out / "manifest.json").read_text())
    m.pop("timestamp")
    return m


def test_simulate_manifest_is_deterministic(tmp_path, cfg_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    first = load_manifest(out)
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert load_manifest(out) == first
    assert {f["path"] for f in first["files"]} == {"events.csv", "config.resolved.toml"}
    assert load_config(out / "config.resolved.toml").seed == 11


def test_manifest_lists_only_emitted_files(tmp_path, cfg_path):
    out = tmp_path / "imp"
    out.mkdir()
    (out / "stale.csv").write_text("x\n1\n")
    assert main(["impact", "--config", str(cfg_path), "--out", str(out)]) == 0
    names = {f["path"] for f in load_manifest(out)["files"]}
    assert names == {"impact_path.csv", "config.resolved.toml"}


def test_train_evaluate_sweep_pipeline(tmp_path, cfg_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    ck = out / "checkpoint.qnet"
    assert ck.exists() and (out / "q_surface.csv").exists()
    assert main(["evaluate", "--config", str(cfg_path), "--out", str(out / "ev"),
                 "--policy", f"ddqn:{ck}", "--policy", "twap"]) == 0
    header, rows = read_csv(out / "ev" / "report.csv")
    assert [r[0] for r in rows] == ["DDQN", "TWAP"]
    # the report mean matches the per-episode CSV
    _, eps = read_csv(out / "ev" / "episodes_TWAP.csv")
    mean = sum(float(r[1]) for r in eps) / len(eps)
    assert float(rows[1][header.index("mean_reward")]) == pytest.approx(mean, rel=1e-8)
    assert main(["sweep", "--config", str(cfg_path), "--out", str(out / "sw"),
                 "--policy", f"ddqn:{ck}"]) == 0
    _, sw = read_csv(out / "sw" / "sweep.csv")
    assert len(sw) == 1


def test_exit_codes(tmp_path, cfg_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[qrm]\ntheta = 1.3\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 1
    assert main(["evaluate", "--config", str(cfg_path), "--out", str(tmp_path / "o"),
                 "--policy", "ddqn"]) == 1
    junk = tmp_path / "junk.qnet"
    junk.write_bytes(b"not a network")
    assert main(["evaluate", "--config", str(cfg_path), "--out", str(tmp_path / "o"),
                 "--policy", f"ddqn:{junk}"]) == 2
    assert "theta=1.3" in capsys.readouterr().err
