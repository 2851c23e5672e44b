import json
import os
from pathlib import Path

import numpy as np
import pytest

from logiclearn.cli import main, parse_flat_config, parse_sizes


def run_cli(args):
    return main(args)


def test_missing_task_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli(["train-ilp"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_task_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli(["train-ilp", "--task", "no-such-task"])
    assert exc.value.code == 2


def test_parse_flat_config():
    text = """
    # defaults apply to every task
    [defaults]
    epochs = 3
    kind = "gumbel"
    use_thing = true

    [has-father]
    epochs = 7
    tau = 0.5
    """
    sections = parse_flat_config(text)
    assert sections["defaults"] == {"epochs": 3, "kind": "gumbel", "use_thing": True}
    assert sections["has-father"] == {"epochs": 7, "tau": 0.5}
    with pytest.raises(ValueError, match="key = value"):
        parse_flat_config("nonsense line")


def test_parse_sizes():
    assert parse_sizes("10:40:10") == [10, 20, 30, 40]
    assert parse_sizes("5,9,13") == [5, 9, 13]


def test_train_ilp_writes_all_artifacts(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "run"
    code = run_cli(["train-ilp", "--task", "adjacent-to-red", "--seed", "1",
                    "--epochs", "1", "--count", "5", "--quiet",
                    "--out", str(out)])
    assert code == 0
    for name in ("manifest.json", "model.ckpt", "program.txt", "program.json",
                 "metrics.csv", "results.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train-ilp" and manifest["seed"] == 1
    assert "config_hash" in manifest
    # nothing written outside --out
    assert sorted(p.name for p in tmp_path.iterdir()) == ["run"]


def test_train_ilp_same_flags_identical_metrics(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("a", "b"):
        assert run_cli(["train-ilp", "--task", "adjacent-to-red", "--seed", "2",
                        "--epochs", "1", "--count", "5", "--quiet",
                        "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a/metrics.csv").read_bytes() == \
        (tmp_path / "b/metrics.csv").read_bytes()
    assert (tmp_path / "a/model.ckpt").read_bytes() == \
        (tmp_path / "b/model.ckpt").read_bytes()


def test_config_file_overrides(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[adjacent-to-red]\nepochs = 2\nval_instances = 4\n")
    out = tmp_path / "run"
    assert run_cli(["train-ilp", "--task", "adjacent-to-red", "--seed", "0",
                    "--config", str(cfg), "--count", "5", "--quiet",
                    "--out", str(out)]) == 0
    rows = (out / "metrics.csv").read_text().strip().splitlines()
    assert len(rows) - 1 == 2  # header plus the two configured epochs
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["epochs"] == 2


def test_eval_and_extract_round_trip(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    train_out = tmp_path / "train"
    assert run_cli(["train-ilp", "--task", "adjacent-to-red", "--seed", "0",
                    "--epochs", "1", "--count", "5", "--quiet",
                    "--out", str(train_out)]) == 0
    capsys.readouterr()

    eval_out = tmp_path / "eval"
    assert run_cli(["eval", "--task", "adjacent-to-red",
                    "--artifact", str(train_out / "program.json"),
                    "--count", "10", "--out", str(eval_out)]) == 0
    line = capsys.readouterr().out
    assert "success rate" in line
    results = json.loads((eval_out / "results.json").read_text())
    assert 0.0 <= results["success_rate"] <= 1.0

    ex_out = tmp_path / "extract"
    assert run_cli(["extract", "--artifact", str(train_out / "model.ckpt"),
                    "--out", str(ex_out)]) == 0
    assert (ex_out / "program.txt").exists() and (ex_out / "program.json").exists()
    # checkpoint evaluation path (soft model) also works
    assert run_cli(["eval", "--task", "adjacent-to-red",
                    "--artifact", str(train_out / "model.ckpt"),
                    "--count", "3", "--out", str(tmp_path / "eval2")]) == 0


def test_eval_rejects_corrupt_artifact(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage!")
    code = run_cli(["eval", "--task", "has-father", "--artifact", str(bad),
                    "--count", "3", "--out", str(tmp_path / "out")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_train_rl_smoke(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[unstack]\nepisode_cap = 10\neval_every = 1\n")
    out = tmp_path / "rl"
    assert run_cli(["train-rl", "--task", "unstack", "--seed", "0",
                    "--config", str(cfg), "--quiet", "--out", str(out)]) == 0
    for name in ("manifest.json", "model.ckpt", "policy.txt", "policy.json",
                 "metrics.csv", "results.json"):
        assert (out / name).exists(), name
    results = json.loads((out / "results.json").read_text())
    assert results["episodes"] <= 15


def test_pss_smoke(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[defaults]\nepochs = 1\nval_instances = 4\n")
    out = tmp_path / "pss"
    assert run_cli(["pss", "--task", "adjacent-to-red", "--seeds", "2",
                    "--config", str(cfg), "--quiet", "--out", str(out)]) == 0
    results = json.loads((out / "results.json").read_text())
    assert results["pss"] in (0.0, 50.0, 100.0)
    assert len(results["seeds"]) == 2


def test_bench_scaling_smoke(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    train_out = tmp_path / "train"
    assert run_cli(["train-ilp", "--task", "adjacent-to-red", "--seed", "0",
                    "--epochs", "1", "--count", "5", "--quiet",
                    "--out", str(train_out)]) == 0
    out = tmp_path / "bench"
    assert run_cli(["bench-scaling", "--task", "adjacent-to-red",
                    "--artifact", str(train_out / "model.ckpt"),
                    "--sizes", "6,10,14", "--mode", "both",
                    "--out", str(out)]) == 0
    lines = (out / "bench.csv").read_text().strip().splitlines()
    assert lines[0].startswith("n,")
    assert len(lines) == 4
    text = capsys.readouterr().out
    assert "exponent" in text
