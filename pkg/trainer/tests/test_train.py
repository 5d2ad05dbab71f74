import json
import sys

import pytest

from sfttrain.cli import main
from sfttrain.config import ConfigError, parse_config
from sfttrain.dataset import SftPair, load_dataset
from sfttrain.train import train_sft, train_toy

from conftest import write_config, write_sft


def test_parse_config_fields(tmp_path):
    dataset = tmp_path / "d.jsonl"
    dataset.write_text("")
    config = parse_config(write_config(tmp_path / "c.txt", dataset))
    assert config.learning_rate == 1e-5
    assert config.epochs == 5
    assert config.global_batch_size == 128
    assert config.optimizer == "adamw"
    assert config.lr_scheduler == "cosine"
    assert config.max_seq_len == 4096
    assert config.dataset_path == dataset


def test_parse_config_resolves_relative_dataset(tmp_path):
    config_path = tmp_path / "c.txt"
    write_config(config_path, tmp_path / "ignored.jsonl", dataset_path="sibling.jsonl")
    config = parse_config(config_path)
    assert config.dataset_path == tmp_path / "sibling.jsonl"


def test_parse_config_missing_key(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("learning_rate=1e-05\n")
    with pytest.raises(ConfigError):
        parse_config(path)


def test_parse_config_bad_line(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("this is not a key value line\n")
    with pytest.raises(ConfigError):
        parse_config(path)


def test_train_rejects_disagreeing_dataset(tmp_path, overfit_dataset):
    dataset, config = overfit_dataset
    other = tmp_path / "other.jsonl"
    other.write_text("{}")
    with pytest.raises(ConfigError):
        train_sft(other, config, out_dir=tmp_path / "out")


def test_toy_training_artifacts(tmp_path, overfit_dataset):
    dataset, config = overfit_dataset
    run = train_sft(dataset, config, mode="toy", out_dir=tmp_path / "out", steps=20)
    assert run.loss_log
    assert run.loss_log[0][0] == 0
    assert run.final_nll < run.initial_nll
    log_lines = (tmp_path / "out" / "loss_log.csv").read_text().splitlines()
    assert log_lines[0] == "step,mean_nll"
    assert len(log_lines) == 22  # header + steps 0..20
    checkpoint = tmp_path / "out" / "checkpoint"
    params = json.loads((checkpoint / "params.json").read_text())
    vocab = json.loads((checkpoint / "vocab.json").read_text())
    assert params and vocab
    assert all(len(logits) == len(vocab) for logits in params.values())


def test_toy_training_is_deterministic(tmp_path, overfit_dataset):
    dataset, config = overfit_dataset
    train_sft(dataset, config, mode="toy", out_dir=tmp_path / "a", steps=15, init_scale=0.01)
    train_sft(dataset, config, mode="toy", out_dir=tmp_path / "b", steps=15, init_scale=0.01)
    assert (tmp_path / "a" / "loss_log.csv").read_bytes() == (
        tmp_path / "b" / "loss_log.csv"
    ).read_bytes()
    assert (tmp_path / "a" / "checkpoint" / "params.json").read_bytes() == (
        tmp_path / "b" / "checkpoint" / "params.json"
    ).read_bytes()


def test_holdout_loss_decreases_near_monotonically(overfit_dataset):
    dataset, config_path = overfit_dataset
    from sfttrain.config import parse_config

    config = parse_config(config_path)
    pairs = load_dataset(dataset)
    holdout = SftPair(pairs[0].instruction, pairs[0].response)
    _, _, holdout_log = train_toy(pairs, config, steps=60, holdout=holdout)
    values = [value for _, value in holdout_log]
    increases = sum(1 for prev, nxt in zip(values, values[1:]) if nxt > prev + 1e-12)
    assert increases <= 2
    assert values[-1] < values[0]


def test_max_seq_len_is_honored(tmp_path):
    rows = [{"instruction": "AB: ", "response": "x" * 50}]
    dataset = write_sft(tmp_path / "d.jsonl", rows)
    config = write_config(tmp_path / "c.txt", dataset, max_seq_len=10)
    run = train_sft(dataset, config, mode="toy", out_dir=tmp_path / "out", steps=2)
    pairs = load_dataset(dataset, max_seq_len=10)
    assert len(pairs[0].response) == 6
    assert run.loss_log


# --- delegate mode ---


def test_delegate_writes_plan_with_config_values(tmp_path, overfit_dataset):
    dataset, config = overfit_dataset
    run = train_sft(dataset, config, mode="delegate", out_dir=tmp_path / "out")
    plan = (tmp_path / "out" / "delegate_plan.txt").read_text()
    values = dict(line.split("=", 1) for line in plan.strip().splitlines())
    assert float(values["learning_rate"]) == 1e-5
    assert values["global_batch_size"] == "128"
    assert values["lr_scheduler"] == "cosine"
    assert values["max_seq_len"] == "4096"
    assert values["dataset_path"] == str(dataset)
    assert run.checkpoint_dir.exists()


def test_delegate_invokes_external_command(tmp_path, overfit_dataset):
    dataset, config = overfit_dataset
    marker = tmp_path / "invoked.txt"
    stub = (
        "import sys, shutil, pathlib; "
        f"shutil.copy(sys.argv[1], {str(marker)!r})"
    )
    train_sft(
        dataset,
        config,
        mode="delegate",
        out_dir=tmp_path / "out",
        delegate_command=[sys.executable, "-c", stub],
    )
    assert marker.exists()
    assert "optimizer=adamw" in marker.read_text()


def test_delegate_failing_command_raises(tmp_path, overfit_dataset):
    import subprocess

    dataset, config = overfit_dataset
    with pytest.raises(subprocess.CalledProcessError):
        train_sft(
            dataset,
            config,
            mode="delegate",
            out_dir=tmp_path / "out",
            delegate_command=[sys.executable, "-c", "raise SystemExit(3)"],
        )


def test_unknown_mode_rejected(tmp_path, overfit_dataset):
    dataset, config = overfit_dataset
    with pytest.raises(ValueError):
        train_sft(dataset, config, mode="warp", out_dir=tmp_path / "out")


# --- CLI ---


def test_cli_toy_run(tmp_path, overfit_dataset, capsys):
    dataset, config = overfit_dataset
    code = main(
        [
            "train",
            "--config",
            str(config),
            "--mode",
            "toy",
            "--out",
            str(tmp_path / "out"),
            "--steps",
            "10",
        ]
    )
    assert code == 0
    assert "mean NLL" in capsys.readouterr().out
    assert (tmp_path / "out" / "loss_log.csv").exists()


def test_cli_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("nonsense\n")
    assert main(["train", "--config", str(bad)]) == 1
    assert "error" in capsys.readouterr().err
