"""Training entry points: the toy trainer and the delegate path.

Toy mode runs the full loss computation in-process on the character
model, producing a per-step loss log and a JSON checkpoint. Delegate
mode writes an execution plan carrying the configured hyperparameters
and hands it to an external full-parameter training stack.
"""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, TrainingConfig, parse_config
from .dataset import SftPair, build_vocab, load_dataset
from .model import CharTableModel, loss_and_gradients

logger = logging.getLogger(__name__)

MODE_TOY = "toy"
MODE_DELEGATE = "delegate"

# Step size for table logits. The full-scale learning rate in the config
# is for transformer weights and is far too small for direct logit
# descent, so toy mode uses its own; each context's cross-entropy is
# 1/2-smooth in its logits, keeping this rate comfortably stable.
TOY_LEARNING_RATE = 1.0
TOY_STEPS = 200


@dataclass(frozen=True)
class TrainRun:
    """Outcome of one training invocation."""

    dataset_path: Path
    config_path: Path
    checkpoint_dir: Path
    loss_log: tuple[tuple[int, float], ...]

    @property
    def initial_nll(self) -> float:
        return self.loss_log[0][1]

    @property
    def final_nll(self) -> float:
        return self.loss_log[-1][1]


def train_toy(
    pairs: list[SftPair],
    config: TrainingConfig,
    steps: int = TOY_STEPS,
    learning_rate: float = TOY_LEARNING_RATE,
    context_size: int = 2,
    init_scale: float = 0.0,
    holdout: SftPair | None = None,
) -> tuple[CharTableModel, list[tuple[int, float]], list[tuple[int, float]]]:
    """Gradient-descend the character model on the dataset.

    Returns the trained model, the per-step training loss log (step 0 is
    the untrained loss), and, when a holdout example is given, the same
    cadence of holdout losses.
    """
    model = CharTableModel(
        vocab=build_vocab(pairs + ([holdout] if holdout else [])),
        context_size=context_size,
        init_scale=init_scale,
        seed=config.seed,
    )
    loss_log: list[tuple[int, float]] = []
    holdout_log: list[tuple[int, float]] = []
    for step in range(steps):
        loss, grads = loss_and_gradients(model, pairs)
        loss_log.append((step, loss))
        if holdout is not None:
            holdout_log.append((step, model.mean_nll([holdout])))
        for context, grad in grads.items():
            model.table[context] -= learning_rate * grad
    loss_log.append((steps, model.mean_nll(pairs)))
    if holdout is not None:
        holdout_log.append((steps, model.mean_nll([holdout])))
    return model, loss_log, holdout_log


def _write_loss_log(loss_log: list[tuple[int, float]], path: Path) -> None:
    lines = ["step,mean_nll"]
    lines.extend(f"{step},{value!r}" for step, value in loss_log)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_loss_log(path: Path) -> tuple[tuple[int, float], ...]:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines()[1:]:
        if line.strip():
            step, value = line.split(",", 1)
            rows.append((int(step), float(value)))
    return tuple(rows)


def _save_checkpoint(model: CharTableModel, config: TrainingConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "params.json").write_text(
        json.dumps({ctx: logits.tolist() for ctx, logits in sorted(model.table.items())}),
        encoding="utf-8",
    )
    (out / "vocab.json").write_text(json.dumps(model.vocab), encoding="utf-8")
    (out / "meta.json").write_text(
        json.dumps(
            {
                "context_size": model.context_size,
                "seed": config.seed,
                "optimizer": "per-context gradient descent",
            },
            indent=2,
        ),
        encoding="utf-8",
    )


def _write_plan(config: TrainingConfig, checkpoint_dir: Path, path: Path) -> None:
    lines = [
        f"learning_rate={config.learning_rate!r}",
        f"epochs={config.epochs}",
        f"global_batch_size={config.global_batch_size}",
        f"optimizer={config.optimizer}",
        f"lr_scheduler={config.lr_scheduler}",
        f"max_seq_len={config.max_seq_len}",
        f"seed={config.seed}",
        f"dataset_path={config.dataset_path}",
        f"output_dir={checkpoint_dir}",
        "stage=sft",
        "finetuning_type=full",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def train_sft(
    dataset_path: str | Path,
    config_path: str | Path,
    mode: str = MODE_TOY,
    out_dir: str | Path = "train_out",
    steps: int = TOY_STEPS,
    learning_rate: float = TOY_LEARNING_RATE,
    context_size: int = 2,
    init_scale: float = 0.0,
    delegate_command: list[str] | None = None,
) -> TrainRun:
    """Fine-tune on an emitted SFT dataset per the emitted config.

    The dataset path argument must agree with the config's dataset_path
    (the config is the source of truth; the argument is a safety check
    and may be None to take the config value).
    """
    config = parse_config(config_path)
    if dataset_path is not None and Path(dataset_path).resolve() != config.dataset_path.resolve():
        raise ConfigError(
            f"dataset argument {dataset_path} disagrees with config dataset_path "
            f"{config.dataset_path}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_dir = out_dir / "checkpoint"

    if mode == MODE_TOY:
        pairs = load_dataset(config.dataset_path, max_seq_len=config.max_seq_len)
        logger.info("toy training on %d example(s) for %d step(s)", len(pairs), steps)
        model, loss_log, _ = train_toy(
            pairs,
            config,
            steps=steps,
            learning_rate=learning_rate,
            context_size=context_size,
            init_scale=init_scale,
        )
        _write_loss_log(loss_log, out_dir / "loss_log.csv")
        _save_checkpoint(model, config, checkpoint_dir)
        logger.info(
            "mean NLL %.4f -> %.4f over %d steps", loss_log[0][1], loss_log[-1][1], steps
        )
        return TrainRun(
            dataset_path=config.dataset_path,
            config_path=Path(config_path),
            checkpoint_dir=checkpoint_dir,
            loss_log=tuple(loss_log),
        )

    if mode == MODE_DELEGATE:
        # The dataset itself is not read here; the external stack consumes
        # it via the plan.
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        plan_path = out_dir / "delegate_plan.txt"
        _write_plan(config, checkpoint_dir, plan_path)
        logger.info("wrote execution plan %s", plan_path)
        if delegate_command:
            subprocess.run([*delegate_command, str(plan_path)], check=True)
        else:
            logger.warning("no delegate command configured; plan written but not invoked")
        log_path = out_dir / "loss_log.csv"
        loss_log = _read_loss_log(log_path) if log_path.exists() else ()
        return TrainRun(
            dataset_path=config.dataset_path,
            config_path=Path(config_path),
            checkpoint_dir=checkpoint_dir,
            loss_log=loss_log,
        )

    raise ValueError(f"unknown mode {mode!r}; expected {MODE_TOY} or {MODE_DELEGATE}")
