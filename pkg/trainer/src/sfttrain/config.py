"""Parser for the flat key=value training configuration file.

The upstream pipeline emits one of these next to its SFT datasets; every
field is required. Relative dataset paths resolve against the config
file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ConfigError(Exception):
    """Missing or malformed configuration."""


_REQUIRED = (
    "learning_rate",
    "epochs",
    "global_batch_size",
    "optimizer",
    "lr_scheduler",
    "max_seq_len",
    "seed",
    "dataset_path",
)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float
    epochs: int
    global_batch_size: int
    optimizer: str
    lr_scheduler: str
    max_seq_len: int
    seed: int
    dataset_path: Path

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.global_batch_size < 1 or self.max_seq_len < 1:
            raise ConfigError("epochs, global_batch_size, and max_seq_len must be >= 1")


def parse_config(path: str | Path) -> TrainingConfig:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    values: dict[str, str] = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    missing = [key for key in _REQUIRED if key not in values]
    if missing:
        raise ConfigError(f"{path}: missing required key(s): {', '.join(missing)}")

    try:
        dataset = Path(values["dataset_path"])
        if not dataset.is_absolute():
            dataset = path.parent / dataset
        return TrainingConfig(
            learning_rate=float(values["learning_rate"]),
            epochs=int(values["epochs"]),
            global_batch_size=int(values["global_batch_size"]),
            optimizer=values["optimizer"],
            lr_scheduler=values["lr_scheduler"],
            max_seq_len=int(values["max_seq_len"]),
            seed=int(values["seed"]),
            dataset_path=dataset,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad value: {exc}") from exc
