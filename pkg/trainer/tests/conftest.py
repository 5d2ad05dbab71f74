import json
from pathlib import Path

import pytest

# Responses are rotations of a cycle whose 2-grams are all distinct, so a
# context window of two characters pins down every successor; the shared
# ": " instruction suffix leaves exactly one genuinely stochastic
# position (the rotation start) per example.
CYCLE = "abcdefghijklmnop"


def overfit_rows(count: int = 32) -> list[dict]:
    rows = []
    for i in range(count):
        offset = i % len(CYCLE)
        rotation = CYCLE[offset:] + CYCLE[:offset]
        rows.append({"instruction": f"Q{i:02d}: ", "response": rotation * 3})
    return rows


def write_sft(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    return path


def write_config(path: Path, dataset: Path, seed: int = 1234, **overrides) -> Path:
    values = {
        "learning_rate": "1e-05",
        "epochs": "5",
        "global_batch_size": "128",
        "optimizer": "adamw",
        "lr_scheduler": "cosine",
        "max_seq_len": "4096",
        "seed": str(seed),
        "dataset_path": str(dataset),
    }
    values.update({key: str(value) for key, value in overrides.items()})
    path.write_text("\n".join(f"{key}={value}" for key, value in values.items()) + "\n")
    return path


@pytest.fixture()
def overfit_dataset(tmp_path):
    dataset = write_sft(tmp_path / "sft.jsonl", overfit_rows())
    config = write_config(tmp_path / "config.txt", dataset)
    return dataset, config
