"""SFT dataset loading and character-level encoding."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class DatasetError(Exception):
    """Empty or malformed dataset."""


@dataclass(frozen=True)
class SftPair:
    """One training example: prompt text and the response to imitate."""

    instruction: str
    response: str


def load_dataset(path: str | Path, max_seq_len: int | None = None) -> list[SftPair]:
    """Read {"instruction", "response"} pairs from JSONL.

    With max_seq_len set, the concatenated instruction+response is
    truncated to that many characters (one character plays the role of
    one token at this scale); examples whose response is fully cut are
    dropped.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc

    pairs = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            instruction = raw["instruction"]
            response = raw["response"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{line_no}: bad example: {exc}") from exc
        if not response:
            raise DatasetError(f"{path}:{line_no}: empty response")
        if max_seq_len is not None:
            budget = max_seq_len - len(instruction)
            if budget <= 0:
                continue
            response = response[:budget]
            if not response:
                continue
        pairs.append(SftPair(instruction=instruction, response=response))

    if not pairs:
        raise DatasetError(f"{path}: dataset has no usable examples")
    return pairs


def build_vocab(pairs: list[SftPair]) -> list[str]:
    """Sorted character vocabulary over all instructions and responses."""
    chars = set()
    for pair in pairs:
        chars.update(pair.instruction)
        chars.update(pair.response)
    return sorted(chars)
