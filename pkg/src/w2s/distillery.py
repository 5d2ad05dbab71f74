"""Teacher trajectory generation, partitioning, and SFT dataset emission.

A distillation run generates one graded trajectory per problem from the
teacher endpoint. Trajectories are then split by final-answer
correctness into the positive/negative partition, and any of the three
subsets (all, positive-only, negative-only) can be emitted as an SFT
dataset of {instruction, response} pairs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import Corpus
from .grading import (
    ExtractedAnswer,
    ExtractionMethod,
    Verdict,
    VerdictReason,
    grade,
)
from .inference import (
    FINISH_ERROR,
    EndpointConfig,
    GenerationResult,
    SamplingProfile,
    generate_batch,
)
from .prompts import PromptTemplate, load_template, render

logger = logging.getLogger(__name__)

VARIANT_ALL = "w2sr"
VARIANT_POSITIVE = "w2sr_p"
VARIANT_NEGATIVE = "w2sr_n"
VARIANTS = (VARIANT_ALL, VARIANT_POSITIVE, VARIANT_NEGATIVE)

DEFAULT_SEED = 1234
EXTENDED_EPOCHS = 10


@dataclass(frozen=True)
class TrajectoryRecord:
    """One teacher generation with its grading verdict."""

    problem_id: str
    teacher: str
    prompt_template_id: str
    completion: str
    extracted: ExtractedAnswer
    verdict: Verdict | None
    finish_reason: str
    question: str = ""
    answer_kind: str = "free_form_math"
    sample_index: int = 0

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "teacher": self.teacher,
            "prompt_template_id": self.prompt_template_id,
            "completion": self.completion,
            "extracted": {
                "raw_span": self.extracted.raw_span,
                "normalized": self.extracted.normalized,
                "method": self.extracted.method.value,
            },
            "verdict": None
            if self.verdict is None
            else {"is_correct": self.verdict.is_correct, "reason": self.verdict.reason.value},
            "finish_reason": self.finish_reason,
            "question": self.question,
            "answer_kind": self.answer_kind,
            "sample_index": self.sample_index,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrajectoryRecord":
        verdict = raw.get("verdict")
        return cls(
            problem_id=raw["problem_id"],
            teacher=raw["teacher"],
            prompt_template_id=raw["prompt_template_id"],
            completion=raw["completion"],
            extracted=ExtractedAnswer(
                raw_span=raw["extracted"]["raw_span"],
                normalized=raw["extracted"]["normalized"],
                method=ExtractionMethod(raw["extracted"]["method"]),
            ),
            verdict=None
            if verdict is None
            else Verdict(is_correct=verdict["is_correct"], reason=VerdictReason(verdict["reason"])),
            finish_reason=raw["finish_reason"],
            question=raw.get("question", ""),
            answer_kind=raw.get("answer_kind", "free_form_math"),
            sample_index=raw.get("sample_index", 0),
        )


@dataclass(frozen=True)
class PartitionSet:
    """Trajectories split by final-answer correctness."""

    all: tuple[TrajectoryRecord, ...]
    positive: tuple[TrajectoryRecord, ...]
    negative: tuple[TrajectoryRecord, ...]

    def __post_init__(self) -> None:
        if len(self.positive) + len(self.negative) != len(self.all):
            raise ValueError("positive and negative must partition the full set")
        if set(self.positive) & set(self.negative):
            raise ValueError("positive and negative subsets overlap")
        if set(self.positive) | set(self.negative) != set(self.all):
            raise ValueError("positive and negative do not cover the full set")
        if any(t.verdict is None or not t.verdict.is_correct for t in self.positive):
            raise ValueError("positive subset contains a non-correct trajectory")
        if any(t.verdict is None or t.verdict.is_correct for t in self.negative):
            raise ValueError("negative subset contains a correct trajectory")

    def counts(self) -> tuple[int, int, int]:
        return len(self.all), len(self.positive), len(self.negative)

    def subset(self, variant: str) -> tuple[TrajectoryRecord, ...]:
        if variant == VARIANT_ALL:
            return self.all
        if variant == VARIANT_POSITIVE:
            return self.positive
        if variant == VARIANT_NEGATIVE:
            return self.negative
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass(frozen=True)
class SftExample:
    instruction: str
    response: str

    def __post_init__(self) -> None:
        if not self.response:
            raise ValueError("SFT examples need a nonempty response")


@dataclass(frozen=True)
class TrainingConfig:
    """Student fine-tuning hyperparameters.

    Defaults follow the full-parameter SFT recipe; the 10-epoch preset is
    available via EXTENDED_EPOCHS for longer runs.
    """

    learning_rate: float = 1e-5
    epochs: int = 5
    global_batch_size: int = 128
    optimizer: str = "adamw"
    lr_scheduler: str = "cosine"
    max_seq_len: int = 4096
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.global_batch_size < 1:
            raise ValueError("global batch size must be >= 1")
        if self.max_seq_len < 1:
            raise ValueError("max sequence length must be >= 1")


@dataclass(frozen=True)
class EmissionStats:
    variant: str
    path: Path
    written: int
    skipped_empty: int


def distill(
    corpus: Corpus,
    teacher: EndpointConfig,
    profile: SamplingProfile,
    template: PromptTemplate,
    api: str = "chat",
    trajectories_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
) -> list[TrajectoryRecord]:
    """Generate and grade one teacher trajectory per problem.

    Generation errors become ungradable trajectories (empty completion,
    finish_reason=error, verdict incorrect) rather than aborting the run.
    Resumability comes from the generation checkpoint; the trajectory
    file itself is written in deterministic sorted order.
    """
    results = generate_batch(
        corpus,
        teacher,
        profile,
        template,
        api=api,
        checkpoint_path=checkpoint_path,
    )
    by_id = {record.id: record for record in corpus.records}
    records = []
    for result in results:
        problem = by_id[result.record_id]
        records.append(
            grade_generation(
                result,
                problem.gold_answer,
                problem.answer_kind,
                teacher.model,
                template.id,
                problem.question,
            )
        )
    correct = sum(1 for r in records if r.verdict and r.verdict.is_correct)
    logger.info("distilled %d trajectories (%d correct)", len(records), correct)
    if trajectories_path:
        save_trajectories(records, trajectories_path)
    return records


def grade_generation(
    result: GenerationResult,
    gold_answer: str,
    answer_kind: str,
    teacher_model: str,
    template_id: str,
    question: str = "",
) -> TrajectoryRecord:
    """Grade one generation result into a trajectory record."""
    if result.finish_reason == FINISH_ERROR:
        extracted = ExtractedAnswer(raw_span="", normalized="", method=ExtractionMethod.NONE)
        verdict = Verdict(is_correct=False, reason=VerdictReason.UNEXTRACTABLE)
    else:
        extracted, verdict = grade(result.text, gold_answer, answer_kind)
    return TrajectoryRecord(
        problem_id=result.record_id,
        teacher=teacher_model,
        prompt_template_id=template_id,
        completion=result.text,
        extracted=extracted,
        verdict=verdict,
        finish_reason=result.finish_reason,
        question=question,
        answer_kind=answer_kind,
        sample_index=result.sample_index,
    )


def partition(records: list[TrajectoryRecord]) -> PartitionSet:
    """Split graded trajectories by final-answer correctness."""
    for record in records:
        if record.verdict is None:
            raise ValueError(f"trajectory {record.problem_id} has not been graded")
    ordered = tuple(sorted(records, key=lambda r: (r.problem_id, r.sample_index)))
    positive = tuple(r for r in ordered if r.verdict.is_correct)
    negative = tuple(r for r in ordered if not r.verdict.is_correct)
    result = PartitionSet(all=ordered, positive=positive, negative=negative)
    logger.info("partition sizes: all=%d positive=%d negative=%d", *result.counts())
    return result


def _render_instruction(record: TrajectoryRecord) -> str:
    template = load_template(record.prompt_template_id)
    return render(template, record.question).to_text()


def emit_sft(partition_set: PartitionSet, variant: str, out: str | Path) -> EmissionStats:
    """Write the selected subset as an SFT dataset (JSONL).

    Each line is {"instruction", "response"} with the instruction fully
    rendered through the trajectory's prompt template. Trajectories with
    an empty completion (generation errors) cannot form a valid example
    and are skipped, with the skip applied identically for every variant
    so the all = positive + negative line-count law still holds. Output
    ordering is (problem_id, sample_index), byte-stable across reruns.
    """
    subset = partition_set.subset(variant)
    if not subset:
        raise ValueError(f"variant {variant!r} selects an empty subset; nothing to emit")
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    skipped = 0
    tmp = out.with_suffix(out.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        for record in sorted(subset, key=lambda r: (r.problem_id, r.sample_index)):
            if not record.completion:
                skipped += 1
                continue
            example = SftExample(
                instruction=_render_instruction(record), response=record.completion
            )
            handle.write(
                json.dumps(
                    {"instruction": example.instruction, "response": example.response},
                    ensure_ascii=False,
                )
                + "\n"
            )
            written += 1
    tmp.replace(out)
    if skipped:
        logger.warning("emit %s: skipped %d trajectory(ies) with empty completions", variant, skipped)
    logger.info("emit %s: wrote %d example(s) to %s", variant, written, out)
    return EmissionStats(variant=variant, path=out, written=written, skipped_empty=skipped)


def emit_training_config(
    config: TrainingConfig, out: str | Path, dataset_path: str | Path
) -> Path:
    """Write the fine-tuning configuration as a flat key=value file."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"learning_rate={config.learning_rate!r}",
        f"epochs={config.epochs}",
        f"global_batch_size={config.global_batch_size}",
        f"optimizer={config.optimizer}",
        f"lr_scheduler={config.lr_scheduler}",
        f"max_seq_len={config.max_seq_len}",
        f"seed={config.seed}",
        f"dataset_path={dataset_path}",
    ]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def save_trajectories(records: list[TrajectoryRecord], path: str | Path) -> None:
    """Write trajectories as JSONL in deterministic sorted order."""
    path = Path(path)
    ordered = sorted(records, key=lambda r: (r.problem_id, r.sample_index))
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        for record in ordered:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    tmp.replace(path)


def load_trajectories(path: str | Path) -> list[TrajectoryRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(TrajectoryRecord.from_dict(json.loads(line)))
    return records


def regrade(records: list[TrajectoryRecord], corpus: Corpus) -> list[TrajectoryRecord]:
    """Re-run grading against a corpus, refreshing stored verdicts."""
    by_id = {record.id: record for record in corpus.records}
    refreshed = []
    for record in records:
        problem = by_id.get(record.problem_id)
        if problem is None:
            refreshed.append(record)
            continue
        if record.finish_reason == FINISH_ERROR:
            refreshed.append(record)
            continue
        extracted, verdict = grade(record.completion, problem.gold_answer, problem.answer_kind)
        refreshed.append(replace(record, extracted=extracted, verdict=verdict))
    return refreshed
