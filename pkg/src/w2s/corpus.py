"""Benchmark ingestion into a uniform problem schema.

Each supported benchmark ships in its own JSONL layout; an adapter maps
one source record to one ProblemRecord or reports a skip with a reason.
Ingestion is deterministic: identical input bytes produce identical
corpora, including record ordering and generated ids.

Adapter field mappings:
  math / math500   question <- "problem"; answer <- "answer", else the last
                   boxed expression in "solution"; difficulty <- "level"
                   (accepts 3, "3", "Level 3"); id <- "unique_id"/"id".
  olympiadbench    question <- "question"; answer <- "final_answer" (first
                   element when a list); difficulty absent; an optional
                   subset selector filters on the "subset"/"source" field.
  minerva          question <- "problem"/"question"; answer <- "answer",
                   else the last boxed expression in "solution".
  amc23            question <- "question"/"problem"; answer <- "answer".
  gpqa_diamond     question <- "question"; choices <- "choices"/"options"
                   in source order, labeled A-D; answer <- "answer" as a
                   letter, an index, or the full text of the correct
                   choice.
  generic_jsonl    fields {id?, question, answer, level?, choices?}.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .grading import FREE_FORM_MATH, MULTIPLE_CHOICE, extract_answer

logger = logging.getLogger(__name__)

CHOICE_LABELS = "ABCDEFGH"


class CorpusError(Exception):
    """Unreadable input or malformed records beyond the skip threshold."""


@dataclass(frozen=True)
class ProblemRecord:
    """One benchmark question with its gold answer."""

    id: str
    source: str
    question: str
    gold_answer: str
    answer_kind: str = FREE_FORM_MATH
    difficulty: int | None = None
    choices: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must be nonempty")
        if not self.question:
            raise ValueError(f"record {self.id}: question must be nonempty")
        if not self.gold_answer:
            raise ValueError(f"record {self.id}: gold answer must be nonempty")
        if self.answer_kind not in (FREE_FORM_MATH, MULTIPLE_CHOICE):
            raise ValueError(f"record {self.id}: unknown answer kind {self.answer_kind!r}")
        if self.difficulty is not None and not 1 <= self.difficulty <= 5:
            raise ValueError(f"record {self.id}: difficulty must be in [1, 5]")
        if self.answer_kind == MULTIPLE_CHOICE:
            if not self.choices:
                raise ValueError(f"record {self.id}: multiple choice requires choices")
            labels = CHOICE_LABELS[: len(self.choices)]
            if self.gold_answer not in labels:
                raise ValueError(
                    f"record {self.id}: gold answer {self.gold_answer!r} is not a choice label"
                )


@dataclass(frozen=True)
class SourceNote:
    """Provenance for one ingested file."""

    path: str
    adapter: str
    loaded: int
    skipped: int
    skip_reasons: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class Corpus:
    records: tuple[ProblemRecord, ...]
    source_manifest: tuple[SourceNote, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        if len(ids) != len(set(ids)):
            seen, dupes = set(), set()
            for rid in ids:
                (dupes if rid in seen else seen).add(rid)
            raise ValueError(f"duplicate record ids: {sorted(dupes)}")

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, record_id: str) -> ProblemRecord:
        for record in self.records:
            if record.id == record_id:
                return record
        raise KeyError(record_id)


class SkipRecord(Exception):
    """Raised by adapters for a source record that cannot be mapped."""


def _text_field(raw: dict, *names: str) -> str | None:
    for name in names:
        value = raw.get(name)
        if isinstance(value, str) and value.strip():
            return value.strip()
        if isinstance(value, (int, float)):
            return str(value)
    return None


def _parse_difficulty(value) -> int | None:
    """Accept 3, "3", "3.0", or "Level 3"; anything else is unknown."""
    if value is None:
        return None
    if isinstance(value, (int, float)):
        level = int(value)
    else:
        text = str(value).strip()
        if text.lower().startswith("level"):
            text = text[len("level") :].strip()
        try:
            level = int(float(text))
        except ValueError:
            return None
    return level if 1 <= level <= 5 else None


def _answer_from_solution(raw: dict) -> str | None:
    solution = raw.get("solution")
    if isinstance(solution, str) and solution:
        extracted = extract_answer(solution, FREE_FORM_MATH)
        if extracted.raw_span:
            return extracted.raw_span
    return None


def _adapt_math(raw: dict, record_id: str, source: str) -> ProblemRecord:
    question = _text_field(raw, "problem", "question")
    if question is None:
        raise SkipRecord("missing question text")
    answer = _text_field(raw, "answer") or _answer_from_solution(raw)
    if answer is None:
        raise SkipRecord("no answer field and no extractable boxed answer in solution")
    return ProblemRecord(
        id=record_id,
        source=source,
        question=question,
        gold_answer=answer,
        difficulty=_parse_difficulty(raw.get("level")),
    )


def _adapt_olympiadbench(raw: dict, record_id: str, source: str) -> ProblemRecord:
    question = _text_field(raw, "question", "problem")
    if question is None:
        raise SkipRecord("missing question text")
    answer = raw.get("final_answer", raw.get("answer"))
    if isinstance(answer, list):
        answer = answer[0] if answer else None
    if not isinstance(answer, (str, int, float)) or str(answer).strip() == "":
        raise SkipRecord("missing final answer")
    return ProblemRecord(
        id=record_id,
        source=source,
        question=question,
        gold_answer=str(answer).strip(),
    )


def _adapt_minerva(raw: dict, record_id: str, source: str) -> ProblemRecord:
    question = _text_field(raw, "problem", "question")
    if question is None:
        raise SkipRecord("missing question text")
    answer = _text_field(raw, "answer") or _answer_from_solution(raw)
    if answer is None:
        raise SkipRecord("no answer field and no extractable boxed answer in solution")
    return ProblemRecord(id=record_id, source=source, question=question, gold_answer=answer)


def _adapt_amc23(raw: dict, record_id: str, source: str) -> ProblemRecord:
    question = _text_field(raw, "question", "problem")
    if question is None:
        raise SkipRecord("missing question text")
    answer = _text_field(raw, "answer")
    if answer is None:
        raise SkipRecord("missing answer")
    return ProblemRecord(id=record_id, source=source, question=question, gold_answer=answer)


def _adapt_gpqa(raw: dict, record_id: str, source: str) -> ProblemRecord:
    question = _text_field(raw, "question", "problem")
    if question is None:
        raise SkipRecord("missing question text")
    choices = raw.get("choices", raw.get("options"))
    if not isinstance(choices, list) or not choices:
        raise SkipRecord("missing choices")
    choices = tuple(str(c) for c in choices)
    if len(choices) > len(CHOICE_LABELS):
        raise SkipRecord(f"too many choices ({len(choices)})")
    labels = CHOICE_LABELS[: len(choices)]

    answer = raw.get("answer", raw.get("correct_answer"))
    letter = None
    if isinstance(answer, int) and 0 <= answer < len(choices):
        letter = labels[answer]
    elif isinstance(answer, str):
        stripped = answer.strip()
        if stripped.upper() in labels:
            letter = stripped.upper()
        elif stripped in choices:
            letter = labels[choices.index(stripped)]
    if letter is None:
        raise SkipRecord("answer does not name a choice")
    return ProblemRecord(
        id=record_id,
        source=source,
        question=question,
        gold_answer=letter,
        answer_kind=MULTIPLE_CHOICE,
        choices=choices,
    )


def _adapt_generic(raw: dict, record_id: str, source: str) -> ProblemRecord:
    question = _text_field(raw, "question")
    if question is None:
        raise SkipRecord("missing question text")
    answer = _text_field(raw, "answer")
    if answer is None:
        raise SkipRecord("missing answer")
    choices = raw.get("choices")
    if choices:
        choices = tuple(str(c) for c in choices)
        return ProblemRecord(
            id=record_id,
            source=source,
            question=question,
            gold_answer=answer.strip().upper(),
            answer_kind=MULTIPLE_CHOICE,
            difficulty=_parse_difficulty(raw.get("level")),
            choices=choices,
        )
    return ProblemRecord(
        id=record_id,
        source=source,
        question=question,
        gold_answer=answer,
        difficulty=_parse_difficulty(raw.get("level")),
    )


ADAPTERS = {
    "math": _adapt_math,
    "math500": _adapt_math,
    "olympiadbench": _adapt_olympiadbench,
    "minerva": _adapt_minerva,
    "amc23": _adapt_amc23,
    "gpqa_diamond": _adapt_gpqa,
    "generic_jsonl": _adapt_generic,
}


def load_benchmark(
    path: str | Path,
    adapter: str,
    max_malformed: int = 0,
    subset: str | None = None,
) -> Corpus:
    """Ingest a benchmark JSONL file into a Corpus.

    Every nonblank line becomes exactly one record or a counted skip; more
    than max_malformed skips raises. The optional subset selector keeps
    only records whose "subset"/"source" field matches (used for the
    text-only slices of mixed benchmarks); subset exclusions do not count
    against the malformed threshold.
    """
    if adapter not in ADAPTERS:
        raise CorpusError(f"unknown adapter {adapter!r}; expected one of {sorted(ADAPTERS)}")
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc

    adapt = ADAPTERS[adapter]
    records: list[ProblemRecord] = []
    skip_reasons: list[str] = []
    subset_excluded = 0
    seen_ids: set[str] = set()

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            if not isinstance(raw, dict):
                raise SkipRecord("line is not a JSON object")
            if subset is not None:
                record_subset = raw.get("subset", raw.get("source"))
                if record_subset != subset:
                    subset_excluded += 1
                    continue
            record_id = _text_field(raw, "id", "unique_id") or f"{adapter}-{line_no:05d}"
            if record_id in seen_ids:
                raise SkipRecord(f"duplicate id {record_id!r}")
            record = adapt(raw, record_id, adapter)
        except (SkipRecord, ValueError, json.JSONDecodeError) as exc:
            reason = f"line {line_no}: {exc}"
            skip_reasons.append(reason)
            logger.warning("%s: skipped %s", path, reason)
            if len(skip_reasons) > max_malformed:
                raise CorpusError(
                    f"{path}: {len(skip_reasons)} malformed record(s) exceed the "
                    f"threshold of {max_malformed}; first: {skip_reasons[0]}"
                ) from None
            continue
        seen_ids.add(record.id)
        records.append(record)

    notes = []
    if subset is not None:
        notes.append(f"subset={subset!r} excluded {subset_excluded} record(s)")
    note = SourceNote(
        path=str(path),
        adapter=adapter,
        loaded=len(records),
        skipped=len(skip_reasons),
        skip_reasons=tuple(skip_reasons),
        notes=tuple(notes),
    )
    logger.info(
        "%s: loaded %d record(s), skipped %d via adapter %s",
        path,
        len(records),
        len(skip_reasons),
        adapter,
    )
    return Corpus(records=tuple(records), source_manifest=(note,))


def filter_difficulty(corpus: Corpus, min_level: int, max_level: int) -> Corpus:
    """Keep records with difficulty in [min_level, max_level].

    Records without a difficulty annotation are excluded (and counted)
    rather than defaulted, so unknown-difficulty items never leak into a
    difficulty-restricted training set.
    """
    if not 1 <= min_level <= max_level <= 5:
        raise ValueError(f"need 1 <= min <= max <= 5, got [{min_level}, {max_level}]")
    kept = tuple(
        r for r in corpus.records if r.difficulty is not None and min_level <= r.difficulty <= max_level
    )
    missing = sum(1 for r in corpus.records if r.difficulty is None)
    note = SourceNote(
        path="<filter>",
        adapter=f"difficulty[{min_level},{max_level}]",
        loaded=len(kept),
        skipped=len(corpus.records) - len(kept),
        notes=(f"{missing} record(s) lacked a difficulty annotation",),
    )
    logger.info(
        "difficulty filter [%d, %d]: kept %d of %d (%d without difficulty)",
        min_level,
        max_level,
        len(kept),
        len(corpus.records),
        missing,
    )
    return Corpus(records=kept, source_manifest=corpus.source_manifest + (note,))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write normalized records as JSONL, one ProblemRecord per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for r in corpus.records:
            row = {
                "id": r.id,
                "source": r.source,
                "question": r.question,
                "gold_answer": r.gold_answer,
                "answer_kind": r.answer_kind,
                "difficulty": r.difficulty,
                "choices": list(r.choices) if r.choices else None,
            }
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    """Read a corpus previously written by save_corpus."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            raw = json.loads(line)
            records.append(
                ProblemRecord(
                    id=raw["id"],
                    source=raw["source"],
                    question=raw["question"],
                    gold_answer=raw["gold_answer"],
                    answer_kind=raw.get("answer_kind", FREE_FORM_MATH),
                    difficulty=raw.get("difficulty"),
                    choices=tuple(raw["choices"]) if raw.get("choices") else None,
                )
            )
    note = SourceNote(path=str(path), adapter="normalized", loaded=len(records), skipped=0)
    return Corpus(records=tuple(records), source_manifest=(note,))
