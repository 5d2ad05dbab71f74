import json

import pytest

from conftest import write_jsonl
from w2s.corpus import (
    Corpus,
    CorpusError,
    ProblemRecord,
    filter_difficulty,
    load_benchmark,
    load_corpus,
    save_corpus,
)
from w2s.grading import MULTIPLE_CHOICE


def _math_row(i, level="Level 3"):
    return {
        "problem": f"Problem number {i}?",
        "answer": str(i),
        "level": level,
        "unique_id": f"math-{i}",
    }


def test_math_adapter_maps_fields(tmp_path):
    path = write_jsonl(tmp_path / "math.jsonl", [_math_row(1), _math_row(2, level=5)])
    corpus = load_benchmark(path, "math")
    assert len(corpus) == 2
    assert corpus.records[0].question == "Problem number 1?"
    assert corpus.records[0].gold_answer == "1"
    assert corpus.records[0].difficulty == 3
    assert corpus.records[1].difficulty == 5


def test_math_adapter_falls_back_to_boxed_solution(tmp_path):
    rows = [{"problem": "P?", "solution": "We compute carefully: $\\boxed{42}$."}]
    corpus = load_benchmark(write_jsonl(tmp_path / "math.jsonl", rows), "math")
    assert corpus.records[0].gold_answer == "42"


def test_math500_cardinality(tmp_path):
    rows = [_math_row(i) for i in range(500)]
    corpus = load_benchmark(write_jsonl(tmp_path / "math500.jsonl", rows), "math500")
    assert len(corpus) == 500


def test_amc23_cardinality(tmp_path):
    rows = [{"question": f"Q{i}", "answer": str(i)} for i in range(40)]
    corpus = load_benchmark(write_jsonl(tmp_path / "amc.jsonl", rows), "amc23")
    assert len(corpus) == 40


def test_gpqa_cardinality_and_choices(tmp_path):
    rows = [
        {
            "question": f"Which is right, case {i}?",
            "choices": ["first", "second", "third", "fourth"],
            "answer": "B",
        }
        for i in range(198)
    ]
    corpus = load_benchmark(write_jsonl(tmp_path / "gpqa.jsonl", rows), "gpqa_diamond")
    assert len(corpus) == 198
    assert all(r.answer_kind == MULTIPLE_CHOICE for r in corpus.records)
    assert corpus.records[0].gold_answer == "B"
    assert corpus.records[0].choices == ("first", "second", "third", "fourth")


def test_gpqa_answer_as_index_or_text(tmp_path):
    rows = [
        {"question": "Q1", "choices": ["w", "x", "y", "z"], "answer": 2},
        {"question": "Q2", "choices": ["w", "x", "y", "z"], "answer": "z"},
    ]
    corpus = load_benchmark(write_jsonl(tmp_path / "gpqa.jsonl", rows), "gpqa_diamond")
    assert corpus.records[0].gold_answer == "C"
    assert corpus.records[1].gold_answer == "D"


def test_olympiadbench_list_answer_and_subset(tmp_path):
    rows = [
        {"question": "Q1", "final_answer": ["7"], "subset": "text_only"},
        {"question": "Q2", "final_answer": ["8"], "subset": "with_figures"},
        {"question": "Q3", "final_answer": "9", "subset": "text_only"},
    ]
    path = write_jsonl(tmp_path / "ob.jsonl", rows)
    full = load_benchmark(path, "olympiadbench")
    assert len(full) == 3
    text_only = load_benchmark(path, "olympiadbench", subset="text_only")
    assert [r.gold_answer for r in text_only.records] == ["7", "9"]
    assert "excluded 1" in text_only.source_manifest[0].notes[0]


def test_empty_file_gives_empty_corpus(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    corpus = load_benchmark(path, "generic_jsonl")
    assert len(corpus) == 0


def test_malformed_line_beyond_threshold_raises(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"question": "Q", "answer": "1"}\nnot json at all\n')
    with pytest.raises(CorpusError):
        load_benchmark(path, "generic_jsonl")


def test_malformed_within_threshold_is_counted(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"question": "Q", "answer": "1"}\n{"question": "missing answer"}\n')
    corpus = load_benchmark(path, "generic_jsonl", max_malformed=1)
    assert len(corpus) == 1
    note = corpus.source_manifest[0]
    assert note.skipped == 1
    assert "line 2" in note.skip_reasons[0]


def test_unreadable_file_raises(tmp_path):
    with pytest.raises(CorpusError):
        load_benchmark(tmp_path / "missing.jsonl", "math")


def test_unknown_adapter_raises(tmp_path):
    with pytest.raises(CorpusError):
        load_benchmark(tmp_path / "x.jsonl", "nope")


def test_deterministic_ids_and_order(tmp_path):
    rows = [{"question": f"Q{i}", "answer": str(i)} for i in range(5)]
    path = write_jsonl(tmp_path / "g.jsonl", rows)
    first = load_benchmark(path, "generic_jsonl")
    second = load_benchmark(path, "generic_jsonl")
    assert [r.id for r in first.records] == [r.id for r in second.records]
    assert first.records == second.records


def test_duplicate_ids_rejected(tmp_path):
    rows = [
        {"id": "same", "question": "Q1", "answer": "1"},
        {"id": "same", "question": "Q2", "answer": "2"},
    ]
    with pytest.raises(CorpusError):
        load_benchmark(write_jsonl(tmp_path / "dup.jsonl", rows), "generic_jsonl")


# --- difficulty filtering ---


def _leveled_corpus():
    records = []
    for i, level in enumerate([1, 2, 3, 4, 5, None, 3, None]):
        records.append(
            ProblemRecord(
                id=f"p{i}",
                source="test",
                question=f"Q{i}",
                gold_answer="1",
                difficulty=level,
            )
        )
    return Corpus(records=tuple(records))


def test_filter_keeps_stated_range():
    corpus = _leveled_corpus()
    filtered = filter_difficulty(corpus, 3, 5)
    assert [r.difficulty for r in filtered.records] == [3, 4, 5, 3]


def test_filter_full_range_drops_only_unknowns():
    corpus = _leveled_corpus()
    filtered = filter_difficulty(corpus, 1, 5)
    missing = sum(1 for r in corpus.records if r.difficulty is None)
    assert len(filtered) + missing == len(corpus)


def test_filter_preserves_subsequence_order():
    corpus = _leveled_corpus()
    filtered = filter_difficulty(corpus, 2, 4)
    positions = [corpus.records.index(r) for r in filtered.records]
    assert positions == sorted(positions)


def test_filter_empty_intersection():
    corpus = _leveled_corpus()
    filtered = filter_difficulty(corpus, 2, 2)
    assert [r.id for r in filtered.records] == ["p1"]
    narrower = Corpus(records=tuple(r for r in corpus.records if r.difficulty in (1, 5)))
    assert len(filter_difficulty(narrower, 2, 2)) == 0


def test_filter_rejects_bad_range():
    with pytest.raises(ValueError):
        filter_difficulty(_leveled_corpus(), 4, 2)
    with pytest.raises(ValueError):
        filter_difficulty(_leveled_corpus(), 0, 3)


# --- record validation ---


def test_multiple_choice_requires_choices():
    with pytest.raises(ValueError):
        ProblemRecord(
            id="x", source="s", question="q", gold_answer="A", answer_kind=MULTIPLE_CHOICE
        )


def test_gold_must_be_choice_label():
    with pytest.raises(ValueError):
        ProblemRecord(
            id="x",
            source="s",
            question="q",
            gold_answer="E",
            answer_kind=MULTIPLE_CHOICE,
            choices=("a", "b"),
        )


def test_corpus_roundtrip(tmp_path, e2e_corpus):
    path = tmp_path / "normalized.jsonl"
    save_corpus(e2e_corpus, path)
    loaded = load_corpus(path)
    assert loaded.records == e2e_corpus.records
    save_corpus(loaded, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()
