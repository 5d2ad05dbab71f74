import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from w2s.distillery import (
    EXTENDED_EPOCHS,
    VARIANT_ALL,
    VARIANT_NEGATIVE,
    VARIANT_POSITIVE,
    PartitionSet,
    SftExample,
    TrainingConfig,
    TrajectoryRecord,
    distill,
    emit_sft,
    emit_training_config,
    load_trajectories,
    partition,
    save_trajectories,
)
from w2s.grading import ExtractedAnswer, ExtractionMethod, Verdict, VerdictReason
from w2s.inference import EndpointConfig, distill_profile
from w2s.prompts import load_template


def _trajectory(pid, correct, completion="We compute 1 + 1 = 2.\n\\boxed{2}", finish="stop"):
    reason = VerdictReason.EXACT_MATCH if correct else VerdictReason.MISMATCH
    return TrajectoryRecord(
        problem_id=pid,
        teacher="weak-teacher",
        prompt_template_id="simple",
        completion=completion,
        extracted=ExtractedAnswer("2", "2", ExtractionMethod.BOXED),
        verdict=Verdict(is_correct=correct, reason=reason),
        finish_reason=finish,
        question=f"[pid={pid}] What is 1 + 1?",
    )


# --- partitioning ---


def test_partition_counts():
    records = [_trajectory(f"p{i}", correct=i < 3) for i in range(5)]
    result = partition(records)
    assert result.counts() == (5, 3, 2)


def test_partition_all_correct_gives_empty_negative():
    records = [_trajectory(f"p{i}", correct=True) for i in range(4)]
    result = partition(records)
    assert result.counts() == (4, 4, 0)


def test_unextractable_lands_in_negative():
    record = TrajectoryRecord(
        problem_id="p0",
        teacher="t",
        prompt_template_id="simple",
        completion="no answer anywhere",
        extracted=ExtractedAnswer("", "", ExtractionMethod.NONE),
        verdict=Verdict(is_correct=False, reason=VerdictReason.UNEXTRACTABLE),
        finish_reason="stop",
        question="q",
    )
    result = partition([record])
    assert result.counts() == (1, 0, 1)


def test_partition_rejects_ungraded():
    record = TrajectoryRecord(
        problem_id="p0",
        teacher="t",
        prompt_template_id="simple",
        completion="text",
        extracted=ExtractedAnswer("", "", ExtractionMethod.NONE),
        verdict=None,
        finish_reason="stop",
        question="q",
    )
    with pytest.raises(ValueError):
        partition([record])


def test_partition_set_invariants_enforced():
    good = _trajectory("a", correct=True)
    bad = _trajectory("b", correct=False)
    with pytest.raises(ValueError):
        PartitionSet(all=(good, bad), positive=(good, bad), negative=())
    with pytest.raises(ValueError):
        PartitionSet(all=(good, bad), positive=(bad,), negative=(good,))


@given(st.lists(st.tuples(st.integers(0, 10**6), st.booleans()), max_size=60))
def test_partition_properties(seeds):
    records = [
        _trajectory(f"p{i:03d}-{seed}", correct=correct) for i, (seed, correct) in enumerate(seeds)
    ]
    result = partition(records)
    assert set(result.positive) | set(result.negative) == set(result.all)
    assert not (set(result.positive) & set(result.negative))
    assert all(t.verdict.is_correct for t in result.positive)
    assert all(not t.verdict.is_correct for t in result.negative)


# --- SFT emission ---


def test_emit_variant_sizes(tmp_path):
    records = [_trajectory(f"p{i}", correct=i < 3) for i in range(5)]
    result = partition(records)
    all_stats = emit_sft(result, VARIANT_ALL, tmp_path / "all.jsonl")
    pos_stats = emit_sft(result, VARIANT_POSITIVE, tmp_path / "pos.jsonl")
    neg_stats = emit_sft(result, VARIANT_NEGATIVE, tmp_path / "neg.jsonl")
    assert (all_stats.written, pos_stats.written, neg_stats.written) == (5, 3, 2)
    assert all_stats.written == pos_stats.written + neg_stats.written


def test_emit_rejects_empty_subset(tmp_path):
    records = [_trajectory("p0", correct=True)]
    result = partition(records)
    with pytest.raises(ValueError):
        emit_sft(result, VARIANT_NEGATIVE, tmp_path / "neg.jsonl")


def test_emit_is_byte_stable(tmp_path):
    records = [_trajectory(f"p{i}", correct=i % 2 == 0) for i in range(6)]
    result = partition(records)
    emit_sft(result, VARIANT_ALL, tmp_path / "one.jsonl")
    emit_sft(result, VARIANT_ALL, tmp_path / "two.jsonl")
    assert (tmp_path / "one.jsonl").read_bytes() == (tmp_path / "two.jsonl").read_bytes()


def test_emitted_instruction_is_fully_rendered(tmp_path):
    records = [_trajectory("p0", correct=True)]
    result = partition(records)
    emit_sft(result, VARIANT_ALL, tmp_path / "out.jsonl")
    row = json.loads((tmp_path / "out.jsonl").read_text().splitlines()[0])
    assert row["instruction"].startswith("Question:\n[pid=p0] What is 1 + 1?\nAnswer:\n")
    assert row["instruction"].endswith("Let's think step by step.")
    assert row["response"] == records[0].completion


def test_emit_skips_empty_completions_consistently(tmp_path):
    records = [_trajectory(f"p{i}", correct=False) for i in range(2)]
    error_record = TrajectoryRecord(
        problem_id="p9",
        teacher="t",
        prompt_template_id="simple",
        completion="",
        extracted=ExtractedAnswer("", "", ExtractionMethod.NONE),
        verdict=Verdict(is_correct=False, reason=VerdictReason.UNEXTRACTABLE),
        finish_reason="error",
        question="q",
    )
    result = partition(records + [error_record])
    all_stats = emit_sft(result, VARIANT_ALL, tmp_path / "all.jsonl")
    neg_stats = emit_sft(result, VARIANT_NEGATIVE, tmp_path / "neg.jsonl")
    assert all_stats.skipped_empty == 1
    assert neg_stats.skipped_empty == 1
    assert all_stats.written == neg_stats.written == 2


def test_sft_example_requires_response():
    with pytest.raises(ValueError):
        SftExample(instruction="inst", response="")


# --- training config ---


def test_training_config_defaults(tmp_path):
    config = TrainingConfig()
    assert (config.learning_rate, config.epochs, config.global_batch_size) == (1e-5, 5, 128)
    assert (config.optimizer, config.lr_scheduler, config.max_seq_len) == (
        "adamw",
        "cosine",
        4096,
    )
    path = emit_training_config(config, tmp_path / "cfg.txt", "data/sft.jsonl")
    content = path.read_text()
    parsed = dict(line.split("=", 1) for line in content.strip().splitlines())
    assert float(parsed["learning_rate"]) == 1e-5
    assert parsed["global_batch_size"] == "128"
    assert parsed["optimizer"] == "adamw"
    assert parsed["lr_scheduler"] == "cosine"
    assert parsed["max_seq_len"] == "4096"
    assert parsed["dataset_path"] == "data/sft.jsonl"


def test_training_config_extended_epochs_preset(tmp_path):
    config = TrainingConfig(epochs=EXTENDED_EPOCHS)
    path = emit_training_config(config, tmp_path / "cfg.txt", "d.jsonl")
    assert "epochs=10" in path.read_text()


def test_training_config_rejects_negative_lr():
    with pytest.raises(ValueError):
        TrainingConfig(learning_rate=-1e-5)


def test_training_config_byte_stable(tmp_path):
    emit_training_config(TrainingConfig(), tmp_path / "a.txt", "d.jsonl")
    emit_training_config(TrainingConfig(), tmp_path / "b.txt", "d.jsonl")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


# --- distillation over the mock teacher ---


def test_distill_grades_inline(e2e_corpus, teacher_server, tmp_path):
    endpoint = EndpointConfig(base_url=teacher_server.base_url, model="weak-teacher", max_parallel=4)
    records = distill(
        e2e_corpus,
        endpoint,
        distill_profile(seed=1),
        load_template("simple"),
        trajectories_path=tmp_path / "traj.jsonl",
    )
    assert len(records) == 20
    assert sum(1 for r in records if r.verdict.is_correct) == 12
    truncated = [r for r in records if r.finish_reason == "length"]
    assert len(truncated) == 2
    assert all(not r.verdict.is_correct for r in truncated)
    loaded = load_trajectories(tmp_path / "traj.jsonl")
    assert loaded == sorted(records, key=lambda r: (r.problem_id, r.sample_index))


def test_distill_requests_use_greedy_decoding(e2e_corpus, teacher_server):
    endpoint = EndpointConfig(base_url=teacher_server.base_url, model="weak-teacher", max_parallel=2)
    distill(e2e_corpus, endpoint, distill_profile(seed=1), load_template("simple"))
    for request in teacher_server.request_log():
        assert request["temperature"] == 0
        assert request["top_p"] == 1.0
        assert request["max_tokens"] == 4096
        assert request["n"] == 1


def test_distill_supports_multiple_samples_per_problem(e2e_corpus, teacher_server):
    from w2s.inference import SamplingProfile

    endpoint = EndpointConfig(base_url=teacher_server.base_url, model="weak-teacher", max_parallel=2)
    profile = SamplingProfile(temperature=0.6, top_p=0.95, max_tokens=256, n_samples=2)
    small = type(e2e_corpus)(records=e2e_corpus.records[:3])
    records = distill(small, endpoint, profile, load_template("simple"))
    assert len(records) == 6
    assert sorted({(r.problem_id, r.sample_index) for r in records}) == [
        (r.problem_id, r.sample_index) for r in records
    ]


def test_trajectory_roundtrip(tmp_path):
    records = [_trajectory("p1", True), _trajectory("p0", False, finish="length")]
    path = tmp_path / "t.jsonl"
    save_trajectories(records, path)
    loaded = load_trajectories(path)
    assert loaded == sorted(records, key=lambda r: (r.problem_id, r.sample_index))
    save_trajectories(loaded, tmp_path / "t2.jsonl")
    assert (tmp_path / "t2.jsonl").read_bytes() == path.read_bytes()
