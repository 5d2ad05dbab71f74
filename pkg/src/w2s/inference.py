"""Batch client for OpenAI-compatible inference endpoints.

Drives chat-completions or completions endpoints with bounded
parallelism, retrying transient failures with jittered exponential
backoff. Results are checkpointed per record so an interrupted batch can
resume without re-querying finished records, and the returned list is
always sorted by (record_id, sample_index) regardless of completion
order.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import httpx

from .corpus import Corpus, ProblemRecord
from .prompts import PromptTemplate, render

logger = logging.getLogger(__name__)

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"

CHAT_API = "chat"
COMPLETIONS_API = "completions"

# Decoding profiles: greedy single-sample generation for distillation,
# moderate-temperature sampling with a long budget for evaluation.
DISTILL_PROFILE = ("distill", 0.0, 1.0, 4096, 1)
EVAL_PROFILE = ("eval", 0.6, 0.95, 32768)


class InferenceError(Exception):
    """Raised when an entire batch fails."""


@dataclass(frozen=True)
class EndpointConfig:
    """Connection settings for one OpenAI-compatible endpoint."""

    base_url: str
    model: str
    auth_token_ref: str | None = None
    timeout: float = 120.0
    max_parallel: int = 4
    max_retries: int = 2
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries cannot be negative")

    def auth_token(self) -> str | None:
        if not self.auth_token_ref:
            return None
        return os.environ.get(self.auth_token_ref)


@dataclass(frozen=True)
class SamplingProfile:
    """Decoding parameters sent with every request."""

    temperature: float
    top_p: float
    max_tokens: int
    n_samples: int = 1
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature cannot be negative")
        if not 0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


def distill_profile(seed: int | None = None) -> SamplingProfile:
    """Greedy decoding profile used for teacher trajectory generation."""
    _, temperature, top_p, max_tokens, n_samples = DISTILL_PROFILE
    return SamplingProfile(
        temperature=temperature,
        top_p=top_p,
        max_tokens=max_tokens,
        n_samples=n_samples,
        seed=seed,
    )


def eval_profile(n_samples: int = 1, seed: int | None = None) -> SamplingProfile:
    """Sampling profile used for student evaluation."""
    _, temperature, top_p, max_tokens = EVAL_PROFILE
    return SamplingProfile(
        temperature=temperature,
        top_p=top_p,
        max_tokens=max_tokens,
        n_samples=n_samples,
        seed=seed,
    )


NAMED_PROFILES = {"distill": distill_profile, "eval": eval_profile}


@dataclass(frozen=True)
class GenerationResult:
    """One sampled completion (or a terminal error) for one record."""

    record_id: str
    sample_index: int
    text: str
    finish_reason: str
    completion_tokens: int | None = None
    error_detail: str | None = None

    def __post_init__(self) -> None:
        if self.finish_reason == FINISH_ERROR and (self.text or not self.error_detail):
            raise ValueError("error results must have empty text and an error detail")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "sample_index": self.sample_index,
            "text": self.text,
            "finish_reason": self.finish_reason,
            "completion_tokens": self.completion_tokens,
            "error_detail": self.error_detail,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GenerationResult":
        return cls(
            record_id=raw["record_id"],
            sample_index=raw["sample_index"],
            text=raw["text"],
            finish_reason=raw["finish_reason"],
            completion_tokens=raw.get("completion_tokens"),
            error_detail=raw.get("error_detail"),
        )


def _request_payload(
    record: ProblemRecord,
    endpoint: EndpointConfig,
    profile: SamplingProfile,
    template: PromptTemplate,
    api: str,
) -> dict:
    rendered = render(template, record.question)
    payload = {
        "model": endpoint.model,
        "temperature": profile.temperature,
        "top_p": profile.top_p,
        "max_tokens": profile.max_tokens,
        "n": profile.n_samples,
    }
    if profile.seed is not None:
        payload["seed"] = profile.seed
    if api == CHAT_API:
        payload["messages"] = [{"role": role, "content": content} for role, content in rendered.messages]
    else:
        payload["prompt"] = rendered.to_text()
    return payload


def _parse_results(record_id: str, n_samples: int, data: dict) -> list[GenerationResult]:
    choices = {c.get("index", i): c for i, c in enumerate(data.get("choices", []))}
    usage_tokens = None
    if n_samples == 1:
        # Per-request usage is only attributable to a single completion.
        usage = data.get("usage") or {}
        usage_tokens = usage.get("completion_tokens")
    results = []
    for index in range(n_samples):
        choice = choices.get(index)
        if choice is None:
            results.append(
                GenerationResult(
                    record_id=record_id,
                    sample_index=index,
                    text="",
                    finish_reason=FINISH_ERROR,
                    error_detail=f"endpoint returned no choice for index {index}",
                )
            )
            continue
        if "message" in choice:
            text = (choice["message"] or {}).get("content") or ""
        else:
            text = choice.get("text") or ""
        finish = choice.get("finish_reason")
        finish = FINISH_LENGTH if finish == FINISH_LENGTH else FINISH_STOP
        results.append(
            GenerationResult(
                record_id=record_id,
                sample_index=index,
                text=text,
                finish_reason=finish,
                completion_tokens=usage_tokens,
            )
        )
    return results


def _error_results(record_id: str, n_samples: int, detail: str) -> list[GenerationResult]:
    return [
        GenerationResult(
            record_id=record_id,
            sample_index=index,
            text="",
            finish_reason=FINISH_ERROR,
            error_detail=detail,
        )
        for index in range(n_samples)
    ]


def _generate_one(
    client: httpx.Client,
    record: ProblemRecord,
    endpoint: EndpointConfig,
    profile: SamplingProfile,
    template: PromptTemplate,
    api: str,
    rng: random.Random,
) -> list[GenerationResult]:
    url = endpoint.base_url.rstrip("/") + (
        "/chat/completions" if api == CHAT_API else "/completions"
    )
    payload = _request_payload(record, endpoint, profile, template, api)
    headers = {}
    token = endpoint.auth_token()
    if token:
        headers["Authorization"] = f"Bearer {token}"

    last_error = "no attempt made"
    for attempt in range(endpoint.max_retries + 1):
        try:
            response = client.post(url, json=payload, headers=headers, timeout=endpoint.timeout)
        except httpx.HTTPError as exc:
            last_error = f"transport error: {exc}"
        else:
            if response.status_code < 400:
                try:
                    return _parse_results(record.id, profile.n_samples, response.json())
                except (ValueError, KeyError, TypeError) as exc:
                    return _error_results(record.id, profile.n_samples, f"unparseable response: {exc}")
            if response.status_code < 500:
                # Client errors are terminal; retrying cannot fix them.
                return _error_results(
                    record.id,
                    profile.n_samples,
                    f"HTTP {response.status_code}: {response.text[:200]}",
                )
            last_error = f"HTTP {response.status_code}: {response.text[:200]}"
        if attempt < endpoint.max_retries:
            delay = min(endpoint.backoff_base * (2**attempt), 30.0) * rng.uniform(0.5, 1.0)
            time.sleep(delay)
    return _error_results(
        record.id, profile.n_samples, f"{last_error} (after {endpoint.max_retries + 1} attempts)"
    )


def _load_checkpoint(path: Path) -> dict[str, list[GenerationResult]]:
    done: dict[str, list[GenerationResult]] = {}
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                # A partially written trailing line from an interrupt.
                continue
            done[row["record_id"]] = [GenerationResult.from_dict(r) for r in row["results"]]
    return done


def save_results(results: list[GenerationResult], path: str | Path) -> None:
    """Persist results as JSONL, one GenerationResult per line (atomic)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        for result in results:
            handle.write(json.dumps(result.to_dict(), ensure_ascii=False) + "\n")
    tmp.replace(path)


def load_results(path: str | Path) -> list[GenerationResult]:
    results = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                results.append(GenerationResult.from_dict(json.loads(line)))
    return results


def error_count(results: list[GenerationResult]) -> int:
    return sum(1 for r in results if r.finish_reason == FINISH_ERROR)


def generate_batch(
    corpus: Corpus,
    endpoint: EndpointConfig,
    profile: SamplingProfile,
    template: PromptTemplate,
    api: str = CHAT_API,
    checkpoint_path: str | Path | None = None,
    results_path: str | Path | None = None,
) -> list[GenerationResult]:
    """Generate profile.n_samples completions for every corpus record.

    Per-record failures become error results rather than aborting the
    batch; only a batch where every record fails raises. With a
    checkpoint path, finished records are skipped on rerun and the final
    result file is byte-identical to an uninterrupted run.
    """
    if not corpus.records:
        raise InferenceError("cannot generate from an empty corpus")
    if api not in (CHAT_API, COMPLETIONS_API):
        raise ValueError(f"unknown api {api!r}")

    done: dict[str, list[GenerationResult]] = {}
    checkpoint = Path(checkpoint_path) if checkpoint_path else None
    if checkpoint:
        # A record is finished only if it has a full, error-free sample
        # set; errored records are re-queried on resume.
        done = {
            rid: results
            for rid, results in _load_checkpoint(checkpoint).items()
            if len(results) == profile.n_samples
            and not any(r.finish_reason == FINISH_ERROR for r in results)
        }
        if done:
            logger.info("resuming: %d record(s) already generated", len(done))

    todo = [r for r in corpus.records if r.id not in done]
    checkpoint_lock = threading.Lock()
    rng = random.Random(profile.seed)

    if todo:
        with httpx.Client() as client, ThreadPoolExecutor(
            max_workers=endpoint.max_parallel
        ) as pool:
            futures = {
                pool.submit(
                    _generate_one, client, record, endpoint, profile, template, api, rng
                ): record
                for record in todo
            }
            for future in as_completed(futures):
                record = futures[future]
                results = future.result()
                done[record.id] = results
                if checkpoint:
                    line = json.dumps(
                        {"record_id": record.id, "results": [r.to_dict() for r in results]},
                        ensure_ascii=False,
                    )
                    with checkpoint_lock, open(checkpoint, "a", encoding="utf-8") as handle:
                        handle.write(line + "\n")

    ordered = [result for rid in sorted(done) for result in sorted(done[rid], key=lambda r: r.sample_index)]
    failed = error_count(ordered)
    if failed:
        logger.warning("%d of %d results are errors", failed, len(ordered))
    if failed == len(ordered):
        if results_path:
            save_results(ordered, results_path)
        raise InferenceError(
            f"all {len(corpus.records)} record(s) failed; first error: {ordered[0].error_detail}"
        )
    if results_path:
        save_results(ordered, results_path)
    return ordered
