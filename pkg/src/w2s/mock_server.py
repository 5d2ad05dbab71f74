"""Deterministic mock of the chat-completions wire subset.

Serves scripted responses over real HTTP so the batch client can be
exercised end to end without a GPU or network. Responses are a pure
function of (request body, script): entries match on a problem-id tag
embedded in the prompt ("[pid=...]"), or on a hash of the
whitespace-normalized prompt, with a required default fallback. Every
request is logged for test assertions.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

MATCH_PID = "pid"
MATCH_PROMPT_SHA256 = "prompt_sha256"
MATCH_DEFAULT = "default"
ANY_MODEL = "*"

_PID_TAG_RE = re.compile(r"\[pid=([^\]\s]+)\]")


class ScriptError(Exception):
    """Invalid response script."""


@dataclass(frozen=True)
class ScriptEntry:
    """One scripted response."""

    model: str
    match_type: str
    match_value: str
    texts: tuple[str, ...]
    finish_reason: str = "stop"
    completion_tokens: int | None = None
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.finish_reason not in ("stop", "length"):
            raise ScriptError(f"finish_reason must be stop or length, got {self.finish_reason!r}")
        if self.match_type not in (MATCH_PID, MATCH_PROMPT_SHA256, MATCH_DEFAULT):
            raise ScriptError(f"unknown match type {self.match_type!r}")
        if not self.texts:
            raise ScriptError("entry needs at least one response text")

    def text_for(self, index: int) -> str:
        if index < len(self.texts):
            return self.texts[index]
        return self.texts[-1]


@dataclass(frozen=True)
class ResponseScript:
    entries: tuple[ScriptEntry, ...]
    lookup: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not any(e.match_type == MATCH_DEFAULT for e in self.entries):
            raise ScriptError("script must include a default entry")
        table: dict[tuple[str, str, str], ScriptEntry] = {}
        for entry in self.entries:
            table[(entry.model, entry.match_type, entry.match_value)] = entry
        self.lookup.update(table)

    def known_model(self, model: str) -> bool:
        return any(e.model in (model, ANY_MODEL) for e in self.entries)

    def resolve(self, model: str, prompt_text: str) -> ScriptEntry | None:
        pids = _PID_TAG_RE.findall(prompt_text)
        digest = prompt_digest(prompt_text)
        for candidate_model in (model, ANY_MODEL):
            for pid in pids:
                entry = self.lookup.get((candidate_model, MATCH_PID, pid))
                if entry:
                    return entry
            entry = self.lookup.get((candidate_model, MATCH_PROMPT_SHA256, digest))
            if entry:
                return entry
            entry = self.lookup.get((candidate_model, MATCH_DEFAULT, ""))
            if entry:
                return entry
        return None


def prompt_digest(prompt_text: str) -> str:
    """Hash of the whitespace-normalized prompt, the script's hash key."""
    normalized = re.sub(r"\s+", " ", prompt_text).strip()
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


def _entry_from_dict(raw: dict) -> ScriptEntry:
    match = raw.get("match")
    if match == MATCH_DEFAULT or match is None:
        match_type, match_value = MATCH_DEFAULT, ""
    elif isinstance(match, dict):
        match_type = match.get("type", "")
        match_value = str(match.get("value", ""))
    else:
        raise ScriptError(f"bad match spec: {match!r}")
    if "texts" in raw:
        texts = tuple(str(t) for t in raw["texts"])
    else:
        texts = (str(raw.get("text", "")),)
    return ScriptEntry(
        model=raw.get("model", ANY_MODEL),
        match_type=match_type,
        match_value=match_value,
        texts=texts,
        finish_reason=raw.get("finish_reason", "stop"),
        completion_tokens=raw.get("completion_tokens"),
        latency_ms=int(raw.get("latency_ms", 0)),
    )


def load_script(path: str | Path) -> ResponseScript:
    """Read a response script from JSONL, one entry per line."""
    entries = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                entries.append(_entry_from_dict(json.loads(line)))
    return ResponseScript(entries=tuple(entries))


def _prompt_text_from_request(body: dict) -> str | None:
    if "messages" in body:
        messages = body["messages"]
        if not isinstance(messages, list) or not messages:
            return None
        parts = []
        for message in messages:
            if not isinstance(message, dict) or "content" not in message:
                return None
            parts.append(str(message["content"]))
        return "\n".join(parts)
    if "prompt" in body:
        prompt = body["prompt"]
        return prompt if isinstance(prompt, str) else None
    return None


class _Handler(BaseHTTPRequestHandler):
    server: "MockInferenceServer"

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        pass

    def do_POST(self) -> None:
        self.server.note_request_started()
        try:
            self._handle()
        finally:
            self.server.note_request_finished()

    def _handle(self) -> None:
        if self.path not in (
            "/v1/chat/completions",
            "/v1/completions",
            "/chat/completions",
            "/completions",
        ):
            self._send(404, {"error": {"message": f"no such route: {self.path}"}})
            return
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
            if not isinstance(body, dict):
                raise ValueError("request body must be a JSON object")
        except (json.JSONDecodeError, ValueError) as exc:
            self._send(400, {"error": {"message": f"malformed request: {exc}"}})
            return

        model = body.get("model")
        prompt_text = _prompt_text_from_request(body)
        if not isinstance(model, str) or prompt_text is None:
            self._send(400, {"error": {"message": "request needs a model and messages/prompt"}})
            return
        script = self.server.script
        if not script.known_model(model):
            self._send(404, {"error": {"message": f"unknown model: {model}"}})
            return

        entry = script.resolve(model, prompt_text)
        n = body.get("n", 1)
        if not isinstance(n, int) or n < 1:
            self._send(400, {"error": {"message": f"bad n: {n!r}"}})
            return

        self.server.log_request_record(
            {
                "path": self.path,
                "model": model,
                "prompt": prompt_text,
                "temperature": body.get("temperature"),
                "top_p": body.get("top_p"),
                "max_tokens": body.get("max_tokens"),
                "n": n,
                "seed": body.get("seed"),
                "matched": {"type": entry.match_type, "value": entry.match_value},
            }
        )

        if entry.latency_ms:
            time.sleep(entry.latency_ms / 1000.0)

        chat = "chat" in self.path
        choices = []
        total_completion_tokens = 0
        for index in range(n):
            text = entry.text_for(index)
            tokens = entry.completion_tokens
            if tokens is None:
                tokens = len(text.split())
            total_completion_tokens += tokens
            choice = {"index": index, "finish_reason": entry.finish_reason}
            if chat:
                choice["message"] = {"role": "assistant", "content": text}
            else:
                choice["text"] = text
            choices.append(choice)

        request_id = hashlib.sha256(raw).hexdigest()[:16]
        response = {
            "id": f"mock-{request_id}",
            "object": "chat.completion" if chat else "text_completion",
            "created": 0,
            "model": model,
            "choices": choices,
            "usage": {
                "prompt_tokens": len(prompt_text.split()),
                "completion_tokens": total_completion_tokens,
                "total_tokens": len(prompt_text.split()) + total_completion_tokens,
            },
        }
        self._send(200, response)

    def _send(self, status: int, body: dict) -> None:
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


class MockInferenceServer(ThreadingHTTPServer):
    """Running mock endpoint; use serve() to construct."""

    daemon_threads = True

    def __init__(self, script: ResponseScript, port: int, log_path: Path | None):
        super().__init__(("127.0.0.1", port), _Handler)
        self.script = script
        self.log_path = log_path
        self._log: list[dict] = []
        self._log_lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}/v1"

    def note_request_started(self) -> None:
        with self._log_lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)

    def note_request_finished(self) -> None:
        with self._log_lock:
            self._in_flight -= 1

    def log_request_record(self, record: dict) -> None:
        with self._log_lock:
            self._log.append(record)

    def request_log(self) -> list[dict]:
        with self._log_lock:
            return list(self._log)

    def write_request_log(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for record in self.request_log():
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")

    def start(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.shutdown()
        if self._thread:
            self._thread.join(timeout=10)
        self.server_close()
        if self.log_path:
            self.write_request_log(self.log_path)

    def __enter__(self) -> "MockInferenceServer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve(
    script: ResponseScript, port: int = 0, log_path: str | Path | None = None
) -> MockInferenceServer:
    """Start the mock server on 127.0.0.1 and return its handle.

    port=0 binds an ephemeral free port. The request log is persisted to
    log_path (JSONL) on stop when given.
    """
    server = MockInferenceServer(script, port, Path(log_path) if log_path else None)
    server.start()
    return server
