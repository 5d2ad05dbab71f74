import json
from pathlib import Path

import pytest

from w2s.corpus import load_benchmark
from w2s.mock_server import load_script, serve

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def e2e_corpus_path() -> Path:
    return DATA_DIR / "e2e" / "corpus.jsonl"


@pytest.fixture()
def e2e_corpus(e2e_corpus_path):
    return load_benchmark(e2e_corpus_path, "generic_jsonl")


@pytest.fixture()
def teacher_server():
    server = serve(load_script(DATA_DIR / "e2e" / "teacher_script.jsonl"))
    yield server
    server.stop()


@pytest.fixture()
def student_server():
    server = serve(load_script(DATA_DIR / "e2e" / "student_script.jsonl"))
    yield server
    server.stop()


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path
