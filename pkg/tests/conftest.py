from __future__ import annotations

import json
from pathlib import Path

import pytest

from policyx.corpus import load_corpus

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_corpus_path() -> Path:
    return DATA_DIR / "fixture_corpus.csv"


@pytest.fixture(scope="session")
def fixture_corpus():
    return load_corpus(DATA_DIR / "fixture_corpus.csv")


@pytest.fixture(scope="session")
def mock_script() -> dict[str, str]:
    return json.loads((DATA_DIR / "mock_responses.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def eval_corpus():
    return load_corpus(DATA_DIR / "eval_corpus.csv")
