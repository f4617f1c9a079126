import json
from pathlib import Path

import pytest

from boardcheck import llm, pipeline

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def ontology_text() -> str:
    return (FIXTURES / "ontology.ttl").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def mappings_text() -> str:
    return (FIXTURES / "mappings" / "default.map").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def report_batch() -> "list[Path]":
    return sorted((FIXTURES / "reports").glob("*.json"))


@pytest.fixture(scope="session")
def demo_report() -> dict:
    return json.loads((FIXTURES / "reports_demo" / "TASI-1234.json").read_text(encoding="utf-8"))


@pytest.fixture
def pipeline_config(tmp_path) -> pipeline.PipelineConfig:
    data_dir = tmp_path / "data"
    return pipeline.PipelineConfig(
        ontology_path=FIXTURES / "ontology.ttl",
        mappings_path=FIXTURES / "mappings" / "default.map",
        data_dir=data_dir,
        review_queue_path=data_dir / "review_queue.jsonl",
        backend=llm.mock_backend(7),
    )
