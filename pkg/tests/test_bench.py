import json
from fractions import Fraction

import pytest

from boardcheck import llm
from boardcheck.bench import (
    BenchError,
    BenchRow,
    ConfusionCounts,
    EmptyDataset,
    IdMismatch,
    bench_run,
    confusion,
    load_dataset,
    metrics,
    render_value,
    round3,
    truth_verdict,
)
from boardcheck.compliance import Verdict
from boardcheck.llm import LLMVerdict, RetryPolicy


def test_confusion_conventions():
    truth = {"a": ("T", Verdict.OUT_OF_RANGE), "b": ("T", Verdict.IN_RANGE)}
    per_type, overall = confusion(
        {"a": LLMVerdict.FALSE, "b": LLMVerdict.TRUE}, truth
    )
    assert per_type["T"] == ConfusionCounts(tp=1, fp=0, fn=0, tn=1)
    assert overall.total == 2

    per_type, _ = confusion({"a": LLMVerdict.TRUE, "b": LLMVerdict.FALSE}, truth)
    assert per_type["T"] == ConfusionCounts(tp=0, fp=1, fn=1, tn=0)


def test_confusion_unparseable_counts_as_wrong_class():
    truth = {"a": ("T", Verdict.OUT_OF_RANGE), "b": ("T", Verdict.IN_RANGE)}
    judgements = {"a": LLMVerdict.UNPARSEABLE, "b": LLMVerdict.UNPARSEABLE}
    per_type, _ = confusion(judgements, truth)
    assert per_type["T"] == ConfusionCounts(tp=0, fp=1, fn=1, tn=0)
    per_type, overall = confusion(judgements, truth, unparseable="drop")
    assert overall.total == 0


def test_confusion_id_mismatch():
    with pytest.raises(IdMismatch):
        confusion({"a": LLMVerdict.TRUE}, {"b": ("T", Verdict.IN_RANGE)})


def test_confusion_pools_per_type_counts():
    truth = {
        "a": ("T1", Verdict.OUT_OF_RANGE),
        "b": ("T1", Verdict.IN_RANGE),
        "c": ("T2", Verdict.IN_RANGE),
    }
    judgements = {"a": LLMVerdict.FALSE, "b": LLMVerdict.TRUE, "c": LLMVerdict.FALSE}
    per_type, overall = confusion(judgements, truth)
    assert overall == per_type["T1"] + per_type["T2"]
    assert overall.total == 3


@pytest.mark.parametrize("counts, accuracy, precision, recall, f1", [
    # Derived matrices matching published per-type rows.
    (ConfusionCounts(9, 0, 1, 43), "0.981", "1.000", "0.900", "0.947"),
    (ConfusionCounts(3, 3, 0, 53), "0.949", "0.500", "1.000", "0.667"),
    (ConfusionCounts(1, 0, 0, 0), "1.000", "1.000", "1.000", "1.000"),
    (ConfusionCounts(15, 1, 1, 181), "0.990", "0.938", "0.938", "0.938"),
])
def test_metrics_values(counts, accuracy, precision, recall, f1):
    m = metrics(counts)
    assert render_value(m.accuracy) == accuracy
    assert render_value(m.precision) == precision
    assert render_value(m.recall) == recall
    assert render_value(m.f1) == f1


def test_metrics_exact_rationals():
    m = metrics(ConfusionCounts(9, 0, 1, 43))
    assert m.accuracy == Fraction(52, 53)
    assert m.precision == Fraction(1)
    assert m.recall == Fraction(9, 10)
    assert m.f1 == Fraction(18, 19)


def test_metrics_undefined_rendering():
    m = metrics(ConfusionCounts(0, 0, 0, 10))
    assert m.precision is None and m.recall is None and m.f1 is None
    assert render_value(m.precision) == "—"
    assert render_value(m.accuracy) == "1.000"
    # Both zero: precision and recall defined but 0 -> F1 undefined.
    m = metrics(ConfusionCounts(0, 1, 1, 8))
    assert m.precision == 0 and m.recall == 0 and m.f1 is None


def test_round3_half_up():
    assert str(round3(Fraction(1, 2000))) == "0.001"   # 0.0005 rounds up
    assert str(round3(Fraction(52, 53))) == "0.981"
    assert str(round3(Fraction(15, 16))) == "0.938"


def test_label_swap_metamorphic():
    counts = ConfusionCounts(tp=7, fp=3, fn=2, tn=88)
    swapped = ConfusionCounts(tp=counts.tn, fp=counts.fn, fn=counts.fp, tn=counts.tp)
    m, ms = metrics(counts), metrics(swapped)
    assert ms.accuracy == m.accuracy
    assert ms.precision == Fraction(counts.tn, counts.tn + counts.fn)
    assert ms.recall == Fraction(counts.tn, counts.tn + counts.fp)


def test_truth_verdict_requires_parseable_rows():
    row = BenchRow("x", "T", "maybe", "[1, 2] V")
    with pytest.raises(BenchError):
        truth_verdict(row)


def test_bench_run_empty_dataset():
    with pytest.raises(EmptyDataset):
        bench_run([], llm.mock_backend(0))


def test_bench_run_duplicate_ids():
    rows = [BenchRow("x", "T", "1 V", "[0, 2] V"), BenchRow("x", "T", "1 V", "[0, 2] V")]
    with pytest.raises(BenchError):
        bench_run(rows, llm.mock_backend(0))


def test_bench_run_zero_noise_mock_is_perfect():
    rows = [
        BenchRow("a", "T", "1.0 V", "[0.9, 1.1] V"),
        BenchRow("b", "T", "2.0 V", "[0.9, 1.1] V"),
        BenchRow("c", "U", "1.5MΩ", "1.1M - 1.9MΩ"),
        BenchRow("d", "U", "2.5MΩ", "1.1M - 1.9MΩ"),
    ]
    result = bench_run(rows, llm.mock_backend(5), retry=RetryPolicy(max_attempts=1))
    for counts in list(result.per_type.values()) + [result.overall]:
        m = metrics(counts)
        assert m.accuracy == 1 and m.precision == 1 and m.recall == 1 and m.f1 == 1


def test_bench_run_partial_on_backend_failure():
    class FlakyBackend:
        id = "flaky"

        def complete(self, prompt: str) -> str:
            if "2.0 V" in prompt:
                raise llm.BackendUnavailable("boom")
            return "True."

    rows = [
        BenchRow("a", "T", "1.0 V", "[0.9, 1.1] V"),
        BenchRow("b", "T", "2.0 V", "[1.9, 2.1] V"),
    ]
    result = bench_run(rows, FlakyBackend(), retry=RetryPolicy(max_attempts=1))
    assert result.partial
    assert result.failed_ids == ["b"]
    assert result.overall.total == 1


def test_bench_render_layout():
    rows = [BenchRow("a", "POL Voltage", "1.0 V", "[0.9, 1.1] V")]
    result = bench_run(rows, llm.mock_backend(1), retry=RetryPolicy(max_attempts=1))
    text = result.render()
    header = text.splitlines()[0]
    for column in ("Model", "Test Type", "#Tests", "Accuracy", "Precision", "Recall", "F1-Score"):
        assert column in header
    assert "Overall" in text
    payload = result.to_json()
    assert payload["overall"]["tests"] == 1
    assert payload["overall"]["precision"] is None  # no positives at all
    json.dumps(payload)  # serializable


def test_load_dataset_and_columns(fixtures_dir):
    rows = load_dataset(fixtures_dir / "bench" / "dataset_198.csv")
    assert len(rows) == 198
    types = {r.test_type for r in rows}
    assert types == {"POL Voltage", "Internal Isolation", "External Isolation"}


def test_load_dataset_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,test_type\nx,T\n")
    with pytest.raises(BenchError):
        load_dataset(path)
