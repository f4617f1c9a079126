"""Scoring of LLM compliance judgements against the deterministic oracle.

The positive class is the out-of-range measurement (the rare, interesting
one), so an LLM "False" is a positive prediction.  Metrics are exact
rationals, rounded half-up to three decimals only when rendered.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import llm
from .compliance import Verdict
from .units import (
    DEFAULT_REGISTRY,
    UnitRegistry,
    UnitsError,
    parse_acceptance_limits,
    parse_quantity,
)
from .compliance import oracle_check

log = logging.getLogger(__name__)

UNDEFINED_MARK = "—"


class BenchError(Exception):
    pass


class EmptyDataset(BenchError):
    pass


class IdMismatch(BenchError):
    """Judgements and ground truth are not aligned by observation id."""


@dataclass(frozen=True)
class BenchRow:
    """One benchmark dataset row; raw strings exactly as extracted."""

    id: str
    test_type: str
    measured_raw: str
    limits_raw: str
    success_raw: str = ""

    # Field names the row-checker expects.
    @property
    def result_raw(self) -> str:
        return self.measured_raw


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True)
class Metrics:
    """Exact metric values; None means undefined (zero denominator)."""

    accuracy: Optional[Fraction]
    precision: Optional[Fraction]
    recall: Optional[Fraction]
    f1: Optional[Fraction]


def metrics(counts: ConfusionCounts) -> Metrics:
    """accuracy, precision, recall, F1 from one confusion matrix."""
    n = counts.total
    accuracy = Fraction(counts.tp + counts.tn, n) if n else None
    precision = Fraction(counts.tp, counts.tp + counts.fp) if counts.tp + counts.fp else None
    recall = Fraction(counts.tp, counts.tp + counts.fn) if counts.tp + counts.fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


def round3(value: Optional[Fraction]) -> Optional[Decimal]:
    """Half-up rounding to three decimals, applied only at render time."""
    if value is None:
        return None
    with localcontext() as ctx:
        ctx.prec = 50
        quotient = Decimal(value.numerator) / Decimal(value.denominator)
    return quotient.quantize(Decimal("0.001"), rounding=ROUND_HALF_UP)


def render_value(value: Optional[Fraction]) -> str:
    rounded = round3(value)
    return UNDEFINED_MARK if rounded is None else f"{rounded:.3f}"


def truth_verdict(row: BenchRow, registry: UnitRegistry = DEFAULT_REGISTRY) -> Verdict:
    """Ground truth for one row via the deterministic oracle."""
    try:
        measured = parse_quantity(row.measured_raw, registry)
        limits = parse_acceptance_limits(row.limits_raw, registry)
    except UnitsError as exc:
        raise BenchError(f"row {row.id!r}: ground truth not computable: {exc}") from exc
    verdict = oracle_check(measured, limits)
    if verdict is Verdict.UNKNOWN:
        raise BenchError(f"row {row.id!r}: ground truth not computable (dimension mismatch)")
    return verdict


def confusion(
    judgements: "Mapping[str, llm.LLMVerdict]",
    ground_truth: "Mapping[str, tuple[str, Verdict]]",
    unparseable: str = "wrong",
) -> "tuple[dict[str, ConfusionCounts], ConfusionCounts]":
    """Confusion counts per test type plus pooled overall counts.

    ground_truth maps observation id to (test type, oracle verdict).  An LLM
    "True" predicts in range (negative); "False" predicts out of range
    (positive).  Unparseable judgements count as the wrong class by default;
    unparseable="drop" excludes them from scoring.
    """
    if unparseable not in ("wrong", "drop"):
        raise ValueError(f"unparseable mode must be 'wrong' or 'drop', got {unparseable!r}")
    if set(judgements) != set(ground_truth):
        extra = sorted(set(judgements) - set(ground_truth))[:3]
        missing = sorted(set(ground_truth) - set(judgements))[:3]
        raise IdMismatch(f"judgements/truth id mismatch (extra {extra}, missing {missing})")
    tallies: "dict[str, dict[str, int]]" = {}
    for obs_id, (test_type, verdict) in ground_truth.items():
        cell = tallies.setdefault(test_type, {"tp": 0, "fp": 0, "fn": 0, "tn": 0})
        judgement = judgements[obs_id]
        actual_positive = verdict is Verdict.OUT_OF_RANGE
        if judgement is llm.LLMVerdict.UNPARSEABLE:
            if unparseable == "drop":
                continue
            predicted_positive = not actual_positive
        else:
            predicted_positive = judgement is llm.LLMVerdict.FALSE
        if actual_positive and predicted_positive:
            cell["tp"] += 1
        elif actual_positive:
            cell["fn"] += 1
        elif predicted_positive:
            cell["fp"] += 1
        else:
            cell["tn"] += 1
    per_type = {name: ConfusionCounts(**cells) for name, cells in tallies.items()}
    overall = ConfusionCounts()
    for counts in per_type.values():
        overall = overall + counts
    return per_type, overall


@dataclass
class BenchResult:
    model: str
    per_type: "dict[str, ConfusionCounts]"
    overall: ConfusionCounts
    partial: bool = False
    failed_ids: "list[str]" = field(default_factory=list)

    def sections(self) -> "list[tuple[str, ConfusionCounts]]":
        rows = list(self.per_type.items())
        rows.append(("Overall", self.overall))
        return rows

    def render(self) -> str:
        """Aligned text table: Model, Test Type, #Tests, and the four metrics."""
        header = ["Model", "Test Type", "#Tests", "Accuracy", "Precision", "Recall", "F1-Score"]
        body = []
        for test_type, counts in self.sections():
            m = metrics(counts)
            body.append(
                [
                    self.model,
                    test_type,
                    str(counts.total),
                    render_value(m.accuracy),
                    render_value(m.precision),
                    render_value(m.recall),
                    render_value(m.f1),
                ]
            )
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        if self.partial:
            lines.append(f"(partial results: {len(self.failed_ids)} rows failed)")
        return "\n".join(lines)

    def to_json(self) -> dict:
        def section(counts: ConfusionCounts) -> dict:
            m = metrics(counts)
            return {
                "tests": counts.total,
                "tp": counts.tp,
                "fp": counts.fp,
                "fn": counts.fn,
                "tn": counts.tn,
                "accuracy": _json_value(m.accuracy),
                "precision": _json_value(m.precision),
                "recall": _json_value(m.recall),
                "f1": _json_value(m.f1),
            }

        return {
            "model": self.model,
            "per_type": {name: section(counts) for name, counts in self.per_type.items()},
            "overall": section(self.overall),
            "partial": self.partial,
            "failed_ids": list(self.failed_ids),
        }


def _json_value(value: Optional[Fraction]) -> Optional[str]:
    rounded = round3(value)
    return None if rounded is None else f"{rounded:.3f}"


def load_dataset(path) -> "list[BenchRow]":
    """Read a benchmark dataset CSV (id, test_type, measured_raw, limits_raw, success_raw)."""
    required = ["id", "test_type", "measured_raw", "limits_raw", "success_raw"]
    rows: "list[BenchRow]" = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise BenchError(f"dataset {path} lacks columns {missing}")
        for record in reader:
            rows.append(
                BenchRow(
                    id=record["id"],
                    test_type=record["test_type"],
                    measured_raw=record["measured_raw"],
                    limits_raw=record["limits_raw"],
                    success_raw=record["success_raw"],
                )
            )
    return rows


def bench_run(
    rows: "Sequence[BenchRow]",
    backend,
    template: str = llm.DEFAULT_TEMPLATE,
    retry: "Optional[llm.RetryPolicy]" = None,
    max_in_flight: int = 1,
    unparseable: str = "wrong",
    registry: UnitRegistry = DEFAULT_REGISTRY,
) -> BenchResult:
    """Drive the row checker over a dataset and score it against the oracle."""
    if not rows:
        raise EmptyDataset("benchmark dataset is empty")
    seen = set()
    for row in rows:
        if row.id in seen:
            raise BenchError(f"duplicate dataset row id {row.id!r}")
        seen.add(row.id)
    truth = {row.id: (row.test_type, truth_verdict(row, registry)) for row in rows}
    retry = retry or llm.RetryPolicy()

    def check_one(row: BenchRow) -> "Optional[llm.LLMJudgement]":
        try:
            return llm.check_row(row, backend, template, retry)
        except llm.BackendUnavailable as exc:
            log.warning("row %s failed: %s", row.id, exc)
            return None

    if max_in_flight > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            outcomes = list(pool.map(check_one, rows))
    else:
        outcomes = [check_one(row) for row in rows]

    judgements: "dict[str, llm.LLMVerdict]" = {}
    failed: "list[str]" = []
    for row, judgement in zip(rows, outcomes):
        if judgement is None:
            failed.append(row.id)
        else:
            judgements[row.id] = judgement.verdict
    if not judgements:
        raise BenchError("no rows produced judgements; backend unusable")
    scored_truth = {rid: truth[rid] for rid in judgements}
    per_type, overall = confusion(judgements, scored_truth, unparseable)
    # Keep dataset ordering for the rendered sections.
    ordered: "dict[str, ConfusionCounts]" = {}
    for row in rows:
        if row.test_type in per_type and row.test_type not in ordered:
            ordered[row.test_type] = per_type[row.test_type]
    model = getattr(backend, "id", backend.__class__.__name__)
    return BenchResult(
        model=model,
        per_type=ordered,
        overall=overall,
        partial=bool(failed),
        failed_ids=failed,
    )
