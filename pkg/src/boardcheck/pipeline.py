"""End-to-end pipeline: extract, register, check, queue anomalies, integrate.

One pipeline run owns a data directory (lock file); per-report failures are
isolated so a bad document never aborts the batch.  Rows reach the row tables
only after a clean deterministic verdict that agrees with both the recorded
success mark and the LLM judgement, or after explicit human resolution
through the review queue.
"""

from __future__ import annotations

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from . import compliance, extraction, llm, vkg
from .kg import Iri, TripleStore
from .units import UnitRegistry, DEFAULT_REGISTRY

log = logging.getLogger(__name__)


class PipelineError(Exception):
    pass


class LockHeld(PipelineError):
    """Another run owns the data directory."""


class UnknownItem(PipelineError):
    pass


class AlreadyResolved(PipelineError):
    pass


class CorrectionRejected(PipelineError):
    """The supplied correction still fails deterministic validation."""


class ReviewStatus(Enum):
    OPEN = "Open"
    CONFIRMED_ANOMALY = "ConfirmedAnomaly"
    CORRECTED = "Corrected"


@dataclass(frozen=True)
class ReviewItem:
    item_id: str
    report_reference: str
    reason: str
    status: ReviewStatus
    observation: dict
    correction: Optional[dict] = None

    def to_record(self) -> dict:
        record = {
            "item_id": self.item_id,
            "report_reference": self.report_reference,
            "reason": self.reason,
            "status": self.status.value,
            "observation": self.observation,
        }
        if self.correction is not None:
            record["correction"] = self.correction
        return record

    @staticmethod
    def from_record(record: dict) -> "ReviewItem":
        return ReviewItem(
            item_id=record["item_id"],
            report_reference=record["report_reference"],
            reason=record["reason"],
            status=ReviewStatus(record["status"]),
            observation=record["observation"],
            correction=record.get("correction"),
        )


class ReviewQueue:
    """Append-only JSONL queue; the latest record per item id wins."""

    def __init__(self, path):
        self.path = Path(path)

    def load(self) -> "dict[str, ReviewItem]":
        items: "dict[str, ReviewItem]" = {}
        if not self.path.exists():
            return items
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                item = ReviewItem.from_record(json.loads(line))
                items[item.item_id] = item
        return items

    def append(self, item: ReviewItem) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(item.to_record(), sort_keys=True) + "\n")

    def open_items(self) -> "list[ReviewItem]":
        return sorted(
            (i for i in self.load().values() if i.status is ReviewStatus.OPEN),
            key=lambda i: i.item_id,
        )


@dataclass
class PipelineConfig:
    ontology_path: Path
    mappings_path: Path
    data_dir: Path
    review_queue_path: Path
    backend: object
    template: str = llm.DEFAULT_TEMPLATE
    registry: UnitRegistry = field(default_factory=lambda: DEFAULT_REGISTRY)
    synonyms: Optional[dict] = None
    retry: llm.RetryPolicy = field(default_factory=lambda: llm.RetryPolicy(max_attempts=1))
    max_in_flight: int = 1

    def validate(self) -> None:
        for path in (self.ontology_path, self.mappings_path):
            if not Path(path).exists():
                raise PipelineError(f"configured file {path} does not exist")


@dataclass
class ReportOutcome:
    reference: str
    status: str
    rows_total: int = 0
    rows_integrated: int = 0
    queued: int = 0
    skipped: bool = False
    error: str = ""


@dataclass
class PipelineSummary:
    outcomes: "list[ReportOutcome]" = field(default_factory=list)

    @property
    def failed(self) -> "list[ReportOutcome]":
        return [o for o in self.outcomes if o.error]

    @property
    def integrated(self) -> int:
        return sum(o.rows_integrated for o in self.outcomes)

    @property
    def queued(self) -> int:
        return sum(o.queued for o in self.outcomes)

    def render(self) -> str:
        lines = []
        for o in self.outcomes:
            if o.error:
                lines.append(f"{o.reference or '<unreadable>'}: FAILED ({o.error})")
            elif o.skipped:
                lines.append(f"{o.reference}: skipped (already processed)")
            else:
                lines.append(
                    f"{o.reference}: {o.status}, {o.rows_integrated}/{o.rows_total} rows integrated, "
                    f"{o.queued} queued for review"
                )
        lines.append(
            f"total: {self.integrated} rows integrated, {self.queued} review items, "
            f"{len(self.failed)} failed reports"
        )
        return "\n".join(lines)


@contextmanager
def data_dir_lock(data_dir: Path):
    """Exclusive lock for one pipeline/data directory; reviews share it."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    lock_path = data_dir / ".boardcheck.lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockHeld(
            f"lock file {lock_path} exists; another run is active (remove it if stale)"
        ) from None
    try:
        os.write(fd, f"{os.getpid()} {time.time()}\n".encode())
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock_path)
        except FileNotFoundError:
            pass


def kg_path(data_dir: Path) -> Path:
    return Path(data_dir) / "kg.ttl"


def load_stores(config: PipelineConfig) -> TripleStore:
    store = TripleStore()
    store.load_turtle_subset(Path(config.ontology_path).read_text(encoding="utf-8"))
    metadata = kg_path(config.data_dir)
    if metadata.exists():
        store.load_turtle_subset(metadata.read_text(encoding="utf-8"))
    return store


def persist_metadata(store: TripleStore, config: PipelineConfig, ontology: TripleStore) -> None:
    """Write report metadata (store minus ontology triples) atomically."""
    delta = TripleStore(store.prefixes)
    ontology_triples = set(ontology.triples())
    for triple in store.triples():
        if triple not in ontology_triples:
            delta.add(triple)
    target = kg_path(config.data_dir)
    tmp = target.with_suffix(".ttl.tmp")
    tmp.write_text(delta.serialize_turtle(), encoding="utf-8")
    os.replace(tmp, target)


def load_mappings(config: PipelineConfig) -> "list[vkg.MappingDef]":
    return vkg.parse_mappings(Path(config.mappings_path).read_text(encoding="utf-8"))


def results_table_path(store: TripleStore, config: PipelineConfig, prop: Iri) -> Path:
    sd = store.structure_def(prop)
    if not sd.results_location:
        raise PipelineError(f"{prop.value} has no results location in the knowledge graph")
    return Path(config.data_dir) / sd.results_location


def _table_columns(mappings: "Sequence[vkg.MappingDef]", prop: Iri) -> "tuple[str, tuple[str, ...]]":
    """Results-table name and column layout for one observable property.

    Shipped mappings list their source columns in the fixed semantic order
    (reference, label, measured, limits, date, success); integration follows
    the mapping so that unfolding finds every column it needs.
    """
    for mapping in mappings:
        if mapping.observed_property() == prop:
            return mapping.source.table, mapping.source.columns
    local = prop.value.rsplit("#", 1)[-1]
    return local.lower(), (
        "tr_reference",
        "label",
        "measured",
        "acceptance_limits",
        "test_report_date",
        "successful",
    )


ANOMALY_COLUMN = "anomaly"


def integrate_observation(
    observation: extraction.Observation,
    store: TripleStore,
    config: PipelineConfig,
    mappings: "Sequence[vkg.MappingDef]",
    anomaly: bool = False,
) -> None:
    """Append one observation to its per-test-type results CSV."""
    table_name, columns = _table_columns(mappings, observation.observed_property)
    path = results_table_path(store, config, observation.observed_property)
    label = observation.id[len(observation.report_reference) + 1 :]
    semantic = [
        observation.report_reference,
        label,
        observation.result_raw,
        observation.limits_raw,
        observation.date,
        observation.success_raw,
    ]
    if path.exists():
        table = vkg.load_row_table(path, name=table_name)
    else:
        table = vkg.RowTable(name=table_name, columns=columns + (ANOMALY_COLUMN,), rows=())
    row = dict(zip(columns, semantic))
    row[ANOMALY_COLUMN] = "true" if anomaly else ""
    cells = tuple(row.get(c, "") for c in table.columns)
    table = vkg.RowTable(name=table.name, columns=table.columns, rows=table.rows + (cells,))
    vkg.save_row_table(table, path)


def integrated_ids(store: TripleStore, config: PipelineConfig, mappings) -> "set[str]":
    """Observation ids already present in the row tables."""
    ids: "set[str]" = set()
    for mapping in mappings:
        prop = mapping.observed_property()
        if prop is None:
            continue
        try:
            path = results_table_path(store, config, prop)
        except PipelineError:
            continue
        if not path.exists():
            continue
        table = vkg.load_row_table(path, name=mapping.source.table)
        ref_col, label_col = mapping.source.columns[0], mapping.source.columns[1]
        for row in table.rows:
            values = dict(zip(table.columns, row))
            ids.add(f"{values[ref_col]}-{values[label_col]}")
    return ids


def _judge_row(
    observation: extraction.Observation, config: PipelineConfig
) -> "tuple[compliance.Verdict, Optional[compliance.RowValidity], str, llm.LLMJudgement]":
    verdict, validity, reason = compliance.check_row_raw(
        observation.result_raw,
        observation.limits_raw,
        observation.success_raw,
        config.registry,
    )
    judgement = llm.check_row(observation, config.backend, config.template, config.retry)
    return verdict, validity, reason, judgement


def _row_anomaly_reasons(
    verdict: compliance.Verdict,
    validity: Optional[compliance.RowValidity],
    oracle_reason: str,
    judgement: llm.LLMJudgement,
) -> "list[str]":
    reasons = []
    if verdict is compliance.Verdict.UNKNOWN:
        reasons.append(f"verdict unknown: {oracle_reason}")
    elif validity is not None and validity.validity is compliance.Validity.ANOMALOUS:
        reasons.append(oracle_reason)
    if judgement.verdict is llm.LLMVerdict.UNPARSEABLE:
        reasons.append(f"LLM response unparseable: {judgement.raw_response[:120]!r}")
    elif verdict is not compliance.Verdict.UNKNOWN:
        llm_in_range = judgement.verdict is llm.LLMVerdict.TRUE
        oracle_in_range = verdict is compliance.Verdict.IN_RANGE
        if llm_in_range != oracle_in_range:
            reasons.append(
                f"oracle/LLM mismatch: oracle says {verdict.value}, "
                f"LLM answered {judgement.verdict.value}"
            )
    return reasons


def run_pipeline(
    documents: "Sequence[Path]",
    config: PipelineConfig,
) -> PipelineSummary:
    """Process a batch of normalized report documents end to end."""
    config.validate()
    summary = PipelineSummary()
    with data_dir_lock(config.data_dir):
        ontology = TripleStore()
        ontology.load_turtle_subset(Path(config.ontology_path).read_text(encoding="utf-8"))
        store = load_stores(config)
        mappings = load_mappings(config)
        queue = ReviewQueue(config.review_queue_path)
        existing_items = queue.load()
        for document in documents:
            outcome = _run_one(
                Path(document), config, store, mappings, queue, existing_items
            )
            summary.outcomes.append(outcome)
        persist_metadata(store, config, ontology)
    return summary


def _run_one(
    document: Path,
    config: PipelineConfig,
    store: TripleStore,
    mappings,
    queue: ReviewQueue,
    existing_items: "dict[str, ReviewItem]",
) -> ReportOutcome:
    try:
        report = extraction.load_report_file(document)
    except (extraction.ExtractionError, json.JSONDecodeError, OSError) as exc:
        log.error("failed to load %s: %s", document, exc)
        return ReportOutcome(reference="", status="", error=str(exc))
    if store.has_report(report.reference):
        log.warning("report %s already processed; skipping", report.reference)
        return ReportOutcome(reference=report.reference, status="", skipped=True)
    try:
        meta, observations = extraction.extract_observations(
            report, store, synonyms=config.synonyms, registry=config.registry
        )
        queued = 0
        integrated = 0
        for observation in observations:
            verdict, validity, reason, judgement = _judge_row(observation, config)
            reasons = _row_anomaly_reasons(verdict, validity, reason, judgement)
            if reasons:
                obs_record = asdict(observation)
                obs_record["observed_property"] = observation.observed_property.value
                item = ReviewItem(
                    item_id=observation.id,
                    report_reference=report.reference,
                    reason="; ".join(reasons),
                    status=ReviewStatus.OPEN,
                    observation=obs_record,
                )
                queue.append(item)
                existing_items[item.item_id] = item
                queued += 1
            else:
                integrate_observation(observation, store, config, mappings)
                integrated += 1
        status = (
            compliance.ReportValidation.OK if queued == 0 else compliance.ReportValidation.PENDING
        )
        store.register_report(replace(meta, validation=status.value))
        return ReportOutcome(
            reference=report.reference,
            status=status.value,
            rows_total=len(observations),
            rows_integrated=integrated,
            queued=queued,
        )
    except (extraction.ExtractionError, llm.LLMError, PipelineError) as exc:
        log.error("report %s failed: %s", report.reference, exc)
        return ReportOutcome(reference=report.reference, status="", error=str(exc))


def _observation_from_item(item: ReviewItem) -> extraction.Observation:
    data = dict(item.observation)
    data["observed_property"] = Iri(data["observed_property"])
    return extraction.Observation(**data)


def resolve_item(
    item_id: str,
    config: PipelineConfig,
    confirm: bool = False,
    corrected_measured: Optional[str] = None,
    corrected_success: Optional[str] = None,
) -> ReviewItem:
    """Resolve one open review item: confirm the anomaly or apply a correction.

    A correction re-runs deterministic validation; if the row is still not
    valid the resolution is rejected and the item stays open.  When a report's
    queue empties, its validation status is recomputed.
    """
    if confirm and (corrected_measured or corrected_success):
        raise PipelineError("choose either confirm or a correction, not both")
    if not confirm and corrected_measured is None and corrected_success is None:
        raise PipelineError("resolution needs --confirm or a correction")
    config.validate()
    with data_dir_lock(config.data_dir):
        ontology = TripleStore()
        ontology.load_turtle_subset(Path(config.ontology_path).read_text(encoding="utf-8"))
        store = load_stores(config)
        mappings = load_mappings(config)
        queue = ReviewQueue(config.review_queue_path)
        items = queue.load()
        if item_id not in items:
            raise UnknownItem(f"no review item {item_id!r}")
        item = items[item_id]
        if item.status is not ReviewStatus.OPEN:
            raise AlreadyResolved(f"item {item_id!r} is already {item.status.value}")
        observation = _observation_from_item(item)
        if confirm:
            integrate_observation(observation, store, config, mappings, anomaly=True)
            resolved = replace(item, status=ReviewStatus.CONFIRMED_ANOMALY)
        else:
            corrected = observation
            correction: dict = {}
            if corrected_measured is not None:
                corrected = replace(corrected, result_raw=corrected_measured)
                correction["measured_raw"] = corrected_measured
            if corrected_success is not None:
                corrected = replace(corrected, success_raw=corrected_success)
                correction["success_raw"] = corrected_success
            verdict, validity, reason = compliance.check_row_raw(
                corrected.result_raw,
                corrected.limits_raw,
                corrected.success_raw,
                config.registry,
            )
            if validity is None or validity.validity is not compliance.Validity.VALID:
                raise CorrectionRejected(
                    f"correction still not valid: {reason}; confirm the anomaly instead"
                )
            integrate_observation(corrected, store, config, mappings)
            resolved = replace(item, status=ReviewStatus.CORRECTED, correction=correction)
        queue.append(resolved)
        items[item_id] = resolved
        _recompute_validation(resolved.report_reference, items, store)
        persist_metadata(store, config, ontology)
        return resolved


def _recompute_validation(
    reference: str, items: "dict[str, ReviewItem]", store: TripleStore
) -> None:
    report_items = [i for i in items.values() if i.report_reference == reference]
    if any(i.status is ReviewStatus.OPEN for i in report_items):
        return
    if any(i.status is ReviewStatus.CONFIRMED_ANOMALY for i in report_items):
        status = compliance.ReportValidation.PENDING
    else:
        status = compliance.ReportValidation.OK
    store.set_report_validation(reference, status.value)
