"""Ingestion of normalized report documents into observations plus metadata.

Source .docx/.pdf conversion happens upstream; the ingestion boundary is a
versioned JSON shape (see data/normalized_report.schema.json) that preserves
the quirks downstream code must survive: row spans encoded as null cells,
unit-carrying headers, success marks living outside the table.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from datetime import date as date_type
from enum import Enum
from importlib import resources
from typing import Optional

import jsonschema

from .kg import Iri, ReportMeta, StructureDef, TripleStore
from .units import DEFAULT_REGISTRY, Unit, UnitRegistry, UnknownUnit

log = logging.getLogger(__name__)


class ExtractionError(Exception):
    """Base class for ingestion failures."""


class SchemaViolation(ExtractionError):
    def __init__(self, message: str, pointer: str):
        super().__init__(f"{message} (at {pointer or '/'})")
        self.pointer = pointer


class DanglingSpan(ExtractionError):
    """A null cell has no filled cell above it to inherit from."""


class AmbiguousRole(ExtractionError):
    """Two columns claim a role that only one column may hold."""


class MissingRole(ExtractionError):
    """No column was recognized for a required role."""


class UnknownTestType(ExtractionError):
    """A table's title/hint matches no observable property in the KG."""


class ColumnRole(Enum):
    LABEL = "Label"
    MEASURED_VALUE = "MeasuredValue"
    ACCEPTANCE_LIMITS = "AcceptanceLimits"
    SUCCESS = "Success"
    IGNORED = "Ignored"


@dataclass(frozen=True)
class RawTable:
    title: str
    headers: "tuple[str, ...]"
    rows: "tuple[tuple[Optional[str], ...], ...]"
    test_type_hint: Optional[str] = None
    table_level_success: Optional[str] = None


@dataclass(frozen=True)
class NormalizedReport:
    reference: str
    name: str
    date: str
    location: str
    tables: "tuple[RawTable, ...]"


@dataclass(frozen=True)
class ColumnRoleMap:
    roles: "tuple[ColumnRole, ...]"
    default_unit: Optional[Unit] = None

    def index_of(self, role: ColumnRole) -> Optional[int]:
        for i, r in enumerate(self.roles):
            if r is role:
                return i
        return None


@dataclass(frozen=True)
class Observation:
    """One test-table row, raw strings untouched."""

    id: str
    observed_property: Iri
    result_raw: str
    limits_raw: str
    success_raw: str
    report_reference: str
    date: str


_EXCLUSIVE_ROLES = (ColumnRole.MEASURED_VALUE, ColumnRole.ACCEPTANCE_LIMITS, ColumnRole.SUCCESS)

DEFAULT_SYNONYMS: "dict[ColumnRole, frozenset[str]]" = {
    ColumnRole.MEASURED_VALUE: frozenset(
        {
            "measured value",
            "measured values",
            "measured",
            "measurement",
            "measurements",
            "voltage measurements",
            "resistance measurements",
            "current measurements",
            "power measurements",
        }
    ),
    ColumnRole.ACCEPTANCE_LIMITS: frozenset(
        {
            "acceptance limits",
            "acceptance limit",
            "acceptance range",
            "expected values",
            "expected value",
        }
    ),
    ColumnRole.SUCCESS: frozenset({"successful", "success", "pass/fail", "passed"}),
    ColumnRole.LABEL: frozenset({"label", "test", "test point", "parameter", "circuit", "pin", "net"}),
}

_BRACKET_UNIT_RE = re.compile(r"\[([^\[\]]+)\]\s*$")


def _schema() -> dict:
    text = resources.files("boardcheck.data").joinpath("normalized_report.schema.json").read_text()
    return json.loads(text)


_SCHEMA = _schema()
_VALIDATOR = jsonschema.Draft202012Validator(_SCHEMA)


def load_report(document: dict) -> NormalizedReport:
    """Validate a normalized report document and build the typed structure.

    Violations carry the JSON-pointer path of the offending element; unknown
    fields are rejected.
    """
    errors = sorted(_VALIDATOR.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        parts = [str(p) for p in err.absolute_path]
        # Point at the offending property itself for missing/unknown fields.
        if err.validator in ("required", "additionalProperties"):
            m = re.search(r"'([^']+)'", err.message)
            if m is not None:
                parts.append(m.group(1))
        pointer = "/" + "/".join(parts)
        raise SchemaViolation(err.message, pointer)
    try:
        date_type.fromisoformat(document["date"])
    except ValueError as exc:
        raise SchemaViolation(f"invalid ISO date: {exc}", "/date") from None
    tables = []
    for ti, tbl in enumerate(document["tables"]):
        headers = tuple(tbl["headers"])
        for ri, row in enumerate(tbl["rows"]):
            if len(row) != len(headers):
                raise SchemaViolation(
                    f"row has {len(row)} cells, expected {len(headers)}",
                    f"/tables/{ti}/rows/{ri}",
                )
        tables.append(
            RawTable(
                title=tbl["title"],
                headers=headers,
                rows=tuple(tuple(row) for row in tbl["rows"]),
                test_type_hint=tbl.get("test_type_hint"),
                table_level_success=tbl.get("table_level_success"),
            )
        )
    return NormalizedReport(
        reference=document["reference"],
        name=document["name"],
        date=document["date"],
        location=document["location"],
        tables=tuple(tables),
    )


def load_report_file(path) -> NormalizedReport:
    with open(path, encoding="utf-8") as fh:
        return load_report(json.load(fh))


def expand_rowspans(table: RawTable) -> RawTable:
    """Replace null cells with the nearest filled cell above in the column."""
    filled: "list[Optional[str]]" = [None] * len(table.headers)
    rows: "list[tuple[str, ...]]" = []
    for ri, row in enumerate(table.rows):
        out = []
        for ci, cell in enumerate(row):
            if cell is None:
                if filled[ci] is None:
                    raise DanglingSpan(
                        f"table {table.title!r}: cell at row {ri}, column {ci} "
                        "has no value above to inherit"
                    )
                out.append(filled[ci])
            else:
                filled[ci] = cell
                out.append(cell)
        rows.append(tuple(out))
    return replace(table, rows=tuple(rows))


def _normalize_header(header: str) -> "tuple[str, Optional[str]]":
    """Lower-case a header and split off a trailing bracketed unit."""
    text = header.strip()
    unit_token = None
    m = _BRACKET_UNIT_RE.search(text)
    if m is not None:
        unit_token = m.group(1).strip()
        text = text[: m.start()].strip()
    return re.sub(r"\s+", " ", text.lower()), unit_token


def _hint_synonyms(structure_def: Optional[StructureDef]) -> "dict[ColumnRole, set[str]]":
    """Parse 'Role: header text' hints attached to the observable property."""
    out: "dict[ColumnRole, set[str]]" = {}
    if structure_def is None:
        return out
    roles_by_name = {r.value.lower(): r for r in ColumnRole}
    for hint in structure_def.column_hints:
        role_name, _, synonym = hint.partition(":")
        role = roles_by_name.get(role_name.strip().lower())
        if role is None or not synonym.strip():
            log.warning("ignoring malformed column hint %r", hint)
            continue
        out.setdefault(role, set()).add(re.sub(r"\s+", " ", synonym.strip().lower()))
    return out


def resolve_columns(
    headers: "tuple[str, ...]",
    structure_def: Optional[StructureDef] = None,
    synonyms: "Optional[dict[ColumnRole, frozenset[str]]]" = None,
    table_title: str = "",
    registry: UnitRegistry = DEFAULT_REGISTRY,
) -> ColumnRoleMap:
    """Assign a role to each column from the synonym registry plus KG hints.

    Exactly one MeasuredValue and one AcceptanceLimits column must emerge; a
    bracketed unit in the measured header or the table title is harvested as
    the default unit for bare-number cells.
    """
    registry_synonyms = synonyms or DEFAULT_SYNONYMS
    hints = _hint_synonyms(structure_def)

    def role_for(name: str) -> Optional[ColumnRole]:
        for role in (ColumnRole.MEASURED_VALUE, ColumnRole.ACCEPTANCE_LIMITS, ColumnRole.SUCCESS, ColumnRole.LABEL):
            if name in hints.get(role, set()) or name in registry_synonyms.get(role, frozenset()):
                return role
        return None

    roles: "list[ColumnRole]" = []
    bracket_tokens: "dict[int, str]" = {}
    for i, header in enumerate(headers):
        name, unit_token = _normalize_header(header)
        if unit_token:
            bracket_tokens[i] = unit_token
        role = role_for(name)
        roles.append(role if role is not None else ColumnRole.IGNORED)

    for role in _EXCLUSIVE_ROLES:
        claimed = [i for i, r in enumerate(roles) if r is role]
        if len(claimed) > 1:
            raise AmbiguousRole(
                f"columns {claimed} both resolve to {role.value}: "
                + ", ".join(repr(headers[i]) for i in claimed)
            )
    if ColumnRole.MEASURED_VALUE not in roles:
        raise MissingRole(f"no MeasuredValue column among {list(headers)!r}")
    if ColumnRole.ACCEPTANCE_LIMITS not in roles:
        raise MissingRole(f"no AcceptanceLimits column among {list(headers)!r}")

    if ColumnRole.LABEL not in roles:
        # Reports rarely label the label column; the first unclaimed one is it.
        for i, r in enumerate(roles):
            if r is ColumnRole.IGNORED:
                roles[i] = ColumnRole.LABEL
                break

    default_unit: Optional[Unit] = None
    measured_idx = roles.index(ColumnRole.MEASURED_VALUE)
    candidates = []
    if measured_idx in bracket_tokens:
        candidates.append(bracket_tokens[measured_idx])
    title_match = _BRACKET_UNIT_RE.search(table_title.strip())
    if title_match is not None:
        candidates.append(title_match.group(1).strip())
    for token in candidates:
        try:
            default_unit = registry.resolve_unit(token)
            break
        except UnknownUnit:
            log.debug("bracketed token %r is not a known unit; ignored", token)
    return ColumnRoleMap(roles=tuple(roles), default_unit=default_unit)


def _sanitize_label(label: str) -> str:
    return re.sub(r"\s+", "_", label.strip())


def resolve_test_type(table: RawTable, store: TripleStore) -> Iri:
    """Match a table to an observable property via its hint or title.

    The hint matches IRI local names and labels exactly (case-insensitive);
    the title matches by containment, longest label first.
    """
    properties = store.observable_properties()
    if not properties:
        raise UnknownTestType("knowledge graph declares no observable properties")
    by_key: "dict[str, Iri]" = {}
    labelled: "list[tuple[str, Iri]]" = []
    for prop in sorted(properties, key=lambda p: p.value):
        local = prop.value.rsplit("#", 1)[-1].rsplit("/", 1)[-1]
        by_key.setdefault(local.lower(), prop)
        label = store.label_of(prop)
        if label:
            by_key.setdefault(label.lower(), prop)
            labelled.append((label, prop))
    if table.test_type_hint:
        hit = by_key.get(table.test_type_hint.strip().lower())
        if hit is not None:
            return hit
    title = table.title.lower()
    best: "Optional[tuple[int, str, Iri]]" = None
    for label, prop in labelled:
        if label.lower() in title:
            key = (len(label), prop.value)
            if best is None or (key[0], key[1]) > (best[0], best[1]):
                best = (len(label), prop.value, prop)
    if best is not None:
        return best[2]
    raise UnknownTestType(
        f"table {table.title!r} (hint {table.test_type_hint!r}) matches no observable property"
    )


def extract_observations(
    report: NormalizedReport,
    store: TripleStore,
    synonyms: "Optional[dict[ColumnRole, frozenset[str]]]" = None,
    registry: UnitRegistry = DEFAULT_REGISTRY,
) -> "tuple[ReportMeta, list[Observation]]":
    """Turn every recognized table row into an Observation.

    Raw cell text flows through untouched; a table-level success mark is
    propagated to rows when the table has no Success column.  Errors carry
    table and row coordinates.
    """
    observations: "list[Observation]" = []
    properties: "list[Iri]" = []
    seen_ids: "dict[str, int]" = {}
    for ti, table in enumerate(report.tables):
        try:
            prop = resolve_test_type(table, store)
            expanded = expand_rowspans(table)
            role_map = resolve_columns(
                expanded.headers,
                structure_def=store.structure_def(prop),
                synonyms=synonyms,
                table_title=expanded.title,
                registry=registry,
            )
        except ExtractionError as exc:
            raise type(exc)(f"table {ti} ({table.title!r}): {exc}") from None
        if prop not in properties:
            properties.append(prop)
        label_idx = role_map.index_of(ColumnRole.LABEL)
        measured_idx = role_map.index_of(ColumnRole.MEASURED_VALUE)
        limits_idx = role_map.index_of(ColumnRole.ACCEPTANCE_LIMITS)
        success_idx = role_map.index_of(ColumnRole.SUCCESS)
        if success_idx is None and table.table_level_success is None:
            log.warning(
                "table %d (%r) has neither a Success column nor a table-level mark; "
                "rows default to an empty mark",
                ti,
                table.title,
            )
        for ri, row in enumerate(expanded.rows):
            label = row[label_idx] if label_idx is not None else f"row{ri + 1}"
            base_id = f"{report.reference}-{_sanitize_label(label)}"
            count = seen_ids.get(base_id, 0) + 1
            seen_ids[base_id] = count
            obs_id = base_id if count == 1 else f"{base_id}-{count}"
            if success_idx is not None:
                success_raw = row[success_idx]
            else:
                success_raw = table.table_level_success or ""
            observations.append(
                Observation(
                    id=obs_id,
                    observed_property=prop,
                    result_raw=row[measured_idx],
                    limits_raw=row[limits_idx],
                    success_raw=success_raw,
                    report_reference=report.reference,
                    date=report.date,
                )
            )
    meta = ReportMeta(
        reference=report.reference,
        name=report.name,
        date=report.date,
        location=report.location,
        validation="Pending",
        properties=tuple(properties),
    )
    return meta, observations
