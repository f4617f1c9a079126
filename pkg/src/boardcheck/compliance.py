"""Deterministic compliance oracle and row-validity classification.

The oracle is the ground truth the LLM checker is benchmarked against and the
final arbiter before a row is integrated.  A row is valid when the measured
value agrees with the recorded success mark: in range and marked OK, or out of
range and not marked OK.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional

from .units import (
    AcceptanceLimits,
    Dimension,
    LimitKind,
    Quantity,
    SuccessMark,
    SuccessVerdict,
    UnitRegistry,
    DEFAULT_REGISTRY,
    UnitsError,
    parse_acceptance_limits,
    parse_quantity,
    parse_success_mark,
)

if TYPE_CHECKING:
    from .extraction import Observation

log = logging.getLogger(__name__)


class Verdict(Enum):
    IN_RANGE = "InRange"
    OUT_OF_RANGE = "OutOfRange"
    UNKNOWN = "Unknown"


class Validity(Enum):
    VALID = "Valid"
    ANOMALOUS = "Anomalous"


class ReportValidation(Enum):
    OK = "OK"
    PENDING = "Pending"


class UnknownVerdict(Exception):
    """classify() was handed an Unknown verdict; the row belongs in review."""


@dataclass(frozen=True)
class RowValidity:
    validity: Validity
    reason: str = ""

    def __post_init__(self) -> None:
        if self.validity is Validity.ANOMALOUS and not self.reason:
            raise ValueError("anomalous rows must carry a reason")


@dataclass(frozen=True)
class RowAnomaly:
    """One row that failed deterministic validation, with why."""

    observation_id: str
    reason: str
    verdict: Verdict


def _comparable_base_value(measured: Quantity, limits: AcceptanceLimits) -> Optional[Decimal]:
    """Measured value in the limits' base units, or None on dimension mismatch.

    A dimensionless measured value adopts the limits' as-written unit (bare
    numbers inherit the unit the limits or the table header already state).
    Dimensionless limits are read as base-unit numbers of the measured
    dimension, which keeps the verdict invariant under unit conversion.
    """
    if measured.dimension is Dimension.DIMENSIONLESS and limits.dimension is not Dimension.DIMENSIONLESS:
        adopted = measured.value * limits.written_unit.scale
        return adopted
    if limits.dimension is Dimension.DIMENSIONLESS:
        return measured.base_value
    if measured.dimension is not limits.dimension:
        return None
    return measured.base_value


def oracle_check(measured: Quantity, limits: AcceptanceLimits) -> Verdict:
    """Decide inclusively whether the measured value satisfies the limits.

    Returns Unknown only for a dimension mismatch; parse failures never reach
    this function.
    """
    value = _comparable_base_value(measured, limits)
    if value is None:
        return Verdict.UNKNOWN
    if limits.kind is LimitKind.CLOSED_INTERVAL:
        assert limits.lower is not None and limits.upper is not None
        ok = limits.lower.base_value <= value <= limits.upper.base_value
    elif limits.kind is LimitKind.AT_LEAST:
        assert limits.lower is not None
        ok = value >= limits.lower.base_value
    else:
        assert limits.upper is not None
        ok = value <= limits.upper.base_value
    return Verdict.IN_RANGE if ok else Verdict.OUT_OF_RANGE


def classify(verdict: Verdict, mark: SuccessMark) -> RowValidity:
    """Apply the validity rule: (in range and OK) or (out of range and not OK)."""
    if verdict is Verdict.UNKNOWN:
        raise UnknownVerdict("cannot classify an Unknown verdict; route the row to review")
    passed = mark.verdict is SuccessVerdict.PASS
    if verdict is Verdict.IN_RANGE and passed:
        return RowValidity(Validity.VALID)
    if verdict is Verdict.OUT_OF_RANGE and not passed:
        return RowValidity(Validity.VALID)
    if verdict is Verdict.IN_RANGE:
        reason = f"measured value is within limits but the successful column reads {mark.raw!r}"
    else:
        reason = f"measured value is outside limits but the successful column reads {mark.raw!r}"
    return RowValidity(Validity.ANOMALOUS, reason)


def check_row_raw(
    measured_raw: str,
    limits_raw: str,
    success_raw: str,
    registry: UnitRegistry = DEFAULT_REGISTRY,
) -> "tuple[Verdict, Optional[RowValidity], str]":
    """Validate one row from raw strings.

    Returns (verdict, validity, reason); validity is None and the reason
    explains the failure whenever parsing or dimension checks leave the
    verdict Unknown.
    """
    try:
        limits = parse_acceptance_limits(limits_raw, registry)
    except UnitsError as exc:
        return Verdict.UNKNOWN, None, f"acceptance limits unparseable: {exc}"
    try:
        measured = parse_quantity(measured_raw, registry)
    except UnitsError as exc:
        return Verdict.UNKNOWN, None, f"measured value unparseable: {exc}"
    verdict = oracle_check(measured, limits)
    if verdict is Verdict.UNKNOWN:
        return (
            Verdict.UNKNOWN,
            None,
            f"dimension mismatch: measured {measured.dimension.value} vs limits {limits.dimension.value}",
        )
    validity = classify(verdict, parse_success_mark(success_raw, registry))
    return verdict, validity, validity.reason


def validate_observations(
    rows: "Iterable[Observation]",
    registry: UnitRegistry = DEFAULT_REGISTRY,
) -> "tuple[ReportValidation, list[RowAnomaly]]":
    """Deterministically validate every row of one report.

    Status is OK only when every row is Valid; otherwise Pending plus the
    anomalies, ordered by row id.  An empty report is vacuously OK.
    """
    rows = sorted(rows, key=lambda r: r.id)
    if not rows:
        log.warning("validate_observations called with no rows; vacuously OK")
        return ReportValidation.OK, []
    anomalies: "list[RowAnomaly]" = []
    for row in rows:
        verdict, validity, reason = check_row_raw(
            row.result_raw, row.limits_raw, row.success_raw, registry
        )
        if validity is None or validity.validity is Validity.ANOMALOUS:
            anomalies.append(RowAnomaly(row.id, reason, verdict))
    if anomalies:
        return ReportValidation.PENDING, anomalies
    return ReportValidation.OK, []
