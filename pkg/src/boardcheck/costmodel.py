"""Effort model comparing manual report handling with the automated pipeline.

Both workflows are linear in the report volume: the manual one pays per
template and per (report × test type); the automated one adds a one-time,
template-independent setup term plus per-template annotation, and keeps only
a small residual review cost per row.  That shared setup term is what makes
the break-even point drop as the number of templates grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterator, Optional

__all__ = [
    "CostInputs",
    "CostCoefficients",
    "NoBreakEven",
    "effort_asis",
    "effort_kgllm",
    "break_even",
    "savings",
    "cost_table",
]


class NoBreakEven(ValueError):
    """Manual per-test cost does not exceed the residual cost; automation never wins."""


@dataclass(frozen=True)
class CostInputs:
    """Workload shape: templates, reports per template, test types per report."""

    templates: int
    reports_per_template: int
    test_types: int

    def __post_init__(self) -> None:
        if self.templates < 1 or self.test_types < 1:
            raise ValueError("templates and test_types must be positive")
        if self.reports_per_template < 0:
            raise ValueError("reports_per_template must be non-negative")


@dataclass(frozen=True)
class CostCoefficients:
    """Person-day cost coefficients (quarter-day granularity by convention).

    template_authoring: manual authoring of one report template.
    manual_per_test: manual fill + check + extract for one test row of one report.
    pipeline_setup: one-time pipeline/ontology-core setup, template-independent.
    template_annotation: semantic annotation/modeling of one template.
    residual_review_per_test: automated-pipeline residual review per test row.
    """

    template_authoring: Decimal
    manual_per_test: Decimal
    pipeline_setup: Decimal
    template_annotation: Decimal
    residual_review_per_test: Decimal

    def __post_init__(self) -> None:
        for name, value in (
            ("template_authoring", self.template_authoring),
            ("manual_per_test", self.manual_per_test),
            ("pipeline_setup", self.pipeline_setup),
            ("template_annotation", self.template_annotation),
            ("residual_review_per_test", self.residual_review_per_test),
        ):
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


def effort_asis(inputs: CostInputs, coeffs: CostCoefficients) -> Decimal:
    """Manual effort: n·(template authoring) + n·r·t·(manual per-test)."""
    n = Decimal(inputs.templates)
    r = Decimal(inputs.reports_per_template)
    t = Decimal(inputs.test_types)
    return n * coeffs.template_authoring + n * r * t * coeffs.manual_per_test


def effort_kgllm(inputs: CostInputs, coeffs: CostCoefficients) -> Decimal:
    """Automated effort: setup + n·(annotation) + n·r·t·(residual review)."""
    n = Decimal(inputs.templates)
    r = Decimal(inputs.reports_per_template)
    t = Decimal(inputs.test_types)
    return (
        coeffs.pipeline_setup
        + n * coeffs.template_annotation
        + n * r * t * coeffs.residual_review_per_test
    )


def break_even(n: int, t: int, coeffs: CostCoefficients) -> int:
    """Smallest report count r (≥ 1) where the automated effort is strictly lower.

    Closed form: r is the smallest integer strictly greater than
    (setup/n + annotation − authoring) / (t · (manual − residual)).
    Non-increasing in n because the setup term amortizes across templates.
    """
    if n < 1 or t < 1:
        raise ValueError("n and t must be positive")
    if coeffs.manual_per_test <= coeffs.residual_review_per_test:
        raise NoBreakEven(
            "manual per-test cost must exceed the residual review cost "
            f"({coeffs.manual_per_test} <= {coeffs.residual_review_per_test})"
        )
    numerator = (
        Fraction(coeffs.pipeline_setup) / n
        + Fraction(coeffs.template_annotation)
        - Fraction(coeffs.template_authoring)
    )
    denominator = t * (
        Fraction(coeffs.manual_per_test) - Fraction(coeffs.residual_review_per_test)
    )
    threshold = numerator / denominator
    return max(1, math.floor(threshold) + 1)


def savings(inputs: CostInputs, coeffs: CostCoefficients) -> Optional[Fraction]:
    """Relative effort saved by the automated pipeline; None when AS-IS is zero."""
    asis = Fraction(effort_asis(inputs, coeffs))
    if asis == 0:
        return None
    automated = Fraction(effort_kgllm(inputs, coeffs))
    return 1 - automated / asis


def cost_table(
    n: int, t: int, max_reports: int, coeffs: CostCoefficients
) -> "Iterator[tuple[int, Decimal, Decimal, bool]]":
    """Rows (r, as-is effort, automated effort, is break-even point) for plotting."""
    even = None
    try:
        even = break_even(n, t, coeffs)
    except NoBreakEven:
        pass
    for r in range(0, max_reports + 1):
        inputs = CostInputs(n, r, t)
        yield r, effort_asis(inputs, coeffs), effort_kgllm(inputs, coeffs), r == even
