"""Parsing and normalization of measured quantities, limit ranges, and success marks.

Test reports write the same physical fact many ways: "[3.198, 3.532] V",
"1.1M - 1.9MΩ", a bare "12.5" under a header that carries the unit.  This
module turns those strings into comparable values.  All arithmetic uses
``decimal.Decimal``: compliance is decided at interval edges, and binary
floats would turn exact boundary hits into coin flips.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from enum import Enum
from typing import Optional

__all__ = [
    "Dimension",
    "Unit",
    "Quantity",
    "LimitKind",
    "AcceptanceLimits",
    "SuccessVerdict",
    "SuccessMark",
    "UnitRegistry",
    "DEFAULT_REGISTRY",
    "UnitsError",
    "UnparseableQuantity",
    "UnknownUnit",
    "UnparseableRange",
    "InvertedInterval",
    "DimensionMismatch",
    "parse_quantity",
    "parse_acceptance_limits",
    "parse_success_mark",
    "convert",
    "format_quantity",
    "format_limits",
]

# Plenty for exact rescaling by power-of-ten factors.
_PRECISION = 50


class UnitsError(ValueError):
    """Base class for unit and range parsing failures."""


class UnparseableQuantity(UnitsError):
    """No numeric token found in the input."""


class UnknownUnit(UnitsError):
    """Unit token not present in the symbol table."""


class UnparseableRange(UnitsError):
    """Input matches none of the supported range grammars."""


class InvertedInterval(UnitsError):
    """Closed interval whose lower bound exceeds its upper bound."""


class DimensionMismatch(UnitsError):
    """Conversion or comparison between incompatible dimensions."""


class Dimension(Enum):
    VOLTAGE = "Voltage"
    RESISTANCE = "Resistance"
    CURRENT = "Current"
    POWER = "Power"
    DIMENSIONLESS = "Dimensionless"


@dataclass(frozen=True)
class Unit:
    """A unit as a dimension plus a decimal scale relative to the base unit.

    Base units are V, Ω, A, W and 1 (dimensionless).  A prefixed unit such as
    MΩ is represented with scale 1e6.
    """

    dimension: Dimension
    scale: Decimal
    symbol: str = ""

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError(f"unit scale must be positive, got {self.scale}")
        if self.dimension is Dimension.DIMENSIONLESS and self.scale != 1:
            raise ValueError("dimensionless unit must have scale 1")


DIMENSIONLESS = Unit(Dimension.DIMENSIONLESS, Decimal(1), "")

_BASE_SYMBOLS = {
    Dimension.VOLTAGE: "V",
    Dimension.RESISTANCE: "Ω",
    Dimension.CURRENT: "A",
    Dimension.POWER: "W",
    Dimension.DIMENSIONLESS: "",
}


def base_unit(dimension: Dimension) -> Unit:
    return Unit(dimension, Decimal(1), _BASE_SYMBOLS[dimension])


@dataclass(frozen=True)
class Quantity:
    """A parsed measured value.

    ``value`` is expressed in ``unit``; two quantities compare equal when
    their dimensions match and their base-unit values are numerically equal,
    regardless of the symbol they were written with.
    """

    value: Decimal
    unit: Unit
    raw: str = ""

    def __post_init__(self) -> None:
        if not self.value.is_finite():
            raise ValueError(f"quantity value must be finite, got {self.value}")

    @property
    def dimension(self) -> Dimension:
        return self.unit.dimension

    @property
    def base_value(self) -> Decimal:
        """Value rescaled to the base unit of its dimension."""
        with localcontext() as ctx:
            ctx.prec = _PRECISION
            return self.value * self.unit.scale

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Quantity):
            return NotImplemented
        return self.dimension is other.dimension and self.base_value == other.base_value

    def __hash__(self) -> int:
        return hash((self.dimension, self.base_value))


class LimitKind(Enum):
    CLOSED_INTERVAL = "ClosedInterval"
    AT_LEAST = "AtLeast"
    AT_MOST = "AtMost"


@dataclass(frozen=True)
class AcceptanceLimits:
    """A parsed acceptance range.

    ``written_unit`` is the unit token as it appeared after the governing
    endpoint (e.g. MΩ for "1.1M - 1.9MΩ").  A dimensionless measured value is
    interpreted in this unit, matching how engineers omit units the header or
    limits already state.
    """

    kind: LimitKind
    lower: Optional[Quantity]
    upper: Optional[Quantity]
    raw: str = ""
    written_unit: Unit = DIMENSIONLESS

    def __post_init__(self) -> None:
        if self.kind is LimitKind.CLOSED_INTERVAL:
            if self.lower is None or self.upper is None:
                raise ValueError("closed interval needs both bounds")
            if self.lower.dimension is not self.upper.dimension:
                raise ValueError("interval bounds must share a dimension")
            if self.lower.base_value > self.upper.base_value:
                raise InvertedInterval(
                    f"lower bound {self.lower.base_value} exceeds upper {self.upper.base_value}"
                )
        elif self.kind is LimitKind.AT_LEAST:
            if self.lower is None or self.upper is not None:
                raise ValueError("at-least limits carry only a lower bound")
        elif self.kind is LimitKind.AT_MOST:
            if self.upper is None or self.lower is not None:
                raise ValueError("at-most limits carry only an upper bound")

    @property
    def dimension(self) -> Dimension:
        bound = self.lower if self.lower is not None else self.upper
        assert bound is not None
        return bound.dimension

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AcceptanceLimits):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.lower == other.lower
            and self.upper == other.upper
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.lower, self.upper))


class SuccessVerdict(Enum):
    PASS = "Pass"
    FAIL = "Fail"


@dataclass(frozen=True)
class SuccessMark:
    verdict: SuccessVerdict
    raw: str


_DEFAULT_PREFIXES = {
    "p": Decimal("1e-12"),
    "n": Decimal("1e-9"),
    "µ": Decimal("1e-6"),
    "μ": Decimal("1e-6"),  # Greek mu, often substituted for the micro sign
    "u": Decimal("1e-6"),
    "m": Decimal("1e-3"),
    "k": Decimal("1e3"),
    "M": Decimal("1e6"),
    "G": Decimal("1e9"),
}

_DEFAULT_SYMBOLS = {
    "V": Dimension.VOLTAGE,
    "Ω": Dimension.RESISTANCE,
    "Ohm": Dimension.RESISTANCE,
    "ohm": Dimension.RESISTANCE,
    "A": Dimension.CURRENT,
    "W": Dimension.POWER,
}

_DEFAULT_PASS_TOKENS = frozenset({"ok"})


@dataclass
class UnitRegistry:
    """Symbol, prefix, and success-token tables.

    Ships with V/Ω/A/W and the p..G prefix ladder; deployments extend it from
    the shared config file when new test types introduce new units.
    """

    symbols: dict = field(default_factory=lambda: dict(_DEFAULT_SYMBOLS))
    prefixes: dict = field(default_factory=lambda: dict(_DEFAULT_PREFIXES))
    pass_tokens: frozenset = _DEFAULT_PASS_TOKENS

    def resolve_unit(self, token: str) -> Unit:
        """Resolve a unit token, applying at most one SI prefix.

        Raises UnknownUnit if the token matches no symbol, with or without a
        leading prefix.
        """
        if not token:
            return DIMENSIONLESS
        if token in self.symbols:
            return Unit(self.symbols[token], Decimal(1), token)
        prefix, rest = token[0], token[1:]
        if prefix in self.prefixes and rest in self.symbols:
            return Unit(self.symbols[rest], self.prefixes[prefix], token)
        raise UnknownUnit(f"unknown unit token {token!r}")

    def split_unit_token(self, token: str) -> "tuple[Optional[str], Optional[str]]":
        """Split a unit token into (prefix, symbol); either part may be None."""
        if not token:
            return None, None
        if token in self.symbols:
            return None, token
        if len(token) > 1 and token[0] in self.prefixes and token[1:] in self.symbols:
            return token[0], token[1:]
        if token in self.prefixes:
            return token, None
        return None, None


DEFAULT_REGISTRY = UnitRegistry()

_NUM = r"[+-]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY_RE = re.compile(rf"^\s*({_NUM})\s*(\S*)\s*$")
_BRACKET_RE = re.compile(rf"^\s*\[\s*({_NUM})\s*,\s*({_NUM})\s*\]\s*(\S*)\s*$")
_AT_LEAST_RE = re.compile(rf"^\s*(?:≥|>=)\s*({_NUM})\s*(\S*)\s*$")
_AT_MOST_RE = re.compile(rf"^\s*(?:≤|<=)\s*({_NUM})\s*(\S*)\s*$")
_DASH_RE = re.compile(rf"^\s*({_NUM})\s*([^\s\-]*)\s*-\s*({_NUM})\s*(\S*)\s*$")


def parse_quantity(text: str, registry: UnitRegistry = DEFAULT_REGISTRY) -> Quantity:
    """Parse a textual quantity into base units.

    "1.9MΩ" becomes 1.9e6 Ω; a bare number stays dimensionless.  The value is
    normalized to the base unit of its dimension so comparisons never depend
    on the prefix the report author chose.
    """
    if text is None or not text.strip():
        raise UnparseableQuantity("empty quantity text")
    m = _QUANTITY_RE.match(text)
    if m is None:
        raise UnparseableQuantity(f"no numeric token in {text!r}")
    number, unit_token = m.group(1), m.group(2)
    unit = registry.resolve_unit(unit_token)
    with localcontext() as ctx:
        ctx.prec = _PRECISION
        value = Decimal(number) * unit.scale
    return Quantity(value=value, unit=base_unit(unit.dimension), raw=text)


def _endpoint_unit(
    own_token: str, trailing_token: str, registry: UnitRegistry
) -> Unit:
    """Resolve one dash-range endpoint's unit.

    The trailing unit distributes to both endpoints; an endpoint may override
    the prefix ("1.1M - 1.9MΩ") or carry a full unit of its own.
    """
    if not own_token:
        return registry.resolve_unit(trailing_token)
    t_prefix, t_symbol = registry.split_unit_token(trailing_token)
    o_prefix, o_symbol = registry.split_unit_token(own_token)
    if o_symbol is not None:
        return registry.resolve_unit(own_token)
    if o_prefix is not None and t_symbol is not None:
        return registry.resolve_unit(o_prefix + t_symbol)
    raise UnknownUnit(f"unknown unit token {own_token!r}")


def parse_acceptance_limits(
    text: str, registry: UnitRegistry = DEFAULT_REGISTRY
) -> AcceptanceLimits:
    """Parse an acceptance-limit string.

    Supported grammars: "[a, b] U", "a - b U", "aP - bPU" (per-endpoint
    prefix, trailing unit distributes), "[a, b]" unitless, "≥ a U" / ">= a U",
    "≤ a U" / "<= a U".  Whitespace is not significant.
    """
    if text is None or not text.strip():
        raise UnparseableRange("empty limits text")

    m = _BRACKET_RE.match(text)
    if m is not None:
        unit = registry.resolve_unit(m.group(3))
        lower = _make_quantity(m.group(1), unit)
        upper = _make_quantity(m.group(2), unit)
        return _closed(lower, upper, text, unit)

    m = _AT_LEAST_RE.match(text)
    if m is not None:
        unit = registry.resolve_unit(m.group(2))
        return AcceptanceLimits(
            LimitKind.AT_LEAST,
            lower=_make_quantity(m.group(1), unit),
            upper=None,
            raw=text,
            written_unit=unit,
        )

    m = _AT_MOST_RE.match(text)
    if m is not None:
        unit = registry.resolve_unit(m.group(2))
        return AcceptanceLimits(
            LimitKind.AT_MOST,
            lower=None,
            upper=_make_quantity(m.group(1), unit),
            raw=text,
            written_unit=unit,
        )

    m = _DASH_RE.match(text)
    if m is not None:
        lower_num, lower_token, upper_num, upper_token = m.groups()
        trailing = upper_token
        if not trailing and lower_token:
            _, l_symbol = registry.split_unit_token(lower_token)
            if l_symbol is not None:
                trailing = lower_token
        upper_unit = _endpoint_unit(upper_token, trailing, registry)
        lower_unit = _endpoint_unit(lower_token, trailing, registry)
        if lower_unit.dimension is not upper_unit.dimension:
            raise UnparseableRange(
                f"range endpoints mix dimensions in {text!r}: "
                f"{lower_unit.dimension.value} vs {upper_unit.dimension.value}"
            )
        lower = _make_quantity(lower_num, lower_unit)
        upper = _make_quantity(upper_num, upper_unit)
        return _closed(lower, upper, text, upper_unit)

    raise UnparseableRange(f"unrecognized limits syntax: {text!r}")


def _make_quantity(number: str, unit: Unit) -> Quantity:
    with localcontext() as ctx:
        ctx.prec = _PRECISION
        value = Decimal(number) * unit.scale
    return Quantity(value=value, unit=base_unit(unit.dimension), raw=f"{number} {unit.symbol}".strip())


def _closed(lower: Quantity, upper: Quantity, raw: str, written_unit: Unit) -> AcceptanceLimits:
    if lower.base_value > upper.base_value:
        raise InvertedInterval(
            f"inverted interval in {raw!r}: {lower.base_value} > {upper.base_value}"
        )
    return AcceptanceLimits(
        LimitKind.CLOSED_INTERVAL, lower=lower, upper=upper, raw=raw, written_unit=written_unit
    )


def convert(q: Quantity, target: Unit) -> Quantity:
    """Rescale a quantity to a target unit of the same dimension.

    A dimensionless quantity adopts the target unit; anything else with a
    different dimension raises DimensionMismatch.  Rescaling is exact.
    """
    if q.dimension is Dimension.DIMENSIONLESS and target.dimension is not Dimension.DIMENSIONLESS:
        return Quantity(value=q.value, unit=target, raw=q.raw)
    if q.dimension is not target.dimension:
        raise DimensionMismatch(
            f"cannot convert {q.dimension.value} to {target.dimension.value}"
        )
    with localcontext() as ctx:
        ctx.prec = _PRECISION
        value = q.value * q.unit.scale / target.scale
    return Quantity(value=value, unit=target, raw=format_value(value, target.symbol))


def parse_success_mark(text: str, registry: UnitRegistry = DEFAULT_REGISTRY) -> SuccessMark:
    """Classify a "successful" cell.  Total: every input maps to Pass or Fail.

    Case-insensitive "ok" (or any configured pass token) is a pass; the empty
    cell, "-", and every other token indicate a lack of success.
    """
    raw = "" if text is None else text
    token = raw.strip().lower()
    verdict = SuccessVerdict.PASS if token in registry.pass_tokens else SuccessVerdict.FAIL
    return SuccessMark(verdict=verdict, raw=raw)


def format_value(value: Decimal, symbol: str) -> str:
    text = str(value)
    return f"{text} {symbol}".strip()


def format_quantity(q: Quantity) -> str:
    """Render a quantity so that reparsing yields an equal Quantity."""
    return format_value(q.value, q.unit.symbol)


def format_limits(limits: AcceptanceLimits) -> str:
    """Render limits in canonical base units; reparsing yields equal limits."""
    if limits.kind is LimitKind.CLOSED_INTERVAL:
        assert limits.lower is not None and limits.upper is not None
        symbol = limits.lower.unit.symbol
        return f"[{limits.lower.value}, {limits.upper.value}] {symbol}".strip()
    if limits.kind is LimitKind.AT_LEAST:
        assert limits.lower is not None
        return f">= {format_quantity(limits.lower)}"
    assert limits.upper is not None
    return f"<= {format_quantity(limits.upper)}"
