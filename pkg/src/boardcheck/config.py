"""Shared TOML configuration: registries, backend settings, paths, cost model.

Compiled-in defaults ship in data/defaults.toml; a user config file overlays
them key by key.  Registries (unit symbols, prefixes, success tokens, header
synonyms) are deliberately config-extensible: reports keep inventing new test
types and new spellings.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .costmodel import CostCoefficients
from .extraction import ColumnRole, DEFAULT_SYNONYMS
from .llm import BackendConfig
from .units import Dimension, UnitRegistry

log = logging.getLogger(__name__)


class ConfigError(Exception):
    pass


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _decimal(value: Any, where: str) -> Decimal:
    try:
        return Decimal(str(value))
    except InvalidOperation as exc:
        raise ConfigError(f"{where}: {value!r} is not a decimal number") from exc


@dataclass
class AppConfig:
    """Merged configuration with typed accessors."""

    data: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def section(self, *names: str) -> dict:
        node: Any = self.data
        for name in names:
            if not isinstance(node, dict):
                return {}
            node = node.get(name, {})
        return node if isinstance(node, dict) else {}

    def registry(self) -> UnitRegistry:
        registry = UnitRegistry()
        for symbol, dim_name in self.section("units", "symbols").items():
            try:
                dimension = Dimension(str(dim_name))
            except ValueError:
                raise ConfigError(
                    f"units.symbols.{symbol}: unknown dimension {dim_name!r}"
                ) from None
            registry.symbols[symbol] = dimension
        for prefix, scale in self.section("units", "prefixes").items():
            registry.prefixes[prefix] = _decimal(scale, f"units.prefixes.{prefix}")
        tokens = self.section("units").get("pass_tokens")
        if tokens is not None:
            registry.pass_tokens = frozenset(str(t).strip().lower() for t in tokens)
        return registry

    def synonyms(self) -> "dict[ColumnRole, frozenset[str]]":
        merged = {role: set(values) for role, values in DEFAULT_SYNONYMS.items()}
        role_names = {
            "measured_value": ColumnRole.MEASURED_VALUE,
            "acceptance_limits": ColumnRole.ACCEPTANCE_LIMITS,
            "success": ColumnRole.SUCCESS,
            "label": ColumnRole.LABEL,
        }
        for key, values in self.section("extraction", "synonyms").items():
            role = role_names.get(key)
            if role is None:
                raise ConfigError(f"extraction.synonyms: unknown role {key!r}")
            merged[role].update(str(v).strip().lower() for v in values)
        return {role: frozenset(values) for role, values in merged.items()}

    def backend_config(self, override_kind: Optional[str] = None, seed: Optional[int] = None) -> BackendConfig:
        llm_section = self.section("llm")
        http = self.section("llm", "http")
        replay = self.section("llm", "replay")
        mock = self.section("llm", "mock")
        kind = override_kind or llm_section.get("backend", "mock")
        fixture = replay.get("fixture", "")
        if kind.startswith("replay:"):
            kind, _, fixture = kind.partition(":")
        if fixture:
            fixture = str(self.resolve_path(fixture))
        try:
            return BackendConfig(
                kind=kind,
                endpoint=http.get("endpoint", ""),
                model=http.get("model", ""),
                credential_env=http.get("credential_env", "BOARDCHECK_API_KEY"),
                max_in_flight=int(llm_section.get("max_in_flight", 1)),
                max_attempts=int(llm_section.get("max_attempts", 3)),
                backoff_base=float(llm_section.get("backoff_base", 0.5)),
                rate_per_minute=int(http.get("rate_per_minute", 60)),
                replay_fixture=fixture,
                mock_seed=seed if seed is not None else int(mock.get("seed", 0)),
                mock_flip_in_range=float(mock.get("flip_in_range", 0.0)),
                mock_flip_out_of_range=float(mock.get("flip_out_of_range", 0.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"llm backend configuration invalid: {exc}") from exc

    def template(self) -> Optional[str]:
        value = self.section("llm").get("template", "")
        return value or None

    def cost_coefficients(self) -> CostCoefficients:
        cost = self.section("cost")
        required = [
            "template_authoring",
            "manual_per_test",
            "pipeline_setup",
            "template_annotation",
            "residual_review_per_test",
        ]
        missing = [key for key in required if key not in cost]
        if missing:
            raise ConfigError(f"cost section lacks {missing}")
        try:
            return CostCoefficients(
                **{key: _decimal(cost[key], f"cost.{key}") for key in required}
            )
        except ValueError as exc:
            raise ConfigError(f"cost coefficients invalid: {exc}") from exc

    def resolve_path(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def pipeline_paths(self) -> "dict[str, Path]":
        section = self.section("pipeline")
        required = ["ontology", "mappings", "data_dir", "review_queue"]
        missing = [key for key in required if not section.get(key)]
        if missing:
            raise ConfigError(f"pipeline section lacks {missing}")
        return {key: self.resolve_path(str(section[key])) for key in required}


def builtin_defaults() -> dict:
    text = resources.files("boardcheck.data").joinpath("defaults.toml").read_text()
    return tomllib.loads(text)


def load_config(path: Optional[str] = None) -> AppConfig:
    """Built-in defaults overlaid with the user's TOML file, if given."""
    data = builtin_defaults()
    base_dir = Path(".")
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            with open(file_path, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
        data = _deep_merge(data, user)
        base_dir = file_path.parent
    return AppConfig(data=data, base_dir=base_dir)
