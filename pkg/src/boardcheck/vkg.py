"""Virtual knowledge graph: mapping-driven access to columnar result stores.

Mappings pair triple templates with a restricted source query (projection
over one table, optional equality filter).  Queries are conjunctive basic
graph patterns answered over the union of the materialized KG and the
triples the mappings imply, without materializing the latter.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping as TMapping, Optional, Sequence
from urllib.parse import quote

from . import vocab
from .kg import (
    Iri,
    Literal,
    PatternTerm,
    Term,
    Triple,
    TriplePattern,
    TripleStore,
    Var,
    bind_triple,
    term_sort_key,
)

log = logging.getLogger(__name__)

_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


class VkgError(Exception):
    """Base class for mapping and query failures."""


class MappingParseError(VkgError):
    pass


class UnboundPlaceholder(VkgError):
    """A target placeholder does not appear among the source columns."""


class MissingColumn(VkgError):
    """The row table lacks a column the mapping's source query needs."""


class IRIConstructionError(VkgError):
    """Template instantiation produced an invalid IRI."""


class QueryParseError(VkgError):
    pass


# ---------------------------------------------------------------------------
# Row tables


@dataclass(frozen=True)
class RowTable:
    """A named rectangular table of text cells."""

    name: str
    columns: "tuple[str, ...]"
    rows: "tuple[tuple[str, ...], ...]"

    def __post_init__(self) -> None:
        if len(set(self.columns)) != len(self.columns):
            raise ValueError(f"duplicate column names in table {self.name!r}")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ValueError(
                    f"table {self.name!r} row {i} has {len(row)} cells, expected {len(self.columns)}"
                )

    def column_index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise MissingColumn(f"table {self.name!r} has no column {column!r}") from None


def sidecar_path(csv_path) -> Path:
    return Path(str(csv_path) + ".schema.json")


def load_row_table(path, name: Optional[str] = None) -> RowTable:
    """Read a CSV (header row required) plus its optional schema sidecar."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise VkgError(f"{path} is empty; a header row is required") from None
        rows = [tuple(row) for row in reader]
    table_name = name or path.stem
    sidecar = sidecar_path(path)
    if sidecar.exists():
        schema = json.loads(sidecar.read_text(encoding="utf-8"))
        declared = [c["name"] for c in schema.get("columns", [])]
        if declared and declared != header:
            raise VkgError(
                f"{path}: sidecar columns {declared} disagree with CSV header {header}"
            )
        table_name = name or schema.get("table", table_name)
    return RowTable(name=table_name, columns=tuple(header), rows=tuple(rows))


def save_row_table(table: RowTable, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.columns)
        writer.writerows(table.rows)
    sidecar = {
        "table": table.name,
        "columns": [{"name": c, "type": "text"} for c in table.columns],
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Mappings


@dataclass(frozen=True)
class SourceQuery:
    columns: "tuple[str, ...]"
    table: str
    filter: "Optional[tuple[str, str]]" = None  # (column, constant)


@dataclass(frozen=True)
class IriTemplate:
    template: str  # absolute IRI text with {placeholder} slots

    def placeholders(self) -> "set[str]":
        return set(_PLACEHOLDER_RE.findall(self.template))

    def instantiate(self, values: "TMapping[str, str]") -> Iri:
        out = _PLACEHOLDER_RE.sub(
            lambda m: quote(values[m.group(1)], safe="-._~"), self.template
        )
        if re.search(r'[<>"\s{}|\\^`]', out):
            raise IRIConstructionError(f"invalid characters in IRI {out!r}")
        return Iri(out)

    def is_constant(self) -> bool:
        return not self.placeholders()


@dataclass(frozen=True)
class LiteralTemplate:
    template: str
    datatype: str = vocab.XSD_STRING
    lang: Optional[str] = None

    def placeholders(self) -> "set[str]":
        return set(_PLACEHOLDER_RE.findall(self.template))

    def instantiate(self, values: "TMapping[str, str]") -> Literal:
        text = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], self.template)
        return Literal(text, datatype=self.datatype, lang=self.lang)

    def is_constant(self) -> bool:
        return not self.placeholders()


ObjectTemplate = "IriTemplate | LiteralTemplate"


@dataclass(frozen=True)
class MappingDef:
    """One mapping block: subject template plus predicate/object templates."""

    mapping_id: str
    subject: IriTemplate
    po_templates: "tuple[tuple[Iri, IriTemplate | LiteralTemplate], ...]"
    source: SourceQuery

    def placeholders(self) -> "set[str]":
        names = set(self.subject.placeholders())
        for _, obj in self.po_templates:
            names |= obj.placeholders()
        return names

    def observed_property(self) -> Optional[Iri]:
        """The constant observedProperty this mapping serves, when stated."""
        for pred, obj in self.po_templates:
            if (
                pred.value == vocab.SOSA_OBSERVED_PROPERTY
                and isinstance(obj, IriTemplate)
                and obj.is_constant()
            ):
                return Iri(obj.template)
        return None


_TARGET_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<string>"(?:[^"\\]|\\.)*")
    | (?P<dtype>\^\^)
    | (?P<langtag>@[A-Za-z][A-Za-z0-9-]*)
    | (?P<iriref><[^<>\s]*>)
    | (?P<punct>[;,.])
    | (?P<placeholder>\{\w+\})
    | (?P<pname>[A-Za-z_][A-Za-z0-9_-]*:(?:[A-Za-z0-9_.%\-]|\{\w+\})*)
    | (?P<a_kw>\ba\b)
    """,
    re.VERBOSE,
)


def _tokenize_target(text: str) -> "list[tuple[str, str]]":
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TARGET_TOKEN_RE.match(text, pos)
        if m is None:
            raise MappingParseError(f"unexpected character {text[pos]!r} in target at offset {pos}")
        kind = m.lastgroup or ""
        value = m.group()
        if kind == "pname":
            while value.endswith("."):
                value = value[:-1]
            tokens.append(("pname", value))
            for _ in range(len(m.group()) - len(value)):
                tokens.append(("punct", "."))
            pos = m.end()
            continue
        if kind != "ws":
            tokens.append((kind, value))
        pos = m.end()
    return tokens


class _TargetParser:
    def __init__(self, text: str, prefixes: "dict[str, str]"):
        self.tokens = _tokenize_target(text)
        self.pos = 0
        self.prefixes = prefixes

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        if tok is None:
            raise MappingParseError("target ended unexpectedly")
        self.pos += 1
        return tok

    def _expand_pname(self, pname: str) -> str:
        prefix, _, local = pname.partition(":")
        ns = self.prefixes.get(prefix)
        if ns is None:
            raise MappingParseError(f"unknown prefix {prefix!r} in target")
        return ns + local

    def _iri_template(self) -> IriTemplate:
        kind, value = self._next()
        if kind == "iriref":
            return IriTemplate(value[1:-1])
        if kind == "pname":
            return IriTemplate(self._expand_pname(value))
        raise MappingParseError(f"expected IRI template, got {value!r}")

    def _constant_iri(self) -> Iri:
        template = self._iri_template()
        if not template.is_constant():
            raise MappingParseError(
                f"predicates must be constant IRIs, got template {template.template!r}"
            )
        return Iri(template.template)

    def _object(self):
        tok = self._peek()
        if tok is None:
            raise MappingParseError("expected object in target")
        kind, value = tok
        if kind == "string":
            self._next()
            text = value[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            nxt = self._peek()
            if nxt is not None and nxt[0] == "dtype":
                self._next()
                dtype = self._constant_iri()
                return LiteralTemplate(text, datatype=dtype.value)
            if nxt is not None and nxt[0] == "langtag":
                self._next()
                return LiteralTemplate(text, datatype=vocab.RDF_LANG_STRING, lang=nxt[1][1:])
            return LiteralTemplate(text)
        if kind == "placeholder":
            self._next()
            nxt = self._peek()
            if nxt is not None and nxt[0] == "dtype":
                self._next()
                dtype = self._constant_iri()
                return LiteralTemplate(value, datatype=dtype.value)
            return LiteralTemplate(value)
        return self._iri_template()

    def parse(self) -> "tuple[IriTemplate, list[tuple[Iri, IriTemplate | LiteralTemplate]]]":
        subject = self._iri_template()
        pairs: "list[tuple[Iri, IriTemplate | LiteralTemplate]]" = []
        while True:
            kind, value = self._next()
            if kind == "a_kw":
                predicate = Iri(vocab.RDF_TYPE)
            elif kind in ("pname", "iriref"):
                self.pos -= 1
                predicate = self._constant_iri()
            else:
                raise MappingParseError(f"expected predicate, got {value!r}")
            while True:
                pairs.append((predicate, self._object()))
                sep = self._peek()
                if sep is not None and sep == ("punct", ","):
                    self._next()
                    continue
                break
            kind, value = self._next()
            if value == ".":
                if self._peek() is not None:
                    raise MappingParseError("content after target terminator")
                return subject, pairs
            if value == ";":
                if self._peek() == ("punct", "."):
                    self._next()
                    return subject, pairs
                continue
            raise MappingParseError(f"expected ';' or '.', got {value!r}")


_SOURCE_RE = re.compile(
    r"^\s*select\s+(?P<cols>.+?)\s+from\s+(?P<table>[\w.]+)"
    r"(?:\s+where\s+(?P<col>\w+)\s*=\s*(?P<val>'[^']*'|\"[^\"]*\"|\S+))?\s*$",
    re.IGNORECASE | re.DOTALL,
)


def _parse_source(text: str) -> SourceQuery:
    m = _SOURCE_RE.match(text)
    if m is None:
        raise MappingParseError(f"source query does not match SELECT ... FROM ... [WHERE col = const]: {text!r}")
    columns = []
    for raw in m.group("cols").split(","):
        name = raw.strip()
        if not re.fullmatch(r"\w+", name):
            raise MappingParseError(f"bad column name {name!r} in source query")
        columns.append(name)
    filt = None
    if m.group("col"):
        value = m.group("val")
        if value[0] in "'\"" and value[-1] == value[0]:
            value = value[1:-1]
        filt = (m.group("col"), value)
    return SourceQuery(columns=tuple(columns), table=m.group("table"), filter=filt)


_KEYWORD_RE = re.compile(r"^(mappingId|target|source)\b\s*(.*)$")


def parse_mappings(
    text: str, prefixes: "Optional[dict[str, str]]" = None
) -> "list[MappingDef]":
    """Parse mapping blocks in the three-keyword (mappingId/target/source) format."""
    prefix_map = dict(vocab.DEFAULT_PREFIXES)
    if prefixes:
        prefix_map.update(prefixes)
    blocks: "list[dict[str, str]]" = []
    current: "Optional[dict[str, str]]" = None
    current_key: Optional[str] = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _KEYWORD_RE.match(line)
        if m is not None:
            key, rest = m.group(1), m.group(2)
            if key == "mappingId":
                current = {"mappingId": rest.strip(), "target": "", "source": ""}
                blocks.append(current)
                current_key = None
                continue
            if current is None:
                raise MappingParseError(f"line {line_no}: {key} before mappingId")
            current_key = key
            current[key] = rest
            continue
        if current is None or current_key is None:
            raise MappingParseError(f"line {line_no}: continuation line outside a block")
        current[current_key] += "\n" + line
    mappings: "list[MappingDef]" = []
    seen_ids: "set[str]" = set()
    for block in blocks:
        mapping_id = block["mappingId"]
        if not mapping_id:
            raise MappingParseError("mappingId must not be empty")
        if mapping_id in seen_ids:
            raise MappingParseError(f"duplicate mappingId {mapping_id!r}")
        seen_ids.add(mapping_id)
        if not block["target"].strip() or not block["source"].strip():
            raise MappingParseError(f"mapping {mapping_id!r} needs both target and source")
        subject, pairs = _TargetParser(block["target"], prefix_map).parse()
        source = _parse_source(block["source"])
        mapping = MappingDef(
            mapping_id=mapping_id,
            subject=subject,
            po_templates=tuple(pairs),
            source=source,
        )
        unbound = mapping.placeholders() - set(source.columns)
        if unbound:
            raise UnboundPlaceholder(
                f"mapping {mapping_id!r}: placeholders {sorted(unbound)} missing from source columns"
            )
        mappings.append(mapping)
    return mappings


# ---------------------------------------------------------------------------
# Unfolding


def _filtered_rows(mapping: MappingDef, table: RowTable) -> "list[dict[str, str]]":
    for column in mapping.source.columns:
        table.column_index(column)
    if mapping.source.filter is not None:
        table.column_index(mapping.source.filter[0])
    out = []
    for row in table.rows:
        values = dict(zip(table.columns, row))
        if mapping.source.filter is not None:
            column, constant = mapping.source.filter
            if values[column] != constant:
                continue
        out.append(values)
    return out


def unfold(mapping: MappingDef, table: RowTable) -> "list[Triple]":
    """Instantiate every target template for every (filtered) source row."""
    if table.name != mapping.source.table:
        raise VkgError(
            f"table {table.name!r} does not match mapping source {mapping.source.table!r}"
        )
    triples: "list[Triple]" = []
    for values in _filtered_rows(mapping, table):
        subject = mapping.subject.instantiate(values)
        for predicate, obj_template in mapping.po_templates:
            triples.append(Triple(subject, predicate, obj_template.instantiate(values)))
    return triples


def materialize(
    store: TripleStore, mappings: "Sequence[MappingDef]", tables: "TMapping[str, RowTable]"
) -> TripleStore:
    """A fresh store holding KG triples plus all unfolded virtual triples."""
    merged = store.copy()
    for mapping in mappings:
        table = tables.get(mapping.source.table)
        if table is None:
            continue
        for triple in unfold(mapping, table):
            merged.add(triple)
    return merged


# ---------------------------------------------------------------------------
# BGP queries


@dataclass(frozen=True)
class BGPQuery:
    patterns: "tuple[TriplePattern, ...]"
    projected: "tuple[str, ...]"

    def __post_init__(self) -> None:
        if not self.patterns:
            raise QueryParseError("a query needs at least one triple pattern")
        all_vars: "set[str]" = set()
        for p in self.patterns:
            all_vars |= p.variables()
        missing = [v for v in self.projected if v not in all_vars]
        if missing:
            raise QueryParseError(f"projected variables {missing} do not occur in any pattern")


_QUERY_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<var>\?\w+)
    | (?P<string>"(?:[^"\\]|\\.)*")
    | (?P<dtype>\^\^)
    | (?P<langtag>@[A-Za-z][A-Za-z0-9-]*)
    | (?P<iriref><[^<>\s]*>)
    | (?P<dot>\.)
    | (?P<pname>[A-Za-z_][A-Za-z0-9_-]*:[A-Za-z0-9_.%\-]*)
    | (?P<a_kw>\ba\b)
    """,
    re.VERBOSE,
)


def parse_bgp_query(text: str, prefixes: "Optional[dict[str, str]]" = None) -> BGPQuery:
    """Parse `SELECT ?x ... WHERE { pattern . pattern }` into a BGPQuery."""
    prefix_map = dict(vocab.DEFAULT_PREFIXES)
    if prefixes:
        prefix_map.update(prefixes)
    m = re.match(r"^\s*select\s+(?P<proj>.+?)\s+where\s*\{(?P<body>.*)\}\s*$", text, re.IGNORECASE | re.DOTALL)
    if m is None:
        raise QueryParseError("query must look like: SELECT ?x ?y WHERE { ... }")
    proj_text = m.group("proj").strip()
    body = m.group("body")

    tokens: "list[tuple[str, str]]" = []
    pos = 0
    while pos < len(body):
        tm = _QUERY_TOKEN_RE.match(body, pos)
        if tm is None:
            raise QueryParseError(f"unexpected character {body[pos]!r} in query body")
        kind = tm.lastgroup or ""
        value = tm.group()
        if kind == "pname":
            while value.endswith("."):
                value = value[:-1]
            tokens.append(("pname", value))
            for _ in range(len(tm.group()) - len(value)):
                tokens.append(("dot", "."))
            pos = tm.end()
            continue
        if kind != "ws":
            tokens.append((kind, value))
        pos = tm.end()

    def expand(pname: str) -> str:
        prefix, _, local = pname.partition(":")
        ns = prefix_map.get(prefix)
        if ns is None:
            raise QueryParseError(f"unknown prefix {prefix!r}")
        return ns + local

    terms: "list[PatternTerm]" = []
    patterns: "list[TriplePattern]" = []
    i = 0
    while i < len(tokens):
        kind, value = tokens[i]
        if kind == "dot":
            i += 1
            continue
        if kind == "var":
            terms.append(Var(value[1:]))
        elif kind == "iriref":
            terms.append(Iri(value[1:-1]))
        elif kind == "pname":
            terms.append(Iri(expand(value)))
        elif kind == "a_kw":
            terms.append(Iri(vocab.RDF_TYPE))
        elif kind == "string":
            text_value = value[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            datatype = vocab.XSD_STRING
            lang = None
            if i + 1 < len(tokens) and tokens[i + 1][0] == "dtype":
                i += 2
                dk, dv = tokens[i]
                if dk == "iriref":
                    datatype = dv[1:-1]
                elif dk == "pname":
                    datatype = expand(dv)
                else:
                    raise QueryParseError(f"bad datatype token {dv!r}")
            elif i + 1 < len(tokens) and tokens[i + 1][0] == "langtag":
                i += 1
                lang = tokens[i][1][1:]
                datatype = vocab.RDF_LANG_STRING
            terms.append(Literal(text_value, datatype=datatype, lang=lang))
        else:
            raise QueryParseError(f"unexpected token {value!r} in query body")
        if len(terms) == 3:
            subject, predicate, obj = terms
            if isinstance(subject, Literal):
                raise QueryParseError("literal subjects are not allowed")
            patterns.append(TriplePattern(subject, predicate, obj))
            terms = []
        i += 1
    if terms:
        raise QueryParseError("query body ends mid-pattern")
    if not patterns:
        raise QueryParseError("query body contains no patterns")

    pattern_vars: "set[str]" = set()
    for p in patterns:
        pattern_vars |= p.variables()
    if proj_text == "*":
        projected = tuple(sorted(pattern_vars))
    else:
        names = re.findall(r"\?(\w+)", proj_text)
        if not names:
            raise QueryParseError("projection must list ?variables or be *")
        projected = tuple(names)
    return BGPQuery(patterns=tuple(patterns), projected=projected)


def _bound_count(pattern: TriplePattern) -> int:
    return sum(1 for t in (pattern.subject, pattern.predicate, pattern.object) if not isinstance(t, Var))


def _substitute(pattern: TriplePattern, binding: "TMapping[str, Term]") -> TriplePattern:
    def sub(term: PatternTerm) -> PatternTerm:
        if isinstance(term, Var) and term.name in binding:
            return binding[term.name]
        return term

    return TriplePattern(sub(pattern.subject), sub(pattern.predicate), sub(pattern.object))


def _rewrite_subclass_patterns(
    query: BGPQuery, store: TripleStore
) -> "list[tuple[TriplePattern, ...]]":
    """Expand bound observedProperty objects to their subclass closure.

    Querying for Isolation observations must also return Internal and
    External Isolation rows; each closure member yields one alternative BGP.
    """
    alternatives: "list[list[TriplePattern]]" = []
    for pattern in query.patterns:
        if (
            isinstance(pattern.predicate, Iri)
            and pattern.predicate.value == vocab.SOSA_OBSERVED_PROPERTY
            and isinstance(pattern.object, Iri)
        ):
            closure = sorted(store.subclasses_of(pattern.object), key=term_sort_key)
            alternatives.append(
                [TriplePattern(pattern.subject, pattern.predicate, member) for member in closure]
            )
        else:
            alternatives.append([pattern])
    return [tuple(combo) for combo in itertools.product(*alternatives)]


def _solve(
    patterns: "Sequence[TriplePattern]",
    match_fn,
) -> "list[dict[str, Term]]":
    solutions: "list[dict[str, Term]]" = [{}]
    for pattern in patterns:
        next_solutions: "list[dict[str, Term]]" = []
        for binding in solutions:
            concrete = _substitute(pattern, binding)
            for extra in match_fn(concrete):
                merged = dict(binding)
                merged.update(extra)
                next_solutions.append(merged)
        solutions = next_solutions
        if not solutions:
            break
    return solutions


def _project(
    solutions: "Iterable[dict[str, Term]]", projected: "tuple[str, ...]"
) -> "list[dict[str, Term]]":
    rows = {tuple(s[v] for v in projected) for s in solutions if all(v in s for v in projected)}
    ordered = sorted(rows, key=lambda row: tuple(term_sort_key(t) for t in row))
    return [dict(zip(projected, row)) for row in ordered]


def _object_prunes(obj_template, bound_object) -> bool:
    """True when the template provably cannot produce the bound object."""
    if isinstance(obj_template, IriTemplate):
        if not isinstance(bound_object, Iri):
            return True
        if obj_template.is_constant():
            return obj_template.template != bound_object.value
        return False
    if not isinstance(bound_object, Literal):
        return True
    if obj_template.datatype != bound_object.datatype or obj_template.lang != bound_object.lang:
        return True
    if obj_template.is_constant():
        return obj_template.template != bound_object.text
    return False


def _virtual_match(
    pattern: TriplePattern,
    mappings: "Sequence[MappingDef]",
    tables: "TMapping[str, RowTable]",
) -> "list[dict[str, Term]]":
    out: "list[dict[str, Term]]" = []
    for mapping in mappings:
        table = tables.get(mapping.source.table)
        if table is None:
            continue
        candidate_templates = []
        for predicate, obj_template in mapping.po_templates:
            if isinstance(pattern.predicate, Iri) and pattern.predicate != predicate:
                continue
            if not isinstance(pattern.object, Var) and _object_prunes(obj_template, pattern.object):
                continue
            candidate_templates.append((predicate, obj_template))
        if not candidate_templates:
            continue
        rows = _filtered_rows(mapping, table)
        for predicate, obj_template in candidate_templates:
            # Pushdown: a bare-placeholder literal object with a bound pattern
            # object becomes a column-equality row filter.
            selected = rows
            if isinstance(pattern.object, Literal) and isinstance(obj_template, LiteralTemplate):
                m = re.fullmatch(r"\{(\w+)\}", obj_template.template)
                if m is not None:
                    column = m.group(1)
                    selected = [v for v in rows if v[column] == pattern.object.text]
            for values in selected:
                triple = Triple(
                    mapping.subject.instantiate(values),
                    predicate,
                    obj_template.instantiate(values),
                )
                binding = bind_triple(pattern, triple)
                if binding is not None:
                    out.append(binding)
    return out


def answer(
    query: BGPQuery,
    store: TripleStore,
    mappings: "Sequence[MappingDef]" = (),
    tables: "Optional[TMapping[str, RowTable]]" = None,
    expand_subclasses: bool = True,
) -> "list[dict[str, Term]]":
    """Answer a BGP query over KG triples plus virtual (mapping) triples.

    Evaluation pushes constants down to the row stores instead of
    materializing; results are deterministic and observationally equal to
    materialize-then-match.
    """
    tables = tables or {}
    groups = (
        _rewrite_subclass_patterns(query, store)
        if expand_subclasses
        else [query.patterns]
    )

    def match_fn(pattern: TriplePattern) -> "list[dict[str, Term]]":
        return store.match(pattern) + _virtual_match(pattern, mappings, tables)

    solutions: "list[dict[str, Term]]" = []
    for patterns in groups:
        ordered = sorted(
            range(len(patterns)), key=lambda i: (-_bound_count(patterns[i]), i)
        )
        solutions.extend(_solve([patterns[i] for i in ordered], match_fn))
    return _project(solutions, query.projected)


def materialize_answer(
    query: BGPQuery,
    store: TripleStore,
    mappings: "Sequence[MappingDef]" = (),
    tables: "Optional[TMapping[str, RowTable]]" = None,
    expand_subclasses: bool = True,
) -> "list[dict[str, Term]]":
    """Reference evaluation: unfold everything, then match patterns in order."""
    merged = materialize(store, mappings, tables or {})
    groups = (
        _rewrite_subclass_patterns(query, store)
        if expand_subclasses
        else [query.patterns]
    )
    solutions: "list[dict[str, Term]]" = []
    for patterns in groups:
        solutions.extend(_solve(patterns, merged.match))
    return _project(solutions, query.projected)
