"""In-memory triple store with a Turtle-subset reader/writer and pattern matching.

Holds the ontology (observable-property hierarchy, table-structure
descriptions) and per-report metadata.  The supported Turtle subset covers
what those documents actually use: @prefix, "a", ";" and "," continuation,
typed and language-tagged literals, comments.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Union

from . import vocab

log = logging.getLogger(__name__)


class KgError(Exception):
    """Base class for knowledge-graph failures."""


class ParseError(KgError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DuplicateReport(KgError):
    """A report with this reference is already registered."""


@dataclass(frozen=True)
class Iri:
    value: str

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Literal:
    text: str
    datatype: str = vocab.XSD_STRING
    lang: Optional[str] = None

    def __str__(self) -> str:
        return self.text


Term = Union[Iri, Literal]


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


PatternTerm = Union[Iri, Literal, Var]


@dataclass(frozen=True)
class Triple:
    subject: Iri
    predicate: Iri
    object: Term


@dataclass(frozen=True)
class TriplePattern:
    subject: PatternTerm
    predicate: PatternTerm
    object: PatternTerm

    def variables(self) -> "set[str]":
        return {t.name for t in (self.subject, self.predicate, self.object) if isinstance(t, Var)}


def term_sort_key(term: Term) -> tuple:
    if isinstance(term, Iri):
        return (0, term.value, "", "")
    return (1, term.text, term.datatype, term.lang or "")


def triple_sort_key(t: Triple) -> tuple:
    return (term_sort_key(t.subject), term_sort_key(t.predicate), term_sort_key(t.object))


@dataclass(frozen=True)
class ReportMeta:
    """Metadata of one test report, matching the report-description shape."""

    reference: str
    name: str
    date: str
    location: str
    validation: str = "Pending"
    properties: "tuple[Iri, ...]" = ()


@dataclass(frozen=True)
class StructureDef:
    """Table-structure description attached to an observable property."""

    property_iri: Iri
    acc_limits_location: str = ""
    results_location: str = ""
    column_hints: "tuple[str, ...]" = ()


# ---------------------------------------------------------------------------
# Turtle-subset tokenizer


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r]+)
    | (?P<comment>\#[^\n]*)
    | (?P<newline>\n)
    | (?P<prefix_kw>@prefix\b)
    | (?P<iriref><[^<>\s]*>)
    | (?P<string>"(?:[^"\\]|\\.)*")
    | (?P<dtype>\^\^)
    | (?P<langtag>@[A-Za-z][A-Za-z0-9-]*)
    | (?P<punct>[;,.])
    | (?P<pname>[A-Za-z_][A-Za-z0-9_-]*:[A-Za-z0-9_.:%\-]*)
    | (?P<a_kw>\ba\b)
    | (?P<colon_only>:)
    """,
    re.VERBOSE,
)

_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r"}


@dataclass
class _Token:
    kind: str
    value: str
    line: int
    column: int


def _tokenize(text: str) -> "list[_Token]":
    tokens: list[_Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup or ""
        value = m.group()
        column = pos - line_start + 1
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "pname":
                # A trailing dot belongs to the statement, not the local name.
                while value.endswith("."):
                    value = value[:-1]
                tokens.append(_Token("pname", value, line, column))
                for i in range(len(m.group()) - len(value)):
                    tokens.append(_Token("punct", ".", line, column + len(value) + i))
                pos = m.end()
                continue
            tokens.append(_Token(kind, value, line, column))
        pos = m.end()
    return tokens


def _unescape(raw: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            out.append(_UNESCAPES.get(raw[i + 1], raw[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


class _TurtleParser:
    def __init__(self, text: str, prefixes: "dict[str, str]"):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.prefixes = prefixes

    def _peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self, expected: Optional[str] = None) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", "", 1, 1)
            raise ParseError("unexpected end of input", last.line, last.column)
        if expected is not None and tok.kind != expected:
            raise ParseError(f"expected {expected}, got {tok.value!r}", tok.line, tok.column)
        self.pos += 1
        return tok

    def _expand(self, pname: str, tok: _Token) -> Iri:
        prefix, _, local = pname.partition(":")
        ns = self.prefixes.get(prefix)
        if ns is None:
            raise ParseError(f"unknown prefix {prefix!r}", tok.line, tok.column)
        return Iri(ns + local)

    def _iri(self) -> Iri:
        tok = self._next()
        if tok.kind == "iriref":
            return Iri(tok.value[1:-1])
        if tok.kind == "pname":
            return self._expand(tok.value, tok)
        raise ParseError(f"expected IRI, got {tok.value!r}", tok.line, tok.column)

    def _object(self) -> Term:
        tok = self._peek()
        if tok is None:
            raise ParseError("unexpected end of input", 0, 0)
        if tok.kind == "string":
            self._next()
            text = _unescape(tok.value[1:-1])
            nxt = self._peek()
            if nxt is not None and nxt.kind == "langtag":
                self._next()
                return Literal(text, datatype=vocab.RDF_LANG_STRING, lang=nxt.value[1:])
            if nxt is not None and nxt.kind == "dtype":
                self._next()
                dtype = self._iri()
                return Literal(text, datatype=dtype.value)
            return Literal(text)
        return self._iri()

    def parse(self) -> "list[Triple]":
        triples: list[Triple] = []
        while self._peek() is not None:
            tok = self._peek()
            assert tok is not None
            if tok.kind == "prefix_kw":
                self._next()
                name_tok = self._next("pname") if self._peek() and self._peek().kind == "pname" else self._next("colon_only")
                prefix = name_tok.value[:-1] if name_tok.value.endswith(":") else name_tok.value.partition(":")[0]
                iri_tok = self._next("iriref")
                self._next("punct")
                self.prefixes[prefix] = iri_tok.value[1:-1]
                continue
            subject = self._iri()
            while True:
                verb_tok = self._peek()
                if verb_tok is None:
                    raise ParseError("statement not terminated", tok.line, tok.column)
                if verb_tok.kind == "a_kw":
                    self._next()
                    predicate = Iri(vocab.RDF_TYPE)
                else:
                    predicate = self._iri()
                while True:
                    obj = self._object()
                    triples.append(Triple(subject, predicate, obj))
                    sep = self._peek()
                    if sep is not None and sep.kind == "punct" and sep.value == ",":
                        self._next()
                        continue
                    break
                sep = self._next("punct")
                if sep.value == ".":
                    break
                if sep.value == ";":
                    # Tolerate "; ." — a dangling semicolon before the terminator.
                    nxt = self._peek()
                    if nxt is not None and nxt.kind == "punct" and nxt.value == ".":
                        self._next()
                        break
                    continue
                raise ParseError(f"expected ';' or '.', got {sep.value!r}", sep.line, sep.column)
        return triples


# ---------------------------------------------------------------------------
# Store


class TripleStore:
    """Set-semantics triple store with deterministic pattern matching.

    Single writer, many readers; writes happen in per-report batches.
    """

    def __init__(self, prefixes: Optional["dict[str, str]"] = None):
        self._triples: "set[Triple]" = set()
        self.prefixes: "dict[str, str]" = dict(vocab.DEFAULT_PREFIXES)
        if prefixes:
            self.prefixes.update(prefixes)

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def add(self, triple: Triple) -> bool:
        if triple in self._triples:
            return False
        self._triples.add(triple)
        return True

    def discard(self, triple: Triple) -> None:
        self._triples.discard(triple)

    def triples(self) -> "list[Triple]":
        return sorted(self._triples, key=triple_sort_key)

    def copy(self) -> "TripleStore":
        clone = TripleStore(self.prefixes)
        clone._triples = set(self._triples)
        return clone

    # -- Turtle subset ------------------------------------------------------

    def load_turtle_subset(self, text: str) -> int:
        """Parse Turtle-subset text into the store; returns triples added."""
        parser = _TurtleParser(text, self.prefixes)
        added = 0
        for triple in parser.parse():
            if self.add(triple):
                added += 1
        return added

    def serialize_turtle(self) -> str:
        """Render the store so that loading the output reproduces it exactly."""
        lines = []
        used_prefixes = sorted(self.prefixes.items())
        for prefix, ns in used_prefixes:
            lines.append(f"@prefix {prefix}: <{ns}> .")
        if used_prefixes:
            lines.append("")
        by_subject: "dict[Iri, list[Triple]]" = {}
        for t in self.triples():
            by_subject.setdefault(t.subject, []).append(t)
        for subject in sorted(by_subject, key=term_sort_key):
            group = by_subject[subject]
            parts = []
            for t in group:
                parts.append(f"{self._render_predicate(t.predicate)} {self._render_term(t.object)}")
            body = " ;\n  ".join(parts)
            lines.append(f"{self._render_iri(subject)} {body} .")
        return "\n".join(lines) + "\n"

    def _compact(self, iri: Iri) -> Optional[str]:
        best: Optional[tuple[str, str]] = None
        for prefix, ns in self.prefixes.items():
            if iri.value.startswith(ns) and (best is None or len(ns) > len(best[1])):
                local = iri.value[len(ns):]
                if re.fullmatch(r"[A-Za-z0-9_\-.]*", local) and not local.endswith("."):
                    best = (prefix, ns)
        if best is None:
            return None
        return f"{best[0]}:{iri.value[len(best[1]):]}"

    def _render_iri(self, iri: Iri) -> str:
        compact = self._compact(iri)
        return compact if compact is not None else f"<{iri.value}>"

    def _render_predicate(self, iri: Iri) -> str:
        if iri.value == vocab.RDF_TYPE:
            return "a"
        return self._render_iri(iri)

    def _render_term(self, term: Term) -> str:
        if isinstance(term, Iri):
            return self._render_iri(term)
        quoted = f'"{_escape(term.text)}"'
        if term.lang:
            return f"{quoted}@{term.lang}"
        if term.datatype != vocab.XSD_STRING:
            return f"{quoted}^^{self._render_iri(Iri(term.datatype))}"
        return quoted

    # -- Matching -----------------------------------------------------------

    def match(self, pattern: TriplePattern) -> "list[dict[str, Term]]":
        """All bindings satisfying the pattern, ordered by the matched triple."""
        bindings = []
        for t in self.triples():
            b = bind_triple(pattern, t)
            if b is not None:
                bindings.append(b)
        return bindings

    # -- Ontology helpers ----------------------------------------------------

    def subclasses_of(self, class_iri: Iri) -> "set[Iri]":
        """Reflexive-transitive subclass closure; terminates on cycles."""
        children: "dict[Iri, set[Iri]]" = {}
        for t in self._triples:
            if t.predicate.value == vocab.RDFS_SUBCLASS_OF and isinstance(t.object, Iri):
                children.setdefault(t.object, set()).add(t.subject)
        closure = {class_iri}
        frontier = [class_iri]
        while frontier:
            node = frontier.pop()
            for child in children.get(node, ()):
                if child not in closure:
                    closure.add(child)
                    frontier.append(child)
        return closure

    def observable_properties(self) -> "set[Iri]":
        """Declared observable properties plus everything below them."""
        declared = {
            t.subject
            for t in self._triples
            if t.predicate.value == vocab.RDF_TYPE
            and isinstance(t.object, Iri)
            and t.object.value == vocab.SOSA_OBSERVABLE_PROPERTY
        }
        out: "set[Iri]" = set()
        for prop in declared:
            out |= self.subclasses_of(prop)
        return out

    def label_of(self, iri: Iri) -> Optional[str]:
        for t in self._triples:
            if t.subject == iri and t.predicate.value == vocab.RDFS_LABEL and isinstance(t.object, Literal):
                return t.object.text
        return None

    def structure_def(self, property_iri: Iri) -> StructureDef:
        acc = ""
        results = ""
        hints: list[str] = []
        for t in self.triples():
            if t.subject != property_iri or not isinstance(t.object, Literal):
                continue
            if t.predicate.value == vocab.TASI_ACC_LIM_LOCATION:
                acc = t.object.text
            elif t.predicate.value == vocab.TASI_RESULTS_LOCATION:
                results = t.object.text
            elif t.predicate.value == vocab.TASI_COLUMN_HINT:
                hints.append(t.object.text)
        return StructureDef(property_iri, acc, results, tuple(hints))

    # -- Report metadata -----------------------------------------------------

    def report_iri(self, reference: str) -> Iri:
        return Iri(vocab.TASI_REPORT + reference)

    def has_report(self, reference: str) -> bool:
        probe = Triple(self.report_iri(reference), Iri(vocab.RDF_TYPE), Iri(vocab.TASI_TEST_REPORT))
        return probe in self._triples

    def register_report(self, meta: ReportMeta, update: bool = False) -> "list[Triple]":
        """Insert the metadata shape for one report; returns the new triples.

        Emits the type triple, one reports link per observable property, and
        the six scalar properties (date, name, reference, validation,
        location).  Raises DuplicateReport unless update mode was requested.
        """
        subject = self.report_iri(meta.reference)
        if self.has_report(meta.reference):
            if not update:
                raise DuplicateReport(f"report {meta.reference!r} already registered")
            for t in [t for t in self._triples if t.subject == subject]:
                self.discard(t)
        if not meta.properties:
            log.warning("report %s registered with no observable properties", meta.reference)
        triples = [Triple(subject, Iri(vocab.RDF_TYPE), Iri(vocab.TASI_TEST_REPORT))]
        for prop in meta.properties:
            triples.append(Triple(subject, Iri(vocab.TASI_REPORTS), prop))
        triples.extend(
            [
                Triple(subject, Iri(vocab.TASI_TEST_REPORT_DATE), Literal(meta.date, datatype=vocab.XSD_DATETIME)),
                Triple(subject, Iri(vocab.TASI_TEST_REPORT_NAME), Literal(meta.name)),
                Triple(subject, Iri(vocab.TASI_TEST_REPORT_REFERENCE), Literal(meta.reference)),
                Triple(subject, Iri(vocab.TASI_TEST_REPORT_VALIDATION), Literal(meta.validation)),
                Triple(subject, Iri(vocab.TASI_TEST_REPORT_LOCATION), Literal(meta.location)),
            ]
        )
        for t in triples:
            self.add(t)
        return triples

    def set_report_validation(self, reference: str, status: str) -> None:
        subject = self.report_iri(reference)
        pred = Iri(vocab.TASI_TEST_REPORT_VALIDATION)
        for t in [t for t in self._triples if t.subject == subject and t.predicate == pred]:
            self.discard(t)
        self.add(Triple(subject, pred, Literal(status)))

    def report_meta(self, reference: str) -> Optional[ReportMeta]:
        subject = self.report_iri(reference)
        if not self.has_report(reference):
            return None
        fields = {"name": "", "date": "", "location": "", "validation": ""}
        props: list[Iri] = []
        for t in self.triples():
            if t.subject != subject:
                continue
            p = t.predicate.value
            if p == vocab.TASI_REPORTS and isinstance(t.object, Iri):
                props.append(t.object)
            elif isinstance(t.object, Literal):
                if p == vocab.TASI_TEST_REPORT_NAME:
                    fields["name"] = t.object.text
                elif p == vocab.TASI_TEST_REPORT_DATE:
                    fields["date"] = t.object.text
                elif p == vocab.TASI_TEST_REPORT_LOCATION:
                    fields["location"] = t.object.text
                elif p == vocab.TASI_TEST_REPORT_VALIDATION:
                    fields["validation"] = t.object.text
        return ReportMeta(
            reference=reference,
            name=fields["name"],
            date=fields["date"],
            location=fields["location"],
            validation=fields["validation"],
            properties=tuple(props),
        )


def bind_triple(pattern: TriplePattern, triple: Triple) -> "Optional[dict[str, Term]]":
    """Unify a pattern with a concrete triple; None when they do not match."""
    binding: "dict[str, Term]" = {}
    for pat, actual in (
        (pattern.subject, triple.subject),
        (pattern.predicate, triple.predicate),
        (pattern.object, triple.object),
    ):
        if isinstance(pat, Var):
            bound = binding.get(pat.name)
            if bound is None:
                binding[pat.name] = actual
            elif bound != actual:
                return None
        elif pat != actual:
            return None
    return binding


def load_turtle_subset(text: str, prefixes: Optional["dict[str, str]"] = None) -> TripleStore:
    """Convenience: parse Turtle-subset text into a fresh store."""
    store = TripleStore(prefixes)
    store.load_turtle_subset(text)
    return store
