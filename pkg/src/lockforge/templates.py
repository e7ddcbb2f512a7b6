"""Annotated C++ traversal templates and variable mapping tables.

A template is raw C++ whose synchronization points carry @@ annotations:
anchors "@@<operation>::<blockN>" mark where a generated block goes, and the
four markers (begin/end of destructive update, begin/end of traversal) wrap
regions the RCU renderer rewrites. A mapping table relates traversal-code
variable names to precondition node names and supplies validation snippets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .dsl import Name, Struct, Text, parse_program
from .errors import ParseError, ValidationError
from .knowledge import OperationSet

MARKERS = (
    "@@begin-destructive-update",
    "@@end-destructive-update",
    "@@begin-traversal",
    "@@end-traversal",
)

_ANCHOR_RE = re.compile(r"@@([A-Za-z_][A-Za-z0-9_]*)::([A-Za-z_][A-Za-z0-9_]*)")


@dataclass(frozen=True)
class Anchor:
    operation: str
    block: str
    offset: int
    length: int
    line: int
    indent: str

    @property
    def token(self) -> str:
        return f"@@{self.operation}::{self.block}"


@dataclass
class CodeTemplate:
    source: str
    anchors: list[Anchor]
    markers: dict[str, list[int]] = field(default_factory=dict)

    def anchor_for(self, block: str) -> Anchor | None:
        for a in self.anchors:
            if a.block == block:
                return a
        return None

    def has_marker(self, name: str) -> bool:
        return bool(self.markers.get(name))


def _line_and_indent(text: str, offset: int) -> tuple[int, str]:
    line = text.count("\n", 0, offset) + 1
    start = text.rfind("\n", 0, offset) + 1
    prefix = text[start:offset]
    indent = prefix if prefix.strip() == "" else re.match(r"[ \t]*", prefix).group(0)
    return line, indent


def parse_template(text: str) -> CodeTemplate:
    """Scan raw C++ for @@ annotations.

    Every "@@" in the source must begin either a marker or a well-formed
    "@@op::block" anchor; anything else (a single colon, a bare name) is a
    syntax error with its line number.
    """
    anchors: list[Anchor] = []
    markers: dict[str, list[int]] = {m: [] for m in MARKERS}
    pos = 0
    while True:
        pos = text.find("@@", pos)
        if pos < 0:
            break
        marker = next((m for m in MARKERS if text.startswith(m, pos)), None)
        if marker is not None:
            markers[marker].append(pos)
            pos += len(marker)
            continue
        m = _ANCHOR_RE.match(text, pos)
        line, indent = _line_and_indent(text, pos)
        if m is None:
            snippet = text[pos : pos + 24].split("\n")[0]
            raise ParseError(f"malformed annotation {snippet!r}", line=line)
        anchors.append(
            Anchor(
                operation=m.group(1),
                block=m.group(2),
                offset=pos,
                length=m.end() - pos,
                line=line,
                indent=indent,
            )
        )
        pos = m.end()
    return CodeTemplate(source=text, anchors=anchors, markers=markers)


def anchor_matches_operation(anchor: Anchor, operation: str) -> bool:
    """Anchor names may decorate the operation name with a suffix.

    "@@insert_ext_tree::block1" belongs to operation "insert": an anchor
    matches when its name equals the operation or extends it with "_...".
    """
    return anchor.operation == operation or anchor.operation.startswith(operation + "_")


# ---------------------------------------------------------------------------
# mapping tables


@dataclass
class MappingTable:
    structure: str | None
    variables: dict[tuple[str, str, str], str]
    rvalues: dict[tuple[str, str, str], str]
    validations: dict[tuple[str, str], str]

    def variable_for(self, operation: str, block: str, node: str) -> str | None:
        return self.variables.get((operation, block, node))

    def rvalue_for(self, operation: str, block: str, expr: str) -> str | None:
        return self.rvalues.get((operation, block, expr))

    def validation_for(self, operation: str, block: str) -> str | None:
        return self.validations.get((operation, block))


def _plain(term, what: str, line: int) -> str:
    if isinstance(term, Name):
        return term.value
    if isinstance(term, Text):
        return term.value
    raise ParseError(f"expected a plain {what}", line=line)


def parse_mappings(text: str, operations: OperationSet | None = None) -> MappingTable:
    """Read mapping/5, mapping_r_value/5 and validate/4 facts.

    The leading structure-name argument is optional in every form. When an
    operation set is supplied, entries naming unknown blocks are rejected.
    """
    structure: str | None = None
    variables: dict[tuple[str, str, str], str] = {}
    rvalues: dict[tuple[str, str, str], str] = {}
    validations: dict[tuple[str, str], str] = {}

    known: set[tuple[str, str]] | None = None
    if operations is not None:
        known = {(b.operation, b.block) for b in operations.all_blocks()}

    def norm(args: list, expect: int, line: int) -> list:
        if len(args) == expect + 1:
            nonlocal structure
            structure = _plain(args[0], "structure name", line)
            args = args[1:]
        if len(args) != expect:
            raise ParseError(f"expected {expect} or {expect + 1} arguments", line=line)
        return args

    def check_block(op: str, block: str, line: int) -> None:
        if known is not None and (op, block) not in known:
            raise ValidationError(f"line {line}: unknown block {op}/{block}")

    for clause in parse_program(text):
        if not clause.is_fact or not isinstance(clause.head, Struct):
            raise ParseError("mapping files contain facts only", line=clause.line)
        fact = clause.head
        line = clause.line
        if fact.functor == "mapping":
            a = norm(list(fact.args), 4, line)
            op, block = _plain(a[0], "operation", line), _plain(a[1], "block", line)
            cpp, node = _plain(a[2], "variable", line), _plain(a[3], "node", line)
            check_block(op, block, line)
            key = (op, block, node)
            if key in variables:
                raise ValidationError(f"line {line}: duplicate mapping for node {node}")
            variables[key] = cpp
        elif fact.functor == "mapping_r_value":
            a = norm(list(fact.args), 4, line)
            op, block = _plain(a[0], "operation", line), _plain(a[1], "block", line)
            expr, cpp = _plain(a[2], "expression", line), _plain(a[3], "value", line)
            check_block(op, block, line)
            key = (op, block, expr)
            if key in rvalues:
                raise ValidationError(f"line {line}: duplicate r-value mapping for {expr}")
            rvalues[key] = cpp
        elif fact.functor == "validate":
            a = norm(list(fact.args), 3, line)
            op, block = _plain(a[0], "operation", line), _plain(a[1], "block", line)
            snippet = _plain(a[2], "validation snippet", line)
            check_block(op, block, line)
            key = (op, block)
            if key in validations:
                raise ValidationError(f"line {line}: duplicate validation for {op}/{block}")
            validations[key] = snippet
        else:
            raise ParseError(f"unknown mapping fact {fact.functor}", line=line)
    return MappingTable(structure, variables, rvalues, validations)
