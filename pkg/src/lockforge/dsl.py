"""Prolog-style surface syntax shared by every knowledge file.

The grammar is deliberately small: facts, rules (`head :- body.`),
constraints (`:- body.`), bracketed literal lists, `not` negation in both
its prefix (`not p(X)`) and call (`not(p(x))`) spellings, infix `<` as sugar
for `lt/2`, single-quoted strings, and `->` field access inside argument
positions. `%` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError

# ---------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class Name:
    """A constant symbol. Field-access chains (a->key) fold into one Name."""

    value: str

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Text:
    """A single-quoted opaque string."""

    value: str

    def __str__(self) -> str:
        return "'" + self.value + "'"


@dataclass(frozen=True)
class Struct:
    functor: str
    args: tuple["TermT", ...]

    def __str__(self) -> str:
        return f"{self.functor}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Seq:
    """A bracketed list of terms."""

    items: tuple["TermT", ...]

    def __str__(self) -> str:
        return "[" + ", ".join(str(i) for i in self.items) + "]"


TermT = Name | Var | Text | Struct | Seq


@dataclass(frozen=True)
class Clause:
    """One statement: fact (empty body), rule, or headless constraint."""

    head: TermT | None
    body: tuple[TermT, ...]
    line: int

    @property
    def is_fact(self) -> bool:
        return self.head is not None and not self.body

    @property
    def is_constraint(self) -> bool:
        return self.head is None

    def __str__(self) -> str:
        if self.is_fact:
            return f"{self.head}."
        body = ", ".join(str(b) for b in self.body)
        if self.head is None:
            return f":- {body}."
        return f"{self.head} :- {body}."


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<string>'[^']*')
  | (?P<arrow>->)
  | (?P<implies>:-)
  | (?P<ident>[a-z_][A-Za-z0-9_]*)
  | (?P<var>[A-Z][A-Za-z0-9_]*)
  | (?P<punct>[()\[\],.<])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        raw = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, raw, line, col))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = m.end()
    return toks


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else None
            raise ParseError("unexpected end of input", last.line if last else 1)
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    # -- terms ------------------------------------------------------------

    def term(self) -> TermT:
        tok = self.next()
        if tok.kind == "string":
            return Text(tok.text[1:-1])
        if tok.kind == "var":
            return self._maybe_fields(Var(tok.text))
        if tok.kind == "ident":
            if self.at("("):
                self.next()
                args = [self.term_in_list()]
                while self.at(","):
                    self.next()
                    args.append(self.term_in_list())
                self.expect(")")
                return Struct(tok.text, tuple(args))
            return self._maybe_fields(Name(tok.text))
        if tok.text == "[":
            items: list[TermT] = []
            if not self.at("]"):
                items.append(self.element())
                while self.at(","):
                    self.next()
                    items.append(self.element())
            self.expect("]")
            return Seq(tuple(items))
        raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.col)

    def _maybe_fields(self, base: Name | Var) -> TermT:
        # fold `a->key` chains into a single constant name
        parts = [str(base)]
        while self.at("->"):
            self.next()
            nxt = self.next()
            if nxt.kind not in ("ident", "var"):
                raise ParseError("expected field name after ->", nxt.line, nxt.col)
            parts.append(nxt.text)
        if len(parts) == 1:
            return base
        return Name("->".join(parts))

    def term_in_list(self) -> TermT:
        """A struct argument: a plain term or a bracketed literal list."""
        term = self.term()
        if self.at("<"):
            self.next()
            rhs = self.term()
            return Struct("lt", (term, rhs))
        return term

    def element(self) -> TermT:
        """A body or list element: allows `not` prefix and infix `<`."""
        tok = self.peek()
        if tok is not None and tok.text == "not":
            nxt = self.toks[self.i + 1] if self.i + 1 < len(self.toks) else None
            if nxt is not None and nxt.text == "(":
                pass  # not(...) parses as an ordinary struct below
            else:
                self.next()
                inner = self.element()
                return Struct("not", (inner,))
        return self.term_in_list()

    # -- clauses ----------------------------------------------------------

    def clause(self) -> Clause:
        tok = self.peek()
        assert tok is not None
        line = tok.line
        if tok.text == ":-":
            self.next()
            body = self.body()
            self.expect(".")
            return Clause(None, body, line)
        head = self.term()
        if self.at(":-"):
            self.next()
            body = self.body()
            self.expect(".")
            return Clause(head, body, line)
        self.expect(".")
        return Clause(head, (), line)

    def body(self) -> tuple[TermT, ...]:
        items = [self.element()]
        while self.at(","):
            self.next()
            items.append(self.element())
        return tuple(items)


def parse_program(text: str) -> list[Clause]:
    """Parse a whole file into clauses, raising ParseError with position."""
    parser = _Parser(_tokenize(text))
    clauses = []
    while parser.peek() is not None:
        clauses.append(parser.clause())
    return clauses


# ---------------------------------------------------------------------------
# helpers shared by the loaders


def is_variable(name: str) -> bool:
    return bool(name) and (name[0].isupper())


def functor_of(term: TermT) -> str:
    if isinstance(term, Struct):
        return term.functor
    if isinstance(term, Name):
        return term.value
    raise ParseError(f"expected an atom, found {term}")


def atom_args(term: TermT) -> tuple[str, ...]:
    """Flatten a struct's arguments to plain symbol strings."""
    if isinstance(term, Name):
        return ()
    if not isinstance(term, Struct):
        raise ParseError(f"expected an atom, found {term}")
    out = []
    for arg in term.args:
        if isinstance(arg, (Name, Var)):
            out.append(str(arg))
        elif isinstance(arg, Text):
            out.append(arg.value)
        else:
            raise ParseError(f"nested term {arg} not allowed here")
    return tuple(out)
