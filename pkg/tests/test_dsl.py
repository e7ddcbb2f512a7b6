"""Parser for the clause language the knowledge files are written in."""

import pytest

from lockforge import dsl
from lockforge.errors import ParseError


def test_parse_single_rule():
    prog = dsl.parse_program("head(X) :- body(X, y), not(other(X)).")
    assert len(prog) == 1
    clause = prog[0]
    assert clause.head == dsl.Struct("head", (dsl.Var("X"),))
    assert clause.body[0] == dsl.Struct("body", (dsl.Var("X"), dsl.Name("y")))
    assert clause.body[1].functor == "not"


def test_parse_fact_and_flag():
    prog = dsl.parse_program("fact(a).\nflag.")
    assert prog[0].head == dsl.Struct("fact", (dsl.Name("a"),))
    assert prog[0].body == ()
    assert prog[1].head == dsl.Name("flag")


def test_parse_headless_constraint():
    prog = dsl.parse_program(":- bad(X).")
    assert prog[0].head is None
    assert prog[0].body == (dsl.Struct("bad", (dsl.Var("X"),)),)


def test_nested_terms_lists_and_strings():
    prog = dsl.parse_program("wide(f(X), [a, b, X], 'quoted text').")
    head = prog[0].head
    assert head.args[0] == dsl.Struct("f", (dsl.Var("X"),))
    assert head.args[1] == dsl.Seq((dsl.Name("a"), dsl.Name("b"), dsl.Var("X")))
    assert head.args[2] == dsl.Text("quoted text")


def test_comments_and_blank_lines_skipped():
    prog = dsl.parse_program("% leading comment\n\np(a).  % trailing\n% another\nq(b).\n")
    assert [c.head.functor for c in prog] == ["p", "q"]


def test_line_numbers_recorded():
    prog = dsl.parse_program("\n\nfirst(a).\n\nsecond(b).")
    assert prog[0].line == 3
    assert prog[1].line == 5


def test_is_variable():
    assert dsl.is_variable("X")
    assert dsl.is_variable("Key")
    assert not dsl.is_variable("x")
    assert not dsl.is_variable("_x")
    assert not dsl.is_variable("")


def test_functor_and_args_helpers():
    prog = dsl.parse_program("p(X, y).\nflag.")
    assert dsl.functor_of(prog[0].head) == "p"
    assert dsl.atom_args(prog[0].head) == ("X", "y")
    assert dsl.functor_of(prog[1].head) == "flag"
    assert dsl.atom_args(prog[1].head) == ()


def test_atom_args_rejects_nesting():
    prog = dsl.parse_program("p(f(X)).")
    with pytest.raises(ParseError):
        dsl.atom_args(prog[0].head)


# ---- error reporting


def test_unterminated_clause():
    with pytest.raises(ParseError) as err:
        dsl.parse_program("head(X")
    assert "line 1" in str(err.value)


def test_missing_final_period():
    with pytest.raises(ParseError):
        dsl.parse_program("p(X) :- q(X)")


def test_stray_token_position():
    with pytest.raises(ParseError) as err:
        dsl.parse_program("a..")
    assert "col 3" in str(err.value)


def test_empty_argument_list_rejected():
    with pytest.raises(ParseError):
        dsl.parse_program("head().")


def test_bad_character_reported():
    with pytest.raises(ParseError) as err:
        dsl.parse_program("p(X)! :- q.")
    assert "'!'" in str(err.value)


def test_round_trip_through_str():
    source = "suffix(X) :- edge(X, Y), key(X, KX), key(Y, KY), lt(KX, KY), suffix(Y)."
    prog = dsl.parse_program(source)
    again = dsl.parse_program(str(prog[0]) + ("" if str(prog[0]).endswith(".") else "."))
    assert again[0].head == prog[0].head
    assert again[0].body == prog[0].body
