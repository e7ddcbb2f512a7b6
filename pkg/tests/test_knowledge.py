"""Theory and operation parsing, node planning, cross validation."""

import pytest

from lockforge import knowledge
from lockforge.knowledge import Atom, Literal, Step
from lockforge.errors import ValidationError


LIST_THEORY = """
list :- edge(h, X), key(h, KH), key(X, KX), lt(KH, KX), suffix(X).
suffix(t).
suffix(X) :- edge(X, Y), key(X, KX), key(Y, KY), lt(KX, KY), suffix(Y).
reach(h).
reach(X) :- edge(Y, X), reach(Y).
present(K) :- reach(X), key(X, K).
invariant(list).
fluent(list).
fluent(reach).
fluent(edge).
fluent(suffix).
fluent(present).
"""

LIST_OPS = """
operation(insert).
operation(delete).
atomic_step(link).
modifies(link(x, y), x).
causes(link(x, y), edge(x, y)).
precondition(insert, block1, [reach(x), edge(x, y), key(x, kx), key(y, ky),
    lt(kx, ktarget), lt(ktarget, ky), not(reach(target)), key(target, ktarget)]).
program_steps(insert, block1, [link(x, target), link(target, y)]).
postcondition(insert, block1, [reach(target)]).
precondition(delete, block1, [reach(x), edge(x, target), edge(target, y),
    key(x, kx), key(target, ktarget), key(y, ky)]).
program_steps(delete, block1, [link(x, y)]).
postcondition(delete, block1, [not(reach(target))]).
"""


# ---- theory parsing


def test_theory_registry_and_roles():
    th = knowledge.parse_theory(LIST_THEORY)
    assert th.registry["edge"] == 2
    assert th.registry["list"] == 0
    assert th.invariants == ("list",)
    assert th.fluents == frozenset({"list", "reach", "edge", "suffix", "present"})
    assert "suffix" in th.derived
    assert "edge" in th.base_predicates
    assert th.is_constant("h") and th.is_constant("t")
    assert not th.is_constant("x")


def test_theory_detects_reachability_predicate():
    th = knowledge.parse_theory(LIST_THEORY)
    assert th.reachability == "reach"


def test_bundled_list_theory_matches_inline(linked_list):
    th = linked_list.theory
    assert th.invariants == ("list",)
    assert th.reachability == "reach"
    assert {"list", "reach", "suffix", "present", "next_node"} <= th.derived


def test_theory_to_text_round_trip():
    th = knowledge.parse_theory(LIST_THEORY)
    again = knowledge.parse_theory(th.to_text())
    assert again.registry == th.registry
    assert again.fluents == th.fluents
    assert again.invariants == th.invariants
    assert len(again.rules) == len(th.rules)


def test_arity_clash_rejected():
    with pytest.raises(ValidationError) as err:
        knowledge.parse_theory("p(X) :- q(X, Y).\nq(a, b).\np(a, b).")
    assert "arities" in str(err.value)


def test_unsafe_rule_rejected():
    with pytest.raises(ValidationError) as err:
        knowledge.parse_theory("p(X) :- lt(X, Y).")
    assert "range-restricted" in str(err.value)


def test_constant_directive():
    th = knowledge.parse_theory("reach(root).\nconstant(extra).\nfluent(reach).")
    assert th.is_constant("extra")
    assert "constant(extra)." in th.to_text()


# ---- operation parsing


def test_operations_structure_and_kinds():
    ops = knowledge.parse_operations(LIST_OPS)
    assert ops.structure is None  # three-argument form carries no tag
    assert set(ops.step_kinds) == {"link"}
    kind = ops.step_kinds["link"]
    assert (kind.arity, kind.caused) == (2, "edge")
    assert kind.field == "next"


def test_bundled_operations_carry_structure_tag(linked_list):
    ops = linked_list.operations
    assert ops.structure == "linked_list"
    assert [op.name for op in ops.operations] == ["insert", "delete"]


def test_precondition_literals_parsed():
    ops = knowledge.parse_operations(LIST_OPS)
    block = ops.operation("insert").blocks["block1"]
    lits = block.precondition
    assert lits[0] == Literal(Atom("reach", ("x",)), True)
    negated = [l for l in lits if not l.positive]
    assert negated == [Literal(Atom("reach", ("target",)), False)]
    assert block.steps == (Step("link", ("x", "target")), Step("link", ("target", "y")))
    assert block.postcondition == (Literal(Atom("reach", ("target",)), True),)


def test_case_names_normalize_to_blocks():
    ops = knowledge.parse_operations(LIST_OPS.replace("block1", "case1"))
    assert "block1" in ops.operation("insert").blocks


def test_undeclared_step_kind_rejected():
    with pytest.raises(ValidationError):
        knowledge.parse_operations(LIST_OPS.replace("atomic_step(link).", ""))


def test_step_substitution():
    step = Step("link", ("x", "target"))
    assert step.substitute({"x": "h", "target": "n0"}) == Step("link", ("h", "n0"))
    assert str(step) == "link(x, target)"


# ---- node planning


def test_block_nodes_roles(linked_list):
    block = linked_list.block("insert", "block1")
    info = knowledge.block_nodes(block, linked_list.theory)
    assert info.nodes == ("x", "y", "target")
    assert info.fresh == ("target",)
    assert info.key_of == {"x": "kx", "y": "ky", "target": "ktarget"}
    assert info.lock_order == ("x", "target", "y")


def test_external_bst_lock_and_allocation_order(external_bst):
    block = external_bst.block("insert", "block1")
    info = knowledge.block_nodes(block, external_bst.theory)
    assert info.lock_order == ("x", "target", "internal", "y")
    assert info.fresh == ("internal", "target")
    assert knowledge.allocation_order(block, external_bst.theory) == ("internal", "target")


def test_allocation_order_only_fresh_nodes(linked_list):
    block = linked_list.block("delete", "block1")
    assert knowledge.allocation_order(block, linked_list.theory) == ()


# ---- cross validation


def test_validate_knowledge_clean_on_bundled(linked_list):
    assert knowledge.validate_knowledge(linked_list.theory, linked_list.operations) == []


def test_validate_knowledge_flags_unknown_predicate():
    ops = knowledge.parse_operations(LIST_OPS.replace("reach(x)", "reachz(x)"))
    th = knowledge.parse_theory(LIST_THEORY)
    diags = knowledge.validate_knowledge(th, ops)
    assert any("reachz" in d.message for d in diags)
