"""Key orders, stratified fixpoint, step application, precondition matching.

The expected closure contents below were derived by hand from the rules
before the engine existed and are asserted verbatim.
"""

import pytest

from lockforge import knowledge
from lockforge.errors import KeyOrderError, StratificationError, ValidationError
from lockforge.kernel import (
    Atom,
    Evaluator,
    KeyOrder,
    Placement,
    apply_step_sequential,
    apply_steps_atomic,
    check_constraints,
    instance_nodes,
    interference_horizon,
    key_order_closure,
    match_precondition,
    stratify,
)
from lockforge.knowledge import Step


def lt(a, b):
    return Atom("lt", (a, b))


def eq(a, b):
    return Atom("eq", (a, b))


# ---- key orders


def test_transitive_closure_of_lt():
    order = key_order_closure([lt("kh", "kx"), lt("kx", "kt")])
    assert order.holds_lt("kh", "kx")
    assert order.holds_lt("kx", "kt")
    assert order.holds_lt("kh", "kt")
    assert not order.holds_lt("kt", "kh")
    assert order.chain() == ("kh", "kx", "kt")


def test_three_cycle_rejected():
    with pytest.raises(KeyOrderError):
        key_order_closure([lt("a", "b"), lt("b", "c"), lt("c", "a")])


def test_eq_merges_classes():
    order = key_order_closure([lt("ka", "kb"), eq("kb", "kc")])
    assert order.holds_eq("kb", "kc")
    assert order.holds_eq("kc", "kb")
    assert order.holds_lt("ka", "kc")
    assert set(order.members("kb")) == {"kb", "kc"}


def test_eq_collapsing_strict_pair_rejected():
    with pytest.raises(KeyOrderError):
        key_order_closure([lt("ka", "kb"), eq("ka", "kb")])


def test_order_holds_dispatch():
    order = key_order_closure([lt("ka", "kb")])
    assert order.holds("lt", "ka", "kb")
    assert not order.holds("lt", "kb", "ka")
    assert order.holds("eq", "ka", "ka")
    assert not order.holds("eq", "ka", "kb")
    assert not order.holds("lt", "ka", "kz")  # unknown key


def test_with_key_gap_placement():
    base = key_order_closure([lt("ka", "kc")])
    mid = base.with_key("kb", Placement("gap", 1))
    assert mid.chain() == ("ka", "kb", "kc")
    low = base.with_key("kb", Placement("gap", 0))
    assert low.chain() == ("kb", "ka", "kc")
    high = base.with_key("kb", Placement("gap", 2))
    assert high.chain() == ("ka", "kc", "kb")


def test_with_key_merge_placement():
    base = key_order_closure([lt("ka", "kc")])
    merged = base.with_key("kb", Placement("merge", 1))
    assert merged.holds_eq("kb", "kc")
    assert merged.holds_lt("ka", "kb")


def test_placements_enumeration():
    base = key_order_closure([lt("ka", "kb")])
    kinds = [(p.kind, p.index) for p in base.placements()]
    assert ("gap", 0) in kinds and ("gap", 1) in kinds and ("gap", 2) in kinds
    assert ("merge", 0) in kinds and ("merge", 1) in kinds
    assert len(kinds) == 5


def test_placement_describe():
    chain = ("ka", "kb")
    assert Placement("gap", 0).describe(chain) == "below ka"
    assert Placement("gap", 1).describe(chain) == "between ka and kb"
    assert Placement("gap", 2).describe(chain) == "above kb"
    assert Placement("merge", 1).describe(chain) == "equal to kb"


def test_to_atoms_round_trip():
    order = key_order_closure([lt("ka", "kb"), eq("kb", "kc")])
    again = key_order_closure(order.to_atoms())
    assert again.chain() == order.chain()
    assert again.holds_eq("kb", "kc")


# ---- stratification


def test_list_theory_stratifies(linked_list):
    strata = stratify(linked_list.theory)
    assert len(strata) >= 1
    assert sum(len(s) for s in strata) == sum(
        1 for r in linked_list.theory.rules if r.head is not None
    )


def test_negation_cycle_rejected():
    text = "p(X) :- q(X), not(r(X)).\nr(X) :- q(X), not(p(X)).\nq(a)."
    th = knowledge.parse_theory(text)
    with pytest.raises(StratificationError):
        stratify(th)


def test_negation_across_strata_allowed():
    text = "p(X) :- q(X), not(r(X)).\nr(b).\nq(a).\nq(b)."
    th = knowledge.parse_theory(text)
    ev = Evaluator(th)
    order = key_order_closure([])
    closure = ev.closure(frozenset([Atom("q", ("a",)), Atom("q", ("b",)), Atom("r", ("b",))]), order)
    assert Atom("p", ("a",)) in closure
    assert Atom("p", ("b",)) not in closure


# ---- the hand-derived list fixpoint


def chain_facts(names):
    facts = set()
    for n in names:
        facts.add(Atom("node", (n,)))
        facts.add(Atom("key", (n, "k" + n)))
    for a, b in zip(names, names[1:]):
        facts.add(Atom("edge", (a, b)))
    return frozenset(facts)


def chain_order(names):
    return key_order_closure([lt("k" + a, "k" + b) for a, b in zip(names, names[1:])])


def test_list_closure_matches_hand_derivation(linked_list):
    facts = chain_facts(["h", "x", "t"])
    order = chain_order(["h", "x", "t"])
    closure = linked_list.evaluator.closure(facts, order)
    core = {a for a in closure if a.pred in ("reach", "suffix", "list", "present")}
    assert core == {
        Atom("reach", ("h",)),
        Atom("reach", ("x",)),
        Atom("reach", ("t",)),
        Atom("suffix", ("h",)),
        Atom("suffix", ("x",)),
        Atom("suffix", ("t",)),
        Atom("list", ()),
        Atom("present", ("kh",)),
        Atom("present", ("kx",)),
        Atom("present", ("kt",)),
    }
    traversal = {a for a in closure if a.pred in ("next_node", "end_node")}
    assert traversal == {
        Atom("next_node", ("h", "x", "x")),
        Atom("next_node", ("h", "x", "t")),
        Atom("next_node", ("x", "t", "t")),
        Atom("end_node", ("t",)),
    }


def test_broken_chain_violates_invariant(linked_list):
    facts = chain_facts(["h", "x", "t"]) - {Atom("edge", ("x", "t"))}
    order = chain_order(["h", "x", "t"])
    closure = linked_list.evaluator.closure(facts, order)
    violation = check_constraints(linked_list.theory, closure, order)
    assert violation is not None
    assert str(violation) == "list"


def test_misordered_keys_violate_invariant(linked_list):
    facts = chain_facts(["h", "x", "t"])
    order = key_order_closure([lt("kx", "kh"), lt("kh", "kt")])
    closure = linked_list.evaluator.closure(facts, order)
    assert check_constraints(linked_list.theory, closure, order) is not None


def test_headless_constraint_detected():
    th = knowledge.parse_theory("flag.\ninvariant(flag).\n:- edge(X, X).\nfluent(edge).")
    ev = Evaluator(th)
    order = key_order_closure([])
    ok = ev.closure(frozenset([Atom("edge", ("a", "b"))]), order)
    assert check_constraints(th, ok, order) is None
    bad = ev.closure(frozenset([Atom("edge", ("a", "a"))]), order)
    violation = check_constraints(th, bad, order)
    assert violation is not None
    assert violation.name == "constraint"


def test_closure_cached_per_facts_and_order(linked_list):
    facts = chain_facts(["h", "x", "t"])
    order = chain_order(["h", "x", "t"])
    first = linked_list.evaluator.closure(facts, order)
    second = linked_list.evaluator.closure(facts, order)
    assert first is second


# ---- field granular step application


def test_step_overwrites_only_its_cell(internal_bst):
    kinds = internal_bst.operations.step_kinds
    state = frozenset([Atom("left", ("a", "b")), Atom("right", ("a", "c"))])
    out = apply_step_sequential(state, Step("link_left", ("a", "d")), kinds)
    assert out == frozenset([Atom("left", ("a", "d")), Atom("right", ("a", "c"))])


def test_step_leaves_other_nodes_alone(internal_bst):
    kinds = internal_bst.operations.step_kinds
    state = frozenset([Atom("left", ("a", "b")), Atom("left", ("z", "w"))])
    out = apply_step_sequential(state, Step("link_left", ("a", "d")), kinds)
    assert Atom("left", ("z", "w")) in out
    assert Atom("left", ("a", "b")) not in out


def test_atomic_block_equals_sequential_composition(internal_bst):
    kinds = internal_bst.operations.step_kinds
    state = frozenset([Atom("left", ("a", "b")), Atom("right", ("a", "c"))])
    steps = [Step("link_left", ("a", "d")), Step("right", ("a", "e"))]
    steps = [Step("link_left", ("a", "d")), Step("link_right", ("a", "e"))]
    atomic = apply_steps_atomic(state, steps, kinds)
    seq = state
    for s in steps:
        seq = apply_step_sequential(seq, s, kinds)
    assert atomic == seq


def test_unknown_step_kind_raises(internal_bst):
    with pytest.raises(KeyError):
        apply_step_sequential(frozenset(), Step("hop", ("a", "b")), internal_bst.operations.step_kinds)


# ---- precondition matching


def test_insert_binds_both_windows(linked_list):
    block = linked_list.block("insert", "block1")
    inst = linked_list.instance
    bindings = match_precondition(
        linked_list.theory, inst.facts, inst.key_order, block, linked_list.evaluator
    )
    windows = sorted(dict(b.assignment)["x"] for b in bindings)
    assert windows == ["h", "x"]
    for b in bindings:
        assert b.fresh == (("target", "target"),)
        assert len(b.placements) == 1
        assert b.placements[0][1].kind == "gap"


def test_delete_binds_single_victim(linked_list):
    block = linked_list.block("delete", "block1")
    inst = linked_list.instance
    bindings = match_precondition(
        linked_list.theory, inst.facts, inst.key_order, block, linked_list.evaluator
    )
    assert len(bindings) == 1
    assert bindings[0].env()["target"] == "x"
    assert bindings[0].fresh == ()


def test_fresh_suffix_applied(linked_list):
    block = linked_list.block("insert", "block1")
    inst = linked_list.instance
    bindings = match_precondition(
        linked_list.theory, inst.facts, inst.key_order, block, linked_list.evaluator,
        fresh_suffix="_t7",
    )
    assert all(b.env()["target"] == "target_t7" for b in bindings)


def test_pinned_env_restricts_windows(linked_list):
    block = linked_list.block("insert", "block1")
    inst = linked_list.instance
    bindings = match_precondition(
        linked_list.theory, inst.facts, inst.key_order, block, linked_list.evaluator,
        pinned_env={"x": "x"},
    )
    assert len(bindings) == 1
    assert bindings[0].env()["y"] == "t"


def test_binding_extends_key_order(linked_list):
    block = linked_list.block("insert", "block1")
    inst = linked_list.instance
    binding = match_precondition(
        linked_list.theory, inst.facts, inst.key_order, block, linked_list.evaluator
    )[0]
    order = binding.extend_key_order(inst.key_order)
    ktarget = "k" + binding.env()["target"]
    kx = "k" + binding.env()["x"]
    ky = "k" + binding.env()["y"]
    assert order.holds_lt(kx, ktarget)
    assert order.holds_lt(ktarget, ky)


def test_instance_nodes_sorted(linked_list):
    assert instance_nodes(linked_list.instance.facts, linked_list.theory) == ["h", "t", "x"]


# ---- incremental closure under fresh key placements


def test_placement_closure_equals_full_closure(linked_list, external_bst):
    for bundle, op in ((linked_list, "insert"), (external_bst, "insert")):
        block = bundle.block(op, "block1")
        inst = bundle.instance
        info = knowledge.block_nodes(block, bundle.theory)
        facts = set(inst.facts)
        fresh_syms = []
        for v in info.fresh:
            facts.add(Atom("node", (v,)))
            facts.add(Atom("key", (v, "k" + v)))
            fresh_syms += [v, "k" + v]
        facts = frozenset(facts)
        base = inst.key_order
        ev = bundle.evaluator
        ev.closure(facts, base)  # populate layers
        fresh_keys = [s for s in fresh_syms if s.startswith("k")]
        orders = [base.with_key(fresh_keys[0], p) for p in base.placements()]
        if len(fresh_keys) > 1:
            orders = [o.with_key(fresh_keys[1], p) for o in orders for p in o.placements()]
        checked = 0
        for order in orders:
            try:
                order.chain()
            except KeyOrderError:
                continue
            fast = ev.closure_with_placement(facts, base, order, tuple(fresh_syms))
            slow = Evaluator(bundle.theory).closure(facts, order)
            assert fast == slow
            checked += 1
        assert checked > 0


# ---- interference horizon


def test_time_zero_binding_counts(linked_list, external_bst, internal_bst, external_rb):
    for bundle, expected in (
        (linked_list, 3),
        (external_bst, 4),
        (internal_bst, 7),
        (external_rb, 7),
    ):
        inst = bundle.instance
        count = interference_horizon(
            bundle.theory, bundle.operations, inst.facts, inst.key_order, bundle.evaluator
        )
        assert count == expected, bundle.name
