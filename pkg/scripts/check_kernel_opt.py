"""Cross-checks for the optimized evaluator against frozen oracle results."""

import sys
import time

sys.path.insert(0, "/root/pkg/src")

from lockforge import knowledge, kernel, analysis
from lockforge.knowledge import Atom


def load(name):
    base = f"/root/pkg/src/lockforge/data/{name}"
    theory = knowledge.parse_theory(open(f"{base}/theory.lp").read())
    ops = knowledge.parse_operations(open(f"{base}/operations.lp").read())
    return theory, ops


def check(label, got, want):
    ok = got == want
    print(("PASS " if ok else "FAIL ") + label + ("" if ok else f"\n  got:  {got}\n  want: {want}"))
    return ok


all_ok = True

# --- linked list closure oracle ----------------------------------------
theory, ops = load("linked_list")
facts = frozenset(
    [
        Atom("edge", ("h", "x")),
        Atom("edge", ("x", "t")),
        Atom("key", ("h", "kh")),
        Atom("key", ("x", "kx")),
        Atom("key", ("t", "kt")),
    ]
)
order = kernel.key_order_closure([Atom("lt", ("kh", "kx")), Atom("lt", ("kx", "kt"))])
ev = kernel.Evaluator(theory)
clo = ev.closure(facts, order)
derived = {a for a in clo if a.pred in {"reach", "suffix", "list", "present"}}
want = {
    Atom("reach", ("h",)),
    Atom("reach", ("x",)),
    Atom("reach", ("t",)),
    Atom("suffix", ("t",)),
    Atom("suffix", ("x",)),
    Atom("suffix", ("h",)),
    Atom("list", ()),
    Atom("present", ("kh",)),
    Atom("present", ("kx",)),
    Atom("present", ("kt",)),
}
all_ok &= check("list closure oracle", derived, want)
all_ok &= check("list order_sensitive", ev.order_sensitive, frozenset({"list", "suffix", "next_node"}))

# --- maximal instances -------------------------------------------------
for name, want_nodes in [
    ("linked_list", ["h", "t", "x"]),
    ("external_bst", ["r", "rl", "rr"]),
    ("internal_bst", ["r", "rl", "rll", "rlr", "rlrl"]),
]:
    theory, ops = load(name)
    found = analysis.find_maximal_instance(theory, ops).instance
    got = sorted(kernel.instance_nodes(found.facts, theory)) if found else None
    all_ok &= check(f"{name} instance nodes", got, want_nodes)

# --- program orders ----------------------------------------------------
theory, ops = load("linked_list")
found = analysis.find_maximal_instance(theory, ops).instance
res = analysis.check_program_order(theory, ops, ops.all_blocks()[0], found)
all_ok &= check("list insert orders", res.accepted, [(1, 0)])
res = analysis.check_program_order(theory, ops, ops.all_blocks()[1], found)
all_ok &= check("list delete orders", res.accepted, [(0,)])

theory, ops = load("external_bst")
found = analysis.find_maximal_instance(theory, ops).instance
res = analysis.check_program_order(theory, ops, ops.all_blocks()[0], found)
all_ok &= check("ext bst block1 orders", res.accepted, [(0, 1, 2), (1, 0, 2)])

theory, ops = load("internal_bst")
found = analysis.find_maximal_instance(theory, ops).instance
for i in (0, 1):
    res = analysis.check_program_order(theory, ops, ops.all_blocks()[i], found)
    all_ok &= check(f"internal insert block{i+1} orders", res.accepted, [(1, 0)])
res = analysis.check_program_order(theory, ops, ops.all_blocks()[2], found)
all_ok &= check("internal delete orders", res.accepted, [])

# --- extension closure == full closure on real match calls -------------
theory, ops = load("internal_bst")
found = analysis.find_maximal_instance(theory, ops).instance
ev = kernel.Evaluator(theory)
print("internal order_sensitive:", sorted(ev.order_sensitive))
block = ops.all_blocks()[0]
bindings = kernel.match_precondition(theory, found.facts, found.key_order, block, ev, fresh_suffix="_t")
print(f"internal insert block1 bindings at t0: {len(bindings)}")
mismatch = 0
checked = 0
for b in bindings:
    aug = frozenset(set(found.facts) | set(b.fresh_facts()))
    order2 = b.extend_key_order(found.key_order)
    fresh_syms = tuple(s for _, c in b.fresh for s in (c, "k" + c))
    fast = ev.closure_with_placement(aug, found.key_order, order2, fresh_syms)
    ev2 = kernel.Evaluator(theory)
    full = ev2.closure(aug, order2)
    checked += 1
    if fast != full:
        mismatch += 1
        print("  MISMATCH", b.assignment, b.placements)
        print("   fast-full:", sorted(map(str, fast - full))[:6])
        print("   full-fast:", sorted(map(str, full - fast))[:6])
all_ok &= check(f"extension==full on {checked} accepted bindings", mismatch, 0)

# also cross-check on rejected placements: enumerate every placement for one window
info = knowledge.block_nodes(block, theory)
envs = [dict(b.assignment) for b in bindings[:3]]
probe = 0
bad = 0
for env in envs:
    fresh_keys = [info.key_of[v] for v in info.fresh if v in info.key_of]
    conc_key_of = {info.key_of[v]: "k" + v + "_t" for v in info.fresh if v in info.key_of}
    aug = set(found.facts)
    for v in info.fresh:
        aug.add(Atom("node", (v + "_t",)))
        aug.add(Atom("key", (v + "_t", "k" + v + "_t")))
    aug = frozenset(aug)
    fresh_syms = tuple(s for v in info.fresh for s in (v + "_t", "k" + v + "_t"))
    for order2, placements in kernel._enumerate_placements(found.key_order, fresh_keys, conc_key_of):
        fast = ev.closure_with_placement(aug, found.key_order, order2, fresh_syms)
        full = kernel.Evaluator(theory).closure(aug, order2)
        probe += 1
        if fast != full:
            bad += 1
all_ok &= check(f"extension==full on {probe} exhaustive placements", bad, 0)

# --- adequacy timing, internal insert block1 ---------------------------
theory, ops = load("internal_bst")
found = analysis.find_maximal_instance(theory, ops).instance
block = ops.all_blocks()[0]
ev = kernel.Evaluator(theory)
bindings = kernel.match_precondition(theory, found.facts, found.key_order, block, ev, fresh_suffix="_t")
binding = bindings[0]
locks = analysis.guess_locks(theory, block, binding)
print("locks:", sorted(locks))
for hz in (2, 3, 4, 5):
    t0 = time.time()
    res = analysis.check_lock_adequacy(
        theory, ops, found, block, binding, locks, horizon=hz, evaluator=ev
    )
    dt = time.time() - t0
    print(f"hz={hz}: adequate={res.adequate} states={res.states_explored} time={dt:.2f}s")

print("ALL OK" if all_ok else "FAILURES PRESENT")
