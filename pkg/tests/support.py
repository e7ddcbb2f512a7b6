"""Test-local oracles: a brute-force interference enumerator, an independent
canonical renaming for interference heaps, and random generators for the
kernel property suite.  Nothing here imports the search code under test
except for shared primitives (matching, step application) that carry their
own oracle tests."""

import random
import re

from lockforge import analysis, knowledge
from lockforge.kernel import check_constraints, match_precondition
from lockforge.knowledge import Atom


_FRESH = re.compile(r"^(?P<base>.+)_i\d+$")


# ---------------------------------------------------------------------------
# canonical heap identity


def canonical_heap(state, order):
    """Rename interference-fresh nodes by (base variable, key rank).

    Two heaps that differ only in the _i<k> numbers handed out to fresh
    nodes describe the same concurrent world; this folds them to one value.
    Same contract as the engine's dedup key, implemented separately.
    """
    fresh = sorted({a.args[0] for a in state if a.pred == "node" and _FRESH.match(a.args[0])})
    chain = order.chain()

    def rank(node):
        key = "k" + node
        for i, rep in enumerate(chain):
            if key in order.members(rep):
                return i
        return -1

    rename = {}
    counters = {}
    for name in sorted(fresh, key=lambda n: (_FRESH.match(n).group("base"), rank(n), n)):
        base = _FRESH.match(name).group("base")
        j = counters.get(base, 0)
        counters[base] = j + 1
        rename[name] = f"{base}_c{j}"
        rename["k" + name] = f"k{base}_c{j}"
    facts = frozenset(Atom(a.pred, tuple(rename.get(x, x) for x in a.args)) for a in state)
    order_key = tuple(
        sorted((a.pred,) + tuple(rename.get(x, x) for x in a.args) for a in order.to_atoms())
    )
    return facts, order_key


def _exact_key(state, order):
    return state, tuple(sorted(str(a) for a in order.to_atoms()))


def _fresh_suffix(state, fresh_vars):
    """First _i<k> suffix not claimed by any fresh variable in the state."""
    present = {a.args[0] for a in state if a.pred == "node"}
    k = 0
    while any(f"{v}_i{k}" in present for v in fresh_vars):
        k += 1
    return f"_i{k}"


def brute_interference_levels(theory, operations, start_state, start_order, locks, horizon, ev):
    """Exhaustive guarded-event enumeration, deduping only exact states.

    Returns one list per depth of (state, order) pairs first reached at that
    depth.  No renaming happens during the search, so this is the ground
    truth the canonically deduplicated search must agree with.
    """
    lockset = set(locks)
    seen = {_exact_key(start_state, start_order)}
    levels = [[(start_state, start_order)]]
    frontier = [(start_state, start_order)]
    for _ in range(horizon):
        nxt = []
        for state, order in frontier:
            for block in operations.all_blocks():
                info = knowledge.block_nodes(block, theory)
                suffix = _fresh_suffix(state, info.fresh)
                for b in match_precondition(theory, state, order, block, ev, fresh_suffix=suffix):
                    if set(analysis.guess_locks(theory, block, b)) & lockset:
                        continue
                    s2, o2 = analysis.apply_event(state, order, operations, block, b)
                    key = _exact_key(s2, o2)
                    if key in seen:
                        continue
                    if check_constraints(theory, ev.closure(s2, o2), o2) is not None:
                        continue
                    seen.add(key)
                    nxt.append((s2, o2))
        if not nxt:
            break
        levels.append(nxt)
        frontier = nxt
    return levels


# ---------------------------------------------------------------------------
# random generators for the kernel property suite


def random_chain_world(rng: random.Random, max_interior: int = 4):
    """A random sorted-list heap: chain facts plus a total key order."""
    interior = rng.randrange(max_interior + 1)
    nodes = ["h"] + [f"n{i}" for i in range(interior)] + ["t"]
    facts = set()
    for n in nodes:
        facts.add(Atom("node", (n,)))
        facts.add(Atom("key", (n, "k" + n)))
    for a, b in zip(nodes, nodes[1:]):
        facts.add(Atom("edge", (a, b)))
    # optionally drop one edge so not every world is a well-formed list
    if interior and rng.random() < 0.4:
        a, b = rng.choice(list(zip(nodes, nodes[1:])))
        facts.discard(Atom("edge", (a, b)))
    order_atoms = [
        Atom("lt", ("k" + a, "k" + b)) for a, b in zip(nodes, nodes[1:])
    ]
    return frozenset(facts), order_atoms, nodes


def random_extra_facts(rng: random.Random, nodes):
    """Extra base facts over the same nodes, for monotonicity checks."""
    extra = set()
    for _ in range(rng.randrange(1, 4)):
        a, b = rng.choice(nodes), rng.choice(nodes)
        extra.add(Atom("edge", (a, b)))
    return extra


def random_tree_state(rng: random.Random, kinds):
    """Random left/right cell facts plus one applicable step."""
    nodes = [f"v{i}" for i in range(rng.randrange(3, 7))]
    facts = set()
    for n in nodes:
        facts.add(Atom("node", (n,)))
        for rel in ("left", "right"):
            if rng.random() < 0.7:
                facts.add(Atom(rel, (n, rng.choice(nodes))))
    kind = rng.choice([k for k in kinds.values() if k.caused in ("left", "right")])
    args = tuple(rng.choice(nodes) for _ in range(kind.arity))
    return frozenset(facts), knowledge.Step(kind.name, args), kind


def random_order_atoms(rng: random.Random, plant_cycle: bool):
    """A consistent random key order, optionally with a planted cycle."""
    keys = [f"k{i}" for i in range(rng.randrange(3, 7))]
    rng.shuffle(keys)
    atoms = [Atom("lt", (a, b)) for a, b in zip(keys, keys[1:])]
    # sprinkle consistent extras implied by the chain
    for _ in range(rng.randrange(3)):
        i = rng.randrange(len(keys) - 1)
        j = rng.randrange(i + 1, len(keys))
        atoms.append(Atom("lt", (keys[i], keys[j])))
    if plant_cycle:
        i = rng.randrange(len(keys) - 1)
        j = rng.randrange(i + 1, len(keys))
        if rng.random() < 0.5:
            atoms.append(Atom("lt", (keys[j], keys[i])))
        else:
            atoms.append(Atom("eq", (keys[j], keys[i])))
    return atoms, keys
