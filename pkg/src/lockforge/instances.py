"""Bounded instance enumeration and instance file I/O.

Two shape families are generated, picked by the theory's structural
vocabulary: chains (edge/2) and binary trees (left/2, right/2). Trees get
positional names (root r, children rl/rr, ...) and in-order keys k1..kn,
always totally ordered. Decorations follow the theory registry: node/1
always, root/1 and par/2 when the theory mentions them. Colors and tags are
never enumerated; structures needing them ship an explicit instance file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .errors import ParseError, ValidationError
from . import dsl
from .kernel import KeyOrder, key_order_closure, instance_nodes
from .knowledge import Atom, Theory


@dataclass(frozen=True)
class InstanceGraph:
    facts: frozenset
    key_order: KeyOrder
    nodes: tuple[str, ...]


# ---------------------------------------------------------------------------
# chains


def _chain(interior: int) -> InstanceGraph:
    if interior == 0:
        names = ["h", "t"]
    elif interior == 1:
        names = ["h", "x", "t"]
    else:
        names = ["h"] + [f"x{i}" for i in range(1, interior + 1)] + ["t"]
    facts = set()
    keys = []
    for a, b in zip(names, names[1:]):
        facts.add(Atom("edge", (a, b)))
    for name in names:
        facts.add(Atom("node", (name,)))
        facts.add(Atom("key", (name, "k" + name)))
        keys.append("k" + name)
    order = key_order_closure(
        Atom("lt", (a, b)) for a, b in zip(keys, keys[1:])
    )
    return InstanceGraph(frozenset(facts), order, tuple(names))


# ---------------------------------------------------------------------------
# binary trees


def _tree_shapes(n: int):
    """All binary tree shapes with n nodes; children may be absent.

    A shape is None or a pair (left_shape, right_shape). Enumeration is by
    ascending left-subtree size, which fixes a canonical candidate order.
    """
    if n == 0:
        yield None
        return
    for left_size in range(n):
        for left in _tree_shapes(left_size):
            for right in _tree_shapes(n - 1 - left_size):
                yield (left, right)


def _decorate_tree(shape, theory: Theory) -> InstanceGraph:
    facts: set[Atom] = set()
    inorder: list[str] = []
    build_order: list[str] = []

    def walk_build(node_shape, name: str, parent: str | None) -> None:
        left, right = node_shape
        build_order.append(name)
        if parent is not None and "par" in theory.registry:
            facts.add(Atom("par", (name, parent)))
        if left is not None:
            facts.add(Atom("left", (name, name + "l")))
            walk_build(left, name + "l", name)
        if right is not None:
            facts.add(Atom("right", (name, name + "r")))
            walk_build(right, name + "r", name)

    def walk_inorder(node_shape, name: str) -> None:
        left, right = node_shape
        if left is not None:
            walk_inorder(left, name + "l")
        inorder.append(name)
        if right is not None:
            walk_inorder(right, name + "r")

    walk_build(shape, "r", None)
    walk_inorder(shape, "r")
    key_names = []
    for pos, name in enumerate(inorder, start=1):
        facts.add(Atom("key", (name, f"k{pos}")))
        key_names.append(f"k{pos}")
    for name in build_order:
        facts.add(Atom("node", (name,)))
    if "root" in theory.registry:
        facts.add(Atom("root", ("r",)))
    order = key_order_closure(
        Atom("lt", (a, b)) for a, b in zip(key_names, key_names[1:])
    )
    return InstanceGraph(frozenset(facts), order, tuple(build_order))


# ---------------------------------------------------------------------------
# family dispatch


def shape_family(theory: Theory) -> str:
    if "edge" in theory.registry:
        return "chain"
    if "left" in theory.registry or "right" in theory.registry:
        return "tree"
    raise ValidationError("theory uses neither edge/2 nor left/right: no shape family")


def candidate_instances(theory: Theory, max_nodes: int) -> Iterator[InstanceGraph]:
    """Instances in canonical order: size ascending, then shape rank."""
    family = shape_family(theory)
    if family == "chain":
        for interior in range(0, max_nodes + 1):
            yield _chain(interior)
        return
    for n in range(1, max_nodes + 1):
        for shape in _tree_shapes(n):
            assert shape is not None
            yield _decorate_tree(shape, theory)


# ---------------------------------------------------------------------------
# file I/O


def parse_instance(text: str, theory: Theory) -> InstanceGraph:
    clauses = dsl.parse_program(text)
    facts: set[Atom] = set()
    order_atoms: list[Atom] = []
    for clause in clauses:
        if not clause.is_fact:
            raise ParseError("instance files contain facts only", clause.line)
        assert clause.head is not None
        atom = Atom(dsl.functor_of(clause.head), dsl.atom_args(clause.head))
        if any(dsl.is_variable(a) for a in atom.args):
            raise ParseError(f"instance fact {atom} must be ground", clause.line)
        if atom.pred in ("lt", "eq"):
            order_atoms.append(atom)
        else:
            facts.add(atom)
    order = key_order_closure(order_atoms)
    frozen = frozenset(facts)
    return InstanceGraph(frozen, order, tuple(instance_nodes(frozen, theory)))


def write_instance(instance: InstanceGraph) -> str:
    lines = [f"{atom}." for atom in sorted(instance.facts, key=lambda a: (a.pred, a.args))]
    lines += [f"{atom}." for atom in instance.key_order.to_atoms()]
    return "\n".join(lines) + "\n"
