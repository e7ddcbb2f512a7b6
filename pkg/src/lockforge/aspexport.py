"""One-way export of a knowledge set and instance as an ASP-Core-2 program.

The background theory is projected into a temporal domain: every fluent and
derived predicate gains a trailing time argument, instance fluents become
time-0 facts, each step kind contributes an effect rule plus field-granular
frame rules, and invariants become integrity constraints over every time.
The text is meant for cross-validation with an external grounder/solver;
nothing is ever read back.
"""

from __future__ import annotations

from .instances import InstanceGraph
from .kernel import kinds_pos
from .knowledge import OperationSet, Theory

_ALWAYS_STATIC = ("node", "key", "lt", "eq")


def _static_predicates(theory: Theory) -> set[str]:
    derived = {r.head.pred for r in theory.rules if r.head is not None}
    static = set(_ALWAYS_STATIC)
    for pred in theory.registry:
        if pred not in derived and pred not in theory.fluents:
            static.add(pred)
    return static - theory.fluents - derived


def _term(arg: str) -> str:
    return arg


def _atom(pred: str, args, extra: str | None = None) -> str:
    parts = [_term(a) for a in args]
    if extra is not None:
        parts.append(extra)
    if not parts:
        return pred
    return f"{pred}({', '.join(parts)})"


def _temporal_literal(lit, static: set[str]) -> str:
    atom = lit.atom
    extra = None if atom.pred in static else "T"
    text = _atom(atom.pred, atom.args, extra)
    return text if lit.positive else f"not {text}"


def export_asp(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph,
    horizon: int = 0,
) -> str:
    static = _static_predicates(theory)
    lines: list[str] = []
    out = lines.append

    out("% temporal projection of the structure theory; horizon " + str(horizon))
    out(f"time(0..{horizon})." if horizon > 0 else "time(0).")
    out("")

    out("% instance: static facts, then fluents at time 0")
    for atom in sorted(instance.facts, key=lambda a: (a.pred, a.args)):
        if atom.pred in static or atom.pred in _ALWAYS_STATIC:
            out(_atom(atom.pred, atom.args) + ".")
    for atom in instance.key_order.to_atoms():
        out(_atom(atom.pred, atom.args) + ".")
    for atom in sorted(instance.facts, key=lambda a: (a.pred, a.args)):
        if atom.pred not in static and atom.pred not in _ALWAYS_STATIC:
            out(_atom(atom.pred, atom.args, "0") + ".")
    out("")

    out("% theory rules over time")
    for rule in theory.rules:
        body = ["time(T)"] + [_temporal_literal(lit, static) for lit in rule.body]
        if rule.head is None:
            out(":- " + ", ".join(body) + ".")
        else:
            head_extra = None if rule.head.pred in static else "T"
            head = _atom(rule.head.pred, rule.head.args, head_extra)
            out(f"{head} :- " + ", ".join(body) + ".")
    out("")

    out("% invariants must hold at every time")
    for flag in theory.invariants:
        out(f":- time(T), not {flag}(T).")
    out("")

    if horizon > 0:
        out("% step effects and field-granular inertia")
        caused: dict[str, list] = {}
        for kind in operations.step_kinds.values():
            caused.setdefault(kind.caused, []).append(kind)
        for kind in operations.step_kinds.values():
            args = [f"X{i + 1}" for i in range(kind.arity)]
            head = _atom(kind.caused, args, "T+1")
            body = _atom(kind.name, args, "T")
            out(f"{head} :- {body}, time(T), time(T+1).")
            mod = _atom(f"modified_{kind.caused}", [args[kind.modified_pos]], "T")
            out(f"{mod} :- {body}.")
        for fluent in sorted(theory.fluents):
            arity = theory.registry.get(fluent, 2)
            args = [f"X{i + 1}" for i in range(arity)]
            frame = [_atom(fluent, args, "T"), "time(T)", "time(T+1)"]
            if fluent in caused:
                pos = kinds_pos(operations.step_kinds, fluent)
                frame.insert(1, f"not modified_{fluent}({args[pos]}, T)")
            out(_atom(fluent, args, "T+1") + " :- " + ", ".join(frame) + ".")
    return "\n".join(lines) + "\n"
