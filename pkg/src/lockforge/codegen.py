"""C++ emission: synchronization blocks substituted into annotated templates.

Each operation block renders to a fixed statement sequence: allocation of
unreachable nodes, NULL initialization, inferred key R-values, lock
acquisition in structural predecessor order, optimistic validation with
retry, destructive updates in an accepted order, and unlocks mirroring the
lock order. The RCU renderer instead rewrites traversal markers to
rcu_read_lock/rcu_read_unlock and prefixes updates with rcu_synchronize.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmissionError
from .knowledge import BlockSpec, OperationSet, Theory, block_nodes
from .templates import Anchor, CodeTemplate, MappingTable, anchor_matches_operation

_PRED_FIELD = {"edge": "next", "left": "left", "right": "right"}


def structure_fields(theory: Theory) -> tuple[str, ...]:
    """Pointer fields a freshly allocated node must NULL out."""
    if "left" in theory.registry or "right" in theory.registry:
        fields = ["left", "right"]
        if "par" in theory.registry:
            fields.append("par")
        return tuple(fields)
    if "edge" in theory.registry:
        return ("next",)
    return ()


def infer_lvalue(
    theory: Theory, block: BlockSpec, node: str, mappings: MappingTable
) -> str:
    """C++ expression denoting a precondition node.

    Mapped nodes use their traversal variable. Unreachable (freshly
    allocated) nodes are local variables named after themselves. Everything
    else follows its structural predecessor: left(x,y) with x rendered as
    "curr" makes y "curr->left", recursively.
    """
    return _infer_lvalue(theory, block, node, mappings, ())


def _infer_lvalue(
    theory: Theory, block: BlockSpec, node: str, mappings: MappingTable, seen: tuple
) -> str:
    if node == "nil":
        return "NULL"
    mapped = mappings.variable_for(block.operation, block.block, node)
    if mapped is not None:
        return mapped
    info = block_nodes(block, theory)
    if node in info.fresh:
        return node
    if node in seen:
        raise EmissionError(f"{block.operation}/{block.block}: cyclic predecessors for {node}")
    for pred in ("edge", "left", "right"):
        for lit in block.precondition:
            if lit.positive and lit.atom.pred == pred and len(lit.atom.args) == 2:
                if lit.atom.args[1] == node:
                    parent = _infer_lvalue(
                        theory, block, lit.atom.args[0], mappings, seen + (node,)
                    )
                    return f"{parent}->{_PRED_FIELD[pred]}"
    raise EmissionError(
        f"{block.operation}/{block.block}: node {node} has no mapping, "
        "no structural predecessor, and is not newly allocated"
    )


def infer_key_rvalue(
    theory: Theory, block: BlockSpec, node: str, mappings: MappingTable
) -> str | None:
    """R-value for a fresh node's key: explicit mapping, else an eq peer."""
    explicit = mappings.rvalue_for(block.operation, block.block, f"{node}->key")
    if explicit is not None:
        return explicit
    key_of: dict[str, str] = {}
    for lit in block.precondition:
        if lit.positive and lit.atom.pred == "key" and len(lit.atom.args) == 2:
            key_of[lit.atom.args[0]] = lit.atom.args[1]
    mine = key_of.get(node)
    if mine is None:
        return None
    for lit in block.precondition:
        if lit.positive and lit.atom.pred == "eq" and len(lit.atom.args) == 2:
            a, b = lit.atom.args
            other_key = b if a == mine else a if b == mine else None
            if other_key is None:
                continue
            info = block_nodes(block, theory)
            for peer, k in key_of.items():
                if k == other_key and peer != node:
                    if peer in info.fresh:
                        # a fresh peer's own field is unreadable until set;
                        # use its explicit r-value instead
                        peer_rv = mappings.rvalue_for(
                            block.operation, block.block, f"{peer}->key"
                        )
                        if peer_rv is not None:
                            return peer_rv
                        continue
                    peer_lv = infer_lvalue(theory, block, peer, mappings)
                    return f"{peer_lv}->key"
    return None


def _rhs(theory: Theory, block: BlockSpec, arg: str, mappings: MappingTable) -> str:
    if arg == "nil":
        return "NULL"
    if theory.is_constant(arg):
        return arg
    return infer_lvalue(theory, block, arg, mappings)


def update_statement(
    theory: Theory, operations: OperationSet, block: BlockSpec, step, mappings: MappingTable
) -> str:
    kind = operations.step_kinds[step.kind]
    modified = step.args[kind.modified_pos]
    value = step.args[1 - kind.modified_pos]
    lhs = infer_lvalue(theory, block, modified, mappings)
    return f"{lhs}->{kind.field} = {_rhs(theory, block, value, mappings)};"


@dataclass
class RenderedBlock:
    operation: str
    block: str
    lines: list[str]

    @property
    def text(self) -> str:
        return "\n".join(self.lines)


def _prelude_lines(
    theory: Theory, block: BlockSpec, mappings: MappingTable
) -> list[str]:
    """Allocation, NULL initialization, and key R-values for fresh nodes."""
    info = block_nodes(block, theory)
    lines: list[str] = []
    if info.fresh:
        lines.append("//Allocation of unreachable nodes")
        for node in info.fresh:
            lines.append(f"struct node * {node} = (struct node *) malloc(sizeof(struct node));")
        fields = structure_fields(theory)
        if fields:
            lines.append("//Initializing pointers to NULL values for allocated nodes")
            inits = [f"{node}->{f} = NULL;" for node in info.fresh for f in fields]
            lines.append(" ".join(inits))
        keys = []
        for node in info.fresh:
            rv = infer_key_rvalue(theory, block, node, mappings)
            if rv is not None:
                keys.append(f"{node}->key = {rv};")
        if keys:
            lines.append("//Setting inferred R-Values for Keys")
            lines.append(" ".join(keys))
    return lines


def render_block(
    theory: Theory,
    operations: OperationSet,
    block: BlockSpec,
    mappings: MappingTable,
    order: tuple[int, ...],
) -> RenderedBlock:
    """Fine-grained synchronization block in the fixed surface form."""
    info = block_nodes(block, theory)
    lock_lvs = [infer_lvalue(theory, block, n, mappings) for n in info.lock_order]
    validation = mappings.validation_for(block.operation, block.block)
    if validation is None:
        raise EmissionError(
            f"{block.operation}/{block.block}: no validation snippet in the mapping table"
        )
    lines = _prelude_lines(theory, block, mappings)
    if lock_lvs:
        lines.append("//Lock order in the order of predecessors")
        lines.append(" ".join(f"{lv}->mtx.lock();" for lv in lock_lvs))
    unlock_line = " ".join(f"{lv}->mtx.unlock();" for lv in lock_lvs)
    lines.append("//Validation logic for Optimistic Synchronization")
    lines.append(f"if(!({validation})){{")
    if lock_lvs:
        lines.append("//Locks released in the same order of lock acquisition")
        lines.append(unlock_line)
    lines.append("continue; // Note that insert operation will retry"
                 if block.operation.startswith("insert")
                 else "continue; // Note that the operation will retry")
    lines.append("}")
    lines.append("// Destructive update steps re-ordered and L-Values inferred by the synthesizer")
    updates = [update_statement(theory, operations, block, block.steps[i], mappings) for i in order]
    lines.append(" ".join(updates))
    if lock_lvs:
        lines.append("//Same as unlocks statements before")
        lines.append(unlock_line)
    return RenderedBlock(block.operation, block.block, lines)


def render_rcu_block(
    theory: Theory,
    operations: OperationSet,
    block: BlockSpec,
    mappings: MappingTable,
    order: tuple[int, ...],
) -> RenderedBlock:
    """Lockless block: allocation prelude, then rcu_synchronize and updates."""
    lines = _prelude_lines(theory, block, mappings)
    lines.append("rcu_synchronize();")
    updates = [update_statement(theory, operations, block, block.steps[i], mappings) for i in order]
    lines.append(" ".join(updates))
    return RenderedBlock(block.operation, block.block, lines)


# ---------------------------------------------------------------------------
# template substitution


@dataclass
class EmittedCode:
    text: str
    anchors_filled: int
    markers_rewritten: int = 0


def _splice(source: str, replacements: list[tuple[int, int, str]]) -> str:
    out: list[str] = []
    pos = 0
    for start, length, text in sorted(replacements):
        out.append(source[pos:start])
        out.append(text)
        pos = start + length
    out.append(source[pos:])
    return "".join(out)


def _block_for_anchor(anchor: Anchor, blocks: list[RenderedBlock]) -> RenderedBlock:
    for rb in blocks:
        if rb.block == anchor.block and anchor_matches_operation(anchor, rb.operation):
            return rb
    raise EmissionError(f"no rendered block for annotation {anchor.token}")


def substitute_annotations(
    template: CodeTemplate, blocks: list[RenderedBlock]
) -> EmittedCode:
    """Replace every anchor with its rendered block; markers are erased so
    the emitted file contains no annotation syntax."""
    replacements = []
    markers = 0
    for name, offsets in template.markers.items():
        for off in offsets:
            replacements.append((off, len(name), ""))
            markers += 1
    for anchor in template.anchors:
        rb = _block_for_anchor(anchor, blocks)
        text = ("\n" + anchor.indent).join(rb.lines)
        replacements.append((anchor.offset, anchor.length, text))
    return EmittedCode(
        _splice(template.source, replacements), len(template.anchors), markers
    )


_MARKER_TEXT = {
    "@@begin-traversal": "rcu_read_lock();",
    "@@end-traversal": "rcu_read_unlock();",
    "@@begin-destructive-update": "",
    "@@end-destructive-update": "",
}


def render_rcu(template: CodeTemplate, blocks: list[RenderedBlock]) -> EmittedCode:
    """Marker-driven render: lockless traversal, synchronize-then-update."""
    if not template.has_marker("@@begin-traversal"):
        raise EmissionError("template has no @@begin-traversal marker")
    replacements = []
    markers = 0
    for name, offsets in template.markers.items():
        for off in offsets:
            replacements.append((off, len(name), _MARKER_TEXT[name]))
            markers += 1
    for anchor in template.anchors:
        rb = _block_for_anchor(anchor, blocks)
        text = ("\n" + anchor.indent).join(rb.lines)
        replacements.append((anchor.offset, anchor.length, text))
    return EmittedCode(
        _splice(template.source, replacements), len(template.anchors), markers
    )


# ---------------------------------------------------------------------------
# token-level comparison support

_TOKEN_PATTERN = re.compile(
    r"[A-Za-z_][A-Za-z0-9_]*|\d+|->|==|!=|<=|>=|&&|\|\||::|[^\sA-Za-z0-9_]"
)


def tokenize_cpp(text: str) -> list[str]:
    """C-ish token stream with comments stripped and whitespace collapsed.

    This is the documented normalization for golden comparisons: two sources
    are equivalent when their token lists match.
    """
    text = re.sub(r"//[^\n]*", " ", text)
    text = re.sub(r"/\*.*?\*/", " ", text, flags=re.DOTALL)
    return _TOKEN_PATTERN.findall(text)
