"""Typed model of declarative data-structure knowledge.

Two kinds of input text are loaded here: the structure theory (rules,
invariant flags, fluent declarations) and the operation descriptions
(atomic step kinds, per-block preconditions, step lists, postconditions).
Loaders normalize surface variation: infix `<` becomes lt/2, `caseN` block
ids become `blockN`, `set_tag` aliases to `tag_node` with a warning, and
key symbols used in comparisons without an explicit key/2 conjunct gain one
(`kx` joins `key(x, kx)` when `x` is cited by the block).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import dsl
from .dsl import Clause, Name, Seq, Struct, Text, TermT, Var
from .errors import ParseError, ValidationError

COMPARISONS = ("lt", "eq")
# relations that define structural predecessors, in L-value preference order
STRUCTURAL = ("edge", "left", "right")
_REACHABILITY_NAMES = ("reach", "reachable")
_STEP_ALIASES = {"set_tag": "tag_node"}


# ---------------------------------------------------------------------------
# atoms, literals, rules


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[str, ...]

    def __post_init__(self):
        # atoms live in large sets and dict keys; hash once
        object.__setattr__(self, "_hash", hash((self.pred, self.args)))

    def __hash__(self):
        return self._hash

    def substitute(self, env: dict[str, str]) -> "Atom":
        return Atom(self.pred, tuple(env.get(a, a) for a in self.args))

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(a for a in self.args if dsl.is_variable(a))

    def __str__(self) -> str:
        if not self.args:
            return self.pred
        return f"{self.pred}({', '.join(self.args)})"


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True

    def substitute(self, env: dict[str, str]) -> "Literal":
        return Literal(self.atom.substitute(env), self.positive)

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"not {self.atom}"


@dataclass(frozen=True)
class Rule:
    """A definition (head + body), fact (empty body) or constraint (no head)."""

    head: Atom | None
    body: tuple[Literal, ...] = ()
    line: int = 0

    @property
    def is_constraint(self) -> bool:
        return self.head is None

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        body = ", ".join(str(b) for b in self.body)
        return f":- {body}." if self.head is None else f"{self.head} :- {body}."


def _atom_from_term(term: TermT, line: int) -> Atom:
    if isinstance(term, Name):
        return Atom(term.value, ())
    if isinstance(term, Struct):
        args = []
        for arg in term.args:
            if isinstance(arg, (Name, Var)):
                args.append(str(arg))
            else:
                raise ParseError(f"nested term not allowed in atom: {term}", line)
        return Atom(term.functor, tuple(args))
    raise ParseError(f"expected an atom, found {term}", line)


def literal_from_term(term: TermT, line: int = 0) -> Literal:
    if isinstance(term, Struct) and term.functor == "not":
        if len(term.args) != 1:
            raise ParseError("not/1 takes a single literal", line)
        inner = literal_from_term(term.args[0], line)
        if not inner.positive:
            raise ParseError("double negation is not supported", line)
        return Literal(inner.atom, False)
    return Literal(_atom_from_term(term, line), True)


# ---------------------------------------------------------------------------
# theory


@dataclass
class Theory:
    rules: list[Rule]
    invariants: tuple[str, ...]
    fluents: frozenset[str]
    constants: frozenset[str]
    registry: dict[str, int]
    reachability: str | None

    def is_constant(self, name: str) -> bool:
        return name in self.constants

    def rules_for(self, pred: str) -> list[Rule]:
        return [r for r in self.rules if r.head is not None and r.head.pred == pred]

    @property
    def derived(self) -> frozenset[str]:
        return frozenset(r.head.pred for r in self.rules if r.head is not None and r.body)

    @property
    def base_predicates(self) -> frozenset[str]:
        return frozenset(self.registry) - self.derived

    def to_text(self) -> str:
        lines = [str(r) for r in self.rules]
        lines += [f"fluent({f})." for f in sorted(self.fluents)]
        lines += [f"invariant({i})." for i in self.invariants]
        decl_only = self.constants - _mentioned_constants(self.rules)
        lines += [f"constant({c})." for c in sorted(decl_only)]
        if self.reachability and self.reachability not in _REACHABILITY_NAMES:
            lines.append(f"reachability({self.reachability}).")
        return "\n".join(lines) + "\n"


def _mentioned_constants(rules: list[Rule]) -> frozenset[str]:
    out = set()
    for rule in rules:
        atoms = [lit.atom for lit in rule.body]
        if rule.head is not None:
            atoms.append(rule.head)
        for atom in atoms:
            out.update(a for a in atom.args if not dsl.is_variable(a))
    return frozenset(out)


_THEORY_DIRECTIVES = ("invariant", "fluent", "constant", "reachability")


def parse_theory(text: str) -> Theory:
    clauses = dsl.parse_program(text)
    rules: list[Rule] = []
    invariants: list[str] = []
    fluents: set[str] = set()
    declared_constants: set[str] = set()
    reachability_decl: str | None = None

    for clause in clauses:
        functor = None if clause.head is None else dsl.functor_of(clause.head)
        if clause.is_fact and functor in _THEORY_DIRECTIVES:
            args = dsl.atom_args(clause.head)  # type: ignore[arg-type]
            if len(args) != 1:
                raise ParseError(f"{functor}/1 expects one argument", clause.line)
            if functor == "invariant":
                invariants.append(args[0])
            elif functor == "fluent":
                fluents.add(args[0])
            elif functor == "constant":
                declared_constants.add(args[0])
            else:
                reachability_decl = args[0]
            continue
        rules.append(_rule_from_clause(clause))

    registry = _build_registry(rules)
    _check_rules(rules, registry)

    for inv in invariants:
        if inv not in registry:
            raise ValidationError(f"invariant predicate {inv} is never defined")
        if registry[inv] != 0:
            raise ValidationError(f"invariant predicate {inv} must be a propositional flag")
    for flu in fluents:
        if flu not in registry:
            raise ValidationError(f"fluent {flu} does not appear in any rule")

    constants = _mentioned_constants(rules) | declared_constants
    reachability = reachability_decl
    if reachability is None:
        for cand in _REACHABILITY_NAMES:
            if cand in registry:
                reachability = cand
                break
    return Theory(
        rules=rules,
        invariants=tuple(invariants),
        fluents=frozenset(fluents),
        constants=frozenset(constants),
        registry=registry,
        reachability=reachability,
    )


def _rule_from_clause(clause: Clause) -> Rule:
    head = None
    if clause.head is not None:
        head_lit = literal_from_term(clause.head, clause.line)
        if not head_lit.positive:
            raise ParseError("rule head must be positive", clause.line)
        head = head_lit.atom
    body = tuple(literal_from_term(t, clause.line) for t in clause.body)
    return Rule(head, body, clause.line)


def _build_registry(rules: list[Rule]) -> dict[str, int]:
    registry: dict[str, int] = {}
    for rule in rules:
        atoms = [lit.atom for lit in rule.body]
        if rule.head is not None:
            atoms.append(rule.head)
        for atom in atoms:
            if atom.pred in COMPARISONS:
                continue
            seen = registry.get(atom.pred)
            if seen is None:
                registry[atom.pred] = len(atom.args)
            elif seen != len(atom.args):
                raise ValidationError(
                    f"predicate {atom.pred} used with arities {seen} and {len(atom.args)}"
                )
    return registry


def _check_rules(rules: list[Rule], registry: dict[str, int]) -> None:
    for rule in rules:
        positive_vars: set[str] = set()
        for lit in rule.body:
            if lit.atom.pred in COMPARISONS:
                if not lit.positive:
                    raise ValidationError(
                        f"comparison {lit.atom} may appear only positively (line {rule.line})"
                    )
                if len(lit.atom.args) != 2:
                    raise ValidationError(f"{lit.atom.pred}/2 expects two arguments")
                continue
            if lit.positive:
                positive_vars.update(lit.atom.variables)
        if rule.head is not None and rule.head.pred in COMPARISONS:
            raise ValidationError(f"comparison {rule.head.pred} cannot be derived")
        needed: set[str] = set()
        if rule.head is not None:
            needed.update(rule.head.variables)
        for lit in rule.body:
            if not lit.positive or lit.atom.pred in COMPARISONS:
                needed.update(lit.atom.variables)
        loose = needed - positive_vars
        if loose:
            raise ValidationError(
                f"rule at line {rule.line} is not range-restricted: {', '.join(sorted(loose))}"
            )


# ---------------------------------------------------------------------------
# operations


@dataclass(frozen=True)
class StepKind:
    name: str
    arity: int
    modified_pos: int
    caused: str

    @property
    def field(self) -> str:
        """C++ field written by this step kind."""
        return "next" if self.caused == "edge" else self.caused


@dataclass(frozen=True)
class Step:
    kind: str
    args: tuple[str, ...]

    def substitute(self, env: dict[str, str]) -> "Step":
        return Step(self.kind, tuple(env.get(a, a) for a in self.args))

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(self.args)})"


@dataclass
class BlockSpec:
    operation: str
    block: str
    precondition: tuple[Literal, ...] = ()
    steps: tuple[Step, ...] = ()
    postcondition: tuple[Literal, ...] = ()


@dataclass
class OperationSpec:
    name: str
    blocks: dict[str, BlockSpec] = field(default_factory=dict)


@dataclass
class OperationSet:
    operations: list[OperationSpec]
    step_kinds: dict[str, StepKind]
    structure: str | None = None
    warnings: list[str] = field(default_factory=list)

    def operation(self, name: str) -> OperationSpec:
        for op in self.operations:
            if op.name == name:
                return op
        raise KeyError(name)

    def all_blocks(self) -> list[BlockSpec]:
        return [b for op in self.operations for b in op.blocks.values()]

    def kind_of(self, step: Step) -> StepKind:
        return self.step_kinds[step.kind]


def _normalize_block_id(name: str) -> str:
    if name.startswith("case") and name[4:].isdigit():
        return "block" + name[4:]
    return name


def parse_operations(text: str) -> OperationSet:
    clauses = dsl.parse_program(text)
    op_names: list[str] = []
    kind_names: list[str] = []
    modifies: dict[str, int] = {}
    causes: dict[str, str] = {}
    warnings: list[str] = []
    structure: str | None = None
    # (op, block) -> parts
    pres: dict[tuple[str, str], tuple[Literal, ...]] = {}
    steps: dict[tuple[str, str], tuple[Step, ...]] = {}
    posts: dict[tuple[str, str], tuple[Literal, ...]] = {}
    order: list[tuple[str, str]] = []

    def note_block(key: tuple[str, str]) -> None:
        if key not in order:
            order.append(key)

    for clause in clauses:
        if not clause.is_fact:
            raise ParseError("operation files contain facts only", clause.line)
        assert clause.head is not None
        functor = dsl.functor_of(clause.head)
        line = clause.line
        if functor == "operation":
            (name,) = dsl.atom_args(clause.head)
            op_names.append(name)
        elif functor == "atomic_step":
            (name,) = dsl.atom_args(clause.head)
            kind_names.append(name)
        elif functor == "modifies":
            tmpl, target = _two_args(clause.head, line)
            kind, args = _step_shape(tmpl, line)
            if target not in args:
                raise ParseError(f"modifies target {target} not an argument of {kind}", line)
            modifies[kind] = args.index(target)
        elif functor == "causes":
            tmpl, caused = _two_terms(clause.head, line)
            kind, args = _step_shape(tmpl, line)
            rel, rel_args = _step_shape(caused, line)
            if rel_args != args:
                raise ParseError(
                    f"caused relation {rel} must carry the {kind} arguments unchanged", line
                )
            causes[kind] = rel
        elif functor in ("precondition", "pre", "program_steps", "postcondition"):
            assert isinstance(clause.head, Struct)
            args = list(clause.head.args)
            if len(args) == 4:
                ds = args.pop(0)
                structure = str(ds)
            if len(args) == 2:
                opname, payload = str(args[0]), args[1]
                block = "block1"
            elif len(args) == 3:
                opname, block, payload = str(args[0]), _normalize_block_id(str(args[1])), args[2]
            else:
                raise ParseError(f"{functor} expects 2 or 3 arguments (plus optional structure)", line)
            if not isinstance(payload, Seq):
                raise ParseError(f"{functor} payload must be a bracketed list", line)
            key = (opname, block)
            note_block(key)
            if functor in ("precondition", "pre"):
                pres[key] = tuple(literal_from_term(t, line) for t in payload.items)
            elif functor == "program_steps":
                parsed = []
                for item in payload.items:
                    kind, sargs = _step_shape(item, line)
                    if kind in _STEP_ALIASES:
                        alias = _STEP_ALIASES[kind]
                        warnings.append(f"step kind {kind} aliased to {alias}")
                        kind = alias
                    parsed.append(Step(kind, sargs))
                steps[key] = tuple(parsed)
            else:
                posts[key] = tuple(literal_from_term(t, line) for t in payload.items)
        else:
            raise ParseError(f"unknown operation-file statement {functor}", line)

    step_kinds: dict[str, StepKind] = {}
    for kind in kind_names:
        if kind not in modifies:
            raise ValidationError(f"atomic step {kind} has no modifies/2 declaration")
        if kind not in causes:
            raise ValidationError(f"atomic step {kind} has no causes/2 declaration")
    for kind, pos in modifies.items():
        if kind not in kind_names:
            raise ValidationError(f"modifies/2 names undeclared step {kind}")
        arity = 2  # every bundled step kind is binary; shape checked below
        step_kinds[kind] = StepKind(kind, arity, pos, causes[kind])

    ops: dict[str, OperationSpec] = {name: OperationSpec(name) for name in op_names}
    for key in order:
        opname, block = key
        if opname not in ops:
            raise ValidationError(f"block {block} belongs to undeclared operation {opname}")
        if key not in pres:
            raise ValidationError(f"{opname}/{block} has no precondition")
        if key not in steps:
            raise ValidationError(f"{opname}/{block} has no program steps")
        if key not in posts:
            warnings.append(f"{opname}/{block} has no postcondition")
        pre = _join_implicit_keys(pres[key], steps[key])
        for step in steps[key]:
            if step.kind not in step_kinds:
                raise ValidationError(f"{opname}/{block} uses undeclared step kind {step.kind}")
            if len(step.args) != 2:
                raise ValidationError(f"step {step} must be binary")
        ops[opname].blocks[block] = BlockSpec(
            operation=opname,
            block=block,
            precondition=pre,
            steps=steps[key],
            postcondition=posts.get(key, ()),
        )

    for name, op in ops.items():
        if not op.blocks:
            warnings.append(f"operation {name} declares no blocks")
    return OperationSet(
        operations=list(ops.values()),
        step_kinds=step_kinds,
        structure=structure,
        warnings=warnings,
    )


def _two_args(term: TermT, line: int) -> tuple[TermT, str]:
    if not isinstance(term, Struct) or len(term.args) != 2:
        raise ParseError(f"{dsl.functor_of(term)}/2 expects two arguments", line)
    second = term.args[1]
    if not isinstance(second, (Name, Var)):
        raise ParseError("second argument must be a symbol", line)
    return term.args[0], str(second)


def _two_terms(term: TermT, line: int) -> tuple[TermT, TermT]:
    if not isinstance(term, Struct) or len(term.args) != 2:
        raise ParseError(f"{dsl.functor_of(term)}/2 expects two arguments", line)
    return term.args[0], term.args[1]


def _step_shape(term: TermT, line: int) -> tuple[str, tuple[str, ...]]:
    if not isinstance(term, Struct):
        raise ParseError(f"expected step template, found {term}", line)
    args = []
    for arg in term.args:
        if not isinstance(arg, (Name, Var)):
            raise ParseError(f"step argument must be a symbol: {term}", line)
        args.append(str(arg))
    return term.functor, tuple(args)


def _join_implicit_keys(
    pre: tuple[Literal, ...], step_list: tuple[Step, ...]
) -> tuple[Literal, ...]:
    """Append key(x, kx) for comparison symbols kx lacking an explicit join."""
    explicit = {
        lit.atom.args[1]
        for lit in pre
        if lit.positive and lit.atom.pred == "key" and len(lit.atom.args) == 2
    }
    mentioned: set[str] = set()
    for lit in pre:
        if lit.atom.pred not in COMPARISONS:
            mentioned.update(lit.atom.args)
    for step in step_list:
        mentioned.update(step.args)
    joins: list[Literal] = []
    joined: set[str] = set()
    for lit in pre:
        if lit.atom.pred not in COMPARISONS:
            continue
        for sym in lit.atom.args:
            if sym in explicit or sym in joined or dsl.is_variable(sym):
                continue
            if sym.startswith("k") and sym[1:] in mentioned:
                joins.append(Literal(Atom("key", (sym[1:], sym))))
                joined.add(sym)
    return pre + tuple(joins)


# ---------------------------------------------------------------------------
# block-level views used by analysis and code generation


@dataclass(frozen=True)
class BlockNodes:
    """Node roles cited by one block, in deterministic orders."""

    nodes: tuple[str, ...]  # every cited node, first-mention order
    fresh: tuple[str, ...]  # declared-unreachable, declaration order
    key_of: dict[str, str]  # node -> key symbol
    lock_order: tuple[str, ...]  # precondition-structural preorder


def block_nodes(block: BlockSpec, theory: Theory) -> BlockNodes:
    key_syms: set[str] = set()
    for lit in block.precondition:
        if lit.atom.pred == "key" and len(lit.atom.args) == 2:
            key_syms.add(lit.atom.args[1])
        elif lit.atom.pred in COMPARISONS:
            key_syms.update(lit.atom.args)

    nodes: list[str] = []
    for lit in block.precondition:
        if lit.atom.pred in COMPARISONS:
            continue
        for arg in lit.atom.args:
            if arg in key_syms or theory.is_constant(arg) or dsl.is_variable(arg):
                continue
            if arg not in nodes:
                nodes.append(arg)

    fresh: list[str] = []
    if theory.reachability is not None:
        for lit in block.precondition:
            if (
                not lit.positive
                and lit.atom.pred == theory.reachability
                and len(lit.atom.args) == 1
                and lit.atom.args[0] in nodes
                and lit.atom.args[0] not in fresh
            ):
                fresh.append(lit.atom.args[0])

    key_of: dict[str, str] = {}
    for lit in block.precondition:
        if lit.positive and lit.atom.pred == "key" and len(lit.atom.args) == 2:
            key_of.setdefault(lit.atom.args[0], lit.atom.args[1])

    lock_order = _plan_node_order(block, nodes)
    return BlockNodes(tuple(nodes), tuple(fresh), key_of, lock_order)


def _plan_node_order(block: BlockSpec, nodes: list[str]) -> tuple[str, ...]:
    """Roots (no structural predecessor) in first-mention order, then BFS."""
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    has_pred: set[str] = set()
    for lit in block.precondition:
        if lit.positive and lit.atom.pred in STRUCTURAL and len(lit.atom.args) == 2:
            src, dst = lit.atom.args
            if src in succ and dst in succ:
                if dst not in succ[src]:
                    succ[src].append(dst)
                has_pred.add(dst)
    ordered: list[str] = []
    queue = [n for n in nodes if n not in has_pred]
    while queue:
        node = queue.pop(0)
        if node in ordered:
            continue
        ordered.append(node)
        queue.extend(s for s in succ[node] if s not in ordered)
    ordered.extend(n for n in nodes if n not in ordered)
    return tuple(ordered)


def allocation_order(block: BlockSpec, theory: Theory) -> tuple[str, ...]:
    """Fresh nodes in the order their unreachability is declared."""
    return block_nodes(block, theory).fresh


# ---------------------------------------------------------------------------
# cross-checks


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.message}"


def validate_knowledge(theory: Theory, operations: OperationSet) -> list[Diagnostic]:
    diags = [Diagnostic("warning", w) for w in operations.warnings]
    if not theory.invariants and not any(r.is_constraint for r in theory.rules):
        diags.append(Diagnostic("warning", "theory declares no invariant"))

    for kind in operations.step_kinds.values():
        if kind.caused not in theory.fluents:
            diags.append(
                Diagnostic(
                    "error",
                    f"step kind {kind.name} causes {kind.caused}, which is not a fluent",
                )
            )

    for block in operations.all_blocks():
        where = f"{block.operation}/{block.block}"
        cited: set[str] = set()
        for lit in block.precondition:
            cited.update(lit.atom.args)
            pred = lit.atom.pred
            if pred in COMPARISONS:
                continue
            if pred not in theory.registry:
                diags.append(
                    Diagnostic("error", f"{where}: precondition predicate {pred} is undeclared")
                )
            elif theory.registry[pred] != len(lit.atom.args):
                diags.append(
                    Diagnostic(
                        "error",
                        f"{where}: {pred} used with arity {len(lit.atom.args)}, "
                        f"declared {theory.registry[pred]}",
                    )
                )
        for lit in block.postcondition:
            pred = lit.atom.pred
            if pred not in theory.registry and pred not in COMPARISONS:
                diags.append(
                    Diagnostic("error", f"{where}: postcondition predicate {pred} is undeclared")
                )
        for step in block.steps:
            for arg in step.args:
                if theory.is_constant(arg) or arg in cited:
                    continue
                diags.append(
                    Diagnostic(
                        "error",
                        f"{where}: step {step} cites {arg}, absent from the precondition",
                    )
                )
    return diags
