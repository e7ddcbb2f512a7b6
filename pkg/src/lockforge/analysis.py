"""Reasoning tasks over a knowledge set and an instance.

Five analyses feed the synthesis verdict: maximal-instance search, sequential
program-order checking, precondition lock guessing, lock adequacy under
bounded interference, and key-movement detection for lockless traversals.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

from .errors import AnalysisError, KeyOrderError
from .instances import InstanceGraph, candidate_instances
from .kernel import (
    Binding,
    Evaluator,
    FactSet,
    KeyOrder,
    Violation,
    apply_step_sequential,
    apply_steps_atomic,
    check_constraints,
    interference_horizon,
    match_precondition,
)
from .knowledge import (
    Atom,
    BlockSpec,
    OperationSet,
    Step,
    Theory,
    block_nodes,
)

_STRUCT_HIDE = ("node", "key")


def _structural_facts(facts: FactSet) -> tuple[str, ...]:
    return tuple(
        str(a) for a in sorted(facts, key=lambda a: (a.pred, a.args)) if a.pred not in _STRUCT_HIDE
    )


# ---------------------------------------------------------------------------
# maximal instance search


@dataclass
class RejectedCandidate:
    facts: tuple[str, ...]
    reason: str


@dataclass
class InstanceSearch:
    instance: InstanceGraph | None
    rejected: list[RejectedCandidate]


def find_maximal_instance(
    theory: Theory,
    operations: OperationSet,
    max_nodes: int = 6,
    evaluator: Evaluator | None = None,
) -> InstanceSearch:
    """Smallest valid instance where every operation block has a binding.

    Candidates come in canonical order (size, then shape rank). Each failed
    candidate is recorded with why it failed: an invariant violation or the
    first inapplicable block.
    """
    ev = evaluator or Evaluator(theory)
    rejected: list[RejectedCandidate] = []
    for cand in candidate_instances(theory, max_nodes):
        closure = ev.closure(cand.facts, cand.key_order)
        violation = check_constraints(theory, closure, cand.key_order)
        if violation is not None:
            rejected.append(
                RejectedCandidate(_structural_facts(cand.facts), f"invariant {violation} violated")
            )
            continue
        missing = None
        for block in operations.all_blocks():
            if not match_precondition(theory, cand.facts, cand.key_order, block, ev):
                missing = f"{block.operation}/{block.block} inapplicable"
                break
        if missing is not None:
            rejected.append(RejectedCandidate(_structural_facts(cand.facts), missing))
            continue
        return InstanceSearch(cand, rejected)
    return InstanceSearch(None, rejected)


# ---------------------------------------------------------------------------
# sequential program order


@dataclass
class OrderCheck:
    accepted: bool
    fail_time: int | None = None
    violation: Violation | None = None


@dataclass
class OrderResult:
    operation: str
    block: str
    binding: Binding
    step_count: int
    accepted: list[tuple[int, ...]]
    rejections: list[tuple[tuple[int, ...], int, str]]
    rejections_truncated: bool = False

    @property
    def order_exists(self) -> bool:
        return bool(self.accepted)


def check_order(
    theory: Theory,
    operations: OperationSet,
    block: BlockSpec,
    instance: InstanceGraph,
    binding: Binding,
    perm: tuple[int, ...],
    evaluator: Evaluator | None = None,
) -> OrderCheck:
    """Run one step order, checking invariants at every time 0..len(steps)."""
    ev = evaluator or Evaluator(theory)
    env = binding.env()
    state = frozenset(set(instance.facts) | set(binding.fresh_facts()))
    order = binding.extend_key_order(instance.key_order)
    violation = check_constraints(theory, ev.closure(state, order), order)
    if violation is not None:
        return OrderCheck(False, 0, violation)
    for t, idx in enumerate(perm, start=1):
        step = block.steps[idx].substitute(env)
        state = apply_step_sequential(state, step, operations.step_kinds)
        violation = check_constraints(theory, ev.closure(state, order), order)
        if violation is not None:
            return OrderCheck(False, t, violation)
    return OrderCheck(True)


_REJECTION_CAP = 32


def check_program_order(
    theory: Theory,
    operations: OperationSet,
    block: BlockSpec,
    instance: InstanceGraph,
    binding: Binding | None = None,
    evaluator: Evaluator | None = None,
) -> OrderResult:
    """All invariant-preserving step orders, lexicographic, prefix-pruned.

    Shared prefixes reach shared states, so state validity is memoized by
    fact set; a violating prefix prunes every permutation extending it.
    """
    ev = evaluator or Evaluator(theory)
    if binding is None:
        bindings = match_precondition(theory, instance.facts, instance.key_order, block, ev)
        if not bindings:
            raise AnalysisError(f"{block.operation}/{block.block}: no binding on the instance")
        binding = bindings[0]
    env = binding.env()
    order = binding.extend_key_order(instance.key_order)
    base = frozenset(set(instance.facts) | set(binding.fresh_facts()))
    ground = [s.substitute(env) for s in block.steps]

    validity: dict[FactSet, Violation | None] = {}

    def valid(state: FactSet) -> Violation | None:
        if state not in validity:
            validity[state] = check_constraints(theory, ev.closure(state, order), order)
        return validity[state]

    accepted: list[tuple[int, ...]] = []
    rejections: list[tuple[tuple[int, ...], int, str]] = []
    truncated = False
    n = len(ground)

    base_violation = valid(base)

    def extend(prefix: tuple[int, ...], state: FactSet) -> None:
        nonlocal truncated
        if len(prefix) == n:
            accepted.append(prefix)
            return
        remaining = [i for i in range(n) if i not in prefix]
        for idx in remaining:
            nxt = apply_step_sequential(state, ground[idx], operations.step_kinds)
            violation = valid(nxt)
            if violation is None:
                extend(prefix + (idx,), nxt)
            elif len(rejections) < _REJECTION_CAP:
                rejections.append((prefix + (idx,), len(prefix) + 1, str(violation)))
            else:
                truncated = True

    if base_violation is None:
        extend((), base)
    else:
        rejections.append(((), 0, str(base_violation)))
    return OrderResult(
        operation=block.operation,
        block=block.block,
        binding=binding,
        step_count=n,
        accepted=accepted,
        rejections=rejections,
        rejections_truncated=truncated,
    )


# ---------------------------------------------------------------------------
# lock guessing


def guess_locks(theory: Theory, block: BlockSpec, binding: Binding) -> tuple[str, ...]:
    """Every cited node (bound and fresh), in structural preorder."""
    info = block_nodes(block, theory)
    env = binding.env()
    return tuple(env[n] for n in info.lock_order)


# ---------------------------------------------------------------------------
# lock adequacy under bounded interference


@dataclass
class CounterexampleTrace:
    events: list[str]
    states: list[FactSet]
    key_order: KeyOrder
    falsified: str

    @property
    def final_heap(self) -> FactSet:
        return self.states[-1]


@dataclass
class AdequacyResult:
    operation: str
    block: str
    binding: Binding
    locks: tuple[str, ...]
    horizon: int
    adequate: bool
    counterexample: CounterexampleTrace | None = None
    states_explored: int = 0


def _fresh_suffix_for(state: FactSet, info_fresh: tuple[str, ...]) -> str:
    """Time-independent fresh naming: first _i<k> suffix free in the state.

    Keeping names independent of the firing time lets interference orderings
    that produce the same heap collapse to one explored state.
    """
    present = {a.args[0] for a in state if a.pred == "node"}
    k = 0
    while any(f"{v}_i{k}" in present for v in info_fresh):
        k += 1
    return f"_i{k}"


_FRESH_NAME = re.compile(r"^(?P<base>.+)_i\d+$")


def _canonical_signature(state: FactSet, order: KeyOrder):
    """Dedup key that ignores how interference-fresh nodes were numbered.

    Commuting events produce the same heap up to the _i<k> indices handed
    out along the way. Renaming those nodes by (variable, key position)
    folds every firing order of one event set into a single signature, which
    keeps the breadth-first search polynomial instead of factorial. Nodes of
    the protected binding and of the instance keep their names, so conjunct
    falsification is identical across states sharing a signature.
    """
    order_atoms = order.to_atoms()
    fresh = sorted(
        {a.args[0] for a in state if a.pred == "node" and _FRESH_NAME.match(a.args[0])}
    )
    if not fresh:
        return state, tuple(sorted((a.pred,) + a.args for a in order_atoms))
    try:
        pos = {rep: i for i, rep in enumerate(order.chain())}
    except KeyOrderError:
        pos = {}

    def key_position(node: str) -> int:
        for cls in order.classes:
            if "k" + node in cls:
                return pos.get(cls[0], -1)
        return -1

    rename: dict[str, str] = {}
    counters: dict[str, int] = {}
    match = _FRESH_NAME.match
    for name in sorted(fresh, key=lambda n: (match(n).group("base"), key_position(n), n)):
        base = match(name).group("base")
        j = counters.get(base, 0)
        counters[base] = j + 1
        rename[name] = f"{base}_c{j}"
        rename["k" + name] = f"k{base}_c{j}"

    def rn(sym: str) -> str:
        return rename.get(sym, sym)

    sig_facts = frozenset(Atom(a.pred, tuple(rn(x) for x in a.args)) for a in state)
    sig_order = tuple(sorted((a.pred,) + tuple(rn(x) for x in a.args) for a in order_atoms))
    return sig_facts, sig_order


def apply_event(
    state: FactSet,
    order: KeyOrder,
    operations: OperationSet,
    block: BlockSpec,
    binding: Binding,
) -> tuple[FactSet, KeyOrder]:
    """Fire one interfering operation atomically."""
    env = binding.env()
    augmented = frozenset(set(state) | set(binding.fresh_facts()))
    ground = [s.substitute(env) for s in block.steps]
    return apply_steps_atomic(augmented, ground, operations.step_kinds), binding.extend_key_order(
        order
    )


def _event_label(block: BlockSpec, binding: Binding, time: int) -> str:
    env = binding.env()
    args = ", ".join(f"{k}={v}" for k, v in itertools.chain(binding.assignment, binding.fresh))
    return f"t{time}: {block.operation}/{block.block}[{args}]"


@dataclass
class _BfsNode:
    state: FactSet
    order: KeyOrder
    parent: tuple | None  # signature of the predecessor state
    label: str | None
    level: int


def _interference_bfs(
    theory: Theory,
    operations: OperationSet,
    start_state: FactSet,
    start_order: KeyOrder,
    locks: tuple[str, ...],
    horizon: int,
    ev: Evaluator,
):
    """Breadth-first closure of guard-disjoint, invariant-preserving events."""
    lockset = set(locks)
    nodes: dict[tuple, _BfsNode] = {}
    start = _BfsNode(start_state, start_order, None, None, 0)
    start_sig = _canonical_signature(start_state, start_order)
    nodes[start_sig] = start
    frontier = [(start_sig, start)]
    levels: list[list[_BfsNode]] = [[start]]
    for t in range(horizon):
        nxt: list[tuple] = []
        for sig, node in frontier:
            for block in operations.all_blocks():
                info = block_nodes(block, theory)
                suffix = _fresh_suffix_for(node.state, info.fresh)
                for b in match_precondition(
                    theory, node.state, node.order, block, ev, fresh_suffix=suffix
                ):
                    guard = set(guess_locks(theory, block, b))
                    if guard & lockset:
                        continue
                    s2, k2 = apply_event(node.state, node.order, operations, block, b)
                    child_sig = _canonical_signature(s2, k2)
                    if child_sig in nodes:
                        continue
                    closure = ev.closure(s2, k2)
                    if check_constraints(theory, closure, k2) is not None:
                        continue  # interference is assumed individually correct
                    child = _BfsNode(s2, k2, sig, _event_label(block, b, t), t + 1)
                    nodes[child_sig] = child
                    nxt.append((child_sig, child))
        if not nxt:
            break
        levels.append([node for _, node in nxt])
        frontier = nxt
    return nodes, levels


def _falsified_conjunct(
    theory: Theory,
    block: BlockSpec,
    binding: Binding,
    state: FactSet,
    order: KeyOrder,
    ev: Evaluator,
) -> str | None:
    env = binding.env()
    closure = ev.closure(state, order)
    for lit in block.precondition:
        atom = lit.atom.substitute(env)
        if atom.pred in ("lt", "eq"):
            if not order.holds(atom.pred, atom.args[0], atom.args[1]):
                return str(atom)
        elif lit.positive:
            if atom not in closure:
                return str(atom)
        else:
            if atom in closure:
                return f"not {atom}"
    return None


def check_lock_adequacy(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph,
    block: BlockSpec,
    binding: Binding | None = None,
    locks: tuple[str, ...] | None = None,
    horizon: int | None = None,
    evaluator: Evaluator | None = None,
) -> AdequacyResult:
    """Can guard-disjoint interference falsify the protected precondition?

    The protected operation holds its locks and never runs; interference
    events fire atomically, one per time, up to the horizon. Traces that
    break a structure invariant are discarded. The verdict is adequate when
    no reachable state falsifies any protected conjunct.
    """
    ev = evaluator or Evaluator(theory)
    if binding is None:
        bindings = match_precondition(theory, instance.facts, instance.key_order, block, ev)
        if not bindings:
            raise AnalysisError(f"{block.operation}/{block.block}: no binding on the instance")
        binding = bindings[0]
    if locks is None:
        locks = guess_locks(theory, block, binding)
    if horizon is None:
        horizon = interference_horizon(
            theory, operations, instance.facts, instance.key_order, ev
        )

    start_state = frozenset(set(instance.facts) | set(binding.fresh_facts()))
    start_order = binding.extend_key_order(instance.key_order)
    nodes, levels = _interference_bfs(
        theory, operations, start_state, start_order, locks, horizon, ev
    )

    for level in levels:
        for node in level:
            conjunct = _falsified_conjunct(theory, block, binding, node.state, node.order, ev)
            if conjunct is None:
                continue
            events: list[str] = []
            states: list[FactSet] = [node.state]
            cur = node
            while cur.parent is not None:
                assert cur.label is not None
                events.append(cur.label)
                cur = nodes[cur.parent]
                states.append(cur.state)
            events.reverse()
            states.reverse()
            trace = CounterexampleTrace(events, states, node.order, conjunct)
            return AdequacyResult(
                block.operation,
                block.block,
                binding,
                locks,
                horizon,
                adequate=False,
                counterexample=trace,
                states_explored=len(nodes),
            )
    return AdequacyResult(
        block.operation,
        block.block,
        binding,
        locks,
        horizon,
        adequate=True,
        states_explored=len(nodes),
    )


def interference_heaps(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph,
    block: BlockSpec,
    binding: Binding | None = None,
    locks: tuple[str, ...] | None = None,
    horizon: int | None = None,
    evaluator: Evaluator | None = None,
) -> list[set]:
    """Reachable heaps per interference depth (for cross-check oracles)."""
    ev = evaluator or Evaluator(theory)
    if binding is None:
        binding = match_precondition(theory, instance.facts, instance.key_order, block, ev)[0]
    if locks is None:
        locks = guess_locks(theory, block, binding)
    if horizon is None:
        horizon = interference_horizon(theory, operations, instance.facts, instance.key_order, ev)
    start_state = frozenset(set(instance.facts) | set(binding.fresh_facts()))
    start_order = binding.extend_key_order(instance.key_order)
    _, levels = _interference_bfs(theory, operations, start_state, start_order, locks, horizon, ev)
    return [{n.state for n in level} for level in levels]


# ---------------------------------------------------------------------------
# key movement


@dataclass
class KeyMovementResult:
    verdict: str  # "detected" | "absent" | "unknown"
    search_node: str | None = None
    missed_node: str | None = None
    event: str | None = None
    fire_time: int | None = None

    @property
    def detected(self) -> bool:
        return self.verdict == "detected"


def _root_of(theory: Theory, instance: InstanceGraph) -> str | None:
    for atom in instance.facts:
        if atom.pred == "root" and len(atom.args) == 1:
            return atom.args[0]
    if theory.reachability is not None:
        for rule in theory.rules_for(theory.reachability):
            if not rule.body and rule.head is not None and len(rule.head.args) == 1:
                arg = rule.head.args[0]
                if not arg[0].isupper():
                    return arg
    return None


def _end_nodes(theory: Theory) -> set[str]:
    out = set()
    for rule in theory.rules_for("end_node"):
        if not rule.body and rule.head is not None and len(rule.head.args) == 1:
            out.add(rule.head.args[0])
    return out


def detect_key_movement(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph,
    evaluator: Evaluator | None = None,
    relation: str = "next_node",
) -> KeyMovementResult:
    """Can one mid-traversal interference event hide a node that stays on the
    instantaneous search path at every time from a stepwise traversal?

    The walker reads next_node against the heap as it was when the hop was
    taken; the oracle path is recomputed against each time's heap. A miss is
    a node on every oracle path that the walker never visits.
    """
    if relation not in theory.registry:
        return KeyMovementResult("unknown")
    ev = evaluator or Evaluator(theory)
    root = _root_of(theory, instance)
    if root is None:
        return KeyMovementResult("unknown")
    ends = _end_nodes(theory)
    max_hops = len(instance.nodes) + 3

    searchable = sorted(
        a.args[0] for a in instance.facts if a.pred == "key" and a.args[0] in instance.nodes
    )

    base_events: list[tuple[BlockSpec, Binding]] = []
    for block in operations.all_blocks():
        info = block_nodes(block, theory)
        suffix = _fresh_suffix_for(instance.facts, info.fresh)
        for b in match_precondition(
            theory, instance.facts, instance.key_order, block, ev, fresh_suffix=suffix
        ):
            base_events.append((block, b))

    for target in searchable:
        for block, b in base_events:
            for fire_time in range(max_hops):
                result = _simulate_traversal(
                    theory, operations, instance, ev, relation, root, ends,
                    target, block, b, fire_time, max_hops,
                )
                if result is not None:
                    missed = result
                    return KeyMovementResult(
                        "detected",
                        search_node=target,
                        missed_node=missed,
                        event=_event_label(block, b, fire_time),
                        fire_time=fire_time,
                    )
    return KeyMovementResult("absent")


def _simulate_traversal(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph,
    ev: Evaluator,
    relation: str,
    root: str,
    ends: set[str],
    target: str,
    block: BlockSpec,
    binding: Binding,
    fire_time: int,
    max_hops: int,
) -> str | None:
    pre_state, pre_order = instance.facts, instance.key_order
    post_state, post_order = apply_event(pre_state, pre_order, operations, block, binding)
    if check_constraints(theory, ev.closure(post_state, post_order), post_order) is not None:
        return None  # interference is assumed individually correct

    def heap_at(t: int) -> tuple[FactSet, KeyOrder]:
        return (pre_state, pre_order) if t <= fire_time else (post_state, post_order)

    def next_hops(state: FactSet, order: KeyOrder, node: str) -> list[str]:
        closure = ev.closure(state, order)
        return sorted(
            a.args[1]
            for a in closure
            if a.pred == relation and a.args[0] == node and a.args[2] == target
        )

    visited = []
    current = root
    t = 0
    while t <= max_hops:
        visited.append(current)
        if current in ends:
            break
        state, order = heap_at(t)
        hops = next_hops(state, order, current)
        if not hops:
            break
        current = hops[0]
        t += 1
    end_time = t if t <= max_hops else max_hops

    def oracle(t: int) -> set[str]:
        state, order = heap_at(t)
        closure = ev.closure(state, order)
        adj: dict[str, list[str]] = {}
        for a in closure:
            if a.pred == relation and a.args[2] == target:
                adj.setdefault(a.args[0], []).append(a.args[1])
        seen = {root}
        queue = [root]
        while queue:
            node = queue.pop()
            for succ in adj.get(node, ()):
                if succ not in seen:
                    seen.add(succ)
                    queue.append(succ)
        return seen

    always_on_path = set(instance.nodes)
    for time in range(end_time + 1):
        always_on_path &= oracle(time)
        if not always_on_path:
            return None
    missed = sorted(always_on_path - set(visited))
    return missed[0] if missed else None


# ---------------------------------------------------------------------------
# strategy selection and the synthesis driver


STRATEGIES = ("fine_grained", "rcu", "coarse_or_rcu", "coarse_grained")


def select_strategy(order_all: bool, adequacy_all: bool, movement: str) -> str:
    if movement == "detected":
        return "rcu"
    if adequacy_all and order_all:
        return "fine_grained"
    if adequacy_all and not order_all:
        return "coarse_or_rcu"
    return "coarse_grained"


@dataclass
class BlockAnalysis:
    block: BlockSpec
    binding: Binding
    locks: tuple[str, ...]
    order: OrderResult
    adequacy: AdequacyResult


@dataclass
class SynthesisResult:
    theory: Theory
    operations: OperationSet
    instance: InstanceGraph
    search: InstanceSearch | None
    blocks: list[BlockAnalysis]
    movement: KeyMovementResult
    horizon: int
    strategy: str = ""

    @property
    def adequacy_all(self) -> bool:
        return all(b.adequacy.adequate for b in self.blocks)

    @property
    def order_all(self) -> bool:
        return all(b.order.order_exists for b in self.blocks)

    def block_analysis(self, operation: str, block: str) -> BlockAnalysis:
        for b in self.blocks:
            if b.block.operation == operation and b.block.block == block:
                return b
        raise KeyError((operation, block))


def run_synthesis(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph | None = None,
    max_nodes: int = 6,
    horizon: int | None = None,
    lock_overrides: dict[tuple[str, str], tuple[str, ...]] | None = None,
) -> SynthesisResult:
    """Full analysis pipeline; lock_overrides replaces the guessed lock set
    for selected (operation, block) pairs with the named schematic nodes."""
    ev = Evaluator(theory)
    search = None
    if instance is None:
        search = find_maximal_instance(theory, operations, max_nodes, ev)
        if search.instance is None:
            raise AnalysisError(
                f"no applicable instance within {max_nodes} nodes "
                f"({len(search.rejected)} candidates rejected)"
            )
        instance = search.instance

    actual_horizon = horizon
    if actual_horizon is None:
        actual_horizon = interference_horizon(
            theory, operations, instance.facts, instance.key_order, ev
        )

    analyses: list[BlockAnalysis] = []
    for block in operations.all_blocks():
        bindings = match_precondition(theory, instance.facts, instance.key_order, block, ev)
        if not bindings:
            raise AnalysisError(f"{block.operation}/{block.block}: no binding on the instance")
        binding = bindings[0]
        order = check_program_order(theory, operations, block, instance, binding, ev)
        override = (lock_overrides or {}).get((block.operation, block.block))
        if override is None:
            locks = guess_locks(theory, block, binding)
        else:
            env = binding.env()
            missing = [n for n in override if n not in env]
            if missing:
                raise AnalysisError(
                    f"{block.operation}/{block.block}: override names unknown nodes {missing}"
                )
            locks = tuple(env[n] for n in override)
        adequacy = check_lock_adequacy(
            theory, operations, instance, block, binding, locks, actual_horizon, ev
        )
        analyses.append(BlockAnalysis(block, binding, locks, order, adequacy))

    movement = detect_key_movement(theory, operations, instance, ev)
    result = SynthesisResult(
        theory=theory,
        operations=operations,
        instance=instance,
        search=search,
        blocks=analyses,
        movement=movement,
        horizon=actual_horizon,
    )
    result.strategy = select_strategy(result.order_all, result.adequacy_all, movement.verdict)
    return result
