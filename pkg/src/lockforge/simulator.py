"""Exhaustive interleaving exploration of synthesized lock programs.

Each thread runs one operation block as the statement sequence lock*,
validate, update*, unlock*. Locks block; a blocked thread scheduled anyway
is a no-op tick. A failed validation releases every held lock and re-binds
the same block against the current heap with the thread's fresh nodes
pinned (modeling re-traversal); a thread that can no longer bind is wedged.
Structure invariants are checked when a thread commits its last update, and
terminal heaps are compared against precondition-checked serial replays of
the committed operations.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, replace

from .errors import SimulationError
from .kernel import (
    Atom,
    Binding,
    Evaluator,
    FactSet,
    KeyOrder,
    apply_step_sequential,
    apply_steps_atomic,
    check_constraints,
    key_order_closure,
    match_precondition,
)
from .knowledge import BlockSpec, OperationSet, Theory, block_nodes
from .instances import InstanceGraph

RETRY_LIMIT = 100
_RETRY_FOLD = 3  # exploration collapses retry counts beyond this


# ---------------------------------------------------------------------------
# abstract code and compiled programs


@dataclass(frozen=True)
class AbstractStatement:
    kind: str  # "lock" | "validate" | "update" | "unlock"
    arg: str | int | None = None

    def __str__(self) -> str:
        if self.kind == "validate":
            return "validate(Pre)"
        if self.kind == "update":
            return f"step[{self.arg}]"
        return f"{self.kind}({self.arg})"


@dataclass
class AbstractCode:
    operation: str
    block: str
    statements: list[AbstractStatement]
    order: tuple[int, ...]
    shared_nodes: tuple[str, ...]


def synthesize_abstract(
    theory: Theory, block: BlockSpec, order: tuple[int, ...] | None = None
) -> AbstractCode:
    """Schematic program: locks on shared (non-fresh) nodes in lock order,
    one validation, the steps in the accepted order, unlocks mirroring."""
    info = block_nodes(block, theory)
    if order is None:
        order = tuple(range(len(block.steps)))
    shared = tuple(n for n in info.lock_order if n not in info.fresh)
    statements = (
        [AbstractStatement("lock", n) for n in shared]
        + [AbstractStatement("validate")]
        + [AbstractStatement("update", i) for i in order]
        + [AbstractStatement("unlock", n) for n in shared]
    )
    return AbstractCode(block.operation, block.block, statements, order, shared)


@dataclass
class SimProgram:
    """One thread's work: an abstract block plus its initial binding."""

    abstract: AbstractCode
    block: BlockSpec
    binding: Binding

    @property
    def operation(self) -> str:
        return self.abstract.operation


def compile_abstract(
    abstract: AbstractCode, block: BlockSpec, binding: Binding
) -> SimProgram:
    return SimProgram(abstract, block, binding)


def concrete_statements(program: SimProgram, binding: Binding) -> tuple:
    """Ground the abstract statements under a (possibly re-bound) binding."""
    env = binding.env()
    out = []
    for st in program.abstract.statements:
        if st.kind in ("lock", "unlock"):
            out.append((st.kind, env[st.arg]))
        elif st.kind == "validate":
            out.append(("validate", None))
        else:
            out.append(("update", program.block.steps[st.arg].substitute(env)))
    return tuple(out)


def check_lock_symmetry(program: SimProgram) -> bool:
    """Locks and unlocks must name the same nodes in the same order."""
    locks = [st.arg for st in program.abstract.statements if st.kind == "lock"]
    unlocks = [st.arg for st in program.abstract.statements if st.kind == "unlock"]
    return locks == unlocks


def reverse_unlocks(program: SimProgram) -> SimProgram:
    """Mutation used by the symmetry test: release in reverse order."""
    statements = [st for st in program.abstract.statements if st.kind != "unlock"]
    statements += [
        AbstractStatement("unlock", n) for n in reversed(program.abstract.shared_nodes)
    ]
    mutated = AbstractCode(
        program.abstract.operation,
        program.abstract.block,
        statements,
        program.abstract.order,
        program.abstract.shared_nodes,
    )
    return SimProgram(mutated, program.block, program.binding)


# ---------------------------------------------------------------------------
# key order composition across threads


def compose_key_orders(
    base: KeyOrder, solo: list[tuple[tuple[str, ...], KeyOrder]]
) -> KeyOrder:
    """Merge each thread's fresh-key placements into one total order.

    Relations a thread's extension adds are re-asserted over the base; keys
    from different threads that land in the same gap are incomparable, so
    they are totalized in thread-id order.
    """
    atoms = list(base.to_atoms())
    for fresh_keys, order in solo:
        involved = set(fresh_keys)
        chain = order.chain()
        for i, a in enumerate(chain):
            for b in chain[i + 1 :]:
                if a in involved or b in involved:
                    atoms.append(Atom("lt", (a, b)))
        for key in fresh_keys:
            for member in order.members(key):
                if member != key:
                    atoms.append(Atom("eq", (key, member)))
    combined = key_order_closure(frozenset(atoms))
    ordered_fresh = [k for fresh_keys, _ in solo for k in fresh_keys]
    while True:
        gap = None
        for i, a in enumerate(ordered_fresh):
            for b in ordered_fresh[i + 1 :]:
                if not combined.holds("lt", a, b) and not combined.holds("lt", b, a) and not combined.holds("eq", a, b):
                    gap = (a, b)
                    break
            if gap:
                break
        if gap is None:
            return combined
        atoms.append(Atom("lt", gap))
        combined = key_order_closure(frozenset(atoms))


# ---------------------------------------------------------------------------
# exploration state


@dataclass(frozen=True)
class ThreadState:
    pc: int
    status: str  # "run" | "done" | "wedged"
    retries: int
    binding: Binding


@dataclass(frozen=True)
class WorldState:
    heap: FactSet
    locks: tuple[tuple[str, int], ...]  # node -> owning thread id
    threads: tuple[ThreadState, ...]
    log: tuple[tuple[int, Binding], ...]  # commit order


@dataclass
class Schedule:
    picks: list[int]

    def __str__(self) -> str:
        return ",".join(str(p) for p in self.picks)


@dataclass
class ExplorationReport:
    states: int
    terminals: int
    invariant_violations: list[tuple[str, str]]  # (schedule, violation)
    non_serializable: list[tuple[str, str]]  # (schedule, detail)
    deadlocks: list[str]
    wedged_terminals: int
    livelock_hits: int

    @property
    def ok(self) -> bool:
        return not (self.invariant_violations or self.non_serializable or self.deadlocks)


def _holder(locks: tuple[tuple[str, int], ...], node: str) -> int | None:
    for n, tid in locks:
        if n == node:
            return tid
    return None


class Simulation:
    """Shared machinery for exhaustive exploration and single runs."""

    def __init__(
        self,
        theory: Theory,
        operations: OperationSet,
        instance: InstanceGraph,
        programs: list[SimProgram],
        evaluator: Evaluator | None = None,
        retry_fold: int = RETRY_LIMIT,
    ):
        self.theory = theory
        self.operations = operations
        self.instance = instance
        self.programs = programs
        self.retry_fold = retry_fold
        self.ev = evaluator or Evaluator(theory)
        heap = set(instance.facts)
        solo = []
        for p in programs:
            heap.update(p.binding.fresh_facts())
            fresh_keys = tuple(
                "k" + conc for _, conc in p.binding.fresh
            )
            solo.append((fresh_keys, p.binding.extend_key_order(instance.key_order)))
        self.key_order = compose_key_orders(instance.key_order, solo)
        self.heap0 = frozenset(heap)
        self._stmt_cache: dict[tuple[int, Binding], tuple] = {}
        self._violation_cache: dict[FactSet, object] = {}
        self._outcome_cache: dict[FactSet, frozenset] = {}

    # -- small caches ------------------------------------------------------

    def statements(self, tid: int, binding: Binding) -> tuple:
        key = (tid, binding)
        if key not in self._stmt_cache:
            self._stmt_cache[key] = concrete_statements(self.programs[tid], binding)
        return self._stmt_cache[key]

    def violation(self, heap: FactSet):
        if heap not in self._violation_cache:
            closure = self.ev.closure(heap, self.key_order)
            self._violation_cache[heap] = check_constraints(self.theory, closure, self.key_order)
        return self._violation_cache[heap]

    def reachable_keys(self, heap: FactSet) -> frozenset:
        """Eq-classes of keys on reachable nodes: the observable dictionary."""
        if heap not in self._outcome_cache:
            closure = self.ev.closure(heap, self.key_order)
            reach = self.theory.reachability
            if reach is None:
                keys = {a.args[1] for a in heap if a.pred == "key"}
            else:
                nodes = {a.args[0] for a in closure if a.pred == reach and len(a.args) == 1}
                keys = {a.args[1] for a in heap if a.pred == "key" and a.args[0] in nodes}
            self._outcome_cache[heap] = frozenset(
                frozenset(self.key_order.members(k)) for k in keys
            )
        return self._outcome_cache[heap]

    # -- transition function ----------------------------------------------

    def initial(self) -> WorldState:
        threads = tuple(
            ThreadState(0, "run", 0, p.binding) for p in self.programs
        )
        return WorldState(self.heap0, (), threads, ())

    def step(self, world: WorldState, tid: int) -> tuple[WorldState, dict]:
        """Advance one thread by one statement. Returns (next, notes);
        notes flags commits, invariant violations, blocks, and livelock."""
        notes: dict = {}
        th = world.threads[tid]
        if th.status != "run":
            return world, notes
        stmts = self.statements(tid, th.binding)
        kind, arg = stmts[th.pc]

        if kind == "lock":
            holder = _holder(world.locks, arg)
            if holder is not None and holder != tid:
                notes["blocked"] = True
                return world, notes
            locks = world.locks if holder == tid else world.locks + ((arg, tid),)
            return self._with_thread(world, tid, replace(th, pc=th.pc + 1), locks=locks), notes

        if kind == "validate":
            if self._precondition_holds(world.heap, th.binding, tid):
                return self._with_thread(world, tid, replace(th, pc=th.pc + 1)), notes
            locks = tuple(p for p in world.locks if p[1] != tid)
            retries = th.retries + 1
            if retries >= RETRY_LIMIT:
                notes["livelock"] = True
            pinned = dict(th.binding.fresh)
            rebound = match_precondition(
                self.theory,
                world.heap,
                self.key_order,
                self.programs[tid].block,
                self.ev,
                pinned_env=pinned,
            )
            if not rebound:
                notes["wedged"] = True
                nt = replace(th, status="wedged", retries=min(retries, self.retry_fold))
                return self._with_thread(world, tid, nt, locks=locks), notes
            nt = ThreadState(0, "run", min(retries, self.retry_fold), rebound[0])
            return self._with_thread(world, tid, nt, locks=locks), notes

        if kind == "update":
            heap = apply_step_sequential(world.heap, arg, self.operations.step_kinds)
            new = replace(th, pc=th.pc + 1)
            world2 = self._with_thread(world, tid, new, heap=heap)
            next_kind = stmts[new.pc][0] if new.pc < len(stmts) else None
            if next_kind != "update":
                notes["commit"] = True
                world2 = replace(world2, log=world2.log + ((tid, th.binding),))
                violation = self.violation(heap)
                if violation is not None:
                    notes["violation"] = str(violation)
            return world2, notes

        if kind == "unlock":
            locks = tuple(p for p in world.locks if p != (arg, tid))
            new_pc = th.pc + 1
            status = "done" if new_pc == len(stmts) else "run"
            nt = replace(th, pc=new_pc, status=status)
            return self._with_thread(world, tid, nt, locks=locks), notes

        raise SimulationError(f"unknown statement kind {kind}")

    def _with_thread(self, world, tid, thread, heap=None, locks=None) -> WorldState:
        threads = tuple(thread if i == tid else t for i, t in enumerate(world.threads))
        return WorldState(
            heap if heap is not None else world.heap,
            locks if locks is not None else world.locks,
            threads,
            world.log,
        )

    def _precondition_holds(self, heap: FactSet, binding: Binding, tid: int) -> bool:
        closure = self.ev.closure(heap, self.key_order)
        env = binding.env()
        for lit in self.programs[tid].block.precondition:
            atom = lit.atom.substitute(env)
            if atom.pred in ("lt", "eq"):
                if not self.key_order.holds(atom.pred, atom.args[0], atom.args[1]):
                    return False
            elif lit.positive:
                if atom not in closure:
                    return False
            elif atom in closure:
                return False
        return True

    # -- serializability ---------------------------------------------------

    def serial_outcomes(self, log: tuple[tuple[int, Binding], ...]) -> set[frozenset]:
        """Final dictionaries of every feasible one-at-a-time replay.

        Each committed thread re-matches its block on the evolving heap with
        its fresh nodes pinned; infeasible orders are skipped.
        """
        outcomes: set[frozenset] = set()
        entries = list(log)
        for perm in itertools.permutations(entries):
            heap = set(self.instance.facts)
            for tid, _ in perm:
                heap.update(self.programs[tid].binding.fresh_facts())
            heap = frozenset(heap)
            feasible = True
            for tid, _ in perm:
                program = self.programs[tid]
                pinned = dict(program.binding.fresh)
                bindings = match_precondition(
                    self.theory, heap, self.key_order, program.block, self.ev,
                    pinned_env=pinned,
                )
                if not bindings:
                    feasible = False
                    break
                env = bindings[0].env()
                steps = [s.substitute(env) for s in program.block.steps]
                heap = apply_steps_atomic(heap, steps, self.operations.step_kinds)
            if feasible:
                outcomes.add(self.reachable_keys(heap))
        return outcomes


def explore(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph,
    programs: list[SimProgram],
    evaluator: Evaluator | None = None,
    max_states: int = 200000,
) -> ExplorationReport:
    """Breadth-first exploration of every schedule, deduplicating states."""
    sim = Simulation(theory, operations, instance, programs, evaluator, retry_fold=_RETRY_FOLD)
    start = sim.initial()
    parents: dict[WorldState, tuple[WorldState, int] | None] = {start: None}
    queue = deque([start])
    violations: list[tuple[str, str]] = []
    non_serializable: list[tuple[str, str]] = []
    deadlocks: list[str] = []
    terminals = 0
    wedged_terminals = 0
    livelock_hits = 0
    serial_cache: dict[tuple, set] = {}

    def schedule_of(world: WorldState) -> str:
        picks = []
        cur = world
        while parents[cur] is not None:
            prev, tid = parents[cur]
            picks.append(tid)
            cur = prev
        return ",".join(str(p) for p in reversed(picks))

    while queue:
        if len(parents) > max_states:
            raise SimulationError(f"state budget exceeded ({max_states})")
        world = queue.popleft()
        active = [i for i, t in enumerate(world.threads) if t.status == "run"]
        if not active:
            terminals += 1
            if any(t.status == "wedged" for t in world.threads):
                wedged_terminals += 1
            key = world.log
            if key not in serial_cache:
                serial_cache[key] = sim.serial_outcomes(world.log)
            outcomes = serial_cache[key]
            final = sim.reachable_keys(world.heap)
            if world.log and final not in outcomes:
                non_serializable.append(
                    (schedule_of(world), f"final keys {sorted(map(sorted, final))}")
                )
            continue
        progressed = False
        for tid in active:
            nxt, notes = sim.step(world, tid)
            if notes.get("livelock"):
                livelock_hits += 1
            if nxt == world:
                continue  # blocked: a no-op tick
            progressed = True
            if nxt not in parents:
                parents[nxt] = (world, tid)
                if "violation" in notes:
                    violations.append((schedule_of(nxt), notes["violation"]))
                queue.append(nxt)
        if not progressed:
            deadlocks.append(schedule_of(world))
    return ExplorationReport(
        states=len(parents),
        terminals=terminals,
        invariant_violations=violations,
        non_serializable=non_serializable,
        deadlocks=deadlocks,
        wedged_terminals=wedged_terminals,
        livelock_hits=livelock_hits,
    )


@dataclass
class RunResult:
    heap: FactSet
    committed: tuple[int, ...]
    violations: list[str]
    livelock: bool
    steps_taken: int


def simulate_schedule(
    theory: Theory,
    operations: OperationSet,
    instance: InstanceGraph,
    programs: list[SimProgram],
    schedule: list[int],
    evaluator: Evaluator | None = None,
) -> RunResult:
    """Deterministic single run following a schedule of thread picks; once
    the schedule is exhausted, remaining threads run round-robin."""
    sim = Simulation(theory, operations, instance, programs, evaluator)
    world = sim.initial()
    violations: list[str] = []
    livelock = False
    steps = 0
    picks = list(schedule)
    rotation = itertools.cycle(range(len(programs)))
    guard = 0
    while any(t.status == "run" for t in world.threads):
        guard += 1
        if guard > 10000:
            livelock = True
            break
        tid = picks.pop(0) if picks else next(rotation)
        if tid >= len(world.threads):
            raise SimulationError(f"schedule names thread {tid} of {len(world.threads)}")
        if world.threads[tid].status != "run":
            continue
        nxt, notes = sim.step(world, tid)
        if notes.get("livelock"):
            livelock = True
            break
        if "violation" in notes:
            violations.append(notes["violation"])
        if nxt != world:
            steps += 1
        world = nxt
    return RunResult(
        heap=world.heap,
        committed=tuple(tid for tid, _ in world.log),
        violations=violations,
        livelock=livelock,
        steps_taken=steps,
    )
