"""Deductive kernel: symbolic key orders, stratified least fixpoints,
precondition matching and field-granular step application.

Facts are ground Atoms over symbolic constants. Key comparisons (lt, eq) are
never stored as facts: they are evaluated against a KeyOrder, a transitive
closure of symbolic constraints where eq merges equivalence classes. Fresh
keys introduced by operation bindings are placed into gaps of a total order,
and distinct placements count as distinct bindings.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import KeyOrderError, StratificationError, ValidationError
from .knowledge import (
    COMPARISONS,
    Atom,
    BlockSpec,
    Literal,
    Rule,
    Step,
    StepKind,
    Theory,
    block_nodes,
)

FactSet = frozenset  # of Atom

# ---------------------------------------------------------------------------
# symbolic key order


@dataclass(frozen=True)
class Placement:
    """Where a fresh key lands relative to an existing total order.

    kind "gap": strictly between chain positions index-1 and index
    (index 0 is below everything, index len(chain) above everything).
    kind "merge": equal to the class at chain position index.
    """

    kind: str
    index: int

    def describe(self, chain: tuple[str, ...]) -> str:
        if self.kind == "merge":
            return f"equal to {chain[self.index]}"
        if self.index == 0:
            return f"below {chain[0]}" if chain else "anywhere"
        if self.index == len(chain):
            return f"above {chain[-1]}"
        return f"between {chain[self.index - 1]} and {chain[self.index]}"


@dataclass(frozen=True)
class KeyOrder:
    classes: tuple[tuple[str, ...], ...]  # sorted members; tuple sorted by rep
    lt_pairs: frozenset  # of (rep, rep)

    def _rep_map(self) -> dict[str, str]:
        cached = self.__dict__.get("_reps")
        if cached is None:
            cached = {}
            for cls in self.classes:
                rep = cls[0]
                for member in cls:
                    cached[member] = rep
            object.__setattr__(self, "_reps", cached)
        return cached

    def _rep(self, key: str) -> str | None:
        return self._rep_map().get(key)

    def knows(self, key: str) -> bool:
        return key in self._rep_map()

    def holds_lt(self, a: str, b: str) -> bool:
        reps = self._rep_map()
        ra, rb = reps.get(a), reps.get(b)
        return ra is not None and rb is not None and (ra, rb) in self.lt_pairs

    def holds_eq(self, a: str, b: str) -> bool:
        reps = self._rep_map()
        ra = reps.get(a)
        return ra is not None and ra == reps.get(b)

    def holds(self, pred: str, a: str, b: str) -> bool:
        return self.holds_lt(a, b) if pred == "lt" else self.holds_eq(a, b)

    def chain(self) -> tuple[str, ...]:
        """Ascending class representatives; raises unless the order is total."""
        cached = self.__dict__.get("_chain")
        if cached is not None:
            return cached
        reps = [cls[0] for cls in self.classes]
        for a, b in itertools.combinations(reps, 2):
            if (a, b) not in self.lt_pairs and (b, a) not in self.lt_pairs:
                raise KeyOrderError(f"key order is not total: {a} vs {b} unrelated")
        out = tuple(sorted(reps, key=lambda r: sum(1 for x in reps if (x, r) in self.lt_pairs)))
        object.__setattr__(self, "_chain", out)
        return out

    def members(self, key: str) -> tuple[str, ...]:
        """Equality class of a key (the key itself if unknown)."""
        for cls in self.classes:
            if key in cls:
                return cls
        return (key,)

    def with_key(self, key: str, placement: Placement) -> "KeyOrder":
        chain = self.chain()
        if placement.kind == "merge":
            target = chain[placement.index]
            classes = tuple(
                tuple(sorted(cls + (key,))) if cls[0] == target else cls for cls in self.classes
            )
            lt = set()
            for a, b in self.lt_pairs:
                na = min(a, key) if a == target else a
                nb = min(b, key) if b == target else b
                lt.add((na, nb))
            return KeyOrder(tuple(sorted(classes)), frozenset(lt))
        lt = set(self.lt_pairs)
        for i, rep in enumerate(chain):
            if i < placement.index:
                lt.add((rep, key))
            else:
                lt.add((key, rep))
        classes = tuple(sorted(self.classes + ((key,),)))
        return KeyOrder(classes, frozenset(lt))

    def placements(self) -> list[Placement]:
        """Every distinct spot a fresh key could occupy, deterministic order."""
        n = len(self.chain())
        gaps = [Placement("gap", i) for i in range(n + 1)]
        merges = [Placement("merge", i) for i in range(n)]
        return gaps + merges

    def to_atoms(self) -> list[Atom]:
        """The closed lt relation plus eq members, for export and reports."""
        out = [Atom("lt", pair) for pair in sorted(self.lt_pairs)]
        for cls in self.classes:
            for extra in cls[1:]:
                out.append(Atom("eq", (cls[0], extra)))
        return out


def key_order_closure(atoms) -> KeyOrder:
    """Close lt/eq constraint atoms; eq merges classes; cycles are errors."""
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            lo, hi = sorted((ra, rb))
            parent[hi] = lo

    lts: list[tuple[str, str]] = []
    for item in atoms:
        atom = item.atom if isinstance(item, Literal) else item
        if atom.pred == "eq":
            union(atom.args[0], atom.args[1])
        elif atom.pred == "lt":
            find(atom.args[0])
            find(atom.args[1])
            lts.append((atom.args[0], atom.args[1]))
        else:
            raise ValidationError(f"key order accepts lt/eq only, got {atom.pred}")

    edges: set[tuple[str, str]] = {(find(a), find(b)) for a, b in lts}
    reps = sorted({find(k) for k in parent})
    closed = set(edges)
    changed = True
    while changed:
        changed = False
        for (a, b), (c, d) in itertools.product(tuple(closed), tuple(closed)):
            if b == c and (a, d) not in closed:
                closed.add((a, d))
                changed = True
    for a, b in closed:
        if a == b:
            raise KeyOrderError(f"contradictory key constraints: {a} < {a}")

    groups: dict[str, list[str]] = {r: [] for r in reps}
    for key in parent:
        groups[find(key)].append(key)
    classes = tuple(sorted(tuple(sorted(g)) for g in groups.values()))
    # representatives are the lexicographic minimum of each class
    rep_fix = {cls[0]: cls[0] for cls in classes}
    remap = {}
    for cls in classes:
        for m in cls:
            remap[m] = cls[0]
    closed = {(remap[a], remap[b]) for a, b in closed}
    for a, b in closed:
        if a == b:
            raise KeyOrderError(f"contradictory key constraints through equality: {a}")
    del rep_fix
    return KeyOrder(classes, frozenset(closed))


# ---------------------------------------------------------------------------
# stratification and fixpoint


def stratify(theory: Theory) -> list[list[Rule]]:
    """Group defining rules into strata; negation may not cross a cycle."""
    preds = set(theory.registry)
    stratum = {p: 0 for p in preds}
    rules = [r for r in theory.rules if r.head is not None]
    limit = len(preds) + 1
    for round_no in range(limit + 1):
        changed = False
        for rule in rules:
            assert rule.head is not None
            h = rule.head.pred
            for lit in rule.body:
                if lit.atom.pred in COMPARISONS:
                    continue
                need = stratum[lit.atom.pred] + (0 if lit.positive else 1)
                if stratum[h] < need:
                    stratum[h] = need
                    changed = True
        if not changed:
            break
        if round_no == limit:
            worst = max(stratum, key=lambda p: stratum[p])
            raise StratificationError(
                f"negation cycle through predicate {worst}: theory is not stratified"
            )
    buckets: dict[int, list[Rule]] = {}
    for rule in rules:
        assert rule.head is not None
        buckets.setdefault(stratum[rule.head.pred], []).append(rule)
    return [buckets[k] for k in sorted(buckets)]


def _reorder_body(body: tuple[Literal, ...]) -> tuple[Literal, ...]:
    pos = [l for l in body if l.positive and l.atom.pred not in COMPARISONS]
    cmp_ = [l for l in body if l.atom.pred in COMPARISONS]
    neg = [l for l in body if not l.positive and l.atom.pred not in COMPARISONS]
    return tuple(pos + cmp_ + neg)


class _FactIndex:
    """Ground atoms indexed by predicate and by first/second argument."""

    __slots__ = ("atoms", "by_pred", "by_arg0", "by_arg1")

    def __init__(self, atoms=()):
        self.atoms: set[Atom] = set()
        self.by_pred: dict[str, list[tuple[str, ...]]] = {}
        self.by_arg0: dict[tuple[str, str], list[tuple[str, ...]]] = {}
        self.by_arg1: dict[tuple[str, str], list[tuple[str, ...]]] = {}
        for atom in atoms:
            self.add(atom)

    def add(self, atom: Atom) -> bool:
        if atom in self.atoms:
            return False
        self.atoms.add(atom)
        args = atom.args
        self.by_pred.setdefault(atom.pred, []).append(args)
        if args:
            self.by_arg0.setdefault((atom.pred, args[0]), []).append(args)
            if len(args) > 1:
                self.by_arg1.setdefault((atom.pred, args[1]), []).append(args)
        return True

    def has(self, pred: str, args: tuple[str, ...]) -> bool:
        return Atom(pred, args) in self.atoms

    def candidates(self, pred: str, bound0, bound1):
        if bound0 is not None:
            return self.by_arg0.get((pred, bound0), ())
        if bound1 is not None:
            return self.by_arg1.get((pred, bound1), ())
        return self.by_pred.get(pred, ())


def _match_literals(
    body: tuple[Literal, ...],
    index: _FactIndex,
    key_order: KeyOrder,
    env: dict[str, str],
):
    """Yield all environments satisfying the (reordered) body."""
    if not body:
        yield env
        return
    lit, rest = body[0], body[1:]
    pred = lit.atom.pred
    if pred in COMPARISONS:
        args = [env.get(a, a) for a in lit.atom.args]
        if any(a[0].isupper() for a in args):
            raise ValidationError(f"comparison {lit.atom} has unbound arguments")
        if key_order.holds(pred, args[0], args[1]):
            yield from _match_literals(rest, index, key_order, env)
        return
    if not lit.positive:
        args = tuple(env.get(a, a) for a in lit.atom.args)
        if any(a[0].isupper() for a in args):
            raise ValidationError(f"negated literal {lit.atom} has unbound arguments")
        if not index.has(pred, args):
            yield from _match_literals(rest, index, key_order, env)
        return
    pat = lit.atom.args
    bound0 = bound1 = None
    if pat:
        a0 = pat[0]
        bound0 = env.get(a0) if a0[0].isupper() else a0
        if len(pat) > 1:
            a1 = pat[1]
            bound1 = env.get(a1) if a1[0].isupper() else a1
    for fact_args in index.candidates(pred, bound0, bound1):
        new_env = _unify(pat, fact_args, env)
        if new_env is not None:
            yield from _match_literals(rest, index, key_order, new_env)


def _unify(pattern: tuple[str, ...], ground: tuple[str, ...], env: dict[str, str]):
    if len(pattern) != len(ground):
        return None
    out = env
    for p, g in zip(pattern, ground):
        if p[0].isupper():  # rule variables are uppercase
            bound = out.get(p)
            if bound is None:
                if out is env:
                    out = dict(env)
                out[p] = g
            elif bound != g:
                return None
        elif p != g:
            return None
    return out


class Evaluator:
    """Fixpoint engine for one theory, with closure memoization.

    Strata run semi-naive: one full pass seeds a delta, then only joins that
    touch newly derived atoms are revisited. Per-input the engine also records
    what each stratum added, so a closure under an extended key order can be
    rebuilt incrementally instead of from scratch (closure_with_placement)."""

    def __init__(self, theory: Theory):
        self.theory = theory
        self.strata = stratify(theory)
        self._cache: dict[tuple[FactSet, KeyOrder], FactSet] = {}
        self._layers: dict[tuple[FactSet, KeyOrder], list[frozenset]] = {}
        # per stratum: (rule, reordered body, [(positive literal, rest of body)])
        self._compiled = []
        self._negated: list[frozenset[str]] = []
        for stratum in self.strata:
            compiled = []
            negated: set[str] = set()
            for rule in stratum:
                assert rule.head is not None
                body = _reorder_body(rule.body)
                seeds = []
                for lit in body:
                    if lit.positive and lit.atom.pred not in COMPARISONS:
                        rest = tuple(other for other in body if other is not lit)
                        seeds.append((lit, rest))
                compiled.append((rule, body, seeds))
                for lit in rule.body:
                    if not lit.positive and lit.atom.pred not in COMPARISONS:
                        negated.add(lit.atom.pred)
            self._compiled.append(compiled)
            self._negated.append(frozenset(negated))
        self.order_sensitive = self._compute_order_sensitive()

    def _compute_order_sensitive(self) -> frozenset[str]:
        """Predicates whose extension can depend on the key order: heads of
        comparison-bearing rules, closed under positive and negative use."""
        sensitive: set[str] = set()
        rules = [r for r in self.theory.rules if r.head is not None]
        changed = True
        while changed:
            changed = False
            for rule in rules:
                if rule.head.pred in sensitive:
                    continue
                for lit in rule.body:
                    pred = lit.atom.pred
                    if pred in COMPARISONS or pred in sensitive:
                        sensitive.add(rule.head.pred)
                        changed = True
                        break
        return frozenset(sensitive)

    def closure(self, facts: FactSet, key_order: KeyOrder) -> FactSet:
        key = (facts, key_order)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        index = _FactIndex(facts)
        layers = []
        for i in range(len(self._compiled)):
            layers.append(frozenset(self._run_stratum(i, index, key_order)))
        result = frozenset(index.atoms)
        self._cache[key] = result
        self._layers[key] = layers
        return result

    def _run_stratum(self, i: int, index: _FactIndex, key_order: KeyOrder, seed=None):
        """Evaluate stratum i to fixpoint over the (mutated) index; return the
        atoms added. With a seed the full first pass is skipped and the delta
        loop starts from the seed atoms, which must already be in the index."""
        compiled = self._compiled[i]
        added: list[Atom] = []
        if seed is None:
            delta: list[Atom] = []
            for rule, body, _ in compiled:
                head = rule.head
                for env in _match_literals(body, index, key_order, {}):
                    atom = head.substitute(env)
                    if index.add(atom):
                        delta.append(atom)
                        added.append(atom)
        else:
            delta = list(seed)
        while delta:
            by_pred: dict[str, list[Atom]] = {}
            for atom in delta:
                by_pred.setdefault(atom.pred, []).append(atom)
            delta = []
            for rule, _, seeds in compiled:
                head = rule.head
                for lit, rest in seeds:
                    hits = by_pred.get(lit.atom.pred)
                    if not hits:
                        continue
                    for datom in hits:
                        env0 = _unify(lit.atom.args, datom.args, {})
                        if env0 is None:
                            continue
                        for env in _match_literals(rest, index, key_order, env0):
                            atom = head.substitute(env)
                            if index.add(atom):
                                delta.append(atom)
                                added.append(atom)
        return added

    def closure_with_placement(
        self,
        facts: FactSet,
        base_order: KeyOrder,
        new_order: KeyOrder,
        fresh_symbols,
    ) -> FactSet:
        """Closure of facts under new_order, where new_order extends base_order
        by placing the given fresh symbols (nodes and their keys).

        Reuses the recorded strata of (facts, base_order): every comparison that
        is true under new_order but not base_order mentions a fresh key, and
        comparisons never bind variables, so new derivations must pull a fresh-
        mentioning atom or a lower-stratum addition into some positive position.
        Seeding the delta with exactly those atoms is therefore complete. If
        additions reach a predicate some rule of the stratum negates, the fast
        path is unsound (a recorded atom may lose support), so that stratum and
        everything above it are recomputed from scratch."""
        key = (facts, new_order)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        base_key = (facts, base_order)
        if base_key not in self._cache:
            self.closure(facts, base_order)
        layers = self._layers.get(base_key)
        if layers is None:
            index = _FactIndex(facts)
            for i in range(len(self._compiled)):
                self._run_stratum(i, index, new_order)
            result = frozenset(index.atoms)
            self._cache[key] = result
            return result
        fresh = frozenset(fresh_symbols)
        index = _FactIndex()
        fresh_atoms: list[Atom] = []

        def enter(atom: Atom) -> bool:
            if index.add(atom):
                if any(arg in fresh for arg in atom.args):
                    fresh_atoms.append(atom)
                return True
            return False

        for atom in facts:
            enter(atom)
        carried: list[Atom] = []
        added_preds: set[str] = set()
        result = None
        for i, layer in enumerate(layers):
            if added_preds & self._negated[i]:
                for j in range(i, len(layers)):
                    self._run_stratum(j, index, new_order)
                result = frozenset(index.atoms)
                break
            for atom in layer:
                enter(atom)
            seed = carried + fresh_atoms
            for atom in self._run_stratum(i, index, new_order, seed=seed):
                if any(arg in fresh for arg in atom.args):
                    fresh_atoms.append(atom)
                carried.append(atom)
                added_preds.add(atom.pred)
        if result is None:
            result = frozenset(index.atoms)
        self._cache[key] = result
        return result

    def check(self, closure: FactSet, key_order: KeyOrder):
        return check_constraints(self.theory, closure, key_order)


def least_fixpoint(theory: Theory, facts, key_order: KeyOrder) -> FactSet:
    return Evaluator(theory).closure(frozenset(facts), key_order)


@dataclass(frozen=True)
class Violation:
    name: str
    detail: str = ""

    def __str__(self) -> str:
        return self.name if not self.detail else f"{self.name} ({self.detail})"


def check_constraints(theory: Theory, closure: FactSet, key_order: KeyOrder) -> Violation | None:
    """First violated invariant flag or constraint rule, else None."""
    for inv in theory.invariants:
        if Atom(inv, ()) not in closure:
            return Violation(inv)
    index = _FactIndex(closure)
    for rule in theory.rules:
        if rule.head is not None:
            continue
        body = _reorder_body(rule.body)
        for env in _match_literals(body, index, key_order, {}):
            bound = ", ".join(f"{k}={v}" for k, v in sorted(env.items()))
            return Violation("constraint", f"line {rule.line}" + (f", {bound}" if bound else ""))
    return None


# ---------------------------------------------------------------------------
# step application (field-granular inertia)


def apply_step_sequential(state: FactSet, step: Step, kinds: dict[str, StepKind]) -> FactSet:
    """Assignment semantics: the modified node's facts of the caused relation
    are replaced by the step's caused fact; everything else is inert."""
    kind = kinds[step.kind]
    node = step.args[kind.modified_pos]
    kept = {
        f
        for f in state
        if not (f.pred == kind.caused and f.args[kind.modified_pos] == node)
    }
    kept.add(Atom(kind.caused, step.args))
    return frozenset(kept)


def apply_steps_atomic(state: FactSet, steps, kinds: dict[str, StepKind]) -> FactSet:
    """Simultaneous application: all modified fields cleared, then all caused
    facts added. Order of the step list is irrelevant by construction."""
    cleared: set[tuple[str, str]] = set()
    for step in steps:
        kind = kinds[step.kind]
        cleared.add((kind.caused, step.args[kind.modified_pos]))
    kept = {
        f
        for f in state
        if not any(f.pred == rel and f.args[kinds_pos(kinds, rel)] == node for rel, node in cleared)
    }
    for step in steps:
        kind = kinds[step.kind]
        kept.add(Atom(kind.caused, step.args))
    return frozenset(kept)


def kinds_pos(kinds: dict[str, StepKind], relation: str) -> int:
    for kind in kinds.values():
        if kind.caused == relation:
            return kind.modified_pos
    raise ValidationError(f"no step kind causes relation {relation}")


# ---------------------------------------------------------------------------
# precondition matching with fresh-node materialization


@dataclass(frozen=True)
class Binding:
    """One way a block applies: concrete nodes, fresh names, key placements."""

    operation: str
    block: str
    assignment: tuple[tuple[str, str], ...]
    fresh: tuple[tuple[str, str], ...]  # schematic -> concrete fresh name
    key_assignment: tuple[tuple[str, str], ...]
    placements: tuple[tuple[str, Placement], ...]

    def env(self) -> dict[str, str]:
        out = dict(self.assignment)
        out.update(self.fresh)
        out.update(self.key_assignment)
        return out

    def fresh_nodes(self) -> tuple[str, ...]:
        return tuple(c for _, c in self.fresh)

    def fresh_facts(self) -> list[Atom]:
        facts = []
        for _, conc in self.fresh:
            facts.append(Atom("node", (conc,)))
            facts.append(Atom("key", (conc, "k" + conc)))
        return facts

    def extend_key_order(self, base: KeyOrder) -> KeyOrder:
        order = base
        for key_sym, placement in self.placements:
            conc = dict(self.key_assignment)[key_sym]
            order = order.with_key(conc, placement)
        return order

    def sort_token(self):
        return (
            tuple(c for _, c in self.assignment),
            tuple((p.kind, p.index) for _, p in self.placements),
        )


def instance_nodes(facts: FactSet, theory: Theory) -> list[str]:
    declared = sorted(a.args[0] for a in facts if a.pred == "node" and len(a.args) == 1)
    if declared:
        return declared
    keys = {a.args[1] for a in facts if a.pred == "key" and len(a.args) == 2}
    out: set[str] = set()
    for atom in facts:
        for arg in atom.args:
            if arg not in keys and not theory.is_constant(arg):
                out.add(arg)
    return sorted(out)


def match_precondition(
    theory: Theory,
    facts: FactSet,
    key_order: KeyOrder,
    block: BlockSpec,
    evaluator: Evaluator | None = None,
    fresh_suffix: str = "",
    pinned_env: dict[str, str] | None = None,
) -> list[Binding]:
    """All bindings of the block against the current heap.

    Declared-unreachable nodes bind to fresh constants (the schematic name
    plus fresh_suffix) whose keys are enumerated over every placement in the
    total key order consistent with the block's comparisons. Every conjunct
    is then re-checked against the closure of the heap augmented with the
    fresh node and key facts.

    pinned_env pre-binds schematic variables. A pinned unreachable variable
    is treated as already materialized: no new node facts and no key
    placement, so a retrying caller can re-match around its existing nodes.
    """
    ev = evaluator or Evaluator(theory)
    info = block_nodes(block, theory)
    pinned = dict(pinned_env or {})
    fresh_vars = tuple(v for v in info.fresh if v not in pinned)
    bound_vars = [n for n in info.nodes if n not in fresh_vars]
    universe = instance_nodes(facts, theory)
    base_closure = ev.closure(facts, key_order)
    index = _FactIndex(base_closure)

    seed_literals = []
    covered: set[str] = set()
    for lit in block.precondition:
        if not lit.positive or lit.atom.pred in COMPARISONS or lit.atom.pred == "key":
            continue
        if any(v in fresh_vars for v in lit.atom.args):
            continue
        seed_literals.append(lit)
        covered.update(a for a in lit.atom.args if a in bound_vars)

    assignments: list[dict[str, str]] = []
    start_env = {v: c for v, c in pinned.items() if v in info.nodes}

    def extend(i: int, env: dict[str, str]) -> None:
        if i == len(seed_literals):
            rest = [v for v in bound_vars if v not in env]
            for combo in itertools.product(universe, repeat=len(rest)):
                full = dict(env)
                full.update(zip(rest, combo))
                assignments.append(full)
            return
        lit = seed_literals[i]
        pat = lit.atom.args
        bound0 = bound1 = None
        if pat:
            p0 = pat[0]
            bound0 = env.get(p0) if p0 in bound_vars else env.get(p0, p0)
            if len(pat) > 1:
                p1 = pat[1]
                bound1 = env.get(p1) if p1 in bound_vars else env.get(p1, p1)
        for args in index.candidates(lit.atom.pred, bound0, bound1):
            new = _unify_schematic(pat, args, env, bound_vars, theory)
            if new is not None:
                extend(i + 1, new)

    extend(0, start_env)

    results: list[Binding] = []
    seen: set = set()
    for env in assignments:
        frozen_env = tuple(sorted(env.items()))
        if frozen_env in seen:
            continue
        seen.add(frozen_env)
        binding = _complete_binding(
            theory, ev, facts, key_order, block, info, env, fresh_suffix, fresh_vars
        )
        results.extend(binding)
    uniq: dict = {}
    for b in results:
        uniq.setdefault((b.assignment, b.fresh, b.placements), b)
    final = sorted(uniq.values(), key=Binding.sort_token)
    return final


def _unify_schematic(pattern, ground, env, bound_vars, theory: Theory):
    if len(pattern) != len(ground):
        return None
    out = env
    for p, g in zip(pattern, ground):
        if p in bound_vars:
            prior = out.get(p)
            if prior is None:
                if out is env:
                    out = dict(env)
                out[p] = g
            elif prior != g:
                return None
        else:
            conc = out.get(p, p)
            if conc != g:
                return None
    return out


def _complete_binding(
    theory: Theory,
    ev: Evaluator,
    facts: FactSet,
    key_order: KeyOrder,
    block: BlockSpec,
    info,
    env: dict[str, str],
    fresh_suffix: str,
    fresh_vars: tuple[str, ...] | None = None,
) -> list[Binding]:
    if fresh_vars is None:
        fresh_vars = info.fresh
    key_facts = {a.args[0]: a.args[1] for a in facts if a.pred == "key" and len(a.args) == 2}
    key_env: dict[str, str] = {}
    for node, key_sym in info.key_of.items():
        if node in fresh_vars:
            continue
        conc = env.get(node)
        if conc is None or conc not in key_facts:
            return []
        key_env[key_sym] = key_facts[conc]

    fresh_pairs = tuple((v, v + fresh_suffix) for v in fresh_vars)
    fresh_keys = [info.key_of[v] for v in fresh_vars if v in info.key_of]
    conc_key_of = {
        info.key_of[v]: "k" + conc for v, conc in fresh_pairs if v in info.key_of
    }
    comparisons = [
        lit.atom for lit in block.precondition if lit.atom.pred in COMPARISONS
    ]

    full_keys = dict(key_env)
    full_keys.update(conc_key_of)
    full_env = dict(env)
    full_env.update(dict(fresh_pairs))
    full_env.update(full_keys)

    augmented = set(facts)
    for _, conc in fresh_pairs:
        augmented.add(Atom("node", (conc,)))
        augmented.add(Atom("key", (conc, "k" + conc)))
    augmented_facts = frozenset(augmented)

    # Conjuncts whose predicate cannot depend on the key order are decided
    # once, against the closure under the unextended order. Only the order
    # sensitive ones need the per-placement closure.
    base_closure = ev.closure(augmented_facts, key_order)
    sensitive = ev.order_sensitive
    pending: list[tuple[bool, Atom]] = []
    for lit in block.precondition:
        if lit.atom.pred in COMPARISONS:
            continue
        atom = lit.atom.substitute(full_env)
        if atom.pred in sensitive:
            pending.append((lit.positive, atom))
        elif lit.positive != (atom in base_closure):
            return []

    fresh_syms = tuple(
        itertools.chain.from_iterable((conc, "k" + conc) for _, conc in fresh_pairs)
    )
    assignment = tuple((v, env[v]) for v in info.nodes if v not in fresh_vars)
    key_assignment = tuple(sorted(full_keys.items()))

    out: list[Binding] = []
    for order, placement_list in _enumerate_placements(key_order, fresh_keys, conc_key_of):
        # cheap filter first: every comparison must hold in the candidate order
        if not all(
            order.holds(c.pred, full_env.get(c.args[0], c.args[0]), full_env.get(c.args[1], c.args[1]))
            for c in comparisons
        ):
            continue
        if pending:
            closure = ev.closure_with_placement(augmented_facts, key_order, order, fresh_syms)
            if any(positive != (atom in closure) for positive, atom in pending):
                continue
        out.append(
            Binding(
                operation=block.operation,
                block=block.block,
                assignment=assignment,
                fresh=fresh_pairs,
                key_assignment=key_assignment,
                placements=tuple(placement_list),
            )
        )
    return out


def _enumerate_placements(key_order: KeyOrder, fresh_keys, conc_key_of):
    """Sequential placement choices: each fresh key is placed into the order
    extended by its predecessors, so two fresh keys sharing a gap still get
    a definite mutual order. Yields (extended order, [(sym, placement)...])."""
    if not fresh_keys:
        yield key_order, []
        return

    def walk(i: int, order: KeyOrder, chosen: list):
        if i == len(fresh_keys):
            yield order, list(chosen)
            return
        sym = fresh_keys[i]
        for placement in order.placements():
            try:
                nxt = order.with_key(conc_key_of[sym], placement)
            except KeyOrderError:
                continue
            chosen.append((sym, placement))
            yield from walk(i + 1, nxt, chosen)
            chosen.pop()

    yield from walk(0, key_order, [])


def interference_horizon(theory: Theory, operations, facts, key_order, evaluator=None) -> int:
    """Distinct applicable bindings over every block at time 0."""
    ev = evaluator or Evaluator(theory)
    count = 0
    for block in operations.all_blocks():
        count += len(match_precondition(theory, facts, key_order, block, ev, fresh_suffix="_h"))
    return count


# ---------------------------------------------------------------------------
# time-indexed traces


@dataclass
class StateTrace:
    """States 0..horizon with the step or event applied at each transition."""

    states: list[FactSet]
    labels: list[str] = field(default_factory=list)
    key_order: KeyOrder | None = None

    @property
    def horizon(self) -> int:
        return len(self.states) - 1
