"""Command-line driver for the synthesis pipeline.

Subcommands: find-instance, order, locks, synth, simulate, export-asp.
Human-readable summaries go to stdout; machine artifacts (JSON reports,
instance files, generated code, ASP text) go under --out.

Exit codes: 0 success, 1 parse or validation error, 2 analysis found
nothing (no instance, no order), 3 simulate found violations, 4 I/O or
emission failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import random
import sys
from importlib import resources
from pathlib import Path

from . import __version__, analysis, aspexport, codegen, simulator
from .errors import AnalysisError, EmissionError, LockforgeError, ValidationError
from .instances import InstanceGraph, parse_instance, write_instance
from .kernel import Binding, Evaluator, match_precondition
from .knowledge import (
    OperationSet,
    Theory,
    parse_operations,
    parse_theory,
    validate_knowledge,
)
from .templates import parse_mappings, parse_template

SCHEMA_VERSION = 1
BUNDLED = ("linked_list", "external_bst", "internal_bst", "external_rb")


# ---------------------------------------------------------------------------
# input plumbing


def _data_dir(name: str):
    return resources.files("lockforge") / "data" / name


def _resolve_bundled(args) -> None:
    if not getattr(args, "bundled", None):
        return
    base = _data_dir(args.bundled)
    if not base.is_dir():
        raise ValidationError(
            f"unknown bundled knowledge set {args.bundled!r}; choose from {', '.join(BUNDLED)}"
        )
    if args.theory is None:
        args.theory = str(base / "theory.lp")
    if args.operations is None:
        args.operations = str(base / "operations.lp")
    if getattr(args, "mappings", None) is None:
        mp = base / "mappings.lp"
        if mp.is_file():
            args.mappings = str(mp)
    if hasattr(args, "template") and not args.template:
        args.template = sorted(
            str(p) for p in base.iterdir() if p.name.endswith(".cpp")
        )
    if getattr(args, "instance", None) is None:
        inst = base / "instance.lp"
        if inst.is_file():
            args.instance = str(inst)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_knowledge(args) -> tuple[Theory, OperationSet, list[str]]:
    _resolve_bundled(args)
    if args.theory is None or args.operations is None:
        raise ValidationError("--theory and --operations are required (or use --bundled)")
    theory = parse_theory(_read(args.theory))
    operations = parse_operations(_read(args.operations))
    diagnostics = validate_knowledge(theory, operations)
    errors = [d for d in diagnostics if d.severity == "error"]
    warnings = [d.message for d in diagnostics if d.severity == "warning"]
    if errors:
        raise ValidationError("; ".join(d.message for d in errors))
    return theory, operations, warnings


def _load_instance(
    args, theory: Theory, operations: OperationSet, ev: Evaluator
) -> InstanceGraph:
    if getattr(args, "instance", None):
        return parse_instance(_read(args.instance), theory)
    search = analysis.find_maximal_instance(theory, operations, args.max_nodes, ev)
    if search.instance is None:
        raise AnalysisError(
            f"no applicable instance within {args.max_nodes} nodes "
            f"({len(search.rejected)} candidates rejected)"
        )
    return search.instance


def _parse_overrides(items) -> dict[tuple[str, str], tuple[str, ...]]:
    """--strategy-override op/block=node,node re-points a block's lock set."""
    out: dict[tuple[str, str], tuple[str, ...]] = {}
    for item in items or []:
        if "=" not in item or "/" not in item.split("=", 1)[0]:
            raise ValidationError(
                f"bad override {item!r}; expected operation/block=node,node,..."
            )
        target, nodes = item.split("=", 1)
        op, block = target.split("/", 1)
        names = tuple(n.strip() for n in nodes.split(",") if n.strip())
        out[(op.strip(), block.strip())] = names
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# report fragments


def _binding_json(binding: Binding, instance: InstanceGraph) -> dict:
    # placements are sequential: each one indexes the chain left by its
    # predecessors, so extend the order as we describe
    placements = {}
    order = instance.key_order
    keys = dict(binding.key_assignment)
    try:
        for sym, placement in binding.placements:
            placements[sym] = placement.describe(order.chain())
            order = order.with_key(keys[sym], placement)
    except LockforgeError:
        placements = {
            sym: f"{p.kind} {p.index}" for sym, p in binding.placements
        }
    return {
        "assignment": dict(binding.assignment),
        "fresh": dict(binding.fresh),
        "keys": dict(binding.key_assignment),
        "placements": placements,
    }


def _adequacy_json(adequacy: analysis.AdequacyResult) -> dict:
    payload = {
        "adequate": adequacy.adequate,
        "horizon": adequacy.horizon,
        "locks": list(adequacy.locks),
        "states_explored": adequacy.states_explored,
    }
    if adequacy.counterexample is not None:
        ce = adequacy.counterexample
        payload["counterexample"] = {
            "events": list(ce.events),
            "falsified": ce.falsified,
            "final_heap": sorted(str(a) for a in ce.final_heap),
        }
    return payload


def _order_json(order: analysis.OrderResult) -> dict:
    return {
        "step_count": order.step_count,
        "accepted_count": len(order.accepted),
        "accepted": [list(p) for p in order.accepted[:64]],
        "rejections": [
            {"prefix": list(perm), "time": t, "violation": v}
            for perm, t, v in order.rejections
        ],
        "rejections_truncated": order.rejections_truncated,
    }


def _print(line: str = "") -> None:
    sys.stdout.write(line + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_find_instance(args) -> int:
    theory, operations, warnings = _load_knowledge(args)
    ev = Evaluator(theory)
    search = analysis.find_maximal_instance(theory, operations, args.max_nodes, ev)
    out = _out_dir(args)
    report = {
        "schema_version": SCHEMA_VERSION,
        "max_nodes": args.max_nodes,
        "found": search.instance is not None,
        "rejected": [
            {"facts": list(r.facts), "reason": r.reason} for r in search.rejected
        ],
        "warnings": warnings,
    }
    if search.instance is not None:
        report["instance"] = {
            "facts": sorted(str(a) for a in search.instance.facts),
            "key_order": [str(a) for a in search.instance.key_order.to_atoms()],
        }
        (out / "instance.lp").write_text(write_instance(search.instance), encoding="utf-8")
    _write_json(out / "instance_report.json", report)
    if search.instance is None:
        _print(f"no applicable instance within {args.max_nodes} nodes")
        for r in search.rejected:
            _print(f"  rejected {{{', '.join(r.facts)}}}: {r.reason}")
        return 2
    _print("maximal instance: " + ", ".join(sorted(str(a) for a in search.instance.facts if a.pred not in ("node", "key"))))
    for r in search.rejected:
        _print(f"  rejected {{{', '.join(r.facts)}}}: {r.reason}")
    _print(f"wrote {out / 'instance.lp'}")
    return 0


def _selected_blocks(args, operations: OperationSet):
    blocks = operations.all_blocks()
    if getattr(args, "operation", None):
        blocks = [b for b in blocks if b.operation == args.operation]
        if not blocks:
            raise ValidationError(f"unknown operation {args.operation!r}")
    if getattr(args, "block", None):
        blocks = [b for b in blocks if b.block == args.block]
        if not blocks:
            raise ValidationError(f"no block named {args.block!r} selected")
    return blocks


def cmd_order(args) -> int:
    theory, operations, warnings = _load_knowledge(args)
    ev = Evaluator(theory)
    instance = _load_instance(args, theory, operations, ev)
    results = []
    missing = []
    for block in _selected_blocks(args, operations):
        result = analysis.check_program_order(theory, operations, block, instance, None, ev)
        results.append(result)
        if not result.order_exists:
            missing.append(f"{block.operation}/{block.block}")
    out = _out_dir(args)
    report = {
        "schema_version": SCHEMA_VERSION,
        "instance": sorted(str(a) for a in instance.facts),
        "blocks": {
            f"{r.operation}/{r.block}": dict(
                _order_json(r), binding=_binding_json(r.binding, instance)
            )
            for r in results
        },
        "warnings": warnings,
    }
    _write_json(out / "order_report.json", report)
    for r in results:
        verdict = f"{len(r.accepted)} accepted order(s)" if r.accepted else "no valid order"
        _print(f"{r.operation}/{r.block}: {verdict} of {r.step_count} step(s)")
        for perm in r.accepted[:4]:
            _print(f"  accepted {list(perm)}")
        for perm, t, viol in r.rejections[:4]:
            _print(f"  rejected prefix {list(perm)} at time {t}: {viol}")
    if missing:
        _print("no accepted order for: " + ", ".join(missing))
        return 2
    return 0


def cmd_locks(args) -> int:
    theory, operations, warnings = _load_knowledge(args)
    ev = Evaluator(theory)
    instance = _load_instance(args, theory, operations, ev)
    overrides = _parse_overrides(args.strategy_override)
    entries = {}
    for block in _selected_blocks(args, operations):
        bindings = match_precondition(theory, instance.facts, instance.key_order, block, ev)
        if not bindings:
            raise AnalysisError(f"{block.operation}/{block.block}: no binding on the instance")
        binding = bindings[0]
        override = overrides.get((block.operation, block.block))
        if override is None:
            locks = analysis.guess_locks(theory, block, binding)
        else:
            env = binding.env()
            locks = tuple(env[n] for n in override)
        adequacy = analysis.check_lock_adequacy(
            theory, operations, instance, block, binding, locks, args.horizon, ev
        )
        entries[f"{block.operation}/{block.block}"] = dict(
            _adequacy_json(adequacy), binding=_binding_json(binding, instance)
        )
        verdict = "adequate" if adequacy.adequate else "NOT adequate"
        _print(
            f"{block.operation}/{block.block}: locks {{{', '.join(adequacy.locks)}}} "
            f"{verdict} at horizon {adequacy.horizon}"
        )
        if adequacy.counterexample is not None:
            for ev_line in adequacy.counterexample.events:
                _print(f"  {ev_line}")
            _print(f"  falsified: {adequacy.counterexample.falsified}")
    out = _out_dir(args)
    _write_json(
        out / "locks_report.json",
        {"schema_version": SCHEMA_VERSION, "blocks": entries, "warnings": warnings},
    )
    return 0


def _verdict_payload(
    result: analysis.SynthesisResult, warnings: list[str]
) -> dict:
    instance = result.instance
    return {
        "schema_version": SCHEMA_VERSION,
        "structure": result.operations.structure,
        "strategy": result.strategy,
        "adequacy": "yes" if result.adequacy_all else "no",
        "order": "yes" if result.order_all else "no",
        "key_movement": result.movement.verdict,
        "horizon": result.horizon,
        "instance": {
            "facts": sorted(str(a) for a in instance.facts),
            "key_order": [str(a) for a in instance.key_order.to_atoms()],
        },
        "blocks": [
            {
                "operation": b.block.operation,
                "block": b.block.block,
                "binding": _binding_json(b.binding, instance),
                "locks": list(b.locks),
                "order": _order_json(b.order),
                "adequacy": _adequacy_json(b.adequacy),
            }
            for b in result.blocks
        ],
        "codegen": "no",
        "emitted": [],
        "warnings": warnings,
    }


def _emit_code(args, result: analysis.SynthesisResult, out: Path) -> list[str]:
    """Render templates for fine_grained or rcu strategies; returns files."""
    if result.strategy not in ("fine_grained", "rcu"):
        return []
    if not args.template:
        raise EmissionError(f"strategy {result.strategy} needs --template files")
    if args.mappings is None:
        raise EmissionError(f"strategy {result.strategy} needs a --mappings file")
    mappings = parse_mappings(_read(args.mappings), result.operations)
    rendered = []
    for b in result.blocks:
        order = b.order.accepted[0] if b.order.accepted else tuple(range(len(b.block.steps)))
        if result.strategy == "fine_grained":
            rendered.append(
                codegen.render_block(result.theory, result.operations, b.block, mappings, order)
            )
        else:
            rendered.append(
                codegen.render_rcu_block(result.theory, result.operations, b.block, mappings, order)
            )
    written = []
    for path in args.template:
        template = parse_template(_read(path))
        if result.strategy == "fine_grained":
            emitted = codegen.substitute_annotations(template, rendered)
        else:
            emitted = codegen.render_rcu(template, rendered)
        name = Path(path).stem + ".generated.cpp"
        (out / name).write_text(emitted.text, encoding="utf-8")
        written.append(name)
    return written


def cmd_synth(args) -> int:
    theory, operations, warnings = _load_knowledge(args)
    ev = Evaluator(theory)
    instance = _load_instance(args, theory, operations, ev)
    overrides = _parse_overrides(args.strategy_override)
    result = analysis.run_synthesis(
        theory, operations, instance, args.max_nodes, args.horizon, overrides
    )
    out = _out_dir(args)
    payload = _verdict_payload(result, warnings)
    verdict_path = out / "verdicts.json"
    _write_json(verdict_path, payload)
    _print(f"structure: {payload['structure'] or '(unnamed)'}")
    _print(f"adequacy: {payload['adequacy']}  order: {payload['order']}  "
           f"movement: {payload['key_movement']}  strategy: {payload['strategy']}")
    try:
        written = _emit_code(args, result, out)
    except EmissionError:
        _print(f"verdicts written to {verdict_path}; code emission failed")
        raise
    if written:
        payload["codegen"] = "yes"
        payload["emitted"] = written
        _write_json(verdict_path, payload)
        for name in written:
            _print(f"emitted {out / name}")
    else:
        _print("no code emitted for this strategy")
    _print(f"verdicts written to {verdict_path}")
    return 0


def _eligible_programs(
    result: analysis.SynthesisResult,
) -> list[tuple[analysis.BlockAnalysis, tuple[int, ...]]]:
    """Blocks that can run as lock programs: an accepted order exists."""
    out = []
    for b in result.blocks:
        if b.order.accepted:
            out.append((b, b.order.accepted[0]))
    return out


def cmd_simulate(args) -> int:
    theory, operations, warnings = _load_knowledge(args)
    if args.synth_dir is not None:
        verdicts = Path(args.synth_dir) / "verdicts.json"
        if not verdicts.is_file():
            raise EmissionError(f"missing synthesis outputs: {verdicts} not found")
    ev = Evaluator(theory)
    instance = _load_instance(args, theory, operations, ev)
    overrides = _parse_overrides(args.strategy_override)
    result = analysis.run_synthesis(
        theory, operations, instance, args.max_nodes, args.horizon, overrides
    )
    eligible = _eligible_programs(result)
    report = {
        "schema_version": SCHEMA_VERSION,
        "threads": args.threads,
        "combinations": [],
        "warnings": warnings,
    }
    out = _out_dir(args)
    if args.threads <= 0 or not eligible:
        _write_json(out / "simulate_report.json", report)
        _print("nothing to simulate")
        return 0

    failures = 0
    for combo in itertools.combinations_with_replacement(range(len(eligible)), args.threads):
        programs = []
        for tid, idx in enumerate(combo):
            ba, order = eligible[idx]
            bindings = match_precondition(
                theory, instance.facts, instance.key_order, ba.block, ev,
                fresh_suffix=f"_t{tid}",
            )
            binding = bindings[0]
            abstract = simulator.synthesize_abstract(theory, ba.block, order)
            overridden = overrides.get((ba.block.operation, ba.block.block))
            if overridden is not None:
                # override names are schematic; grounding happens at run time
                abstract = simulator.AbstractCode(
                    abstract.operation,
                    abstract.block,
                    [simulator.AbstractStatement("lock", n) for n in overridden]
                    + [simulator.AbstractStatement("validate")]
                    + [simulator.AbstractStatement("update", i) for i in abstract.order]
                    + [simulator.AbstractStatement("unlock", n) for n in overridden],
                    abstract.order,
                    overridden,
                )
            programs.append(simulator.compile_abstract(abstract, ba.block, binding))
        label = " + ".join(
            f"{p.abstract.operation}/{p.abstract.block}" for p in programs
        )
        exploration = simulator.explore(theory, operations, instance, programs, ev)
        entry = {
            "programs": label,
            "states": exploration.states,
            "terminals": exploration.terminals,
            "invariant_violations": exploration.invariant_violations[:8],
            "non_serializable": exploration.non_serializable[:8],
            "deadlocks": exploration.deadlocks[:8],
            "wedged_terminals": exploration.wedged_terminals,
            "ok": exploration.ok,
        }
        if args.seed is not None:
            rng = random.Random(args.seed)
            schedule = [rng.randrange(args.threads) for _ in range(64)]
            run = simulator.simulate_schedule(
                theory, operations, instance, programs, schedule, ev
            )
            entry["sample_run"] = {
                "committed": list(run.committed),
                "violations": run.violations,
                "livelock": run.livelock,
            }
        report["combinations"].append(entry)
        status = "ok" if exploration.ok else "VIOLATIONS"
        _print(f"{label}: {exploration.states} states, {exploration.terminals} terminals, {status}")
        if not exploration.ok:
            failures += 1
            for sched, detail in exploration.invariant_violations[:2]:
                _print(f"  invariant violation, schedule [{sched}]: {detail}")
            for sched, detail in exploration.non_serializable[:2]:
                _print(f"  non-serializable, schedule [{sched}]: {detail}")
            for sched in exploration.deadlocks[:2]:
                _print(f"  deadlock, schedule [{sched}]")
    _write_json(out / "simulate_report.json", report)
    return 3 if failures else 0


def cmd_export_asp(args) -> int:
    theory, operations, warnings = _load_knowledge(args)
    ev = Evaluator(theory)
    instance = _load_instance(args, theory, operations, ev)
    horizon = args.horizon
    if horizon is None:
        from .kernel import interference_horizon

        horizon = interference_horizon(
            theory, operations, instance.facts, instance.key_order, ev
        )
    text = aspexport.export_asp(theory, operations, instance, horizon)
    out = _out_dir(args)
    path = out / "program.lp"
    path.write_text(text, encoding="utf-8")
    for w in warnings:
        _print(f"warning: {w}")
    _print(f"wrote {path} (horizon {horizon})")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are input errors, not analysis
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _add_common(sub: argparse.ArgumentParser, templates: bool = False) -> None:
    sub.add_argument("--bundled", help="name of a bundled knowledge set "
                     f"({', '.join(BUNDLED)}); fills in the file arguments")
    sub.add_argument("--theory", help="background theory file")
    sub.add_argument("--operations", help="operation knowledge file")
    sub.add_argument("--instance", help="instance file (default: search)")
    sub.add_argument("--max-nodes", type=int, default=6, help="instance search bound")
    sub.add_argument("--horizon", type=int, default=None, help="interference horizon override")
    sub.add_argument("--out", default=".", help="output directory")
    if templates:
        sub.add_argument("--template", action="append", default=[],
                         help="annotated C++ template (repeatable)")
        sub.add_argument("--mappings", help="variable mapping / validation file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lockforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("find-instance", help="search for the maximal applicable instance")
    _add_common(p)
    p.set_defaults(func=cmd_find_instance)

    p = subs.add_parser("order", help="check destructive step orders against invariants")
    _add_common(p)
    p.add_argument("--operation", help="restrict to one operation")
    p.add_argument("--block", help="restrict to one block")
    p.set_defaults(func=cmd_order)

    p = subs.add_parser("locks", help="guess lock sets and check adequacy")
    _add_common(p)
    p.add_argument("--operation", help="restrict to one operation")
    p.add_argument("--block", help="restrict to one block")
    p.add_argument("--strategy-override", action="append",
                   help="operation/block=node,node lock-set override (repeatable)")
    p.set_defaults(func=cmd_locks)

    p = subs.add_parser("synth", help="full pipeline: analysis, verdicts, code emission")
    _add_common(p, templates=True)
    p.add_argument("--strategy-override", action="append",
                   help="operation/block=node,node lock-set override (repeatable)")
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("simulate", help="exhaustive interleaving exploration")
    _add_common(p)
    p.add_argument("--threads", type=int, default=2, help="concurrent operation count")
    p.add_argument("--seed", type=int, default=None, help="adds one seeded sample run")
    p.add_argument("--strategy-override", action="append",
                   help="operation/block=node,node lock-set override (repeatable)")
    p.add_argument("--synth-dir", default=None,
                   help="directory of a prior synth run to validate against")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("export-asp", help="write the temporal projection as ASP-Core-2 text")
    _add_common(p)
    p.set_defaults(func=cmd_export_asp)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    try:
        return args.func(args)
    except LockforgeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
