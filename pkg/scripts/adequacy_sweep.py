"""Adequacy sweep over every bundled block at the default horizon."""

import sys
import time

sys.path.insert(0, "/root/pkg/src")

from lockforge import knowledge, kernel, analysis


def load(name):
    base = f"/root/pkg/src/lockforge/data/{name}"
    theory = knowledge.parse_theory(open(f"{base}/theory.lp").read())
    ops = knowledge.parse_operations(open(f"{base}/operations.lp").read())
    return theory, ops


names = sys.argv[1:] or ["linked_list", "external_bst", "external_rb", "internal_bst"]
for name in names:
    theory, ops = load(name)
    if name == "external_rb":
        from lockforge.instances import parse_instance
        base = f"/root/pkg/src/lockforge/data/{name}"
        inst = parse_instance(open(f"{base}/instance.lp").read(), theory)
    else:
        inst = analysis.find_maximal_instance(theory, ops).instance
    ev = kernel.Evaluator(theory)
    hz = kernel.interference_horizon(theory, ops, inst.facts, inst.key_order, ev)
    print(f"== {name}: horizon={hz}")
    for block in ops.all_blocks():
        bindings = kernel.match_precondition(theory, inst.facts, inst.key_order, block, ev, fresh_suffix="_t")
        if not bindings:
            print(f"  {block.operation}/{block.block}: no binding")
            continue
        b = bindings[0]
        locks = analysis.guess_locks(theory, block, b)
        t0 = time.time()
        res = analysis.check_lock_adequacy(theory, ops, inst, block, b, locks, horizon=hz, evaluator=ev)
        dt = time.time() - t0
        print(
            f"  {block.operation}/{block.block}: adequate={res.adequate} "
            f"locks={sorted(locks)} states={res.states_explored} time={dt:.2f}s"
        )
