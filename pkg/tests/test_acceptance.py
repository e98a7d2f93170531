from __future__ import annotations

import functools
import itertools
import time

from uncompute import corpus, ir, sim
from uncompute.analysis import analyze, build_dependence_graph, build_entanglement_trace
from uncompute.frontend import format_op, load
from uncompute.reclaim import (
    enforce_param_semantics, force_reclaim, forced_candidate, group_of, plan_early_reclamation,
)
from uncompute.schedule import STRATEGIES, allocate_registers, compare_strategies, lifetimes_of, transform

from programs import random_program
from test_properties import NESTINGS, outer_lifetimes_unchanged, sub_block_contained

RANDOM_PROGRAMS = 500
TD_TOL = 1e-9
RESTORE_TOL = 1e-12
NEGATIVE_MIN = 1e-6


@functools.lru_cache(maxsize=None)
def random_reports():
    start = time.perf_counter()
    reports = [compare_strategies(load(random_program(seed))) for seed in range(RANDOM_PROGRAMS)]
    return reports, time.perf_counter() - start


def test_criterion_1_running_example_lifetimes(record):
    start = time.perf_counter()
    p = corpus.program("running_example")
    table = analyze(p, plan_early_reclamation(p))[3]
    elapsed = time.perf_counter() - start
    cons = {t: table[t].conservative for t in ("t1", "t2", "t3", "t4")}
    eff = {t: table[t].effective for t in ("t1", "t2")}
    ok = (cons == {"t1": (1, 9), "t2": (2, 9), "t3": (5, 9), "t4": (6, 9)}
          and eff == {"t1": (1, 4), "t2": (2, 4)} and elapsed < 1.0)
    record(1, ok, f"conservative={cons} effective={eff} time={elapsed:.3f}s")
    assert ok


def test_criterion_2_adjoint_segment(record):
    p = corpus.program("running_example")
    plan = plan_early_reclamation(p)
    g = next(g for g in plan.groups if {p.resources[t].name for t in g.temps} == {"t1", "t2"})
    seg = [format_op(p, op) for op in g.segment]
    ok = seg == ["CX t1, t2;", "adjoint g(x1, t2);", "adjoint f(x1, t1);"] and g.insert_after == 4
    record(2, ok, f"segment={seg} after p{g.insert_after}")
    assert ok


def test_criterion_3_graphs(record):
    p = corpus.program("running_example")
    ddg = build_dependence_graph(p)
    trace = build_entanglement_trace(p)
    ent = {(tuple(sorted(p.resources[r].name for r in e)), at) for e, at in trace.provenance.items()}
    expect = {(("t1", "t2"), 3), (("t2", "y1"), 4), (("t3", "y2"), 7), (("t4", "y2"), 8)}
    ok = ent == expect and (1, 2) not in ddg.edges
    record(3, ok, f"entanglement={sorted(ent, key=lambda e: e[1])} p1->p2={'present' if (1, 2) in ddg.edges else 'absent'}")
    assert ok


def test_criterion_4_semantic_preservation(record):
    start = time.perf_counter()
    worst, checked, bad = 0.0, 0, []
    for name in corpus.names():
        p = corpus.program(name)
        if len(sim.qubit_axes(ir.inline(p)[0])) > sim.QUBIT_BUDGET:
            continue
        observed = sim.persistent_resources(p)
        inputs = sim.sample_inputs(sim.input_resources(p), sim.DEFAULT_SEED)
        for strategy in STRATEGIES[1:]:
            q, _, _ = transform(p, strategy)
            rep = sim.verify_equivalence(p, q, observed, inputs=inputs)
            worst = max(worst, rep.max_trace_distance)
            checked += 1
            if not rep.passed:
                bad.append(f"{name}/{strategy}")
    elapsed = time.perf_counter() - start
    ok = not bad and worst <= TD_TOL and elapsed < 30
    record(4, ok, f"{checked} comparisons max_td={worst:.2e} failures={bad} time={elapsed:.1f}s")
    assert ok


def test_criterion_5_restoration(record):
    min_pop, min_pur, restored = 1.0, 1.0, 0
    for name in corpus.names():
        p = corpus.program(name)
        q, plan, _ = transform(p, "early")
        temps = sorted(plan.reclaimed())
        if not temps:
            continue
        rep = sim.verify_restoration(q, temps)
        min_pop, min_pur = min(min_pop, rep.min_zero_population), min(min_pur, rep.min_purity)
        restored += len(temps)
    negatives = []
    for name in ("measured", "aliasing", "nonqfree", "cross_boundary"):
        p = corpus.program(name)
        for r in plan_early_reclamation(p).refusals:
            group = group_of(p, r.resource)
            forced = force_reclaim(p, group, forced_candidate(p, r, group))
            negatives.append(sim.violation(p, forced, sim.persistent_resources(p), group))
    ok = (restored > 0 and min_pop >= 1 - RESTORE_TOL and min_pur >= 1 - RESTORE_TOL
          and negatives and min(negatives) > NEGATIVE_MIN)
    record(5, ok, f"{restored} temps restored pop0>={min_pop:.15f} purity>={min_pur:.15f} "
                  f"negative controls={[round(v, 3) for v in negatives]}")
    assert ok


def test_criterion_6_depth(record):
    reports, elapsed = random_reports()
    violations = sum(r.depth_early > r.depth_global or r.gate_depth_early > r.gate_depth_global for r in reports)
    gaps = {}
    for d in (4, 8, 16):
        rep = compare_strategies(load(corpus.strict_improvement(d)))
        gaps[d] = rep.depth_global - rep.depth_early
    ok = violations == 0 and all(gaps[d] >= d - 4 for d in gaps) and elapsed < 60
    record(6, ok, f"{len(reports)} programs violations={violations} strict gaps={gaps} time={elapsed:.1f}s")
    assert ok


def test_criterion_7_width(record):
    reports, _ = random_reports()
    violations = sum(r.wmax_early > r.wmax_global for r in reports)
    pooled = {}
    for k in (2, 4, 8):
        p = load(corpus.disjoint_temps(k))
        q, _, _ = transform(p, "early")
        regs = allocate_registers(lifetimes_of(q))
        pooled[k] = len({regs[t.id] for t in p.temporaries()})
    rep = compare_strategies(corpus.program("running_example"))
    ok = (violations == 0 and all(v == 1 for v in pooled.values())
          and rep.wmax_early < rep.wmax_global and rep.peak_early < rep.peak_global)
    record(7, ok, f"violations={violations} temp qubits per k={pooled} "
                  f"running example wmax early/global={rep.wmax_early}/{rep.wmax_global}")
    assert ok


def test_criterion_8_compositionality(record):
    independent = sum(outer_lifetimes_unchanged(s) for s in range(NESTINGS))
    contained = sum(sub_block_contained(s) for s in range(NESTINGS))
    ok = independent == contained == NESTINGS
    record(8, ok, f"scope independence {independent}/{NESTINGS} monotonicity {contained}/{NESTINGS}")
    assert ok


def _bit(ens, rid):
    return sim.reduced_state(ens, [rid]).rho


def test_criterion_9_parameter_semantics(record):
    errors = [d for d in enforce_param_semantics(corpus.program("pbv_violation")) if d.severity == "error"]
    rejected = bool(errors) and all(d.code == "pass-by-value" for d in errors)

    ref = corpus.program("pbv_ref")
    a = ref.rid("a")
    persists = all(
        _bit(sim.simulate(ref, {a: bit})[0], a)[1 - bit, 1 - bit].real > 1 - RESTORE_TOL for bit in (0, 1))

    ctl = corpus.program("pbv_control")
    params = [ctl.rid(n) for n in ("a", "b", "c")]
    worst = 0.0
    for bits in itertools.product((0, 1), repeat=3):
        assign = dict(zip(params, bits))
        for k in range(1, ctl.n + 1):
            before = sim.simulate(ir.with_operations(ctl, list(ctl.operations)[:k - 1]), assign)[0]
            after = sim.simulate(ir.with_operations(ctl, list(ctl.operations)[:k]), assign)[0]
            worst = max(worst, sim.trace_distance(_bit(before, params[0]), _bit(after, params[0])))
    clean = not [d for d in enforce_param_semantics(ctl) if d.severity == "error"]
    ok = rejected and persists and clean and worst <= RESTORE_TOL
    record(9, ok, f"by-value violation rejected={rejected} ref persists={persists} "
                  f"control-only max change={worst:.1e}")
    assert ok


def test_criterion_10_constraints(record):
    expect = {"measured": "measured", "aliasing": "aliased-live", "cross_boundary": "cross-boundary-entangled"}
    got, necessary = {}, {}
    for name, reason in expect.items():
        p = corpus.program(name)
        refusals = [r for r in plan_early_reclamation(p).refusals if p.resources[r.resource].name == "t"]
        got[name] = refusals[0].reason if refusals else None
        if not refusals:
            necessary[name] = False
            continue
        r = refusals[0]
        group = group_of(p, r.resource)
        forced = force_reclaim(p, group, forced_candidate(p, r, group))
        necessary[name] = sim.violation(p, forced, sim.persistent_resources(p), group) > NEGATIVE_MIN
    ok = got == expect and all(necessary.values())
    record(10, ok, f"reasons={got} refusal necessary={necessary}")
    assert ok
