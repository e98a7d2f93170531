from __future__ import annotations

import json

import pytest

from uncompute import corpus, ir, sim
from uncompute.analysis import analyze, build_entanglement_trace
from uncompute.frontend import format_op, load
from uncompute.reclaim import (
    IsolabilityCertificate, NON_QFREE, Refusal, StalePlanError, USED_LATER, certify_isolability,
    check_constraints, enforce_param_semantics, force_reclaim, forced_candidate, global_refusals, group_of,
    insert_early_uncompute, insert_global_uncompute, plan_early_reclamation,
)

from programs import random_program


def ids(p, *names):
    return {p.rid(n) for n in names}


def seg_text(p, seg):
    return [format_op(p, op) for op in seg]


def test_certify_running_example_t1_t2():
    p = corpus.program("running_example")
    cert = certify_isolability(p, build_entanglement_trace(p), ids(p, "t1", "t2"), 4)
    assert isinstance(cert, IsolabilityCertificate)
    assert cert.defining_ops == (1, 2, 3) and cert.transfer_ops == (4,)


def test_certify_t3_t4_too_early_is_used_later():
    p = corpus.program("running_example")
    r = certify_isolability(p, None, ids(p, "t3", "t4"), 7)
    assert isinstance(r, Refusal) and r.reason == USED_LATER and r.point == 8


def test_certify_non_qfree_history():
    p = corpus.program("nonqfree")
    r = certify_isolability(p, None, ids(p, "t"), 3)
    assert r.reason == NON_QFREE


def test_certify_rejects_unknown_resource_and_bad_point():
    p = corpus.program("running_example")
    with pytest.raises(ir.IRError):
        certify_isolability(p, None, {99}, 4)
    with pytest.raises(ir.IRError):
        certify_isolability(p, None, ids(p, "t1"), 42)


def test_early_plan_running_example():
    p = corpus.program("running_example")
    plan = plan_early_reclamation(p)
    g1, g2 = plan.groups
    assert set(g1.temps) == ids(p, "t1", "t2") and g1.insert_after == 4
    assert seg_text(p, g1.segment) == ["CX t1, t2;", "adjoint g(x1, t2);", "adjoint f(x1, t1);"]
    assert set(g2.temps) == ids(p, "t3", "t4") and g2.insert_after == 8
    assert not plan.refusals


def test_no_temporaries_empty_plan():
    p = load("qubit[] m(qubit a, qubit b) { CX a, b; return [b]; }")
    plan = plan_early_reclamation(p)
    assert plan.groups == () and plan.refusals == ()
    assert insert_early_uncompute(p, plan) is p
    assert insert_global_uncompute(p) is p


@pytest.mark.parametrize("name,reason", [
    ("measured", "measured"),
    ("aliasing", "aliased-live"),
    ("nonqfree", "non-qfree-history"),
    ("cross_boundary", "cross-boundary-entangled"),
])
def test_refusal_reasons(name, reason):
    p = corpus.program(name)
    plan = plan_early_reclamation(p)
    refused = {r.resource: r.reason for r in plan.refusals}
    assert refused[p.rid("t")] == reason


def test_check_constraints_alias_and_measure():
    p = corpus.program("aliasing")
    _, tr, live, _ = analyze(p)
    (r,) = check_constraints(p, live, tr)
    assert r.reason == "aliased-live" and r.point == 2


def test_entangled_with_persistent_but_certified_is_not_refused():
    p = corpus.program("running_example")
    _, tr, live, _ = analyze(p)
    assert check_constraints(p, live, tr) == []


def test_insert_early_shape():
    p = corpus.program("running_example")
    q = insert_early_uncompute(p, plan_early_reclamation(p))
    text = [format_op(q, op) for op in q.operations]
    assert text[4:7] == ["CX t1, t2;", "adjoint g(x1, t2);", "adjoint f(x1, t1);"]
    assert text[7] == "h(x1, t3);"
    assert all(op.is_adjoint for op in q.operations[4:7])
    q.validate()


def test_stale_plan_rejected():
    p = corpus.program("running_example")
    plan = plan_early_reclamation(p)
    other = corpus.program("running_example_ref")
    changed = ir.with_operations(other, list(other.operations)[:-1])
    with pytest.raises(StalePlanError):
        insert_early_uncompute(changed, plan)


def test_global_suffix_running_example():
    p = corpus.program("running_example")
    q = insert_global_uncompute(p)
    suffix = [format_op(q, op) for op in q.operations[p.n:]]
    assert sorted(suffix) == sorted(["CX t1, t2;", "adjoint g(x1, t2);", "adjoint f(x1, t1);",
                                     "adjoint h(x2, t4);", "adjoint h(x1, t3);"])
    # within each group the reverse order is kept
    assert suffix.index("CX t1, t2;") < suffix.index("adjoint g(x1, t2);") < suffix.index("adjoint f(x1, t1);")
    assert q.barrier == p.n


def test_global_leaves_measured_temp_dirty_with_warning():
    p = corpus.program("measured")
    assert insert_global_uncompute(p) is p
    (d,) = global_refusals(p)
    assert d.severity == "warning" and d.code == "measured"


def test_all_refused_early_equals_global_minus_suffix():
    p = corpus.program("nonqfree")
    assert [o.signature() for o in insert_early_uncompute(p, plan_early_reclamation(p)).operations] == \
        [o.signature() for o in insert_global_uncompute(p).operations]


def test_plan_json_shape():
    p = corpus.program("running_example")
    js = plan_early_reclamation(p).to_json(p)
    json.dumps(js)
    g = js["groups"][0]
    assert set(g) == {"temps", "boundary", "segment", "insertion_point"}
    assert g["segment"] == ["CX t1, t2", "adjoint g(x1, t2)", "adjoint f(x1, t1)"]
    js = plan_early_reclamation(corpus.program("measured")).to_json(corpus.program("measured"))
    assert js["refusals"][0]["reason"] == "measured"


def test_param_semantics_examples():
    assert not [d for d in enforce_param_semantics(corpus.program("pbv_control")) if d.severity == "error"]
    errs = [d for d in enforce_param_semantics(corpus.program("pbv_violation")) if d.severity == "error"]
    assert errs and all("pass-by-value violation" in d.message for d in errs)
    assert enforce_param_semantics(corpus.program("pbv_ref")) == []
    diags = enforce_param_semantics(corpus.program("running_example_ref"))
    assert not [d for d in diags if d.severity == "error"]


def test_pbv_violation_flips_caller_state():
    p = corpus.program("pbv_violation")
    a = p.rid("a")
    for bit in (0, 1):
        ens, _ = sim.simulate(p, {a: bit, p.rid("b"): 0})
        assert sim.reduced_state(ens, [a]).rho[1 - bit, 1 - bit].real == pytest.approx(1)


def test_residual_entanglement_is_only_a_warning():
    diags = enforce_param_semantics(corpus.program("running_example"))
    assert diags and all(d.severity == "warning" and d.code == "residual-entanglement" for d in diags)


@pytest.mark.parametrize("name", ["measured", "aliasing", "nonqfree", "cross_boundary"])
def test_forced_reclamation_breaks_something(name):
    p = corpus.program(name)
    plan = plan_early_reclamation(p)
    for r in plan.refusals:
        group = group_of(p, r.resource)
        forced = force_reclaim(p, group, forced_candidate(p, r, group))
        assert sim.violation(p, forced, sim.persistent_resources(p), group) > 1e-6


@pytest.mark.parametrize("seed", range(60))
def test_plan_invariants(seed):
    p = load(random_program(seed))
    plan = plan_early_reclamation(p)
    for g in plan.groups:
        cert = g.certificate
        assert all(d <= g.boundary for d in cert.defining_ops)
        assert all(t <= g.boundary for t in cert.transfer_ops)
        allowed = set(g.temps) | {c for d in cert.defining_ops for c in p.op(d).controls}
        assert all(set(op.resources) <= allowed for op in g.segment)
        assert all(p.op(d).qfree for d in cert.defining_ops)
    reclaimed = plan.reclaimed()
    assert not reclaimed & plan.refused()
