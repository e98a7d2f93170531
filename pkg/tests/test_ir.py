from __future__ import annotations

import numpy as np
import pytest

from uncompute import corpus, ir, sim
from uncompute.frontend import load

import oracles
from programs import random_program


def test_adjoint_of_cx_is_cx():
    p = load("void m(qubit a, qubit b) { CX a, b; }")
    (op,) = ir.adjoint_of(list(p.operations))
    assert op.kind == ir.GATE and op.gate_name == "CX" and op.operands == p.op(1).operands


def test_adjoint_of_empty():
    assert ir.adjoint_of([]) == []


def test_adjoint_of_running_example_history():
    p = corpus.program("running_example")
    seg = ir.adjoint_of([p.op(1), p.op(2), p.op(3)])
    got = [(op.kind, op.gate_name, [p.resources[r].name for r in op.resources]) for op in seg]
    assert got == [
        (ir.GATE, "CX", ["t1", "t2"]),
        (ir.ADJOINT_CALL, "g", ["x1", "t2"]),
        (ir.ADJOINT_CALL, "f", ["x1", "t1"]),
    ]


def test_adjoint_of_rejects_measurement():
    p = load("void m(qubit a) { measure a; }")
    with pytest.raises(ir.IRError, match="irreversible history"):
        ir.adjoint_of(list(p.operations))


def test_adjoint_of_s_and_t():
    p = load("void m(qubit a) { S a; T a; H a; }")
    seg = ir.adjoint_of(list(p.operations))
    assert [(o.kind, o.gate_name) for o in seg] == [(ir.GATE, "H"), (ir.ADJOINT_GATE, "T"), (ir.ADJOINT_GATE, "S")]


def test_inline_without_calls_is_identity():
    p = load("void m(qubit a, qubit b) { H a; CX a, b; }")
    flat, prov = ir.inline(p)
    assert [o.signature() for o in flat.operations] == [o.signature() for o in p.operations]
    assert prov == (1, 2)


def test_inline_running_example_f_is_one_cx():
    p = corpus.program("running_example")
    flat, prov = ir.inline(p)
    first = [o for o, src in zip(flat.operations, prov) if src == 1]
    assert len(first) == 1 and first[0].gate_name == "CX"
    assert ir.is_inlined(flat)
    flat.validate()


def test_inline_call_then_adjoint_call_is_identity():
    src = """
    void k(qubit a, ref qubit b) { H b; CX a, b; T b; }
    void m(qubit a, ref qubit b) { k(a, b); adjoint k(a, b); }
    """
    p = load(src)
    flat, _ = ir.inline(p)
    names = [(o.kind, o.gate_name) for o in flat.operations]
    assert names[:3] == [(ir.GATE, "H"), (ir.GATE, "CX"), (ir.GATE, "T")]
    assert names[3:] == [(ir.ADJOINT_GATE, "T"), (ir.GATE, "CX"), (ir.GATE, "H")]
    for label, inputs in sim.sample_inputs([0, 1], n_random=4):
        ens, _ = sim.simulate(flat, inputs)
        start = sim.initial_state(ens.axis, inputs)
        assert np.allclose(ens.branches[0].state.flat(), start.flat(), atol=1e-12)


def test_inline_undefined_function():
    body = ir.Program((ir.Operation(1, ir.CALL, "nope", ((0, ir.TARGET),), True),),
                      (ir.Scope(0, None, (0,), 1, 1),), {0: ir.Resource(0, "a", ir.INPUT, 0)})
    with pytest.raises(ir.IRError, match="undefined"):
        ir.inline(body)


def test_recursive_calls_are_rejected():
    from uncompute.frontend import ParseError

    with pytest.raises(ParseError) as exc:
        load("void a(ref qubit q) { b(q); }\nvoid b(ref qubit q) { a(q); }")
    assert exc.value.diagnostics[0].code == "recursion"
    assert "a" in exc.value.diagnostics[0].message and "b" in exc.value.diagnostics[0].message


def test_operation_rejects_duplicate_operands():
    with pytest.raises(ir.IRError):
        ir.Operation(1, ir.GATE, "CX", ((0, ir.CONTROL), (0, ir.TARGET)), True)


def _reversible(seed):
    p = load(random_program(seed, max_qubits=8))
    ops = [o for o in ir.inline(p)[0].operations]
    return ir.inline(p)[0], ops


@pytest.mark.parametrize("seed", range(200))
def test_program_then_adjoint_is_identity(seed):
    flat, ops = _reversible(seed)
    both = ir.with_operations(flat, list(ops) + ir.adjoint_of(ops))
    rng = np.random.default_rng(seed)
    axis = sim.qubit_axes(both)
    inputs = {r: sim.random_product_state(rng) for r in axis}
    ens, _ = sim.simulate(both, inputs)
    start = sim.initial_state(axis, inputs)
    assert np.linalg.norm(ens.branches[0].state.flat() - start.flat()) < 1e-12


@pytest.mark.parametrize("name", ["running_example", "running_example_ref", "pbv_control", "pbv_ref"])
def test_inline_preserves_semantics(name):
    p = corpus.program(name)
    flat, _ = ir.inline(p)
    for label, inputs in sim.sample_inputs(sim.input_resources(p), n_random=4):
        expect = oracles.call_level_final(p, inputs)
        ens, _ = sim.simulate(flat, inputs)
        got = ens.branches[0].state
        perm = [got.axis[r] for r in sorted(expect.axis, key=expect.axis.get)]
        assert np.allclose(np.transpose(got.amplitudes, perm), expect.amplitudes, atol=1e-12), label
