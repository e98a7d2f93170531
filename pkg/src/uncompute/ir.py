"""Core program representation shared by every pass.

A :class:`Program` is a flat, ordered sequence of :class:`Operation` blocks
(points ``1..n``) plus the lexical scope tree, the resources those
operations act on, and the function definitions that ``call`` operations
refer to.  All values are frozen; passes build new programs instead of
mutating old ones.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

CONTROL = "control"
TARGET = "target"

GATE = "gate"
CALL = "call"
ADJOINT_GATE = "adjoint_gate"
ADJOINT_CALL = "adjoint_call"
MEASURE = "measure"

INPUT = "input"
OUTPUT = "output"
TEMPORARY = "temporary"
PARAMETER = "parameter"

# gate name -> (arity, qfree, self-inverse)
PRIMITIVES: dict[str, tuple[int, bool, bool]] = {
    "X": (1, True, True),
    "H": (1, False, True),
    "S": (1, False, False),
    "T": (1, False, False),
    "CX": (2, True, True),
    "CCX": (3, True, True),
    "SWAP": (2, True, True),
}

GATE_ALIASES = {"CNOT": "CX", "CCNOT": "CCX", "TOFFOLI": "CCX"}


class IRError(Exception):
    """Raised when a program violates a structural invariant."""


def gate_roles(name: str) -> tuple[str, ...]:
    """Operand roles of a primitive gate: the last operand of X/CX/CCX is
    the target, SWAP writes both of its operands."""
    arity = PRIMITIVES[name][0]
    if name == "SWAP":
        return (TARGET, TARGET)
    return (CONTROL,) * (arity - 1) + (TARGET,)


@dataclass(frozen=True)
class Resource:
    id: int
    name: str
    kind: str
    scope_id: int
    persistent: bool = False
    measured_at: int | None = None
    aliases: frozenset[str] = frozenset()

    @property
    def is_temporary(self) -> bool:
        return self.kind == TEMPORARY


@dataclass(frozen=True)
class Operation:
    point: int
    kind: str
    gate_name: str
    operands: tuple[tuple[int, str], ...]
    qfree: bool
    scope_id: int = 0
    # point of the forward operation this one inverts (adjoint ops and
    # self-inverse gates inserted by uncomputation)
    inverts: int | None = None
    # point in the program this op was derived from; None for inserted ops
    origin: int | None = None
    # source spelling of each operand, used for alias-aware diagnostics
    names: tuple[str, ...] = ()
    line: int = 0

    def __post_init__(self):
        ids = [r for r, _ in self.operands]
        if len(set(ids)) != len(ids):
            raise IRError(f"duplicate operand in {self.gate_name} at point {self.point}")
        if self.kind == MEASURE and (len(self.operands) != 1 or self.operands[0][1] != TARGET):
            raise IRError("measure takes exactly one target")

    @property
    def resources(self) -> tuple[int, ...]:
        return tuple(r for r, _ in self.operands)

    @property
    def targets(self) -> tuple[int, ...]:
        return tuple(r for r, role in self.operands if role == TARGET)

    @property
    def controls(self) -> tuple[int, ...]:
        return tuple(r for r, role in self.operands if role == CONTROL)

    @property
    def is_adjoint(self) -> bool:
        return self.kind in (ADJOINT_GATE, ADJOINT_CALL) or self.inverts is not None

    @property
    def is_call(self) -> bool:
        return self.kind in (CALL, ADJOINT_CALL)

    def touches(self, rid: int) -> bool:
        return any(r == rid for r, _ in self.operands)

    def signature(self) -> tuple:
        """Structural identity, independent of position and provenance."""
        return (self.kind, self.gate_name, self.operands)


@dataclass(frozen=True)
class Scope:
    id: int
    parent: int | None
    declared: tuple[int, ...]
    entry: int
    exit: int

    def contains(self, point: int) -> bool:
        return self.entry <= point <= self.exit


@dataclass(frozen=True, eq=False)
class FunctionDef:
    name: str
    params: tuple[tuple[str, bool], ...]
    body: "Program"
    returns: tuple[str, ...] = ()

    @property
    def param_ids(self) -> tuple[int, ...]:
        # parameters are always the first resources allocated for a body
        return tuple(range(len(self.params)))

    def param_roles(self) -> tuple[str, ...]:
        """Role of each parameter as seen from a call site.  A parameter the
        body never writes, or a by-value one whose writes all cancel, is a
        control."""
        roles = []
        for pid, (_, by_ref) in zip(self.param_ids, self.params):
            if by_ref:
                written = any(pid in op.targets for op in self.body.operations)
            else:
                written = bool(unmatched_writes(self.body, pid))
            roles.append(TARGET if written else CONTROL)
        return tuple(roles)


@dataclass(frozen=True, eq=False)
class Program:
    operations: tuple[Operation, ...]
    scopes: tuple[Scope, ...]
    resources: Mapping[int, Resource]
    functions: Mapping[str, FunctionDef] = field(default_factory=dict)
    name: str = "main"
    # rid -> point at which an inserted adjoint segment restored it
    releases: Mapping[int, int] = field(default_factory=dict)
    # last forward point when a cleanup phase was appended after it
    barrier: int | None = None
    # (alias name, provisional id, referent id, scope id); resolve_aliases
    # folds the provisional ids into their referents
    alias_decls: tuple[tuple[str, int, int, int], ...] = ()

    @property
    def n(self) -> int:
        return len(self.operations)

    def op(self, point: int) -> Operation:
        if not 1 <= point <= self.n:
            raise IRError(f"point {point} out of range 1..{self.n}")
        return self.operations[point - 1]

    def scope(self, sid: int) -> Scope:
        for s in self.scopes:
            if s.id == sid:
                return s
        raise IRError(f"unknown scope {sid}")

    def resource_by_name(self, name: str) -> Resource:
        for r in self.resources.values():
            if r.name == name or name in r.aliases:
                return r
        raise KeyError(name)

    def rid(self, name: str) -> int:
        return self.resource_by_name(name).id

    def temporaries(self) -> list[Resource]:
        return [r for r in self.resources.values() if r.is_temporary]

    def uses(self, rid: int) -> list[int]:
        return [op.point for op in self.operations if op.touches(rid)]

    def scope_ancestors(self, sid: int) -> list[int]:
        chain = []
        cur: int | None = sid
        while cur is not None:
            chain.append(cur)
            cur = self.scope(cur).parent
        return chain

    def digest(self) -> str:
        h = hashlib.sha256()
        for op in self.operations:
            h.update(repr(op.signature()).encode())
        return h.hexdigest()[:16]

    def validate(self) -> None:
        """Check the structural invariants; raises IRError."""
        for i, op in enumerate(self.operations, start=1):
            if op.point != i:
                raise IRError(f"operation {i} carries point {op.point}")
            for rid in op.resources:
                if rid not in self.resources:
                    raise IRError(f"point {i} references unknown resource {rid}")
        declared: dict[int, int] = {}
        for s in self.scopes:
            for rid in s.declared:
                if rid in declared:
                    raise IRError(f"resource {rid} declared in two scopes")
                declared[rid] = s.id
        for rid in self.resources:
            if rid not in declared:
                raise IRError(f"resource {rid} is not declared in any scope")
        limit = self.barrier if self.barrier is not None else self.n
        for rid, sid in declared.items():
            s = self.scope(sid)
            for p in self.uses(rid):
                if p <= limit and not s.contains(p):
                    raise IRError(
                        f"{self.resources[rid].name} used at point {p} outside its scope [{s.entry},{s.exit}]"
                    )
        ivs = {s.id: (s.entry, s.exit) for s in self.scopes if s.entry <= s.exit}
        for s in self.scopes:
            if s.parent is None or s.id not in ivs or s.parent not in ivs:
                continue
            lo, hi = ivs[s.id]
            plo, phi = ivs[s.parent]
            if lo < plo or hi > phi:
                raise IRError(f"scope {s.id} is not nested in its parent")
        for r in self.resources.values():
            if r.measured_at is not None and not 1 <= r.measured_at <= self.n:
                raise IRError(f"{r.name} measured at invalid point {r.measured_at}")


def renumber(ops: Iterable[Operation]) -> tuple[Operation, ...]:
    return tuple(replace(op, point=i) for i, op in enumerate(ops, start=1))


def rebuild_scopes(scopes: Sequence[Scope], ops: Sequence[Operation]) -> tuple[Scope, ...]:
    """Recompute scope entry/exit from the scope tags carried by ``ops``."""
    children: dict[int | None, list[int]] = {}
    for s in scopes:
        children.setdefault(s.parent, []).append(s.id)
    own: dict[int, list[int]] = {}
    for op in ops:
        own.setdefault(op.scope_id, []).append(op.point)

    spans: dict[int, tuple[int, int] | None] = {}

    def span(sid: int) -> tuple[int, int] | None:
        if sid in spans:
            return spans[sid]
        pts = list(own.get(sid, []))
        for c in children.get(sid, []):
            sp = span(c)
            if sp is not None:
                pts.extend(sp)
        spans[sid] = (min(pts), max(pts)) if pts else None
        return spans[sid]

    out = []
    for s in scopes:
        sp = span(s.id)
        if sp is None:
            # empty scope: an empty interval positioned after its predecessors
            prev = [op.point for op in ops if op.scope_id in _subtree(s.parent, children)] if s.parent is not None else []
            at = (max(prev) if prev else 0) + 1
            out.append(replace(s, entry=at, exit=at - 1))
        else:
            out.append(replace(s, entry=sp[0], exit=sp[1]))
    return tuple(out)


def _subtree(sid: int | None, children: dict[int | None, list[int]]) -> set[int]:
    seen: set[int] = set()
    stack = [sid]
    while stack:
        cur = stack.pop()
        if cur is None or cur in seen:
            continue
        seen.add(cur)
        stack.extend(children.get(cur, []))
    return seen


def with_operations(program: Program, ops: Iterable[Operation], **changes) -> Program:
    """Return ``program`` with a new operation list, renumbered and with
    scope intervals recomputed."""
    ops = renumber(ops)
    scopes = rebuild_scopes(program.scopes, ops)
    return replace(program, operations=ops, scopes=scopes, **changes)


def adjoint_op(op: Operation) -> Operation:
    """Inverse of a single operation; self-inverse gates keep their kind."""
    if op.kind == MEASURE:
        raise IRError("irreversible history: measurement cannot be inverted")
    if op.kind == GATE:
        kind = GATE if PRIMITIVES[op.gate_name][2] else ADJOINT_GATE
    elif op.kind == ADJOINT_GATE:
        kind = GATE
    elif op.kind == CALL:
        kind = ADJOINT_CALL
    else:
        kind = CALL
    return replace(op, kind=kind, inverts=op.point, origin=None)


def adjoint_of(ops: Sequence[Operation]) -> list[Operation]:
    """Reverse-ordered inverse of a measurement-free operation sequence."""
    for op in ops:
        if op.kind == MEASURE:
            raise IRError("irreversible history: measurement at point %d" % op.point)
    return [adjoint_op(op) for op in reversed(ops)]


def unmatched_writes(body: Program, rid: int) -> list[Operation]:
    """Writes to ``rid`` left over after cancelling each write against a
    later exact inverse, provided nothing rewrote the pair's other
    operands in between."""
    stack: list[Operation] = []
    for op in body.operations:
        if rid not in op.targets:
            continue
        if op.kind == MEASURE:
            return [op]
        if stack:
            top = stack[-1]
            others = {r for r in top.resources if r != rid}
            clean = not any(others & set(mid.targets) for mid in body.operations[top.point:op.point - 1])
            if clean and adjoint_op(top).signature() == op.signature():
                stack.pop()
                continue
        stack.append(op)
    return stack


def call_qfree(name: str, functions: Mapping[str, FunctionDef], _stack: tuple[str, ...] = ()) -> bool:
    if name in _stack:
        raise IRError("recursive call cycle: " + " -> ".join(_stack + (name,)))
    if name not in functions:
        raise IRError(f"undefined function {name!r}")
    body = functions[name].body
    return all(
        call_qfree(op.gate_name, functions, _stack + (name,)) if op.is_call else op.qfree
        for op in body.operations
    )


def inline(program: Program) -> tuple[Program, tuple[int, ...]]:
    """Expand every call into primitive gates.

    Returns the inlined program and the provenance map: entry ``i - 1`` is
    the point of ``program`` that produced inlined point ``i``.  Callee
    locals become fresh temporaries in a child scope of the call site.
    """
    resources = dict(program.resources)
    scopes = list(program.scopes)
    next_rid = max(resources, default=-1) + 1
    next_sid = max((s.id for s in scopes), default=-1) + 1
    out: list[Operation] = []
    prov: list[int] = []

    def expand(fname: str, args: tuple[int, ...], parent_scope: int, stack: tuple[str, ...]) -> list[Operation]:
        nonlocal next_rid, next_sid
        if fname in stack:
            raise IRError("recursive call cycle: " + " -> ".join(stack + (fname,)))
        if fname not in program.functions:
            raise IRError(f"undefined function {fname!r}")
        fdef = program.functions[fname]
        body = fdef.body
        mapping = dict(zip(fdef.param_ids, args))
        # one scope per call site, holding the callee's locals
        body_scopes = {s.id: s for s in body.scopes}
        scope_map: dict[int, int] = {}
        for s in body.scopes:
            scope_map[s.id] = next_sid
            next_sid += 1
        for s in body.scopes:
            parent = parent_scope if s.parent is None else scope_map[s.parent]
            declared = []
            for rid in s.declared:
                if rid in mapping:
                    continue
                r = body.resources[rid]
                mapping[rid] = next_rid
                resources[next_rid] = replace(
                    r, id=next_rid, name=f"{fname}.{r.name}.{next_rid}", kind=TEMPORARY,
                    scope_id=scope_map[s.id], persistent=False, aliases=frozenset(),
                    measured_at=None,
                )
                declared.append(next_rid)
                next_rid += 1
            scopes.append(Scope(scope_map[s.id], parent, tuple(declared), 0, -1))
        del body_scopes
        ops: list[Operation] = []
        for op in body.operations:
            operands = tuple((mapping[r], role) for r, role in op.operands)
            if op.is_call:
                inner = expand(op.gate_name, tuple(r for r, _ in operands), scope_map[op.scope_id], stack + (fname,))
                if op.kind == ADJOINT_CALL:
                    inner = adjoint_of(inner)
                ops.extend(inner)
            else:
                ops.append(replace(op, operands=operands, scope_id=scope_map[op.scope_id], names=()))
        return ops

    for op in program.operations:
        if op.is_call:
            body = expand(op.gate_name, op.resources, op.scope_id, (program.name,))
            if op.kind == ADJOINT_CALL:
                body = adjoint_of(body)
            for b in body:
                out.append(replace(b, inverts=None, origin=op.point, line=op.line))
                prov.append(op.point)
        else:
            out.append(replace(op, origin=op.point))
            prov.append(op.point)

    ops = renumber(out)
    scope_recs = rebuild_scopes(scopes, ops)
    last_new = {}
    for i, src in enumerate(prov, start=1):
        last_new[src] = i
    releases = {rid: last_new[p] for rid, p in program.releases.items() if p in last_new}
    barrier = last_new.get(program.barrier) if program.barrier is not None else None
    inlined = Program(ops, scope_recs, resources, program.functions, program.name, releases, barrier,
                      program.alias_decls)
    return inlined, tuple(prov)


def is_inlined(program: Program) -> bool:
    return not any(op.is_call for op in program.operations)
