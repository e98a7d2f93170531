"""Isolability certification, reclamation planning and adjoint insertion.

A group of temporaries ``T`` may be restored right after a point ``p``
when every operation that writes ``T`` is a basis permutation whose
controls outside ``T`` stay unchanged until ``p``, and every other
operation touching ``T`` only reads it.  In each computational-basis
branch of those controls ``T`` then holds a fixed function of them, so
replaying the writers in reverse clears ``T`` without disturbing anything
the readers copied out.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from . import ir
from .analysis import (
    DependenceGraph, EntanglementTrace, Liveness, build_entanglement_trace, entangling_pairs,
)
from .frontend import Diagnostic
from .ir import Operation, Program

MEASURED = "measured"
ALIASED_LIVE = "aliased-live"
NON_QFREE = "non-qfree-history"
CROSS_BOUNDARY = "cross-boundary-entangled"
USED_LATER = "used-later"
REASONS = (MEASURED, ALIASED_LIVE, NON_QFREE, CROSS_BOUNDARY, USED_LATER)


@dataclass(frozen=True)
class Refusal:
    resource: int
    reason: str
    point: int
    detail: str = ""

    def to_json(self, program: Program | None = None) -> dict:
        name = program.resources[self.resource].name if program else self.resource
        return {"resource": name, "reason": self.reason, "point": self.point, "detail": self.detail}


@dataclass(frozen=True)
class IsolabilityCertificate:
    temps: frozenset[int]
    boundary: int
    defining_ops: tuple[int, ...]
    transfer_ops: tuple[int, ...]
    # defining op -> controls outside the group that nothing rewrites in (def, boundary]
    control_stability: tuple[tuple[int, tuple[int, ...]], ...]


@dataclass(frozen=True)
class ReclaimGroup:
    temps: tuple[int, ...]
    scope_id: int
    boundary: int
    certificate: IsolabilityCertificate
    segment: tuple[Operation, ...]

    @property
    def insert_after(self) -> int:
        return self.boundary


@dataclass(frozen=True)
class ReclamationPlan:
    digest: str
    groups: tuple[ReclaimGroup, ...]
    refusals: tuple[Refusal, ...]

    def refused(self) -> set[int]:
        return {r.resource for r in self.refusals}

    def reclaimed(self) -> set[int]:
        return {t for g in self.groups for t in g.temps}

    def reason(self, rid: int) -> str | None:
        return next((r.reason for r in self.refusals if r.resource == rid), None)

    def to_json(self, program: Program) -> dict:
        from .frontend import format_op

        name = lambda r: program.resources[r].name
        return {
            "groups": [
                {
                    "temps": [name(t) for t in g.temps],
                    "boundary": g.boundary,
                    "segment": [format_op(program, op).rstrip(";") for op in g.segment],
                    # the segment is spliced directly after this point
                    "insertion_point": g.insert_after,
                }
                for g in self.groups
            ],
            "refusals": [r.to_json(program) for r in self.refusals],
        }


def _measure_point(program: Program, rid: int) -> int | None:
    r = program.resources[rid]
    if r.measured_at is not None:
        return r.measured_at
    return next((op.point for op in program.operations if op.kind == ir.MEASURE and op.touches(rid)), None)


def certify_isolability(program: Program, trace: EntanglementTrace | None, temps: Iterable[int],
                        p: int) -> IsolabilityCertificate | Refusal:
    """Certificate that ``temps`` can be restored right after point ``p``,
    or the first violated condition."""
    temps = frozenset(temps)
    for t in temps:
        if t not in program.resources:
            raise ir.IRError(f"unknown resource {t}")
    if not 0 <= p <= program.n:
        raise ir.IRError(f"point {p} out of range 0..{program.n}")
    for op in program.operations[p:]:
        hit = [t for t in op.resources if t in temps]
        if hit:
            return Refusal(min(hit), USED_LATER, op.point, f"touched at point {op.point}")
    for t in sorted(temps):
        m = _measure_point(program, t)
        if m is not None and m <= p:
            return Refusal(t, MEASURED, m, f"measured at point {m}")
    defining = [op for op in program.operations[:p] if any(t in temps for t in op.targets)]
    for op in defining:
        if not op.qfree:
            t = min(x for x in op.targets if x in temps)
            return Refusal(t, NON_QFREE, op.point, f"{op.gate_name} at point {op.point} is not a basis permutation")
    for op in defining:
        outside = [x for x in op.targets if x not in temps]
        if outside:
            t = min(x for x in op.targets if x in temps)
            return Refusal(t, CROSS_BOUNDARY, op.point,
                           f"point {op.point} writes {program.resources[outside[0]].name} jointly with the group")
    stability = []
    for d in defining:
        ctrls = tuple(c for c in d.controls if c not in temps)
        for op in program.operations[d.point:p]:
            clobbered = [c for c in op.targets if c in ctrls]
            if clobbered:
                t = min(x for x in d.targets if x in temps)
                return Refusal(t, CROSS_BOUNDARY, op.point,
                               f"point {op.point} rewrites {program.resources[clobbered[0]].name}, "
                               f"a control of point {d.point}")
        stability.append((d.point, ctrls))
    dpoints = {op.point for op in defining}
    transfer = tuple(op.point for op in program.operations[:p]
                     if op.point not in dpoints and any(t in temps for t in op.resources))
    return IsolabilityCertificate(temps, p, tuple(sorted(dpoints)), transfer, tuple(stability))


def temp_groups(program: Program) -> list[tuple[int, tuple[int, ...]]]:
    """Temporaries of each scope joined by entanglement introduced by
    operations on that scope's temporaries.  Returns (scope id, temps)."""
    out = []
    for s in program.scopes:
        temps = [r for r in s.declared if program.resources[r].is_temporary and program.uses(r)]
        if not temps:
            continue
        tset = set(temps)
        parent = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for t in temps:
            find(t)
        for op in program.operations:
            if not any(r in tset for r in op.resources):
                continue
            for a, b in entangling_pairs(program, op):
                parent[find(a)] = find(b)
        comps: dict[int, list[int]] = {}
        for t in temps:
            comps.setdefault(find(t), []).append(t)
        for members in comps.values():
            out.append((s.id, tuple(sorted(members))))
    out.sort(key=lambda g: (min(program.uses(t)[-1] for t in g[1]), g[1]))
    return out


def last_touch(program: Program, temps: Iterable[int]) -> int:
    return max(program.uses(t)[-1] for t in temps)


def name_level_candidate(program: Program, rid: int) -> int | None:
    """Last use of a register through its declaring name, where an
    identifier-level analysis would free it."""
    r = program.resources[rid]
    pts = [op.point for op in program.operations
           for (x, _), nm in zip(op.operands, op.names or (None,) * len(op.operands))
           if x == rid and (nm is None or nm == r.name)]
    return pts[-1] if pts else None


def check_constraints(program: Program, liveness: Liveness | None = None,
                      trace: EntanglementTrace | None = None) -> list[Refusal]:
    """Refusals forced by measurement, live aliases, and entanglement with
    resources outside a temporary's scope that cannot be certified."""
    out: list[Refusal] = []
    for r in sorted(program.temporaries(), key=lambda r: r.id):
        m = _measure_point(program, r.id)
        if m is not None:
            out.append(Refusal(r.id, MEASURED, m, f"measured at point {m}"))
            continue
        if r.aliases:
            cand = name_level_candidate(program, r.id)
            uses = program.uses(r.id)
            if cand is not None and uses and uses[-1] > cand:
                last = program.op(uses[-1])
                via = next((nm for (x, _), nm in zip(last.operands, last.names) if x == r.id), r.name)
                alive = liveness.live(r.id, cand + 1) if liveness is not None else True
                if alive:
                    out.append(Refusal(r.id, ALIASED_LIVE, cand,
                                       f"{r.name} is still reachable as {via!r} at point {uses[-1]}"))
    forced = {x.resource for x in out}
    trace = trace or build_entanglement_trace(program)
    edges = trace.all_edges()
    for sid, group in temp_groups(program):
        if forced & set(group):
            continue
        members = set(group)
        outside = {b if a in members else a for a, b in edges if (a in members) != (b in members)}
        if not outside:
            continue
        cert = certify_isolability(program, trace, group, last_touch(program, group))
        if isinstance(cert, Refusal) and cert.reason == CROSS_BOUNDARY:
            out.extend(replace(cert, resource=t) for t in group)
    return out


def plan_early_reclamation(program: Program, ddg: DependenceGraph | None = None,
                           trace: EntanglementTrace | None = None,
                           liveness: Liveness | None = None) -> ReclamationPlan:
    """Earliest certified reclamation point for every temporary group.

    A group whose history reads another group's temporaries as controls
    must be cleaned first, so the other group's boundary is pushed back to
    at least this one's.
    """
    trace = trace or build_entanglement_trace(program)
    forced = {r.resource: r for r in check_constraints(program, liveness, trace)}
    refusals: dict[tuple[int, ...], list[Refusal]] = {}
    candidates: list[tuple[int, tuple[int, ...]]] = []
    for sid, group in temp_groups(program):
        hit = [forced[t] for t in group if t in forced]
        if hit:
            refusals[group] = [forced.get(t) or replace(hit[0], resource=t) for t in group]
        else:
            candidates.append((sid, group))
    owner = {t: g for _, g in candidates for t in g}
    while True:
        # isolability only gets harder as p grows, so each group starts at
        # its last touch, the earliest certifiable point
        boundary = {g: last_touch(program, g) for _, g in candidates}
        reads: dict[tuple[int, ...], set[tuple[int, ...]]] = {g: set() for _, g in candidates}
        changed = True
        while changed:
            changed = False
            for _, g in candidates:
                members = set(g)
                for op in program.operations[:boundary[g]]:
                    if not members & set(op.targets):
                        continue
                    for c in op.controls:
                        other = owner.get(c)
                        if other is None or other == g:
                            continue
                        reads[g].add(other)
                        if boundary[other] < boundary[g]:
                            boundary[other] = boundary[g]
                            changed = True
        certs = {}
        dropped = False
        for sid, g in candidates:
            cert = certify_isolability(program, trace, g, boundary[g])
            if isinstance(cert, Refusal):
                refusals[g] = [replace(cert, resource=t) for t in g]
                dropped = True
            else:
                certs[g] = (sid, cert)
        if not dropped:
            break
        candidates = [(sid, g) for sid, g in candidates if g in certs]
        owner = {t: g for _, g in candidates for t in g}
    # at a shared boundary a group's segment runs before the groups it reads
    rank: dict[tuple[int, ...], int] = {}

    def depth(g, seen=()):
        if g not in rank:
            rank[g] = 1 + max((depth(o, seen + (g,)) for o in reads[g] if o not in seen), default=0)
        return rank[g]

    order = sorted(certs, key=lambda g: (boundary[g], -depth(g), g))
    groups = []
    for g in order:
        sid, cert = certs[g]
        segment = tuple(replace(op, scope_id=sid) for op in ir.adjoint_of([program.op(d) for d in cert.defining_ops]))
        groups.append(ReclaimGroup(g, sid, boundary[g], cert, segment))
    flat_refusals = tuple(r for _, g in temp_groups(program) for r in refusals.get(g, ()))
    return ReclamationPlan(program.digest(), tuple(groups), flat_refusals)


class StalePlanError(ir.IRError):
    pass


def insert_early_uncompute(program: Program, plan: ReclamationPlan) -> Program:
    """Splice each group's adjoint segment directly after its boundary."""
    if plan.digest != program.digest():
        raise StalePlanError("stale plan: it was certified against a different program")
    if not plan.groups:
        return program
    after: dict[int, list[ReclaimGroup]] = {}
    for g in plan.groups:
        after.setdefault(g.boundary, []).append(g)
    ops: list[Operation] = []
    released: dict[int, int] = {}
    for op in program.operations:
        ops.append(replace(op, origin=op.point if op.origin is None else op.origin))
        for g in after.get(op.point, ()):
            ops.extend(g.segment)
            for t in g.temps:
                released[t] = len(ops)
    for g in after.get(0, ()):
        ops[:0] = list(g.segment)
    releases = dict(program.releases)
    releases.update(released)
    return ir.with_operations(program, ops, releases=releases)


def plan_global(program: Program) -> tuple[list[ReclaimGroup], list[Refusal]]:
    trace = build_entanglement_trace(program)
    groups, refusals = [], []
    for sid, group in temp_groups(program):
        cert = certify_isolability(program, trace, group, program.n)
        if isinstance(cert, Refusal):
            refusals.extend(replace(cert, resource=t) for t in group)
        else:
            groups.append(ReclaimGroup(group, sid, program.n, cert, ()))
    return groups, refusals


def insert_global_uncompute(program: Program) -> Program:
    """Append the reversed history of every restorable temporary after the
    last operation.  Unrestorable temporaries are left dirty (see
    :func:`global_refusals`)."""
    groups, _ = plan_global(program)
    defining = sorted({d for g in groups for d in g.certificate.defining_ops})
    if not defining:
        return program
    suffix = ir.adjoint_of([program.op(d) for d in defining])
    # the cleanup runs in the outermost scope once the forward part is over
    root = next(s.id for s in program.scopes if s.parent is None)
    suffix = [replace(op, scope_id=root) for op in suffix]
    ops = [replace(op, origin=op.point if op.origin is None else op.origin) for op in program.operations]
    releases = dict(program.releases)
    for g in groups:
        for t in g.temps:
            last = max(i for i, op in enumerate(suffix) if op.touches(t))
            releases[t] = program.n + last + 1
    return ir.with_operations(program, ops + suffix, releases=releases, barrier=program.n)


def global_refusals(program: Program) -> list[Diagnostic]:
    _, refusals = plan_global(program)
    return [
        Diagnostic("warning", r.reason, program.op(r.point).line if 1 <= r.point <= program.n else 0, 1,
                   f"{program.resources[r.resource].name} left dirty: {r.detail or r.reason}")
        for r in refusals
    ]


def force_reclaim(program: Program, temps: Sequence[int], after: int) -> Program:
    """Insert the reversed unitary history of ``temps`` after point ``after``
    without any certification.  Measurements are skipped, so the result
    models what an unsound compiler would emit."""
    tset = set(temps)
    defining = [op for op in program.operations[:after]
                if op.kind != ir.MEASURE and any(t in tset for t in op.targets)]
    segment = ir.adjoint_of(defining)
    ops = [replace(op, origin=op.point) for op in program.operations]
    ops[after:after] = [replace(op, scope_id=program.op(max(after, 1)).scope_id) for op in segment]
    releases = dict(program.releases)
    for t in temps:
        releases[t] = after + len(segment)
    return ir.with_operations(program, ops, releases=releases)


def forced_candidate(program: Program, refusal: Refusal, group: Sequence[int]) -> int:
    """Point where a refused group would have been reclaimed."""
    if refusal.reason == ALIASED_LIVE:
        return refusal.point
    return last_touch(program, group)


def group_of(program: Program, rid: int) -> tuple[int, ...]:
    for _, g in temp_groups(program):
        if rid in g:
            return g
    return (rid,)


# parameter passing

def _by_value_params(fdef_or_program) -> tuple[str, Program, list[int]]:
    if isinstance(fdef_or_program, ir.FunctionDef):
        f = fdef_or_program
        return f.name, f.body, [pid for pid, (_, ref) in zip(f.param_ids, f.params) if not ref]
    prog = fdef_or_program
    return prog.name, prog, [r.id for r in prog.resources.values()
                             if r.kind in (ir.INPUT, ir.PARAMETER) and not r.persistent]


def _reach(body: Program, x: int) -> set[int]:
    tainted = {x}
    for op in body.operations:
        if tainted & set(op.controls):
            tainted |= set(op.targets)
    return tainted - {x}


def enforce_param_semantics(program: Program, path: str = "<input>") -> list[Diagnostic]:
    """By-value parameters must leave every function as they entered it."""
    out: list[Diagnostic] = []
    subjects = list(program.functions.values()) if program.functions else [program]
    for subj in subjects:
        fname, body, params = _by_value_params(subj)
        for x in params:
            name = body.resources[x].name
            left = ir.unmatched_writes(body, x)
            if left:
                op = left[0]
                out.append(Diagnostic("error", "pass-by-value", op.line, 1,
                                      f"pass-by-value violation: {fname} modifies by-value parameter {name!r} "
                                      f"at point {op.point} without restoring it", path))
                continue
            reached = _reach(body, x)
            escaped = sorted(body.resources[r].name for r in reached if body.resources[r].persistent)
            if escaped:
                line = next((op.line for op in body.operations if x in op.controls), 0)
                out.append(Diagnostic("warning", "residual-entanglement", line, 1,
                                      f"{fname}: {name!r} is restored in every basis state but may stay "
                                      f"correlated with {', '.join(escaped)} for superposed callers", path))
    return out
