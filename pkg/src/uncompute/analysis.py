"""Dependence, entanglement and liveness analyses.

Liveness is computed per resource (aliases are already folded).  A
temporary is live at point ``p`` when it has been touched by then and some
operation at or after ``p`` uses it, when it is persistent, or when it is
connected in the entanglement graph at ``p`` to a live resource.
Parameters belong to the caller and stay live for the whole body.  The
semantic lifetime is the hull of the live points.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Mapping

from . import ir
from .ir import Program

WRITE = "w"
READ = "r"


def access(op: ir.Operation, rid: int) -> str:
    for r, role in op.operands:
        if r == rid:
            return WRITE if role == ir.TARGET else READ
    raise KeyError(rid)


@dataclass(frozen=True)
class DependenceGraph:
    n: int
    edges: frozenset[tuple[int, int]]
    # (i, j) -> [(resource id, "w->r" | "w->w" | "r->w" | "barrier")]
    reasons: Mapping[tuple[int, int], tuple[tuple[int | None, str], ...]] = field(default_factory=dict)

    def preds(self, j: int) -> list[int]:
        return sorted(i for i, k in self.edges if k == j)

    def succs(self, i: int) -> list[int]:
        return sorted(k for j, k in self.edges if j == i)

    def to_dot(self, program: Program | None = None) -> str:
        lines = ["digraph dependence {", "  rankdir=LR;"]
        for p in range(1, self.n + 1):
            label = f"p{p}"
            if program is not None:
                op = program.op(p)
                names = [program.resources[r].name for r in op.resources]
                label += f": {op.gate_name}{'_dg' if op.kind in (ir.ADJOINT_GATE, ir.ADJOINT_CALL) else ''}({', '.join(names)})"
            lines.append(f'  p{p} [label="{label}"];')
        for i, j in sorted(self.edges):
            why = ",".join(
                ("barrier" if r is None else (program.resources[r].name if program else str(r))) + (":" + a if r is not None else "")
                for r, a in self.reasons.get((i, j), ())
            )
            lines.append(f'  p{i} -> p{j} [label="{why}"];')
        lines.append("}")
        return "\n".join(lines)


def build_dependence_graph(program: Program) -> DependenceGraph:
    """Edges between every pair of operations that share a resource where at
    least one of the two accesses writes it.  Read-read sharing commutes."""
    by_res: dict[int, list[tuple[int, str]]] = {}
    for op in program.operations:
        for rid, role in op.operands:
            by_res.setdefault(rid, []).append((op.point, WRITE if role == ir.TARGET else READ))
    reasons: dict[tuple[int, int], list[tuple[int | None, str]]] = {}
    for rid, accs in by_res.items():
        for (i, a), (j, b) in combinations(accs, 2):
            if a == READ and b == READ:
                continue
            reasons.setdefault((i, j), []).append((rid, f"{a}->{b}"))
    if program.barrier is not None:
        # the cleanup phase starts only after the forward computation ends
        for i in range(1, program.barrier + 1):
            for j in range(program.barrier + 1, program.n + 1):
                reasons.setdefault((i, j), []).append((None, "barrier"))
    return DependenceGraph(program.n, frozenset(reasons), {k: tuple(v) for k, v in reasons.items()})


def _ref_operands(program: Program, op: ir.Operation) -> list[int]:
    fdef = program.functions.get(op.gate_name)
    if fdef is None:
        return list(op.resources)
    return [rid for rid, (_, by_ref) in zip(op.resources, fdef.params) if by_ref]


def entangling_pairs(program: Program, op: ir.Operation) -> list[tuple[int, int]]:
    """Resource pairs an operation may correlate.

    A multi-qubit primitive links all of its operands.  A call links only
    the operands bound to ``ref`` parameters: by-value parameters are
    restored at the call boundary.
    """
    if op.kind == ir.MEASURE:
        return []
    members = _ref_operands(program, op) if op.is_call else list(op.resources)
    return [tuple(sorted(pair)) for pair in combinations(members, 2)]


@dataclass(frozen=True)
class EntanglementTrace:
    n: int
    # index p holds E_E(p); index 0 is the empty graph before any operation
    graphs: tuple[frozenset[tuple[int, int]], ...]
    # edge -> point that introduced it (first introduction)
    provenance: Mapping[tuple[int, int], int]
    restored: Mapping[int, int] = field(default_factory=dict)

    def edges_at(self, p: int) -> frozenset[tuple[int, int]]:
        return self.graphs[p]

    def neighbours(self, p: int) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {}
        for a, b in self.graphs[p]:
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        return adj

    def component(self, p: int, rid: int) -> set[int]:
        adj = self.neighbours(p)
        seen = {rid}
        todo = [rid]
        while todo:
            for nb in adj.get(todo.pop(), ()):
                if nb not in seen:
                    seen.add(nb)
                    todo.append(nb)
        return seen

    def all_edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.provenance)

    def to_dot(self, program: Program | None = None, point: int | None = None) -> str:
        p = self.n if point is None else point
        name = (lambda r: program.resources[r].name) if program else str
        lines = ["graph entanglement {"]
        nodes = sorted({r for e in self.graphs[p] for r in e})
        for r in nodes:
            lines.append(f'  r{r} [label="{name(r)}"];')
        for a, b in sorted(self.graphs[p]):
            lines.append(f'  r{a} -- r{b} [style=dashed, label="p{self.provenance[(a, b)]}"];')
        lines.append("}")
        return "\n".join(lines)


def build_entanglement_trace(program: Program, plan=None, releases: Mapping[int, int] | None = None) -> EntanglementTrace:
    """Per-point entanglement graphs.

    ``plan`` (a ReclamationPlan for this program) or an explicit
    ``releases`` map name resources restored at a point; every edge incident
    to such a resource is dropped from the following point on.
    """
    restored: dict[int, int] = {}
    if plan is not None:
        for group in plan.groups:
            for t in group.temps:
                restored[t] = group.boundary
    if releases:
        restored.update(releases)
    current: set[tuple[int, int]] = set()
    prov: dict[tuple[int, int], int] = {}
    graphs = [frozenset()]
    for op in program.operations:
        p = op.point
        for pair in entangling_pairs(program, op):
            current.add(pair)
            prov.setdefault(pair, p)
        gone = {r for r, at in restored.items() if at < p}
        if gone:
            current = {e for e in current if e[0] not in gone and e[1] not in gone}
        graphs.append(frozenset(current))
    return EntanglementTrace(program.n, tuple(graphs), prov, restored)


@dataclass(frozen=True)
class Liveness:
    n: int
    live_sets: tuple[frozenset[int], ...]   # index p, 0 unused

    def live(self, rid: int, p: int) -> bool:
        return 1 <= p <= self.n and rid in self.live_sets[p]

    def points(self, rid: int) -> list[int]:
        return [p for p in range(1, self.n + 1) if rid in self.live_sets[p]]

    def interval(self, rid: int) -> tuple[int, int] | None:
        pts = self.points(rid)
        return (pts[0], pts[-1]) if pts else None

    def is_contiguous(self, rid: int) -> bool:
        pts = self.points(rid)
        return not pts or pts[-1] - pts[0] + 1 == len(pts)


def direct_span(program: Program, rid: int) -> tuple[int, int] | None:
    """Points where a resource is live by its own uses and persistence."""
    r = program.resources[rid]
    uses = program.uses(rid)
    if not uses and not r.persistent:
        return None
    if not r.is_temporary:
        # caller-owned registers hold data for the whole body
        return (1, program.n) if program.n else None
    lo = uses[0] if uses else 1
    hi = program.n if r.persistent else uses[-1]
    return (lo, hi) if lo <= hi else None


def scope_bound(program: Program, rid: int) -> tuple[int, int]:
    """Lexical upper bound on a lifetime.  Cleanup appended after the
    forward part may touch a temporary past its block; those uses count."""
    r = program.resources[rid]
    if not r.is_temporary:
        return (1, program.n)
    try:
        s = program.scope(r.scope_id)
    except ir.IRError:
        return (1, program.n)
    uses = program.uses(rid)
    return (min([s.entry] + uses[:1]), max([s.exit] + uses[-1:]))


def compute_liveness(program: Program, ddg: DependenceGraph | None, trace: EntanglementTrace) -> Liveness:
    """Least fixpoint of direct liveness closed under entanglement at each
    point, bounded by each temporary's declaring scope."""
    if ddg is not None and ddg.n != program.n or trace.n != program.n:
        raise ValueError("analyses were built from a different program")
    spans = {rid: direct_span(program, rid) for rid in program.resources}
    bounds = {rid: scope_bound(program, rid) for rid in program.resources}
    sets: list[frozenset[int]] = [frozenset()]
    for p in range(1, program.n + 1):
        live = {rid for rid, sp in spans.items() if sp and sp[0] <= p <= sp[1]}
        adj = trace.neighbours(p)
        work = deque(live)
        while work:
            v = work.popleft()
            for w in adj.get(v, ()):
                if w not in live and bounds[w][0] <= p <= bounds[w][1]:
                    live.add(w)
                    work.append(w)
        sets.append(frozenset(live))
    return Liveness(program.n, tuple(sets))


@dataclass(frozen=True)
class Lifetime:
    rid: int
    name: str
    kind: str
    persistent: bool
    released: bool
    conservative: tuple[int, int] | None
    effective: tuple[int, int] | None


@dataclass(frozen=True)
class LifetimeTable:
    n: int
    entries: tuple[Lifetime, ...]
    live_sets: tuple[frozenset[int], ...]            # conservative L(p), index 0 unused
    effective_live_sets: tuple[frozenset[int], ...]

    def __getitem__(self, key: int | str) -> Lifetime:
        for e in self.entries:
            if e.rid == key or e.name == key:
                return e
        raise KeyError(key)

    @property
    def w_max(self) -> int:
        return max((len(s) for s in self.live_sets[1:]), default=0)

    @property
    def w_max_effective(self) -> int:
        return max((len(s) for s in self.effective_live_sets[1:]), default=0)

    def live_counts(self, effective: bool = False) -> list[int]:
        sets = self.effective_live_sets if effective else self.live_sets
        return [len(s) for s in sets[1:]]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "lifetimes": [
                {
                    "resource": e.name,
                    "kind": e.kind,
                    "conservative": list(e.conservative) if e.conservative else None,
                    "effective": list(e.effective) if e.effective else None,
                }
                for e in self.entries
            ],
            "live_counts": {
                "conservative": self.live_counts(),
                "effective": self.live_counts(effective=True),
            },
            "w_max": {"conservative": self.w_max, "effective": self.w_max_effective},
        }

    def to_table(self) -> str:
        rows = [("resource", "kind", "conservative", "effective")]
        fmt = lambda iv: f"[{iv[0]},{iv[1]}]" if iv else "-"
        for e in self.entries:
            rows.append((e.name, e.kind, fmt(e.conservative), fmt(e.effective)))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"W_max conservative={self.w_max} effective={self.w_max_effective}")
        return "\n".join(lines)


def point_map(transformed: Program) -> list[int]:
    """Map each point of a transformed program to the original point: forward
    ops keep their origin, inserted ops collapse onto the point they follow."""
    out = [0]
    last = 0
    for op in transformed.operations:
        if op.origin is not None:
            last = op.origin
        out.append(last)
    return out


def _sets_from_intervals(n: int, intervals: Mapping[int, tuple[int, int] | None]) -> tuple[frozenset[int], ...]:
    sets = [frozenset()]
    for p in range(1, n + 1):
        sets.append(frozenset(r for r, iv in intervals.items() if iv and iv[0] <= p <= iv[1]))
    return tuple(sets)


def compute_lifetimes(program: Program, liveness: Liveness, plan=None) -> LifetimeTable:
    """Conservative lifetimes from ``liveness``; effective ones after applying
    the plan's insertions (or the program's own releases) with restored
    resources cut out of the entanglement graph."""
    conservative = {rid: liveness.interval(rid) for rid in program.resources}
    released: set[int] = set(program.releases)
    if plan is not None and plan.groups:
        from .reclaim import insert_early_uncompute

        transformed = insert_early_uncompute(program, plan)
        trace = build_entanglement_trace(transformed, releases=transformed.releases)
        eff_live = compute_liveness(transformed, None, trace)
        pm = point_map(transformed)
        effective = {}
        for rid in program.resources:
            iv = eff_live.interval(rid)
            effective[rid] = (pm[iv[0]], pm[iv[1]]) if iv else None
        released |= set(transformed.releases)
        eff_sets = _sets_from_intervals(program.n, effective)
    elif program.releases:
        trace = build_entanglement_trace(program, releases=program.releases)
        eff_live = compute_liveness(program, None, trace)
        effective = {rid: eff_live.interval(rid) for rid in program.resources}
        eff_sets = eff_live.live_sets
    else:
        effective = dict(conservative)
        eff_sets = liveness.live_sets
    entries = tuple(
        Lifetime(r.id, r.name, r.kind, r.persistent, r.id in released, conservative[r.id], effective[r.id])
        for r in sorted(program.resources.values(), key=lambda r: r.id)
    )
    return LifetimeTable(program.n, entries, liveness.live_sets, tuple(eff_sets))


def analyze(program: Program, plan=None) -> tuple[DependenceGraph, EntanglementTrace, Liveness, LifetimeTable]:
    ddg = build_dependence_graph(program)
    trace = build_entanglement_trace(program)
    live = compute_liveness(program, ddg, trace)
    return ddg, trace, live, compute_lifetimes(program, live, plan)


def critical_path(ddg: DependenceGraph, costs: Mapping[int, int] | None = None) -> tuple[int, list[int]]:
    """Maximum-cost directed path; unit cost per node by default."""
    if ddg.n == 0:
        return 0, []
    cost = (lambda p: 1) if costs is None else (lambda p: costs[p])
    preds: dict[int, list[int]] = {}
    for i, j in ddg.edges:
        preds.setdefault(j, []).append(i)
    best: dict[int, int] = {}
    back: dict[int, int | None] = {}
    # every edge points forward, so increasing point order is topological
    for p in range(1, ddg.n + 1):
        prev = max(preds.get(p, ()), key=lambda i: (best[i], -i), default=None)
        best[p] = cost(p) + (best[prev] if prev is not None else 0)
        back[p] = prev
    end = max(range(1, ddg.n + 1), key=lambda p: (best[p], -p))
    path = [end]
    while back[path[-1]] is not None:
        path.append(back[path[-1]])
    return best[end], path[::-1]


def restrict(program: Program, lo: int, hi: int) -> Program:
    """Operations ``lo..hi`` as a standalone program.  Resources declared
    outside the block keep their kind and move to a synthetic outer scope."""
    block_scopes = {s.id for s in program.scopes if s.entry >= lo and s.exit <= hi and s.entry <= s.exit}
    ops = [op for op in program.operations if lo <= op.point <= hi]
    used = {r for op in ops for r in op.resources}
    resources = {}
    for rid in used:
        r = program.resources[rid]
        if r.scope_id in block_scopes:
            resources[rid] = r
        else:
            resources[rid] = replace(r, scope_id=-1, measured_at=None)
    outer = ir.Scope(-1, None, tuple(r for r in resources if resources[r].scope_id == -1), 0, -1)
    scopes = [outer]
    for s in program.scopes:
        if s.id in block_scopes:
            parent = s.parent if s.parent in block_scopes else -1
            scopes.append(ir.Scope(s.id, parent, tuple(r for r in s.declared if r in resources), 0, -1))
    renum = ir.renumber(ops)
    renum = tuple(op if op.scope_id in block_scopes else replace(op, scope_id=-1) for op in renum)
    return Program(renum, ir.rebuild_scopes(scopes, renum), resources, program.functions, program.name)


def resources_in_scope(program: Program, sid: int) -> set[int]:
    """Resources declared in ``sid`` or any scope nested inside it."""
    inside = {sid}
    changed = True
    while changed:
        changed = False
        for s in program.scopes:
            if s.parent in inside and s.id not in inside:
                inside.add(s.id)
                changed = True
    return {r.id for r in program.resources.values() if r.scope_id in inside}


def iter_live_points(liveness: Liveness) -> Iterable[tuple[int, frozenset[int]]]:
    return ((p, liveness.live_sets[p]) for p in range(1, liveness.n + 1))
