"""ASAP layering, strategy comparison and lifetime-based qubit pooling."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping

from . import ir
from .analysis import (
    LifetimeTable, build_dependence_graph, build_entanglement_trace, compute_lifetimes, compute_liveness,
)
from .ir import Program

BLOCK = "block"
GATE = "gate"
STRATEGIES = ("none", "global", "early")


class StrategyInvariantError(RuntimeError):
    """A strategy report broke an ordering the construction guarantees."""


@dataclass(frozen=True)
class Schedule:
    layers: tuple[tuple[int, ...], ...]
    granularity: str
    active: tuple[int, ...]          # qubits touched per layer

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_of(self) -> dict[int, int]:
        return {p: i for i, layer in enumerate(self.layers) for p in layer}


def schedule_asap(program: Program, ddg=None, granularity: str = BLOCK) -> Schedule:
    """Place each operation one layer after its latest dependence
    predecessor.  Operations that only share read access may sit in the
    same layer, so the depth is the unit-cost critical path."""
    if granularity not in (BLOCK, GATE):
        raise ValueError(f"unknown granularity {granularity!r}")
    if granularity == GATE and not ir.is_inlined(program):
        raise ir.IRError("gate granularity needs an inlined program")
    ddg = ddg or build_dependence_graph(program)
    preds: dict[int, list[int]] = {}
    for i, j in ddg.edges:
        preds.setdefault(j, []).append(i)
    level: dict[int, int] = {}
    for p in range(1, program.n + 1):
        level[p] = 1 + max((level[i] for i in preds.get(p, ())), default=0)
    depth = max(level.values(), default=0)
    layers = [[] for _ in range(depth)]
    for p in range(1, program.n + 1):
        layers[level[p] - 1].append(p)
    active = tuple(len({r for p in layer for r in program.op(p).resources}) for layer in layers)
    return Schedule(tuple(tuple(l) for l in layers), granularity, active)


@dataclass(frozen=True)
class RegisterMap:
    qubit: Mapping[int, int]
    peak: int
    intervals: Mapping[int, tuple[int, int]] = field(default_factory=dict)

    def __getitem__(self, rid: int) -> int:
        return self.qubit[rid]

    def sharing(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for rid, q in sorted(self.qubit.items()):
            out.setdefault(q, []).append(rid)
        return out


def allocation_intervals(table: LifetimeTable) -> dict[int, tuple[int, int]]:
    """Released temporaries occupy their effective lifetime; everything
    else keeps its qubit until the end of the program."""
    out = {}
    for e in table.entries:
        iv = e.effective
        if iv is None:
            continue
        out[e.rid] = iv if (e.released and e.kind == ir.TEMPORARY) else (iv[0], table.n)
    return out


def allocate_registers(table: LifetimeTable) -> RegisterMap:
    """Linear scan in order of interval start, then resource id; the lowest
    free qubit index is reused first."""
    intervals = allocation_intervals(table)
    order = sorted(intervals, key=lambda r: (intervals[r][0], r))
    active: list[tuple[int, int]] = []     # (end, qubit)
    free: list[int] = []
    mapping: dict[int, int] = {}
    next_q = 0
    for rid in order:
        lo, hi = intervals[rid]
        still = []
        for end, q in active:
            if end < lo:
                free.append(q)
            else:
                still.append((end, q))
        active = still
        if free:
            free.sort()
            q = free.pop(0)
        else:
            q = next_q
            next_q += 1
        mapping[rid] = q
        active.append((hi, q))
    return RegisterMap(mapping, next_q, intervals)


def transform(program: Program, strategy: str):
    """Return (transformed program, plan or None, refused resource ids)."""
    from .reclaim import insert_early_uncompute, insert_global_uncompute, plan_early_reclamation, plan_global

    if strategy == "none":
        return program, None, set()
    if strategy == "global":
        _, refusals = plan_global(program)
        return insert_global_uncompute(program), None, {r.resource for r in refusals}
    if strategy == "early":
        plan = plan_early_reclamation(program)
        return insert_early_uncompute(program, plan), plan, plan.refused()
    raise ValueError(f"unknown strategy {strategy!r}")


def lifetimes_of(program: Program) -> LifetimeTable:
    """Lifetimes of a (possibly transformed) program in its own numbering."""
    ddg = build_dependence_graph(program)
    live = compute_liveness(program, ddg, build_entanglement_trace(program))
    return compute_lifetimes(program, live)


@dataclass(frozen=True)
class StrategyMetrics:
    strategy: str
    depth_block: int
    depth_gate: int
    wmax: int
    peak_qubits: int
    n_ops: int
    refused: tuple[str, ...]
    width_profile: tuple[int, ...]


@dataclass(frozen=True)
class StrategyReport:
    program: str
    metrics: Mapping[str, StrategyMetrics]

    def __getattr__(self, name: str):
        for kind, attr in (("depth_", "depth_block"), ("wmax_", "wmax"), ("gate_depth_", "depth_gate"),
                           ("peak_", "peak_qubits")):
            if name.startswith(kind) and name[len(kind):] in STRATEGIES:
                return getattr(self.metrics[name[len(kind):]], attr)
        raise AttributeError(name)

    def to_json(self) -> dict:
        out: dict = {"program": self.program}
        for s in STRATEGIES:
            m = self.metrics[s]
            out[f"depth_{s}"] = m.depth_block
            out[f"gate_depth_{s}"] = m.depth_gate
            out[f"wmax_{s}"] = m.wmax
            out[f"peak_{s}"] = m.peak_qubits
            out[f"ops_{s}"] = m.n_ops
        out["refused"] = {s: list(self.metrics[s].refused) for s in STRATEGIES}
        return out

    def to_table(self) -> str:
        rows = [("strategy", "depth", "gate_depth", "wmax", "peak", "ops", "refused")]
        for s in STRATEGIES:
            m = self.metrics[s]
            rows.append((s, str(m.depth_block), str(m.depth_gate), str(m.wmax), str(m.peak_qubits),
                         str(m.n_ops), ",".join(m.refused) or "-"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)

    def width_csv(self, strategy: str = "early") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point", "live_count"])
        for p, c in enumerate(self.metrics[strategy].width_profile, start=1):
            w.writerow([p, c])
        return buf.getvalue()


def strategy_metrics(program: Program, strategy: str) -> StrategyMetrics:
    prog, plan, refused = transform(program, strategy)
    if strategy == "early":
        # widths are reported on the original points
        ddg = build_dependence_graph(program)
        live = compute_liveness(program, ddg, build_entanglement_trace(program))
        table = compute_lifetimes(program, live, plan)
        wmax, profile = table.w_max_effective, table.live_counts(effective=True)
    else:
        table = lifetimes_of(prog)
        wmax, profile = table.w_max_effective, table.live_counts(effective=True)
    regs = allocate_registers(lifetimes_of(prog))
    block = schedule_asap(prog, granularity=BLOCK).depth
    flat = prog if ir.is_inlined(prog) else ir.inline(prog)[0]
    gate = schedule_asap(flat, granularity=GATE).depth
    names = tuple(sorted(program.resources[r].name for r in refused))
    return StrategyMetrics(strategy, block, gate, wmax, regs.peak, prog.n, names, tuple(profile))


def compare_strategies(program: Program) -> StrategyReport:
    metrics = {s: strategy_metrics(program, s) for s in STRATEGIES}
    early, glob = metrics["early"], metrics["global"]
    if early.depth_block > glob.depth_block or early.depth_gate > glob.depth_gate:
        raise StrategyInvariantError(f"{program.name}: early depth exceeds global depth")
    if early.wmax > glob.wmax:
        raise StrategyInvariantError(f"{program.name}: early width exceeds global width")
    return StrategyReport(program.name, metrics)
