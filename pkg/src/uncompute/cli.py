"""Command-line driver: parse, analyse, plan, transform, schedule, verify."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import ir
from .analysis import analyze
from .frontend import Diagnostic, ParseError, format_unit, load_unit
from .reclaim import enforce_param_semantics, global_refusals, plan_early_reclamation
from .schedule import allocate_registers, compare_strategies, lifetimes_of, schedule_asap, transform
from .sim import (
    DEFAULT_SEED, BudgetExceeded, persistent_resources, sample_inputs, input_resources, verify_equivalence,
    verify_restoration,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_REFUSED = 2
EXIT_VERIFY = 3
EXIT_BUDGET = 4

EPILOG = """exit codes:
  0  success
  1  parse or validation error
  2  reclamation refused while --strict is set
  3  verification failure
  4  simulation qubit budget exceeded
"""


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uncompute", description=__doc__, epilog=EPILOG,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", help="path to a .qls source file")
    common.add_argument("--entry", help="function to analyse (default: the last uncalled one)")
    common.add_argument("--strategy", choices=("none", "global", "early"))
    common.add_argument("--emit", choices=("json", "dot", "table", "qasm"))
    common.add_argument("--granularity", choices=("block", "gate"), default="block")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--strict", action="store_true", help="treat any refused temporary as an error")
    for name, text in (
        ("check", "parse and validate only"),
        ("analyze", "lifetimes, live sets and graphs"),
        ("compile", "emit the transformed program"),
        ("report", "compare none/global/early metrics"),
        ("verify", "oracle checks of a strategy"),
        ("export", "flat gate list on physical qubits"),
    ):
        p = sub.add_parser(name, parents=[common], help=text, epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "report":
            p.add_argument("--width-csv", help="write the per-point live count of --strategy (default early)")
    return ap


def _write(args, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False)


def _report_diags(diags: list[Diagnostic]) -> None:
    for d in diags:
        print(d, file=sys.stderr)


def cmd_check(args, unit, program) -> int:
    diags = enforce_param_semantics(program, unit.path)
    _report_diags(diags)
    if any(d.severity == "error" for d in diags):
        return EXIT_INVALID
    _write(args, f"{unit.path}: ok ({program.n} operations, {len(program.resources)} resources)")
    return EXIT_OK


def _graph_edges(program, ddg, trace) -> dict:
    name = lambda r: program.resources[r].name
    return {
        "dependence": [
            {"from": i, "to": j,
             "reasons": [("barrier" if r is None else f"{name(r)}:{a}") for r, a in ddg.reasons[(i, j)]]}
            for i, j in sorted(ddg.edges)
        ],
        "entanglement": [
            {"a": name(a), "b": name(b), "point": p} for (a, b), p in sorted(trace.provenance.items(), key=lambda kv: kv[1])
        ],
    }


def cmd_analyze(args, unit, program) -> int:
    plan = plan_early_reclamation(program)
    ddg, trace, live, table = analyze(program, plan)
    emit = args.emit or "json"
    if emit == "dot":
        _write(args, ddg.to_dot(program) + "\n" + trace.to_dot(program))
    elif emit == "table":
        _write(args, table.to_table())
    elif emit == "json":
        out = table.to_json()
        out["graphs"] = _graph_edges(program, ddg, trace)
        out["plan"] = plan.to_json(program)
        _write(args, _dump(out))
    else:
        print("analyze cannot emit qasm", file=sys.stderr)
        return EXIT_INVALID
    return _strict(args, program, plan.refused())


def _strict(args, program, refused) -> int:
    if args.strict and refused:
        names = ", ".join(sorted(program.resources[r].name for r in refused))
        print(f"refused: {names}", file=sys.stderr)
        return EXIT_REFUSED
    return EXIT_OK


def cmd_compile(args, unit, program) -> int:
    strategy = args.strategy or "early"
    prog, plan, refused = transform(program, strategy)
    if strategy == "global":
        _report_diags(global_refusals(program))
    if args.emit == "json":
        sched = prog if args.granularity == "block" else ir.inline(prog)[0]
        out = {"strategy": strategy, "plan": plan.to_json(program) if plan else None,
               "operations": prog.n, "granularity": args.granularity,
               "depth": schedule_asap(sched, granularity=args.granularity).depth}
        _write(args, _dump(out))
    else:
        _write(args, format_unit(unit, prog))
    return _strict(args, program, refused)


def cmd_report(args, unit, program) -> int:
    rep = compare_strategies(program)
    if args.emit == "json":
        _write(args, _dump(rep.to_json()))
    else:
        _write(args, rep.to_table())
    if args.width_csv:
        Path(args.width_csv).write_text(rep.width_csv(args.strategy or "early"), encoding="utf-8")
    return EXIT_OK


def cmd_verify(args, unit, program) -> int:
    if not args.strategy:
        print("verify needs --strategy", file=sys.stderr)
        return EXIT_INVALID
    prog, plan, _ = transform(program, args.strategy)
    observed = persistent_resources(program)
    inputs = sample_inputs(input_resources(program), args.seed)
    reports = [verify_equivalence(program, prog, observed, inputs=inputs)]
    if plan is not None and plan.groups:
        temps = sorted(plan.reclaimed())
        reports.append(verify_restoration(prog, temps, inputs=inputs))
        regs = allocate_registers(lifetimes_of(prog))
        rep = verify_equivalence(program, prog, observed, inputs=inputs, regmap2=regs)
        rep.check = "equivalence-on-physical-qubits"
        reports.append(rep)
    elif args.strategy == "none":
        # without reclamation every touched temporary stays dirty
        temps = sorted(t.id for t in program.temporaries() if program.uses(t.id))
        if temps:
            reports.append(verify_restoration(prog, temps, inputs=inputs))
            reports[-1].check = "restoration-expected-dirty"
    ok = all(r.passed for r in reports if r.check != "restoration-expected-dirty")
    _write(args, _dump({"strategy": args.strategy, "checks": [r.to_json() for r in reports], "pass": ok}))
    return EXIT_OK if ok else EXIT_VERIFY


def export_lines(program: ir.Program, strategy: str) -> list[str]:
    prog, _, _ = transform(program, strategy)
    flat = ir.inline(prog)[0]
    regs = allocate_registers(lifetimes_of(flat))
    lines = [f"// {flat.n} gates on {regs.peak} qubits"]
    for op in flat.operations:
        qs = ", ".join(f"q[{regs[r]}]" for r in op.resources)
        if op.kind == ir.MEASURE:
            lines.append(f"measure {qs}")
        else:
            suffix = "_dg" if op.kind == ir.ADJOINT_GATE else ""
            lines.append(f"{op.gate_name}{suffix} {qs}")
    return lines


def cmd_export(args, unit, program) -> int:
    if args.emit not in (None, "qasm"):
        print("export only emits qasm", file=sys.stderr)
        return EXIT_INVALID
    _write(args, "\n".join(export_lines(program, args.strategy or "early")))
    return EXIT_OK


COMMANDS = {
    "check": cmd_check, "analyze": cmd_analyze, "compile": cmd_compile,
    "report": cmd_report, "verify": cmd_verify, "export": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    path = Path(args.input)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"{path}: error[io]: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        unit = load_unit(text, str(path), args.entry)
    except ParseError as exc:
        _report_diags(exc.diagnostics)
        return EXIT_INVALID
    except ir.IRError as exc:
        print(f"{path}: error[invalid]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args, unit, unit.program)
    except BudgetExceeded as exc:
        print(f"{path}: error[budget]: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ir.IRError as exc:
        print(f"{path}: error[invalid]: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
