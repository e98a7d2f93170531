"""Bundled example programs and generated program families."""
from __future__ import annotations

from importlib import resources

from ..frontend import Unit, load, load_unit
from ..ir import Program


def names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files(__name__).iterdir() if p.name.endswith(".qls"))


def source(name: str) -> str:
    return resources.files(__name__).joinpath(name + ".qls").read_text(encoding="utf-8")


def program(name: str) -> Program:
    return load(source(name), name + ".qls")


def unit(name: str) -> Unit:
    return load_unit(source(name), name + ".qls")


def strict_improvement(d: int) -> str:
    """A temporary built by ``d`` dependent writes, copied into ``y``, then
    ``d`` more gates on ``y`` and ``z`` that never touch the temporary."""
    body = ["    qubit t;"]
    for i in range(d):
        body.append("    CX x, t;" if i % 2 == 0 else "    X t;")
    body.append("    CX t, y;")
    for i in range(d):
        body.append("    CX y, z;" if i % 2 == 0 else "    X y;")
    lines = [f"qubit[] strict_{d}(qubit x, qubit y, qubit z) {{", *body, "    return [y, z];", "}"]
    return "\n".join(lines) + "\n"


def disjoint_temps(k: int) -> str:
    """``k`` temporaries in sibling blocks, each dead before the next starts."""
    lines = [f"qubit[] disjoint_{k}(qubit x, qubit y) {{"]
    for i in range(1, k + 1):
        lines += ["    {", f"        qubit t{i};", f"        CX x, t{i};", f"        CX t{i}, y;", "    }"]
    lines += ["    return [y];", "}"]
    return "\n".join(lines) + "\n"


def overlapping_temps(k: int) -> str:
    """``k`` temporaries all alive at the same point."""
    lines = [f"qubit[] overlapping_{k}(qubit x, qubit y) {{"]
    for i in range(1, k + 1):
        lines += ["    {", f"        qubit t{i};", f"        CX x, t{i};"]
    lines.append("        CX t%d, y;" % k)
    for i in range(k, 0, -1):
        if i < k:
            lines.append(f"        CX t{i}, y;")
        lines.append("    }")
    lines += ["    return [y];", "}"]
    return "\n".join(lines) + "\n"
