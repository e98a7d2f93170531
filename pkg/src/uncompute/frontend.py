"""Parser, alias resolution and pretty-printer for the ``.qls`` mini-language.

Grammar::

    unit     := funcdef+
    funcdef  := ("void" | "qubit" ["[" "]"]) ident "(" [param ("," param)*] ")" block
    param    := ["ref"] "qubit" ident
    block    := "{" stmt* "}"
    stmt     := "qubit" ident ("," ident)* ";"
              | "alias" ident "=" ident ";"
              | ["adjoint"] GATE ident ("," ident)* ";"
              | ["adjoint"] ident "(" [ident ("," ident)*] ")" ";"
              | "measure" ident ";"
              | "return" "[" [ident ("," ident)*] "]" ";"
              | block

``//`` starts a line comment.  For X/CX/CCX the last operand is the
target; named calls take operand roles from the callee.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterator

from . import ir
from .ir import (
    ADJOINT_CALL, ADJOINT_GATE, CALL, GATE, MEASURE, TARGET, FunctionDef,
    Operation, Program, Resource, Scope,
)

KEYWORDS = {"qubit", "ref", "alias", "measure", "return", "adjoint", "void"}


@dataclass(frozen=True)
class SourceUnit:
    text: str
    path: str = "<input>"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    line: int
    col: int
    message: str
    path: str = "<input>"
    end_line: int | None = None
    end_col: int | None = None

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.col}: {self.severity}[{self.code}]: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


# -- lexer -----------------------------------------------------------------

_TOKEN = re.compile(r"\s+|//[^\n]*|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(){}\[\],;=])|(?P<bad>.)")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: SourceUnit) -> list[Token]:
    toks = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(src.text):
        col = m.start() - line_start + 1
        if m.lastgroup == "bad":
            raise ParseError([Diagnostic("error", "syntax", line, col, f"unexpected character {m.group()!r}", src.path)])
        if m.lastgroup:
            toks.append(Token(m.lastgroup, m.group(), line, col))
        nl = m.group().count("\n")
        if nl:
            line += nl
            line_start = m.start() + m.group().rindex("\n") + 1
    toks.append(Token("eof", "", line, m.end() - line_start + 1 if toks else 1))
    return toks


# -- syntax tree -----------------------------------------------------------

@dataclass
class Stmt:
    kind: str            # decl | alias | gate | call | measure | return | block
    line: int
    col: int
    name: str = ""
    args: list[str] = field(default_factory=list)
    adjoint: bool = False
    body: list["Stmt"] = field(default_factory=list)


@dataclass
class FuncAst:
    name: str
    ret: str
    params: list[tuple[str, bool]]
    body: list[Stmt]
    line: int
    col: int


class _Parser:
    def __init__(self, src: SourceUnit):
        self.src = src
        self.toks = tokenize(src)
        self.i = 0

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, tok: Token, msg: str) -> ParseError:
        return ParseError([Diagnostic("error", "syntax", tok.line, tok.col, msg, self.src.path)])

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text:
            raise self.error(tok, f"expected {text!r}, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok

    def ident(self) -> Token:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.error(tok, f"expected identifier, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok

    def ident_list(self, close: str) -> list[str]:
        names = []
        if self.peek().text == close:
            return names
        names.append(self.ident().text)
        while self.peek().text == ",":
            self.i += 1
            names.append(self.ident().text)
        return names

    def unit(self) -> list[FuncAst]:
        funcs = []
        while self.peek().kind != "eof":
            funcs.append(self.funcdef())
        if not funcs:
            raise self.error(self.peek(), "empty unit: expected a function definition")
        return funcs

    def funcdef(self) -> FuncAst:
        start = self.peek()
        if start.text == "void":
            self.i += 1
            ret = "void"
        elif start.text == "qubit":
            self.i += 1
            ret = "qubit"
            if self.peek().text == "[":
                self.i += 1
                self.expect("]")
                ret = "qubit[]"
        else:
            raise self.error(start, "expected a return type ('void' or 'qubit[]')")
        name = self.ident().text
        self.expect("(")
        params = []
        if self.peek().text != ")":
            params.append(self.param())
            while self.peek().text == ",":
                self.i += 1
                params.append(self.param())
        self.expect(")")
        body = self.block()
        return FuncAst(name, ret, params, body, start.line, start.col)

    def param(self) -> tuple[str, bool]:
        by_ref = False
        if self.peek().text == "ref":
            self.i += 1
            by_ref = True
        self.expect("qubit")
        return self.ident().text, by_ref

    def block(self) -> list[Stmt]:
        self.expect("{")
        stmts = []
        while self.peek().text != "}":
            if self.peek().kind == "eof":
                raise self.error(self.peek(), "unterminated block")
            stmts.append(self.stmt())
        self.expect("}")
        return stmts

    def stmt(self) -> Stmt:
        tok = self.peek()
        if tok.text == "{":
            return Stmt("block", tok.line, tok.col, body=self.block())
        if tok.text == "qubit":
            self.i += 1
            names = self.ident_list(";")
            if not names:
                raise self.error(self.peek(), "expected identifier in declaration")
            self.expect(";")
            return Stmt("decl", tok.line, tok.col, args=names)
        if tok.text == "alias":
            self.i += 1
            name = self.ident().text
            self.expect("=")
            target = self.ident().text
            self.expect(";")
            return Stmt("alias", tok.line, tok.col, name=name, args=[target])
        if tok.text == "measure":
            self.i += 1
            name = self.ident().text
            self.expect(";")
            return Stmt("measure", tok.line, tok.col, args=[name])
        if tok.text == "return":
            self.i += 1
            self.expect("[")
            names = self.ident_list("]")
            self.expect("]")
            self.expect(";")
            return Stmt("return", tok.line, tok.col, args=names)
        adjoint = False
        if tok.text == "adjoint":
            self.i += 1
            adjoint = True
        head = self.peek()
        if head.kind != "ident" or head.text in KEYWORDS:
            raise self.error(head, f"unexpected {head.text or 'end of input'!r}")
        gate = ir.GATE_ALIASES.get(head.text.upper(), head.text)
        if gate in ir.PRIMITIVES and self.peek(1).text != "(":
            self.i += 1
            args = self.ident_list(";")
            self.expect(";")
            return Stmt("gate", head.line, head.col, name=gate, args=args, adjoint=adjoint)
        self.i += 1
        self.expect("(")
        args = self.ident_list(")")
        self.expect(")")
        self.expect(";")
        return Stmt("call", head.line, head.col, name=head.text, args=args, adjoint=adjoint)


# -- lowering --------------------------------------------------------------

class _Lowering:
    def __init__(self, src: SourceUnit, fast: FuncAst, functions: dict[str, FunctionDef]):
        self.src = src
        self.fast = fast
        self.functions = functions
        self.resources: dict[int, Resource] = {}
        self.scopes: list[Scope] = []
        self.declared: dict[int, list[int]] = {}
        self.parents: dict[int, int | None] = {}
        self.ops: list[Operation] = []
        self.alias_decls: list[tuple[str, int, int, int]] = []
        self.returns: list[str] = []
        self.diags: list[Diagnostic] = []
        self.env: list[dict[str, int]] = []
        self.scope_stack: list[int] = []

    def err(self, stmt, code: str, msg: str) -> None:
        self.diags.append(Diagnostic("error", code, stmt.line, stmt.col, msg, self.src.path))

    def new_scope(self) -> int:
        sid = len(self.parents)
        self.parents[sid] = self.scope_stack[-1] if self.scope_stack else None
        self.declared[sid] = []
        self.scope_stack.append(sid)
        self.env.append({})
        return sid

    def close_scope(self) -> None:
        self.scope_stack.pop()
        self.env.pop()

    def declare(self, stmt, name: str, kind: str, persistent: bool = False) -> int | None:
        if name in self.env[-1]:
            self.err(stmt, "duplicate", f"duplicate declaration of {name!r} in one scope")
            return None
        rid = len(self.resources)
        sid = self.scope_stack[-1]
        self.resources[rid] = Resource(rid, name, kind, sid, persistent)
        self.declared[sid].append(rid)
        self.env[-1][name] = rid
        return rid

    def lookup(self, stmt, name: str) -> int | None:
        for frame in reversed(self.env):
            if name in frame:
                return frame[name]
        self.err(stmt, "undeclared", f"use of undeclared identifier {name!r}")
        return None

    def lower(self) -> FunctionDef:
        self.new_scope()
        for pname, by_ref in self.fast.params:
            self.declare(self.fast, pname, ir.PARAMETER, by_ref)
        self.stmts(self.fast.body)
        self.close_scope()

        params = list(self.fast.params)
        for name in self.returns:
            rid = next((r.id for r in self.resources.values() if r.name == name and r.scope_id == 0), None)
            if rid is None:
                rid = next((a[1] for a in self.alias_decls if a[0] == name), None)
            if rid is None:
                continue
            self.resources[rid] = replace(self.resources[rid], persistent=True)
            if rid < len(params):
                # returning a by-value parameter escalates it to `ref`
                params[rid] = (params[rid][0], True)
        if self.diags:
            raise ParseError(self.diags)
        ops = ir.renumber(self.ops)
        for op in ops:
            if op.kind == MEASURE:
                rid = op.operands[0][0]
                if self.resources[rid].measured_at is None:
                    self.resources[rid] = replace(self.resources[rid], measured_at=op.point)
        scopes = tuple(Scope(sid, self.parents[sid], tuple(self.declared[sid]), 0, -1) for sid in self.parents)
        scopes = ir.rebuild_scopes(scopes, ops)
        body = Program(ops, scopes, self.resources, self.functions, self.fast.name,
                       alias_decls=tuple(self.alias_decls))
        return FunctionDef(self.fast.name, tuple(params), body, tuple(self.returns))

    def stmts(self, stmts: list[Stmt]) -> None:
        for st in stmts:
            self.stmt(st)

    def stmt(self, st: Stmt) -> None:
        sid = self.scope_stack[-1]
        if st.kind == "block":
            self.new_scope()
            self.stmts(st.body)
            self.close_scope()
        elif st.kind == "decl":
            for name in st.args:
                self.declare(st, name, ir.TEMPORARY)
        elif st.kind == "alias":
            target = self.lookup(st, st.args[0])
            if target is None:
                return
            if st.name in self.env[-1]:
                self.err(st, "duplicate", f"duplicate declaration of {st.name!r} in one scope")
                return
            ref = self.resources[target]
            prov = len(self.resources)
            self.resources[prov] = Resource(prov, st.name, ref.kind, sid)
            self.declared[sid].append(prov)
            self.env[-1][st.name] = prov
            self.alias_decls.append((st.name, prov, target, sid))
        elif st.kind == "return":
            for name in st.args:
                if self.lookup(st, name) is not None:
                    self.returns.append(name)
        elif st.kind == "measure":
            rid = self.lookup(st, st.args[0])
            if rid is not None:
                self.ops.append(Operation(0, MEASURE, "measure", ((rid, TARGET),), False, sid,
                                          names=(st.args[0],), line=st.line))
        elif st.kind == "gate":
            arity = ir.PRIMITIVES[st.name][0]
            if len(st.args) != arity:
                self.err(st, "arity", f"{st.name} takes {arity} operand(s), got {len(st.args)}")
                return
            self.emit(st, st.args, ir.gate_roles(st.name), ir.PRIMITIVES[st.name][1],
                      ADJOINT_GATE if st.adjoint and not ir.PRIMITIVES[st.name][2] else GATE)
        elif st.kind == "call":
            fdef = self.functions.get(st.name)
            if fdef is None:
                self.err(st, "undefined", f"call of undefined function {st.name!r}")
                return
            if len(st.args) != len(fdef.params):
                self.err(st, "arity", f"{st.name} takes {len(fdef.params)} argument(s), got {len(st.args)}")
                return
            self.emit(st, st.args, fdef.param_roles(), ir.call_qfree(st.name, self.functions),
                      ADJOINT_CALL if st.adjoint else CALL)

    def emit(self, st: Stmt, names: list[str], roles, qfree: bool, kind: str) -> None:
        rids = [self.lookup(st, n) for n in names]
        if any(r is None for r in rids):
            return
        if len(set(rids)) != len(rids):
            self.err(st, "operand", "an operation may not name the same register twice")
            return
        self.ops.append(Operation(0, kind, st.name, tuple(zip(rids, roles)), qfree,
                                  self.scope_stack[-1], names=tuple(names), line=st.line))


def _call_order(funcs: list[FuncAst], src: SourceUnit) -> list[FuncAst]:
    by_name: dict[str, FuncAst] = {}
    for f in funcs:
        if f.name in by_name:
            raise ParseError([Diagnostic("error", "duplicate", f.line, f.col,
                                         f"function {f.name!r} defined twice", src.path)])
        by_name[f.name] = f

    def callees(stmts: list[Stmt]) -> Iterator[str]:
        for st in stmts:
            if st.kind == "call":
                yield st.name
            elif st.kind == "block":
                yield from callees(st.body)

    order: list[FuncAst] = []
    state: dict[str, int] = {}

    def visit(f: FuncAst, path: list[str]) -> None:
        if state.get(f.name) == 2:
            return
        if state.get(f.name) == 1:
            cycle = path[path.index(f.name):] + [f.name]
            raise ParseError([Diagnostic("error", "recursion", f.line, f.col,
                                         "recursive call cycle: " + " -> ".join(cycle), src.path)])
        state[f.name] = 1
        for c in callees(f.body):
            if c in by_name:
                visit(by_name[c], path + [f.name])
        state[f.name] = 2
        order.append(f)

    for f in funcs:
        visit(f, [])
    return order


@dataclass(frozen=True)
class Unit:
    """All functions of one source file; ``entry`` names the analysed one."""
    functions: dict[str, FunctionDef]
    order: tuple[str, ...]
    entry: str
    path: str = "<input>"

    @property
    def program(self) -> Program:
        return self.functions[self.entry].body


def parse_unit(src: SourceUnit, entry: str | None = None) -> Unit:
    funcs = _Parser(src).unit()
    functions: dict[str, FunctionDef] = {}
    for fast in _call_order(funcs, src):
        functions[fast.name] = _Lowering(src, fast, dict(functions)).lower()
    called = set()
    for fdef in functions.values():
        called.update(op.gate_name for op in fdef.body.operations if op.is_call)
    if entry is None:
        roots = [f.name for f in funcs if f.name not in called]
        entry = roots[-1] if roots else funcs[-1].name
    if entry not in functions:
        raise ParseError([Diagnostic("error", "entry", 1, 1, f"no function named {entry!r}", src.path)])
    # the entry's parameters are the program's inputs and outputs
    body = functions[entry].body
    res = dict(body.resources)
    for pid in functions[entry].param_ids:
        r = res[pid]
        res[pid] = replace(r, kind=ir.OUTPUT if r.persistent else ir.INPUT)
    for name, prov, target, _ in body.alias_decls:
        res[prov] = replace(res[prov], kind=res[target].kind)
    final = dict(functions)
    for name, fdef in functions.items():
        final[name] = replace(fdef, body=replace(fdef.body, functions=functions))
    body = replace(final[entry].body, resources=res)
    final[entry] = replace(final[entry], body=body)
    for name, fdef in final.items():
        final[name] = replace(fdef, body=replace(fdef.body, functions=final))
    return Unit(final, tuple(f.name for f in funcs), entry, src.path)


def parse(src: SourceUnit | str, entry: str | None = None) -> Program:
    """Parse source text into the (alias-unresolved) entry program.

    Raises :class:`ParseError` carrying the diagnostics on failure.
    """
    if isinstance(src, str):
        src = SourceUnit(src)
    return parse_unit(src, entry).program


def resolve_aliases(program: Program) -> Program:
    """Fold every alias name into the resource it refers to."""
    if not program.alias_decls:
        return program
    target_of: dict[int, int] = {}
    for _, prov, target, _ in program.alias_decls:
        target_of[prov] = target

    def root(rid: int) -> int:
        while rid in target_of:
            rid = target_of[rid]
        return rid

    diags = []
    params = set()
    for r in program.resources.values():
        if r.kind in (ir.INPUT, ir.PARAMETER) and not r.persistent:
            params.add(r.id)
    resources = {rid: r for rid, r in program.resources.items() if rid not in target_of}
    for name, prov, _, _ in program.alias_decls:
        rid = root(prov)
        r = resources[rid]
        if program.resources[prov].persistent and rid in params:
            diags.append(Diagnostic("error", "alias-escape", 1, 1,
                                    f"alias {name!r} makes by-value parameter {r.name!r} escape the function"))
        resources[rid] = replace(r, aliases=r.aliases | {name},
                                 persistent=r.persistent or program.resources[prov].persistent)
    if diags:
        raise ParseError(diags)
    ops = tuple(
        replace(op, operands=tuple((root(r), role) for r, role in op.operands)) for op in program.operations
    )
    scopes = tuple(replace(s, declared=tuple(r for r in s.declared if r not in target_of)) for s in program.scopes)
    decls = tuple((name, root(prov), root(prov), sid) for name, prov, _, sid in program.alias_decls)
    return replace(program, operations=ops, scopes=scopes, resources=resources, alias_decls=decls)


def load(text: str, path: str = "<input>", entry: str | None = None) -> Program:
    """Parse and alias-resolve; the usual front door for the other passes."""
    prog = resolve_aliases(parse(SourceUnit(text, path), entry))
    prog.validate()
    return prog


def load_unit(text: str, path: str = "<input>", entry: str | None = None) -> Unit:
    unit = parse_unit(SourceUnit(text, path), entry)
    resolved = resolve_aliases(unit.program)
    resolved.validate()
    fns = dict(unit.functions)
    fns[unit.entry] = replace(fns[unit.entry], body=resolved)
    return replace(unit, functions=fns)


# -- pretty-printer --------------------------------------------------------

def _operand_names(program: Program, op: Operation) -> list[str]:
    if op.names and len(op.names) == len(op.operands):
        return list(op.names)
    return [program.resources[r].name for r in op.resources]


def format_op(program: Program, op: Operation) -> str:
    names = _operand_names(program, op)
    prefix = "adjoint " if op.kind in (ADJOINT_GATE, ADJOINT_CALL) else ""
    if op.kind == MEASURE:
        return f"measure {names[0]};"
    if op.kind in (GATE, ADJOINT_GATE):
        return f"{prefix}{op.gate_name} {', '.join(names)};"
    return f"{prefix}{op.gate_name}({', '.join(names)});"


def format_function(fdef: FunctionDef, body: Program | None = None, indent: str = "    ") -> str:
    body = body if body is not None else fdef.body
    ret = "qubit[]" if fdef.returns else "void"
    params = ", ".join(("ref " if by_ref else "") + "qubit " + name for name, by_ref in fdef.params)
    lines = [f"{ret} {fdef.name}({params}) {{"]
    children: dict[int | None, list[Scope]] = {}
    for s in body.scopes:
        children.setdefault(s.parent, []).append(s)
    nparams = len(fdef.params)
    aliases_in: dict[int, list[tuple[str, str]]] = {}
    for name, _, target, sid in body.alias_decls:
        tname = body.resources[target].name if target in body.resources else name
        aliases_in.setdefault(sid, []).append((name, tname))

    def emit_scope(s: Scope, depth: int) -> None:
        pad = indent * depth
        decl = [body.resources[r].name for r in s.declared
                if r >= nparams and body.resources[r].name not in {a for a, _ in aliases_in.get(s.id, [])}]
        if decl:
            lines.append(f"{pad}qubit {', '.join(decl)};")
        for alias, target in aliases_in.get(s.id, []):
            lines.append(f"{pad}alias {alias} = {target};")
        # interleave own ops and child blocks by position
        items: list[tuple[int, str, object]] = []
        for op in body.operations:
            if op.scope_id == s.id:
                items.append((op.point, "op", op))
        for c in children.get(s.id, []):
            items.append((c.entry if c.entry <= c.exit else c.entry - 0.5, "scope", c))
        items.sort(key=lambda t: (t[0], t[1] == "op"))
        for _, what, obj in items:
            if what == "op":
                lines.append(pad + format_op(body, obj))
            else:
                lines.append(pad + "{")
                emit_scope(obj, depth + 1)
                lines.append(pad + "}")

    root = [s for s in body.scopes if s.parent is None]
    for s in root:
        emit_scope(s, 1)
    if fdef.returns:
        lines.append(f"{indent}return [{', '.join(fdef.returns)}];")
    lines.append("}")
    return "\n".join(lines)


def format_unit(unit: Unit, entry_body: Program | None = None) -> str:
    parts = []
    for name in unit.order:
        fdef = unit.functions[name]
        parts.append(format_function(fdef, entry_body if name == unit.entry and entry_body is not None else None))
    return "\n\n".join(parts) + "\n"
