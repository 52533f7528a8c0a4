"""Term language for equivalence checking.

Programs and mapped block graphs are encoded as terms over compute
operators plus four parallel-structure operators: ``part`` splits a data
dimension into contiguous chunks across a parallel dimension, ``comb``
concatenates the chunks back, ``red`` sums elementwise across a parallel
dimension, and ``repl`` makes every coordinate see one copy.

Data dimensions inside terms are indexed from the innermost axis (0 is the
last axis), which keeps the matrix-multiplication rewrite rules uniform
across tensor ranks; the graph side indexes from the left and converts at
the encoding boundary.  The printed syntax names the two innermost dims
``c`` and ``r`` and prints tensors as ``v_<name>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from ..errors import UnsupportedOpError
from ..graph import (
    ACCUM,
    INPUT,
    OUTPUT,
    SUM,
    BINARY_KINDS,
    UNARY_KINDS,
    Program,
    SymbolicGraph,
    saver_var_tensor,
)
from ..symdim import MapVar

# Term tags (shared with the rewrite engine cores).
VAR, DIM, PAR, RAT = "var", "dim", "par", "rat"
MATMUL, SUM_T, ADD, MUL, DIV = "matmul", "sum", "add", "mul", "div"
EXP, SILU, SQUARE, SQRT, SCALE = "exp", "silu", "square", "sqrt", "scale"
PART, COMB, RED, REPL = "part", "comb", "red", "repl"

UNARY_TAGS = (EXP, SILU, SQUARE, SQRT)
BINARY_TAGS = (ADD, MUL, DIV)
PARALLEL_TAGS = (PART, COMB, RED, REPL)


@dataclass(frozen=True)
class Expr:
    tag: str
    args: tuple = ()
    payload: object = None  # leaf value: name, dim index, or Fraction

    def __repr__(self):
        return format_term(self)


def var(name: str) -> Expr:
    return Expr(VAR, payload=name)


def dim(j: int) -> Expr:
    return Expr(DIM, payload=j)


def par(name: str) -> Expr:
    return Expr(PAR, payload=name)


def rat(value) -> Expr:
    return Expr(RAT, payload=Fraction(value))


def matmul(a: Expr, b: Expr) -> Expr:
    return Expr(MATMUL, (a, b))


def sum_(t: Expr, d: int | Expr) -> Expr:
    return Expr(SUM_T, (t, d if isinstance(d, Expr) else dim(d)))


def add(a, b) -> Expr:
    return Expr(ADD, (a, b))


def mul(a, b) -> Expr:
    return Expr(MUL, (a, b))


def div(a, b) -> Expr:
    return Expr(DIV, (a, b))


def exp(t) -> Expr:
    return Expr(EXP, (t,))


def silu(t) -> Expr:
    return Expr(SILU, (t,))


def square(t) -> Expr:
    return Expr(SQUARE, (t,))


def sqrt(t) -> Expr:
    return Expr(SQRT, (t,))


def scale(t, c) -> Expr:
    return Expr(SCALE, (t, c if isinstance(c, Expr) else rat(c)))


def part(t, d, p) -> Expr:
    return Expr(
        PART,
        (t, d if isinstance(d, Expr) else dim(d), p if isinstance(p, Expr) else par(p)),
    )


def comb(t, d, p) -> Expr:
    return Expr(
        COMB,
        (t, d if isinstance(d, Expr) else dim(d), p if isinstance(p, Expr) else par(p)),
    )


def red(t, p) -> Expr:
    return Expr(RED, (t, p if isinstance(p, Expr) else par(p)))


def repl(t, p) -> Expr:
    return Expr(REPL, (t, p if isinstance(p, Expr) else par(p)))


def subterms(e: Expr) -> list[Expr]:
    """Every distinct subterm, leaves included, in postorder."""
    seen: dict[Expr, None] = {}

    def walk(t: Expr):
        if t in seen:
            return
        for a in t.args:
            walk(a)
        seen[t] = None

    walk(e)
    return list(seen)


# ---------------------------------------------------------------------------
# Printing and parsing (human-readable surface syntax)


def _dim_name(j: int) -> str:
    return {0: "c", 1: "r"}.get(j, f"d{j}")


def format_term(e: Expr) -> str:
    if e.tag == VAR:
        return f"v_{e.payload}"
    if e.tag == DIM:
        return _dim_name(e.payload)
    if e.tag == PAR:
        return str(e.payload)
    if e.tag == RAT:
        f: Fraction = e.payload
        return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"
    return f"{e.tag}({', '.join(format_term(a) for a in e.args)})"


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z_0-9]*|\d+/\d+|\d+|[(),])")
_ARITY = {
    MATMUL: 2, SUM_T: 2, ADD: 2, MUL: 2, DIV: 2, SCALE: 2,
    EXP: 1, SILU: 1, SQUARE: 1, SQRT: 1,
    PART: 3, COMB: 3, RED: 2, REPL: 2,
}


def parse_term(text: str) -> Expr:
    tokens = _TOKEN.findall(text)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take(expect=None):
        nonlocal pos
        tok = peek()
        if tok is None or (expect and tok != expect):
            raise UnsupportedOpError(f"parse error near token {pos}: {tok!r}")
        pos += 1
        return tok

    def atom() -> Expr:
        tok = take()
        if tok in _ARITY:
            take("(")
            args = [atom()]
            while peek() == ",":
                take(",")
                args.append(atom())
            take(")")
            if len(args) != _ARITY[tok]:
                raise UnsupportedOpError(f"{tok}: expected {_ARITY[tok]} args")
            return Expr(tok, tuple(args))
        if tok.startswith("v_"):
            return var(tok[2:])
        if tok == "c":
            return dim(0)
        if tok == "r":
            return dim(1)
        if tok.startswith("d") and tok[1:].isdigit():
            return dim(int(tok[1:]))
        if "/" in tok:
            num, den = tok.split("/")
            return rat(Fraction(int(num), int(den)))
        if tok.isdigit():
            return rat(int(tok))
        return par(tok)

    result = atom()
    if pos != len(tokens):
        raise UnsupportedOpError(f"trailing tokens: {tokens[pos:]}")
    return result


# ---------------------------------------------------------------------------
# Encoding programs


def _to_inner(rank: int, left_axis: int) -> int:
    return rank - 1 - left_axis


_COMPUTE = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "div": div,
    "exp": exp,
    "silu": silu,
    "square": square,
    "sqrt": sqrt,
}


def encode_program(program: Program) -> dict[str, Expr]:
    """One term per output; inputs become variables, no parallel operators."""
    shapes = program.shapes()
    values: dict[str, Expr] = {name: var(name) for name in program.inputs}
    for op in program.ops:
        args = [values[nm] for nm in op.inputs]
        if op.kind == "sum":
            rank = len(shapes[op.inputs[0]])
            values[op.out] = sum_(args[0], _to_inner(rank, op.axis))
        elif op.kind == "scale":
            values[op.out] = scale(args[0], op.const)
        elif op.kind in _COMPUTE:
            values[op.out] = _COMPUTE[op.kind](*args)
        else:
            raise UnsupportedOpError(f"cannot encode op kind {op.kind!r}")
    return {name: values[name] for name in program.outputs}


# ---------------------------------------------------------------------------
# Encoding mapped block graphs


def encode_graph(graph: SymbolicGraph, mapping: dict) -> dict[str, Expr]:
    """Terms of the saver outputs under a concrete mapping assignment.

    Loaders wrap their variable in one ``part``/``repl`` per grid dim (and a
    ``part`` for the loop when mapped), accumulators become ``red`` over the
    loop, and savers apply ``comb`` per grid dim.
    """
    program = graph.program
    block = graph.block
    loop = block.loop.name
    terms: dict[int, Expr] = {}
    ranks: dict[int, int] = {}
    out: dict[str, Expr] = {}

    def mapped_dim(varname: str, rank: int, dims, pname: str) -> Optional[int]:
        for d, size in enumerate(dims):
            if size > 1 and mapping.get(MapVar(varname, d, pname), 0):
                return _to_inner(rank, d)
        return None

    for node in block.nodes:
        if node.kind == INPUT:
            spec = program.spec(node.tensor)
            e = var(spec.name)
            for p in block.grid:
                d = mapped_dim(spec.name, spec.rank, spec.dims, p.name)
                e = repl(e, p.name) if d is None else part(e, d, p.name)
            d = mapped_dim(spec.name, spec.rank, spec.dims, loop)
            if d is not None:
                e = part(e, d, loop)
            terms[node.idx] = e
            ranks[node.idx] = spec.rank
        elif node.kind == OUTPUT:
            spec = program.spec(node.tensor)
            varname = saver_var_tensor(program, node.tensor)
            e = terms[node.inputs[0]]
            for p in block.grid:
                d = mapped_dim(varname, spec.rank, spec.dims, p.name)
                if d is not None:
                    e = comb(e, d, p.name)
            out[node.tensor] = e
        elif node.kind == ACCUM:
            terms[node.idx] = red(terms[node.inputs[0]], loop)
            ranks[node.idx] = ranks[node.inputs[0]]
        elif node.kind == SUM:
            rank = ranks[node.inputs[0]]
            terms[node.idx] = sum_(terms[node.inputs[0]], _to_inner(rank, node.axis))
            ranks[node.idx] = rank
        elif node.kind == "scale":
            terms[node.idx] = scale(terms[node.inputs[0]], node.const)
            ranks[node.idx] = ranks[node.inputs[0]]
        elif node.kind in UNARY_KINDS or node.kind in BINARY_KINDS or node.kind == "matmul":
            args = [terms[j] for j in node.inputs]
            terms[node.idx] = _COMPUTE[node.kind](*args)
            ranks[node.idx] = ranks[node.inputs[0]]
        else:
            raise UnsupportedOpError(f"cannot encode node kind {node.kind!r}")
    return out


def erase_parallel(e: Expr) -> Expr:
    """Drop all parallel structure: the unit-size reduction of a term."""
    if e.tag in (PART, COMB, RED, REPL):
        return erase_parallel(e.args[0])
    if not e.args:
        return e
    return Expr(e.tag, tuple(erase_parallel(a) for a in e.args), e.payload)
