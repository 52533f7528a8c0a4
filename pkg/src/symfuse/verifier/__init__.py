"""Equivalence verification: term encoding, axioms, and saturation."""

from .axioms import AxiomSet, build_axioms
from .engine import SaturationLimits, backend_name
from .semantics import eval_everywhere, eval_term, terms_agree
from .terms import (
    Expr,
    add,
    comb,
    dim,
    div,
    encode_program,
    encode_graph,
    erase_parallel,
    exp,
    format_term,
    matmul,
    mul,
    par,
    parse_term,
    part,
    rat,
    red,
    repl,
    scale,
    silu,
    sqrt,
    square,
    subterms,
    sum_,
    var,
)
from .verify import SubtermChecker, VerifyResult, equivalent

__all__ = [
    "AxiomSet", "build_axioms", "SaturationLimits", "backend_name",
    "eval_everywhere", "eval_term", "terms_agree",
    "Expr", "add", "comb", "dim", "div", "encode_program", "encode_graph",
    "erase_parallel", "exp", "format_term", "matmul", "mul", "par",
    "parse_term", "part", "rat", "red", "repl", "scale", "silu", "sqrt",
    "square", "subterms", "sum_", "var",
    "SubtermChecker", "VerifyResult", "equivalent",
]
