"""Symbolic dimension algebra.

Per-block tensor extents are rational expressions over launch-size symbols
(one per parallel dimension) and Boolean mapping variables (one per
tensor/data-dim/parallel-dim triple).  A partitioned extent has the shape
``D / f`` where ``f`` is a product of factors ``m*d_p + 1 - m``: each factor
is ``d_p`` when the mapping variable is on and ``1`` otherwise.

The module provides construction of those products, exact evaluation,
rational-function equivalence, and coefficient matching, which extracts the
mapping-variable equalities needed to make two extents identical for every
value of the size symbols.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

from .errors import ConstraintError, NonIntegerError

# ---------------------------------------------------------------------------
# Symbols


@dataclass(frozen=True, order=True)
class ParamSym:
    """Size symbol of one parallel dimension (grid axis or the loop)."""

    name: str

    def __repr__(self):
        return f"d_{self.name}"


@dataclass(frozen=True, order=True)
class MapVar:
    """Boolean variable: data dim `dim` of `tensor` is split along `pdim`."""

    tensor: str
    dim: int
    pdim: str

    def __repr__(self):
        return f"m[{self.tensor},{self.dim},{self.pdim}]"


Sym = Union[ParamSym, MapVar]


# ---------------------------------------------------------------------------
# Expression trees

_CONST, _VAR, _ADD, _SUB, _MUL, _DIV = range(6)
_OPNAMES = {_ADD: "+", _SUB: "-", _MUL: "*", _DIV: "/"}


class SymDimExpr:
    """Rational expression over size symbols and mapping variables."""

    __slots__ = ("kind", "value", "args", "_hash")

    def __init__(self, kind, value=None, args=()):
        self.kind = kind
        self.value = value
        self.args = args
        self._hash = hash((kind, value, args))

    # Constructors ---------------------------------------------------------

    @staticmethod
    def const(v) -> "SymDimExpr":
        return SymDimExpr(_CONST, Fraction(v))

    @staticmethod
    def var(sym: Sym) -> "SymDimExpr":
        return SymDimExpr(_VAR, sym)

    def __add__(self, other):
        return SymDimExpr(_ADD, args=(self, _coerce(other)))

    def __sub__(self, other):
        return SymDimExpr(_SUB, args=(self, _coerce(other)))

    def __mul__(self, other):
        return SymDimExpr(_MUL, args=(self, _coerce(other)))

    def __truediv__(self, other):
        return SymDimExpr(_DIV, args=(self, _coerce(other)))

    # Basics ---------------------------------------------------------------

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, SymDimExpr):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.value == other.value
            and self.args == other.args
        )

    def __repr__(self):
        if self.kind == _CONST:
            return str(self.value)
        if self.kind == _VAR:
            return repr(self.value)
        a, b = self.args
        return f"({a!r} {_OPNAMES[self.kind]} {b!r})"

    def symbols(self) -> set:
        out = set()
        stack = [self]
        while stack:
            e = stack.pop()
            if e.kind == _VAR:
                out.add(e.value)
            else:
                stack.extend(e.args)
        return out

    def substitute(self, bindings: dict) -> "SymDimExpr":
        """Replace symbols by other symbols or rational constants."""
        if self.kind == _CONST:
            return self
        if self.kind == _VAR:
            if self.value in bindings:
                repl = bindings[self.value]
                if isinstance(repl, SymDimExpr):
                    return repl
                if isinstance(repl, (ParamSym, MapVar)):
                    return SymDimExpr.var(repl)
                return SymDimExpr.const(repl)
            return self
        a, b = self.args
        return SymDimExpr(self.kind, args=(a.substitute(bindings), b.substitute(bindings)))


def _coerce(x) -> SymDimExpr:
    if isinstance(x, SymDimExpr):
        return x
    if isinstance(x, (ParamSym, MapVar)):
        return SymDimExpr.var(x)
    return SymDimExpr.const(x)


ONE = SymDimExpr.const(1)


def split_factor(m: MapVar, p: ParamSym) -> SymDimExpr:
    # m*d_p + 1 - m: equals d_p when the variable is on, 1 otherwise.
    return SymDimExpr.var(m) * SymDimExpr.var(p) + SymDimExpr.const(1) - SymDimExpr.var(m)


def partition_factor(tensor: str, dim: int, pdims: Iterable[tuple[str, ParamSym]]) -> SymDimExpr:
    """Product of partition factors of `dim` over the given parallel dims."""
    expr = ONE
    first = True
    for pname, psym in pdims:
        f = split_factor(MapVar(tensor, dim, pname), psym)
        expr = f if first else expr * f
        first = False
    return expr


def dim_expr(size: int, tensor: str, dim: int, pdims) -> SymDimExpr:
    """Per-block extent of a loaded dimension: original size over its factor."""
    return SymDimExpr.const(size) / partition_factor(tensor, dim, pdims)


# ---------------------------------------------------------------------------
# Exact evaluation


def evaluate(expr: SymDimExpr, assignment: dict) -> Fraction:
    """Evaluate with every symbol bound; mapping vars to 0/1, params to ints."""
    if expr.kind == _CONST:
        return expr.value
    if expr.kind == _VAR:
        try:
            return Fraction(assignment[expr.value])
        except KeyError:
            raise ConstraintError(f"unbound symbol {expr.value!r}") from None
    a = evaluate(expr.args[0], assignment)
    b = evaluate(expr.args[1], assignment)
    if expr.kind == _ADD:
        return a + b
    if expr.kind == _SUB:
        return a - b
    if expr.kind == _MUL:
        return a * b
    return a / b


def evaluate_int(expr: SymDimExpr, assignment: dict) -> int:
    val = evaluate(expr, assignment)
    if val.denominator != 1:
        raise NonIntegerError(f"{expr!r} evaluates to {val}, not an integer")
    return int(val)


# ---------------------------------------------------------------------------
# Rational-function equivalence

# A polynomial is {monomial: coefficient} with monomial a sorted tuple of
# (symbol, exponent).  Fractions of polynomials compare by cross-multiplying.


def _sym_key(sym):
    if isinstance(sym, ParamSym):
        return (0, sym.name, 0, "")
    return (1, sym.tensor, sym.dim, sym.pdim)


def _poly_const(c: Fraction) -> dict:
    return {(): c} if c else {}


def _poly_var(sym) -> dict:
    return {((sym, 1),): Fraction(1)}


def _poly_add(p, q, sign=1):
    out = dict(p)
    for mono, c in q.items():
        nc = out.get(mono, Fraction(0)) + sign * c
        if nc:
            out[mono] = nc
        else:
            out.pop(mono, None)
    return out


def _mono_mul(m1, m2):
    exps = dict(m1)
    for sym, e in m2:
        exps[sym] = exps.get(sym, 0) + e
    return tuple(sorted(exps.items(), key=lambda kv: _sym_key(kv[0])))


def _poly_mul(p, q):
    out = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            mono = _mono_mul(m1, m2)
            nc = out.get(mono, Fraction(0)) + c1 * c2
            if nc:
                out[mono] = nc
            else:
                out.pop(mono, None)
    return out


def as_fraction(expr: SymDimExpr) -> tuple[dict, dict]:
    """Expand to a (numerator, denominator) pair of polynomials."""
    if expr.kind == _CONST:
        return _poly_const(expr.value), _poly_const(Fraction(1))
    if expr.kind == _VAR:
        return _poly_var(expr.value), _poly_const(Fraction(1))
    an, ad = as_fraction(expr.args[0])
    bn, bd = as_fraction(expr.args[1])
    if expr.kind == _ADD:
        return _poly_add(_poly_mul(an, bd), _poly_mul(bn, ad)), _poly_mul(ad, bd)
    if expr.kind == _SUB:
        return _poly_add(_poly_mul(an, bd), _poly_mul(bn, ad), sign=-1), _poly_mul(ad, bd)
    if expr.kind == _MUL:
        return _poly_mul(an, bn), _poly_mul(ad, bd)
    return _poly_mul(an, bd), _poly_mul(ad, bn)


def symbolic_equiv(a: SymDimExpr, b: SymDimExpr) -> bool:
    """True iff the two expressions are equal as rational functions."""
    an, ad = as_fraction(a)
    bn, bd = as_fraction(b)
    return _poly_mul(an, bd) == _poly_mul(bn, ad)


# ---------------------------------------------------------------------------
# Coefficient matching


@dataclass(frozen=True)
class EqualityConstraint:
    lhs: MapVar
    rhs: MapVar

    def __repr__(self):
        return f"{self.lhs!r} = {self.rhs!r}"


class Incompatible:
    """Sentinel outcome: no variable equalities can reconcile the extents."""

    def __repr__(self):
        return "Incompatible"


INCOMPATIBLE = Incompatible()


def _extract_form(expr: SymDimExpr):
    """Recognize const / const-over-product-of-factors shapes.

    Returns (numerator, {param -> mapvar}) or None when the expression is
    outside that grammar.
    """
    if expr.kind == _CONST:
        return expr.value, {}
    if expr.kind == _DIV:
        num, den = expr.args
        if num.kind != _CONST:
            return None
        factors = {}
        if not _collect_factors(den, factors):
            return None
        return num.value, factors
    # A bare product of factors (numerator 1 never occurs in practice).
    factors = {}
    if _collect_factors(expr, factors):
        return Fraction(1), factors
    return None


def _collect_factors(expr: SymDimExpr, factors: dict) -> bool:
    if expr.kind == _CONST and expr.value == 1:
        return True
    if expr.kind == _MUL:
        return _collect_factors(expr.args[0], factors) and _collect_factors(
            expr.args[1], factors
        )
    # One factor: m*d + 1 - m, built by split_factor.
    if expr.kind != _SUB:
        return False
    body, mvar2 = expr.args
    if not (mvar2.kind == _VAR and isinstance(mvar2.value, MapVar)):
        return False
    if body.kind != _ADD:
        return False
    prod, one = body.args
    if not (one.kind == _CONST and one.value == 1):
        return False
    if prod.kind != _MUL:
        return False
    mvar, dvar = prod.args
    if not (mvar.kind == _VAR and mvar.value == mvar2.value):
        return False
    if not (dvar.kind == _VAR and isinstance(dvar.value, ParamSym)):
        return False
    param = dvar.value
    if param in factors:
        return False
    factors[param] = mvar.value
    return True


def match_dims(a: SymDimExpr, b: SymDimExpr):
    """Equate the two extents for every value of the size symbols.

    Returns a list of constraints (possibly forcing variables off via a
    pairing with ZERO, see ConstraintStore) or INCOMPATIBLE.
    """
    fa = _extract_form(a)
    fb = _extract_form(b)
    if fa is None or fb is None:
        return INCOMPATIBLE
    num_a, fac_a = fa
    num_b, fac_b = fb
    constraints: list[EqualityConstraint] = []
    forced_zero: list[MapVar] = []
    for param in sorted(set(fac_a) | set(fac_b)):
        va = fac_a.get(param)
        vb = fac_b.get(param)
        if va is not None and vb is not None:
            if va != vb:
                constraints.append(EqualityConstraint(va, vb))
        elif va is not None:
            forced_zero.append(va)
        else:
            forced_zero.append(vb)
    # After substitution the factor products coincide symbol for symbol
    # (equated pairs share a variable, absent factors collapse to 1), so the
    # expressions are equivalent as rational functions iff the numerators
    # agree; the full polynomial check is exercised as a test property.
    if num_a != num_b:
        return INCOMPATIBLE
    return constraints, forced_zero


# ---------------------------------------------------------------------------
# Constraint store

_ZERO = "0"
_ONE = "1"


class ConstraintStore:
    """Union-find over mapping variables with 0/1 sentinel classes.

    Equating two variables merges their classes; forcing merges with a
    sentinel.  The store is inconsistent when the sentinels share a class.
    """

    def __init__(self):
        self._parent: dict = {_ZERO: _ZERO, _ONE: _ONE}

    def copy(self) -> "ConstraintStore":
        new = ConstraintStore.__new__(ConstraintStore)
        new._parent = dict(self._parent)
        return new

    def _find(self, x):
        parent = self._parent
        if x not in parent:
            parent[x] = x
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    @staticmethod
    def _rank(x):
        # Sentinels win as representatives; otherwise order for determinism.
        if x == _ZERO or x == _ONE:
            return (0, str(x))
        return (1, (x.tensor, x.dim, x.pdim))

    def _union(self, a, b) -> bool:
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return True
        if ra == _ZERO and rb == _ONE or ra == _ONE and rb == _ZERO:
            return False
        if self._rank(rb) < self._rank(ra):
            ra, rb = rb, ra
        self._parent[rb] = ra
        return True

    def equate(self, a: MapVar, b: MapVar) -> bool:
        return self._union(a, b)

    def force_zero(self, v: MapVar) -> bool:
        return self._union(v, _ZERO)

    def force_one(self, v: MapVar) -> bool:
        return self._union(v, _ONE)

    def add(self, outcome) -> bool:
        """Apply a match_dims result; False when it contradicts the store."""
        if isinstance(outcome, Incompatible):
            return False
        constraints, forced = outcome
        ok = True
        for c in constraints:
            ok = self.equate(c.lhs, c.rhs) and ok
        for v in forced:
            ok = self.force_zero(v) and ok
        return ok

    def same(self, a: MapVar, b: MapVar) -> bool:
        return self._find(a) == self._find(b)

    def value_of(self, v: MapVar):
        """0/1 when forced, else None."""
        root = self._find(v)
        if root == _ZERO:
            return 0
        if root == _ONE:
            return 1
        return None

    def representative(self, v: MapVar):
        return self._find(v)

    def classes(self, variables: Iterable[MapVar]) -> dict:
        """Group the given variables by representative, insertion-ordered."""
        groups: dict = {}
        for v in variables:
            groups.setdefault(self._find(v), []).append(v)
        return groups
