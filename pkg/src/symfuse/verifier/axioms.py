"""The rewrite-rule library.

Rules come in three groups: compute-only algebra (matrix multiplication
against addition, vector scaling, and summation), single-parallel-dim rows
(commuting part/comb/repl/red with each operator, cancellations, the four
parallelized matmul forms, compound parallelized sums), and two-dim rows
(commuting parallel operators with each other plus the deeper compound
sums).  Parallel-dim symbols are instantiated from the axiom set's concrete
dimensions, so the rule count grows with the grid rank.

Direction and guard conventions: a rule is emitted only in directions that
introduce no fresh variables, rows that eliminate a parallel dim around a
pattern variable require that variable's class to be provably invariant in
that dim, and the vector rows of the matmul family require the vector
operand's broadcast dim to be provably unit-sized.  Rules labeled
``inverse`` push parallel structure outward through matmul, which lets
nested parallelized products verify; they can be disabled to measure their
effect.  Candidate rows that re-reduce an already-reduced partition fail
the interpreter soundness harness under these semantics and are not
emitted.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..graph import GRID_NAMES, LOOP_NAME
from .engine import PL, PV, Rule, RuleSet, compile_rules, pclass, pn
from .opcodes import TAG_DIM, TAG_PAR, TAG_RAT

T0, T1, T2, TV, D0, D1, C0 = (PV(i) for i in range(7))
UNARY = ("exp", "silu", "square", "sqrt")
BINARY = ("add", "mul", "div")
COL = PL(TAG_DIM, 0)
ROW = PL(TAG_DIM, 1)
ONE_RAT = PL(TAG_RAT, 0)


def _part(t, d, p):
    return pn("part", t, d, p)


def _comb(t, d, p):
    return pn("comb", t, d, p)


def _red(t, p):
    return pn("red", t, p)


def _repl(t, p):
    return pn("repl", t, p)


def _mm(a, b):
    return pn("matmul", a, b)


def _sum(t, d):
    return pn("sum", t, d)


def _inv(t, p):
    return ("invariant", t.idx, p)


def _both(name, lhs, rhs, guards=(), labels=frozenset()):
    return [
        Rule(name, lhs, rhs, guards, labels),
        Rule(name + " (rev)", rhs, lhs, guards, labels),
    ]


def _compute_rules() -> list[Rule]:
    rules: list[Rule] = []
    compute = frozenset(["compute"])

    def both(name, lhs, rhs, guards=()):
        rules.extend(_both(name, lhs, rhs, guards, compute))

    both("matmul assoc", _mm(T0, _mm(T1, T2)), _mm(_mm(T0, T1), T2))
    both(
        "matmul distributes over add (left)",
        _mm(pn("add", T0, T1), T2),
        pn("add", _mm(T0, T2), _mm(T1, T2)),
    )
    both(
        "matmul distributes over add (right)",
        _mm(T0, pn("add", T1, T2)),
        pn("add", _mm(T0, T1), _mm(T0, T2)),
    )
    both(
        "matmul carries left mul by column vector",
        _mm(pn("mul", T0, TV), T1),
        pn("mul", _mm(T0, T1), TV),
        guards=(("size1", TV.idx, 0),),
    )
    both(
        "matmul carries right mul by row vector",
        _mm(T0, pn("mul", T1, TV)),
        pn("mul", _mm(T0, T1), TV),
        guards=(("size1", TV.idx, 1),),
    )
    both(
        "matmul carries left div by column vector",
        _mm(pn("div", T0, TV), T1),
        pn("div", _mm(T0, T1), TV),
        guards=(("size1", TV.idx, 0),),
    )
    both(
        "matmul carries right div by row vector",
        _mm(T0, pn("div", T1, TV)),
        pn("div", _mm(T0, T1), TV),
        guards=(("size1", TV.idx, 1),),
    )
    both("matmul carries left scale", _mm(pn("scale", T0, C0), T1), pn("scale", _mm(T0, T1), C0))
    both("matmul carries right scale", _mm(T0, pn("scale", T1, C0)), pn("scale", _mm(T0, T1), C0))
    both("sum carries scale", _sum(pn("scale", T0, C0), D0), pn("scale", _sum(T0, D0), C0))
    both("sum distributes over add", _sum(pn("add", T0, T1), D0), pn("add", _sum(T0, D0), _sum(T1, D0)))
    rules.append(Rule("scale by one", pn("scale", T0, ONE_RAT), T0, (), compute))
    rules.append(Rule("add commutes", pn("add", T0, T1), pn("add", T1, T0), (), compute))
    rules.append(Rule("mul commutes", pn("mul", T0, T1), pn("mul", T1, T0), (), compute))
    return rules


def _single_dim_rules(P: PL, pname: str) -> list[Rule]:
    rules: list[Rule] = []
    sfx = f" [{pname}]"
    inverse = frozenset(["inverse"])

    def both(name, lhs, rhs, guards=()):
        rules.extend(_both(name + sfx, lhs, rhs, guards))

    # Elementwise operators commute with each parallel operator.
    both("unary op commutes with part", pclass(UNARY, 0, _part(T0, D0, P)), _part(pclass(UNARY, 0, T0), D0, P))
    both("unary op commutes with comb", pclass(UNARY, 0, _comb(T0, D0, P)), _comb(pclass(UNARY, 0, T0), D0, P))
    both("unary op commutes with repl", pclass(UNARY, 0, _repl(T0, P)), _repl(pclass(UNARY, 0, T0), P))
    both("scale commutes with part", pn("scale", _part(T0, D0, P), C0), _part(pn("scale", T0, C0), D0, P))
    both("scale commutes with comb", pn("scale", _comb(T0, D0, P), C0), _comb(pn("scale", T0, C0), D0, P))
    both("scale commutes with repl", pn("scale", _repl(T0, P), C0), _repl(pn("scale", T0, C0), P))
    both("scale commutes with red", pn("scale", _red(T0, P), C0), _red(pn("scale", T0, C0), P))
    both(
        "binary op commutes with part",
        pclass(BINARY, 0, _part(T0, D0, P), _part(T1, D0, P)),
        _part(pclass(BINARY, 0, T0, T1), D0, P),
    )
    both(
        "binary op commutes with comb",
        pclass(BINARY, 0, _comb(T0, D0, P), _comb(T1, D0, P)),
        _comb(pclass(BINARY, 0, T0, T1), D0, P),
    )
    both(
        "binary op commutes with repl",
        pclass(BINARY, 0, _repl(T0, P), _repl(T1, P)),
        _repl(pclass(BINARY, 0, T0, T1), P),
    )
    both("red distributes over add", _red(pn("add", T0, T1), P), pn("add", _red(T0, P), _red(T1, P)))

    # Summation over data dims against parallel structure.
    both(
        "sum commutes with part",
        _sum(_part(T0, D1, P), D0),
        _part(_sum(T0, D0), D1, P),
        guards=(("distinct", D0.idx, D1.idx),),
    )
    both(
        "sum commutes with comb",
        _sum(_comb(T0, D1, P), D0),
        _comb(_sum(T0, D0), D1, P),
        guards=(("distinct", D0.idx, D1.idx),),
    )
    both("sum commutes with repl", _sum(_repl(T0, P), D0), _repl(_sum(T0, D0), P))

    # Cancellations.
    rules.append(
        Rule("comb cancels part" + sfx, _comb(_part(T0, D0, P), D0, P), T0, (_inv(T0, P),))
    )
    rules.append(Rule("part cancels comb" + sfx, _part(_comb(T0, D0, P), D0, P), T0))

    # Parallelized matmul rows.
    rules.append(
        Rule(
            "parallel matmul reduction" + sfx,
            _red(_mm(_part(T0, COL, P), _part(T1, ROW, P)), P),
            _mm(T0, T1),
            (_inv(T0, P), _inv(T1, P)),
        )
    )
    rules.append(
        Rule(
            "parallel matmul row partition" + sfx,
            _comb(_mm(_part(T0, ROW, P), _repl(T1, P)), ROW, P),
            _mm(T0, T1),
            (_inv(T0, P), _inv(T1, P)),
        )
    )
    rules.append(
        Rule(
            "parallel matmul column partition" + sfx,
            _comb(_mm(_repl(T0, P), _part(T1, COL, P)), COL, P),
            _mm(T0, T1),
            (_inv(T0, P), _inv(T1, P)),
        )
    )
    rules.append(
        Rule(
            "parallel matmul leading dim" + sfx,
            _comb(_mm(_part(T0, D0, P), _part(T1, D0, P)), D0, P),
            _mm(T0, T1),
            (("payload_ge", D0.idx, 2), _inv(T0, P), _inv(T1, P)),
        )
    )

    # Compound parallelized sums (single parallel dim).
    rules.append(
        Rule(
            "compound sum: sum of red of part" + sfx,
            _sum(_red(_part(T0, D0, P), P), D0),
            _sum(T0, D0),
            (_inv(T0, P),),
        )
    )
    rules.append(
        Rule(
            "compound sum: sum of comb of tile sums" + sfx,
            _sum(_comb(_sum(_part(T0, D0, P), D0), D0, P), D0),
            _sum(T0, D0),
            (_inv(T0, P),),
        )
    )
    rules.append(
        Rule(
            "compound sum: red of tile sums" + sfx,
            _red(_sum(_part(T0, D0, P), D0), P),
            _sum(T0, D0),
            (_inv(T0, P),),
        )
    )

    # Inverse family: push parallel structure outward through matmul.
    rules.append(
        Rule(
            "inverse matmul row partition" + sfx,
            _mm(_part(T0, ROW, P), _repl(T1, P)),
            _part(_mm(T0, T1), ROW, P),
            (_inv(T1, P),),
            inverse,
        )
    )
    rules.append(
        Rule(
            "inverse matmul column partition" + sfx,
            _mm(_repl(T0, P), _part(T1, COL, P)),
            _part(_mm(T0, T1), COL, P),
            (_inv(T0, P),),
            inverse,
        )
    )
    rules.append(
        Rule(
            "inverse matmul leading dim" + sfx,
            _mm(_part(T0, D0, P), _part(T1, D0, P)),
            _part(_mm(T0, T1), D0, P),
            (("payload_ge", D0.idx, 2),),
            inverse,
        )
    )
    rules.append(
        Rule(
            "matmul of replicas" + sfx,
            _mm(_repl(T0, P), _repl(T1, P)),
            _repl(_mm(T0, T1), P),
            (),
            inverse,
        )
    )
    rules.append(
        Rule(
            "row slice passes through matmul" + sfx,
            _mm(_part(T0, ROW, P), T1),
            _part(_mm(T0, T1), ROW, P),
            (),
            inverse,
        )
    )
    rules.append(
        Rule(
            "column slice passes through matmul" + sfx,
            _mm(T0, _part(T1, COL, P)),
            _part(_mm(T0, T1), COL, P),
            (),
            inverse,
        )
    )
    return rules


def _pair_rules(P0: PL, P1: PL, names: tuple[str, str]) -> list[Rule]:
    rules: list[Rule] = []
    sfx = f" [{names[0]},{names[1]}]"

    def both(name, lhs, rhs, guards=()):
        rules.extend(_both(name + sfx, lhs, rhs, guards))

    both("part commutes with repl", _part(_repl(T0, P0), D0, P1), _repl(_part(T0, D0, P1), P0))
    both("comb commutes with repl", _comb(_repl(T0, P0), D0, P1), _repl(_comb(T0, D0, P1), P0))
    both("red commutes with part", _red(_part(T0, D0, P1), P0), _part(_red(T0, P0), D0, P1))
    both("comb commutes with red", _comb(_red(T0, P0), D0, P1), _red(_comb(T0, D0, P1), P0))
    both("red commutes with repl", _red(_repl(T0, P0), P1), _repl(_red(T0, P1), P0))
    rules.append(
        Rule(
            "nested parts commute" + sfx,
            _part(_part(T0, D0, P0), D1, P1),
            _part(_part(T0, D1, P1), D0, P0),
            (("distinct", D0.idx, D1.idx),),
        )
    )
    rules.append(
        Rule(
            "nested combs commute" + sfx,
            _comb(_comb(T0, D0, P0), D1, P1),
            _comb(_comb(T0, D1, P1), D0, P0),
            (("distinct", D0.idx, D1.idx),),
        )
    )
    rules.append(Rule("nested reds commute" + sfx, _red(_red(T0, P0), P1), _red(_red(T0, P1), P0)))
    rules.append(Rule("nested repls commute" + sfx, _repl(_repl(T0, P0), P1), _repl(_repl(T0, P1), P0)))

    inv2 = (_inv(T0, P0), _inv(T0, P1))
    rules.append(
        Rule(
            "compound sum: comb of red of double part" + sfx,
            _sum(_comb(_red(_part(_part(T0, D0, P0), D0, P1), P1), D0, P0), D0),
            _sum(T0, D0),
            inv2,
        )
    )
    rules.append(
        Rule(
            "compound sum: crossed comb of red of double part" + sfx,
            _sum(_comb(_red(_part(_part(T0, D0, P0), D0, P1), P0), D0, P1), D0),
            _sum(T0, D0),
            inv2,
        )
    )
    rules.append(
        Rule(
            "compound sum: red of comb of double part" + sfx,
            _sum(_red(_comb(_part(_part(T0, D0, P0), D0, P1), D0, P0), P1), D0),
            _sum(T0, D0),
            inv2,
        )
    )
    return rules


@dataclass
class AxiomSet:
    k: int
    pars: tuple[str, ...]
    rules: list[Rule]
    ruleset: RuleSet
    compute_ruleset: RuleSet

    def __len__(self):
        return len(self.rules)

    def compiled(self, use_inverse: bool = True):
        if use_inverse:
            return self.ruleset.rules
        return [r for r in self.ruleset.rules if "inverse" not in r.labels]


def build_axioms(k: int) -> AxiomSet:
    """Directed rules for block graphs with `k` grid dims plus the loop."""
    if not 1 <= k <= len(GRID_NAMES):
        raise ValueError(f"grid rank {k} outside 1..{len(GRID_NAMES)}")
    pars = tuple(GRID_NAMES[:k]) + (LOOP_NAME,)
    lits = {name: PL(TAG_PAR, i) for i, name in enumerate(pars)}
    rules = _compute_rules()
    for name in pars:
        rules.extend(_single_dim_rules(lits[name], name))
    for n0 in pars:
        for n1 in pars:
            if n0 != n1:
                rules.extend(_pair_rules(lits[n0], lits[n1], (n0, n1)))
    compute_rules = [r for r in rules if "compute" in r.labels]
    return AxiomSet(
        k=k,
        pars=pars,
        rules=rules,
        ruleset=compile_rules(rules, pars, rat_values=[Fraction(1)]),
        compute_ruleset=compile_rules(compute_rules, pars, rat_values=[Fraction(1)]),
    )
