"""Randomized hardening: verifier conservativity across workloads, and
exact agreement between the two engine backends on arbitrary terms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symfuse.generator import SearchConfig, generate
from symfuse.graph import mapping_satisfies
from symfuse.interp import random_equiv_test
from symfuse.mappings import enumerate_mappings
from symfuse.verifier import build_axioms, encode_graph, encode_program
from symfuse.verifier.engine import SaturationLimits, Session
from symfuse.verifier.verify import equivalent
from symfuse.verifier.terms import (
    Expr,
    comb,
    dim,
    div,
    exp,
    matmul,
    mul,
    par,
    part,
    red,
    repl,
    sum_,
    var,
)
from symfuse.workloads import BUILTINS, lower


@pytest.mark.parametrize("workload", ["rmsnorm", "attention"])
def test_no_false_accepts_on_mutated_mappings(workload):
    """Bit-flipped invalid mappings must never pass both the verifier and
    the interpreter oracle."""
    spec = BUILTINS[workload]()
    program = lower(spec)
    ax = build_axioms(1)
    targets = encode_program(program)
    result = generate(
        program,
        SearchConfig(max_block_ops=spec.defaults["max_ops"], num_grid_dims=1),
        axioms=ax,
    )
    rng = np.random.default_rng(11)
    checked = 0
    for g in result.graphs:
        good = enumerate_mappings(g).assignments
        if not good:
            continue
        base = good[0]
        variables = g.mapping_vars()
        for _ in range(4):
            mutant = dict(base)
            for v in rng.choice(len(variables), size=2, replace=False):
                mv = variables[int(v)]
                mutant[mv] = 1 - mutant[mv]
            if mapping_satisfies(g, mutant):
                continue  # a different legal mapping, not a mutant
            terms = encode_graph(g, mutant)
            ver = all(
                equivalent(terms[name], targets[name], ax).equivalent
                for name in program.outputs
            )
            if ver:
                verdict = random_equiv_test(
                    g, mutant, program, trials=8, param_samples=2, seed=3
                )
                assert not verdict.ok, (workload, mutant)
            checked += 1
        if checked >= 12:
            break
    assert checked >= 8


# -- backend twin fuzz ---------------------------------------------------------


def _random_term(draw, depth: int) -> Expr:
    leaf = draw(st.sampled_from(["A", "B", "C"]))
    if depth == 0:
        return var(leaf)
    kind = draw(
        st.sampled_from(
            ["var", "exp", "sum", "matmul", "mul", "div", "part", "comb", "red", "repl"]
        )
    )
    if kind == "var":
        return var(leaf)
    if kind == "exp":
        return exp(_random_term(draw, depth - 1))
    if kind == "sum":
        return sum_(_random_term(draw, depth - 1), draw(st.sampled_from([0, 1])))
    if kind in ("matmul", "mul", "div"):
        a = _random_term(draw, depth - 1)
        b = _random_term(draw, depth - 1)
        return {"matmul": matmul, "mul": mul, "div": div}[kind](a, b)
    d = draw(st.sampled_from([0, 1]))
    p = draw(st.sampled_from(["x", "i"]))
    t = _random_term(draw, depth - 1)
    if kind == "part":
        return part(t, d, p)
    if kind == "comb":
        return comb(t, d, p)
    if kind == "red":
        return red(t, p)
    return repl(t, p)


def _has_compiled() -> bool:
    try:
        import symfuse.verifier._core  # noqa: F401
        return True
    except ImportError:
        return False


@pytest.mark.skipif(not _has_compiled(), reason="compiled core not built")
@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_backends_agree_on_random_terms(data):
    ax = build_axioms(1)
    t1 = _random_term(data.draw, 3)
    t2 = _random_term(data.draw, 3)
    limits = SaturationLimits(max_nodes=3000, max_iters=8, timeout_s=5.0)
    outcomes = {}
    for backend in ("python", "compiled"):
        session = Session(ax.ruleset, backend=backend)
        r1 = session.insert(t1)
        r2 = session.insert(t2)
        out = session.saturate(limits, stop_when_equal=(r1, r2))
        outcomes[backend] = (
            session.equal(r1, r2),
            out.status,
            out.iterations,
            session.core.num_nodes,
        )
    assert outcomes["python"] == outcomes["compiled"]
