"""Interpreter-backed validation of the rewrite rules and the term
semantics they are checked against."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symfuse.verifier import (
    build_axioms,
    comb,
    eval_everywhere,
    eval_term,
    part,
    red,
    repl,
    var,
)
from symfuse.verifier.soundness import check_axiom_set, check_rule


@pytest.fixture(scope="module")
def ax1():
    return build_axioms(1)


def test_every_rule_sound_quick(ax1):
    # The acceptance suite re-runs this at 50 instances; keep the default
    # test loop fast but still exercise every rule.
    report = check_axiom_set(ax1, instances=4, seed=0)
    bad = [(name, detail) for name, ok, detail in report if not ok]
    assert not bad, bad


def test_rule_checker_rejects_a_wrong_rule(ax1):
    from symfuse.verifier.axioms import _mm, T0, T1
    from symfuse.verifier.engine import Rule

    wrong = Rule("matmul commutes (wrong)", _mm(T0, T1), _mm(T1, T0))
    ok, detail = check_rule(wrong, ax1.pars, instances=10, seed=3)
    assert not ok and "differ" in detail


@settings(max_examples=25, deadline=None)
@given(
    rows=st.sampled_from([2, 4, 8]),
    cols=st.sampled_from([4, 8]),
    n=st.sampled_from([2, 4]),
    d=st.sampled_from([0, 1]),
)
def test_comb_of_part_is_identity(rows, cols, n, d):
    size = cols if d == 0 else rows
    if size % n:
        return
    rng = np.random.default_rng(rows * 31 + cols * 7 + n + d)
    x = rng.standard_normal((rows, cols))
    term = comb(part(var("X"), d, "x"), d, "x")
    vals = eval_everywhere(term, {"X": x}, {"x": n})
    for v in vals.values():
        assert np.array_equal(v, x)


@settings(max_examples=25, deadline=None)
@given(rows=st.sampled_from([2, 4]), n=st.sampled_from([2, 4]), d=st.sampled_from([0, 1]))
def test_red_of_part_sums_chunks(rows, n, d):
    cols = 8
    rng = np.random.default_rng(rows + n * 5 + d)
    x = rng.standard_normal((rows, cols))
    term = red(part(var("X"), d, "x"), "x")
    axis = 1 - d  # numpy axis of the split dim
    if x.shape[axis] % n:
        return
    got = eval_term(term, {"X": x}, {"x": n})
    expected = sum(np.split(x, n, axis=axis))
    assert np.allclose(got, expected, atol=1e-12)


def test_repl_projects_to_coordinate_zero():
    table = np.arange(12.0).reshape(3, 2, 2)  # indexed by the x coordinate
    term = repl(var("X"), "x")
    vals = eval_everywhere(term, {"X": lambda c: table[c["x"]]}, {"x": 3})
    for v in vals.values():
        assert np.array_equal(v, table[0])
