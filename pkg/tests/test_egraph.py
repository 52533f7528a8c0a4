import importlib

import pytest

from symfuse.verifier import _core_py
from symfuse.verifier.opcodes import (
    TAG_DIM,
    TAG_EXP,
    TAG_MATMUL,
    TAG_PAR,
    TAG_PART,
    TAG_RED,
    TAG_REPL,
    TAG_SUM,
    TAG_VAR,
)


def has_compiled():
    try:
        importlib.import_module("symfuse.verifier._core")
        return True
    except ImportError:
        return False


BACKENDS = [_core_py]
if has_compiled():
    BACKENDS.append(importlib.import_module("symfuse.verifier._core"))


@pytest.fixture(params=BACKENDS, ids=lambda m: m.BACKEND)
def core(request):
    return request.param.EGraph()


def test_hashcons_dedup(core):
    a = core.add(TAG_VAR, (), 0)
    b = core.add(TAG_VAR, (), 0)
    assert a == b
    c = core.add(TAG_VAR, (), 1)
    assert c != a


def test_congruence_after_merge(core):
    a = core.add(TAG_VAR, (), 0)
    b = core.add(TAG_VAR, (), 1)
    fa = core.add(TAG_EXP, (a,))
    fb = core.add(TAG_EXP, (b,))
    assert core.find(fa) != core.find(fb)
    core.merge(a, b)
    core.rebuild()
    assert core.find(fa) == core.find(fb)


def test_nested_congruence(core):
    a = core.add(TAG_VAR, (), 0)
    b = core.add(TAG_VAR, (), 1)
    ffa = core.add(TAG_EXP, (core.add(TAG_EXP, (a,)),))
    ffb = core.add(TAG_EXP, (core.add(TAG_EXP, (b,)),))
    core.merge(a, b)
    core.rebuild()
    assert core.find(ffa) == core.find(ffb)


def test_variance_analysis(core):
    x = core.add(TAG_PAR, (), 0)
    i = core.add(TAG_PAR, (), 1)
    d = core.add(TAG_DIM, (), 0)
    t = core.add(TAG_VAR, (), 0)
    assert core.var_mask[core.find(t)] == 0
    p = core.add(TAG_PART, (t, d, x))
    assert core.var_mask[core.find(p)] == 1
    pp = core.add(TAG_PART, (p, d, i))
    assert core.var_mask[core.find(pp)] == 3
    r = core.add(TAG_RED, (pp, i))
    assert core.var_mask[core.find(r)] == 1
    q = core.add(TAG_REPL, (r, x))
    assert core.var_mask[core.find(q)] == 0


def test_unit_dim_analysis(core):
    d0 = core.add(TAG_DIM, (), 0)
    t = core.add(TAG_VAR, (), 0)
    w = core.add(TAG_VAR, (), 1)
    s = core.add(TAG_SUM, (t, d0))
    assert core.one_mask[core.find(s)] == 1
    mm = core.add(TAG_MATMUL, (t, s))
    assert core.one_mask[core.find(mm)] & 1 == 1
    mm2 = core.add(TAG_MATMUL, (s, w))
    assert core.one_mask[core.find(mm2)] & 1 == 0


def test_merge_joins_masks(core):
    d0 = core.add(TAG_DIM, (), 0)
    t = core.add(TAG_VAR, (), 0)
    s = core.add(TAG_SUM, (t, d0))
    u = core.add(TAG_VAR, (), 1)
    core.merge(u, s)
    core.rebuild()
    assert core.one_mask[core.find(u)] == 1  # provable unit dim survives


def test_mask_propagates_to_parents(core):
    d0 = core.add(TAG_DIM, (), 0)
    t = core.add(TAG_VAR, (), 0)
    u = core.add(TAG_VAR, (), 1)
    e = core.add(TAG_EXP, (u,))
    s = core.add(TAG_SUM, (t, d0))
    assert core.one_mask[core.find(e)] == 0
    core.merge(u, s)
    core.rebuild()
    assert core.one_mask[core.find(e)] == 1


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled core not built")
def test_backends_agree_on_saturation():
    from symfuse.verifier import build_axioms, encode_program, encode_graph
    from symfuse.verifier.verify import equivalent

    from conftest import known_good_mapping, softmax_matmul_block, softmax_matmul_program

    prog = softmax_matmul_program(256, 256, 64)
    graph = softmax_matmul_block(prog)
    ax = build_axioms(1)
    cand = encode_graph(graph, known_good_mapping(graph))["O"]
    target = encode_program(prog)["O"]
    results = {}
    for backend in ("python", "compiled"):
        r = equivalent(cand, target, ax, backend=backend)
        results[backend] = (r.equivalent, r.iterations, r.nodes)
    assert results["python"] == results["compiled"]
