import numpy as np
import pytest

from symfuse.errors import WriteConflictError
from symfuse.graph import (
    BlockGraph,
    BlockNode,
    LOOP_DIM,
    Program,
    ProgOp,
    SymbolicGraph,
    TensorSpec,
    grid_dims,
    instantiate,
)
from symfuse.interp import random_equiv_test, rel_err, run_concrete, run_program
from symfuse.symdim import ConstraintStore, MapVar

from conftest import known_good_mapping, softmax_matmul_block, softmax_matmul_program


def test_softmax_uniform_rows():
    prog = softmax_matmul_program(4, 4, 2)
    x = np.ones((4, 4))
    w = np.ones((4, 2))
    out = run_program(prog, {"X": x, "W": w})["O"]
    # softmax of a constant row is uniform 1/4; times all-ones W gives 1.
    assert np.allclose(out, 1.0)


def test_matmul_identity():
    prog = Program(
        name="mm",
        tensors=(
            TensorSpec("A", (4, 4), "input"),
            TensorSpec("B", (4, 4), "input"),
            TensorSpec("O", (4, 4), "output"),
        ),
        ops=(ProgOp("matmul", ("A", "B"), "O"),),
        outputs=("O",),
    )
    b = np.arange(16.0).reshape(4, 4)
    out = run_program(prog, {"A": np.eye(4), "B": b})["O"]
    assert np.array_equal(out, b)


def test_softmax_matmul_hand_value():
    prog = softmax_matmul_program(2, 2, 1)
    out = run_program(prog, {"X": np.zeros((2, 2)), "W": np.array([[1.0], [2.0]])})["O"]
    assert np.allclose(out, [[1.5], [1.5]])


def test_run_concrete_matches_program_on_large_graph():
    prog = softmax_matmul_program(128, 128, 32)
    graph = softmax_matmul_block(prog)
    concrete = instantiate(graph, known_good_mapping(graph), {"x": 4, "i": 4})
    rng = np.random.default_rng(7)
    inputs = {"X": rng.standard_normal((128, 128)), "W": rng.standard_normal((128, 32))}
    got = run_concrete(concrete, inputs)["O"]
    expected = run_program(prog, inputs)["O"]
    assert rel_err(got, expected) < 1e-12


def test_run_concrete_unit_sizes_equals_program():
    prog = softmax_matmul_program(64, 64, 16)
    graph = softmax_matmul_block(prog)
    concrete = instantiate(graph, known_good_mapping(graph), {"x": 1, "i": 1})
    rng = np.random.default_rng(3)
    inputs = {"X": rng.standard_normal((64, 64)), "W": rng.standard_normal((64, 16))}
    got = run_concrete(concrete, inputs)["O"]
    expected = run_program(prog, inputs)["O"]
    assert rel_err(got, expected) < 1e-12


def exp_graph(rows=4, cols=4):
    prog = Program(
        name="just_exp",
        tensors=(
            TensorSpec("I", (rows, cols), "input"),
            TensorSpec("O", (rows, cols), "output"),
        ),
        ops=(ProgOp("exp", ("I",), "O"),),
        outputs=("O",),
    )
    block = BlockGraph(
        grid=grid_dims(1),
        loop=LOOP_DIM,
        nodes=(
            BlockNode(0, "input", tensor="I"),
            BlockNode(1, "exp", (0,)),
            BlockNode(2, "output", (1,), tensor="O"),
        ),
    )
    graph = SymbolicGraph(program=prog, block=block, store=ConstraintStore())
    mapping = {v: 0 for v in graph.mapping_vars()}
    mapping[MapVar("I", 0, "x")] = 1
    mapping[MapVar("O", 0, "x")] = 1
    return graph, mapping


def test_single_exp_graph_row_blocks():
    graph, mapping = exp_graph()
    concrete = instantiate(graph, mapping, {"x": 2, "i": 1})
    x = np.arange(16.0).reshape(4, 4)
    out = run_concrete(concrete, {"I": x})["O"]
    assert np.allclose(out, np.exp(x))


def test_write_conflict_detected():
    graph, mapping = exp_graph()
    bad = {v: 0 for v in mapping}  # fully replicated: both blocks write all of O
    concrete = instantiate(graph, mapping, {"x": 2, "i": 1})
    forced = type(concrete)(concrete.graph, bad, concrete.params, concrete.shapes)
    with pytest.raises(WriteConflictError):
        run_concrete(forced, {"I": np.ones((4, 4))})


def test_random_equiv_pass_and_fail(desk_graph):
    good = known_good_mapping(desk_graph)
    verdict = random_equiv_test(desk_graph, good, trials=5, param_samples=2, seed=1)
    assert verdict.ok and verdict.max_rel_err <= 1e-9

    bad = dict(good)
    bad[MapVar("W", 0, "i")] = 0  # stale contraction: W no longer loop-split
    bad[MapVar("W", 1, "x")] = 0
    verdict = random_equiv_test(desk_graph, bad, trials=5, param_samples=2, seed=1)
    assert not verdict.ok


def test_random_equiv_zero_trials_vacuous(desk_graph):
    verdict = random_equiv_test(
        desk_graph, known_good_mapping(desk_graph), trials=0, param_samples=1, seed=0
    )
    assert verdict.ok and verdict.max_rel_err == 0.0
