"""Shared builders: the fused softmax-matmul workload and its known-good
block graph (two loaders, exp, tile sum + accumulator denominator, matmul +
accumulator numerator, division epilogue, one saver)."""

from fractions import Fraction

import pytest

from symfuse.graph import (
    ACCUM,
    DIV,
    EXP,
    INPUT,
    MATMUL,
    OUTPUT,
    SUM,
    BlockGraph,
    BlockNode,
    LOOP_DIM,
    Program,
    ProgOp,
    SymbolicGraph,
    TensorSpec,
    grid_dims,
)
from symfuse.symdim import ConstraintStore, MapVar


def softmax_matmul_program(rows=256, cols=256, out_cols=64) -> Program:
    return Program(
        name="softmax_matmul",
        tensors=(
            TensorSpec("X", (rows, cols), "input"),
            TensorSpec("W", (cols, out_cols), "input"),
            TensorSpec("O", (rows, out_cols), "output"),
        ),
        ops=(
            ProgOp("exp", ("X",), "E"),
            ProgOp("sum", ("E",), "S", axis=1),
            ProgOp("div", ("E", "S"), "P"),
            ProgOp("matmul", ("P", "W"), "O"),
        ),
        outputs=("O",),
    )


def softmax_matmul_block(program: Program, k: int = 1) -> SymbolicGraph:
    nodes = (
        BlockNode(0, INPUT, tensor="X"),
        BlockNode(1, INPUT, tensor="W"),
        BlockNode(2, EXP, (0,)),
        BlockNode(3, SUM, (2,), axis=1),
        BlockNode(4, ACCUM, (3,)),
        BlockNode(5, MATMUL, (2, 1)),
        BlockNode(6, ACCUM, (5,)),
        BlockNode(7, DIV, (6, 4)),
        BlockNode(8, OUTPUT, (7,), tensor="O"),
    )
    block = BlockGraph(grid=grid_dims(k), loop=LOOP_DIM, nodes=nodes)
    store = ConstraintStore()
    # Constraints a generator run would have collected: the matmul contraction
    # ties X's columns to W's rows, the saver ties its tile to O.
    store.equate(MapVar("X", 1, "x"), MapVar("W", 0, "x"))
    store.equate(MapVar("X", 1, "i"), MapVar("W", 0, "i"))
    store.equate(MapVar("X", 0, "x"), MapVar("O", 0, "x"))
    store.equate(MapVar("W", 1, "x"), MapVar("O", 1, "x"))
    return SymbolicGraph(program=program, block=block, store=store)


def known_good_mapping(graph: SymbolicGraph) -> dict:
    """The concrete assignment: X rows on the grid, X cols and W rows on the
    loop, output rows on the grid; everything else replicated."""
    on = {
        MapVar("X", 0, "x"),
        MapVar("X", 1, "i"),
        MapVar("W", 0, "i"),
        MapVar("O", 0, "x"),
    }
    return {v: (1 if v in on else 0) for v in graph.mapping_vars()}


@pytest.fixture
def large_program():
    return softmax_matmul_program(4096, 4096, 128)


@pytest.fixture
def large_graph(large_program):
    return softmax_matmul_block(large_program)


@pytest.fixture
def desk_program():
    return softmax_matmul_program(256, 256, 64)


@pytest.fixture
def desk_graph(desk_program):
    return softmax_matmul_block(desk_program)


def identity_program(size=256) -> Program:
    # Output aliases the single input; no compute at all.
    return Program(
        name="identity",
        tensors=(TensorSpec("X", (size,), "input"),),
        ops=(),
        outputs=("X",),
    )


FRAC = Fraction
