"""Launch-size tuning for verified templates.

The parameter space per graph is every power-of-two assignment of the grid
and loop sizes that (a) divides all partitioned extents and (b) keeps the
per-block working set inside the shared-memory budget.  Budget accounting
uses 2-byte elements (the compiled-kernel storage width) even though the
reference interpreter computes in fp64.  Scoring is pluggable: a
deterministic analytical cost model by default, or wall-clock timing of the
reference interpreter.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from itertools import product
from math import prod

import numpy as np

from .errors import EmptyParamSpaceError, NonIntegerError
from .graph import (
    ACCUM,
    INPUT,
    MATMUL,
    OUTPUT,
    ConcreteGraph,
    SymbolicGraph,
    derive_shapes,
    instantiate,
    saver_var_tensor,
)
from .symdim import MapVar, evaluate_int

DEFAULT_BUDGET = 164 * 1024  # bytes of shared memory per block
ELEMENT_BYTES = 2


def _active_extents(graph: SymbolicGraph, mapping: dict, pname: str) -> list[int]:
    """Original sizes of every data dim this parallel dim splits."""
    out = []
    for node in graph.block.nodes:
        if node.kind == INPUT:
            varname = node.tensor
        elif node.kind == OUTPUT:
            varname = saver_var_tensor(graph.program, node.tensor)
        else:
            continue
        spec = graph.program.spec(node.tensor)
        for d, size in enumerate(spec.dims):
            if size > 1 and mapping.get(MapVar(varname, d, pname), 0):
                out.append(size)
    return out


def concrete_shapes(graph: SymbolicGraph, mapping: dict, params: dict[str, int]):
    assignment: dict = dict(mapping)
    for p in graph.block.pdims:
        assignment[p.sym] = params[p.name]
    return {
        idx: tuple(evaluate_int(e, assignment) for e in exprs)
        for idx, exprs in derive_shapes(graph).items()
    }


def smem_usage(graph: SymbolicGraph, mapping: dict, params: dict[str, int]) -> int:
    """Bytes resident per block: every node's tile, savers counting the tile
    they write (conservative sum, no liveness reuse)."""
    shapes = concrete_shapes(graph, mapping, params)
    return sum(prod(s) for s in shapes.values()) * ELEMENT_BYTES


def enumerate_param_space(
    graph: SymbolicGraph,
    mapping: dict,
    budget_bytes: int | None = DEFAULT_BUDGET,
) -> list[dict[str, int]]:
    """All valid assignments, lexicographic in (grid dims..., loop).

    budget_bytes=None drops the shared-memory constraint (divisibility
    only), which is the right space for correctness testing."""
    names = [p.name for p in graph.block.pdims]
    candidates = []
    for name in names:
        extents = _active_extents(graph, mapping, name)
        if not extents:
            candidates.append([1])  # splits nothing; larger values are inert
            continue
        cap = min(extents)
        vals = []
        v = 1
        while v <= cap:
            vals.append(v)
            v *= 2
        candidates.append(vals)
    space = []
    for combo in product(*candidates):
        params = dict(zip(names, combo))
        try:
            usage = smem_usage(graph, mapping, params)  # also checks divisibility
        except NonIntegerError:
            continue  # e.g. grid and loop splits jointly exceeding an extent
        if budget_bytes is None or usage <= budget_bytes:
            space.append(params)
    return space


# ---------------------------------------------------------------------------
# Scoring backends


@dataclass(frozen=True)
class CostModel:
    """score = alpha * global traffic bytes + beta * flops / block count."""

    alpha: float = 1.0
    beta: float = 1.0


def cost_stats(concrete: ConcreteGraph) -> dict[str, float]:
    graph = concrete.graph
    block = graph.block
    params = concrete.params
    blocks = prod(params[p.name] for p in block.grid)
    n_loop = params[block.loop.name]
    body = block.body_nodes()

    bytes_loaded = 0.0
    bytes_stored = 0.0
    flops = 0.0
    for node in block.nodes:
        tile = prod(concrete.shapes[node.idx])
        reps = blocks * (n_loop if node.idx in body else 1)
        if node.kind == INPUT:
            bytes_loaded += tile * ELEMENT_BYTES * reps
        elif node.kind == OUTPUT:
            bytes_stored += tile * ELEMENT_BYTES * blocks
        elif node.kind == MATMUL:
            k = concrete.shapes[node.inputs[0]][-1]
            flops += 2.0 * tile * k * reps
        elif node.kind == ACCUM:
            flops += tile * reps
        else:
            flops += tile * reps
    return {
        "bytes_loaded": bytes_loaded,
        "bytes_stored": bytes_stored,
        "flops": flops,
        "block_count": float(blocks),
    }


def score_cost(concrete: ConcreteGraph, model: CostModel = CostModel()) -> float:
    s = cost_stats(concrete)
    traffic = s["bytes_loaded"] + s["bytes_stored"]
    return model.alpha * traffic + model.beta * s["flops"] / s["block_count"]


def score_interp(concrete: ConcreteGraph, trials: int = 3, seed: int = 0) -> float:
    """Median wall-clock seconds of interpreter runs on fixed random inputs."""
    from .interp import run_concrete

    program = concrete.graph.program
    rng = np.random.default_rng(seed)
    inputs = {
        name: rng.standard_normal(program.spec(name).dims) for name in program.inputs
    }
    times = []
    for _ in range(max(trials, 1)):
        t0 = time.perf_counter()
        run_concrete(concrete, inputs)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


# ---------------------------------------------------------------------------
# Tuning


@dataclass
class ProfileResult:
    params: dict[str, int]
    score: float
    equivalence_checked: bool = False


def tune(
    graph: SymbolicGraph,
    mapping: dict,
    backend: str = "cost",
    samples: int = 16,
    seed: int = 0,
    budget_bytes: int = DEFAULT_BUDGET,
    trials: int = 3,
    model: CostModel = CostModel(),
) -> ProfileResult:
    """Uniform sampling without replacement over the valid assignments;
    minimum score wins, ties to the lexicographically smallest params."""
    space = enumerate_param_space(graph, mapping, budget_bytes)
    if not space:
        raise EmptyParamSpaceError(graph.program.name)
    names = [p.name for p in graph.block.pdims]
    space.sort(key=lambda d: tuple(d[n] for n in names))
    rng = np.random.default_rng(seed)
    if samples < len(space):
        picked = sorted(rng.choice(len(space), size=samples, replace=False).tolist())
        points = [space[i] for i in picked]
    else:
        points = space

    best: tuple | None = None
    for params in points:
        concrete = instantiate(graph, mapping, params)
        if backend == "cost":
            score = score_cost(concrete, model)
        elif backend == "interp":
            score = score_interp(concrete, trials=trials, seed=seed)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        key = (score, tuple(params[n] for n in names))
        if best is None or key < best[0]:
            best = (key, params)
    return ProfileResult(params=best[1], score=best[0][0])
