"""Exact dense-tensor reference interpreter.

Programs and concrete block graphs run on plain numpy arrays (fp64 by
default) so every search result can be cross-checked numerically.  Block
execution follows the launch semantics: one pass per grid coordinate, an
inner loop over the single loop dimension, accumulators summing across
iterations, and everything downstream of an accumulator running once after
the loop.  Partitioned loads take contiguous chunks; savers stitch tiles
back into the global output and detect overlapping writes.
"""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, SymfuseError, WriteConflictError
from .graph import (
    ACCUM,
    INPUT,
    OUTPUT,
    ConcreteGraph,
    Program,
    SymbolicGraph,
    saver_var_tensor,
    template_key,
)
from .symdim import MapVar

DenseTensor = np.ndarray  # dims + row-major flat data; numpy is exactly that


def _silu(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = x[pos] / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = x[~pos] * ex / (1.0 + ex)
    return out


def apply_op(kind, args, axis=None, const=None):
    if kind == "exp":
        return np.exp(args[0])
    if kind == "silu":
        return _silu(args[0])
    if kind == "square":
        return np.square(args[0])
    if kind == "sqrt":
        return np.sqrt(args[0])
    if kind == "scale":
        return float(const) * args[0]
    if kind == "sum":
        return args[0].sum(axis=axis, keepdims=True)
    if kind == "matmul":
        return args[0] @ args[1]
    if kind == "div":
        return args[0] / args[1]
    if kind == "mul":
        return args[0] * args[1]
    if kind == "add":
        return args[0] + args[1]
    raise ShapeError(f"unknown op kind {kind}")


def run_program(program: Program, inputs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    values: dict[str, np.ndarray] = {}
    for name in program.inputs:
        if name not in inputs:
            raise ShapeError(f"missing input {name}")
        arr = np.asarray(inputs[name])
        spec = program.spec(name)
        if arr.shape != spec.dims:
            raise ShapeError(f"{name}: got {arr.shape}, expected {spec.dims}")
        values[name] = arr
    for op in program.ops:
        values[op.out] = apply_op(
            op.kind, [values[nm] for nm in op.inputs], op.axis, op.const
        )
    return {name: values[name] for name in program.outputs}


# ---------------------------------------------------------------------------
# Concrete block-graph execution


def _tile_bounds(size, splits):
    """Nested contiguous chunking: each (index, count) narrows the extent."""
    start, width = 0, size
    for index, count in splits:
        if width % count:
            raise ShapeError(f"extent {width} not divisible by {count}")
        width //= count
        start += index * width
    return start, width


def _loader_tile(arr, spec, graph, mapping, params, coord, j, n_loop):
    block = graph.block
    slices = []
    for d, size in enumerate(spec.dims):
        splits = []
        for p in block.grid:
            if size > 1 and mapping.get(MapVar(spec.name, d, p.name), 0):
                splits.append((coord[p.name], params[p.name]))
        if size > 1 and mapping.get(MapVar(spec.name, d, block.loop.name), 0):
            splits.append((j, n_loop))
        start, width = _tile_bounds(size, splits)
        slices.append(slice(start, start + width))
    return arr[tuple(slices)]


def _saver_region(spec, varname, graph, mapping, params, coord):
    slices = []
    for d, size in enumerate(spec.dims):
        splits = []
        for p in graph.block.grid:
            if size > 1 and mapping.get(MapVar(varname, d, p.name), 0):
                splits.append((coord[p.name], params[p.name]))
        start, width = _tile_bounds(size, splits)
        slices.append(slice(start, start + width))
    return tuple(slices)


def run_concrete(
    concrete: ConcreteGraph,
    inputs: dict[str, np.ndarray],
    dtype=np.float64,
    tile_dump: dict | None = None,
) -> dict[str, np.ndarray]:
    graph = concrete.graph
    block = graph.block
    program = graph.program
    mapping, params = concrete.mapping, concrete.params

    arrays = {}
    for name in program.inputs:
        arr = np.asarray(inputs[name], dtype=dtype)
        spec = program.spec(name)
        if arr.shape != spec.dims:
            raise ShapeError(f"{name}: got {arr.shape}, expected {spec.dims}")
        arrays[name] = arr

    outputs = {}
    written = {}
    for name in program.outputs:
        spec = program.spec(name)
        outputs[name] = np.full(spec.dims, np.nan, dtype=dtype)
        written[name] = np.zeros(spec.dims, dtype=bool)

    n_loop = params[block.loop.name]
    body = block.body_nodes()
    grid_ranges = [range(params[p.name]) for p in block.grid]

    for coords in itertools.product(*grid_ranges):
        coord = {p.name: c for p, c in zip(block.grid, coords)}
        env: dict[int, np.ndarray] = {}
        acc: dict[int, np.ndarray] = {}
        for j in range(n_loop):
            for node in block.nodes:
                if node.idx not in body:
                    continue
                if node.kind == INPUT:
                    env[node.idx] = _loader_tile(
                        arrays[node.tensor], program.spec(node.tensor),
                        graph, mapping, params, coord, j, n_loop,
                    )
                elif node.kind == ACCUM:
                    val = env[node.inputs[0]]
                    if node.idx not in acc:
                        acc[node.idx] = np.zeros_like(val)
                    acc[node.idx] = acc[node.idx] + val
                    env[node.idx] = acc[node.idx]
                else:
                    env[node.idx] = apply_op(
                        node.kind, [env[k] for k in node.inputs], node.axis, node.const
                    )
        # Epilogue: runs once; loop-varying loaders land on their last tile.
        for node in block.nodes:
            if node.idx in body:
                continue
            if node.kind == INPUT:
                env[node.idx] = _loader_tile(
                    arrays[node.tensor], program.spec(node.tensor),
                    graph, mapping, params, coord, max(n_loop - 1, 0), n_loop,
                )
            elif node.kind == OUTPUT:
                spec = program.spec(node.tensor)
                varname = saver_var_tensor(program, node.tensor)
                region = _saver_region(spec, varname, graph, mapping, params, coord)
                tile = env[node.inputs[0]]
                target = outputs[node.tensor][region]
                if tile.shape != target.shape:
                    raise ShapeError(
                        f"saver {node.tensor}: tile {tile.shape} vs region {target.shape}"
                    )
                if written[node.tensor][region].any():
                    raise WriteConflictError(
                        f"{node.tensor}: block {coords} overwrote cells"
                    )
                outputs[node.tensor][region] = tile
                written[node.tensor][region] = True
            else:
                env[node.idx] = apply_op(
                    node.kind, [env[k] for k in node.inputs], node.axis, node.const
                )
        if tile_dump is not None:
            tile_dump[coords] = {idx: np.array(v) for idx, v in env.items()}
    return outputs


# ---------------------------------------------------------------------------
# Random equivalence testing


@dataclass
class EquivVerdict:
    ok: bool
    max_rel_err: float
    trials: int
    params_tested: list = field(default_factory=list)
    note: str = ""


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape or not np.isfinite(a).all():
        return float("inf")
    return float(np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(b))))


def candidate_id(graph: SymbolicGraph, mapping: dict) -> int:
    return zlib.crc32(template_key(graph, mapping).encode())


def random_equiv_test(
    graph: SymbolicGraph,
    mapping: dict,
    program: Program | None = None,
    trials: int = 20,
    param_samples: int = 3,
    tol: float = 1e-9,
    seed: int = 0,
    params_list: list[dict[str, int]] | None = None,
    budget_bytes: int | None = None,  # None: divisibility-only space
) -> EquivVerdict:
    """Compare block execution against the program on random normal inputs
    over several distinct valid size assignments."""
    from .graph import instantiate
    from .tuner import enumerate_param_space

    program = program or graph.program
    if params_list is None:
        params_list = enumerate_param_space(graph, mapping, budget_bytes=budget_bytes)
    if not params_list:
        return EquivVerdict(False, float("inf"), 0, note="empty parameter space")
    rng = np.random.default_rng([seed, candidate_id(graph, mapping)])
    chosen = list(params_list)
    rng.shuffle(chosen)
    chosen = chosen[:param_samples]

    worst = 0.0
    cid = candidate_id(graph, mapping)
    for params in chosen:
        try:
            concrete = instantiate(graph, mapping, params)
        except SymfuseError as exc:
            return EquivVerdict(False, float("inf"), 0, [params], f"instantiate: {exc}")
        for t in range(trials):
            trial_rng = np.random.default_rng([seed, cid, t])
            inputs = {
                name: trial_rng.standard_normal(program.spec(name).dims)
                for name in program.inputs
            }
            expected = run_program(program, inputs)
            try:
                got = run_concrete(concrete, inputs)
            except SymfuseError as exc:
                return EquivVerdict(False, float("inf"), t, [params], f"run: {exc}")
            for name in program.outputs:
                worst = max(worst, rel_err(got[name], expected[name]))
            if worst > tol:
                return EquivVerdict(False, worst, t + 1, chosen, "mismatch")
    return EquivVerdict(True, worst, trials, chosen)
