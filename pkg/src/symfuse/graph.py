"""Two-level tensor-program representation.

A kernel-level program (named tensors + primitive ops) is implemented by a
single fused custom operator whose body is a block graph: input loaders,
block-level compute, and output savers, executed by a grid of blocks that
each run one for-loop.  How loader/saver tensors are split across the grid
axes and the loop is captured by Boolean mapping variables; the grid and
loop sizes stay symbolic until tuning.

Data dimensions are indexed from the left (0 = row of a matrix).  All
original tensor extents are powers of two so that partitioning always
divides evenly once the size symbols are powers of two.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import (
    ConstraintError,
    DeserializeError,
    DivisibilityError,
    ShapeError,
)
from .symdim import (
    ConstraintStore,
    MapVar,
    ParamSym,
    SymDimExpr,
    dim_expr,
    evaluate_int,
)

GRID_NAMES = ("x", "y", "z")
LOOP_NAME = "i"


def saver_var_tensor(program: "Program", name: str) -> str:
    """Namespace for a saver's mapping variables.

    Qualified only when an output aliases an input name (identity-style
    workloads), so the usual case keeps the plain tensor name.
    """
    return name if name not in program.inputs else f"{name}:out"

# Block-level operator kinds.
INPUT, OUTPUT = "input", "output"
MATMUL, EXP, SILU, SQUARE, SQRT, DIV, MUL, ADD = (
    "matmul",
    "exp",
    "silu",
    "square",
    "sqrt",
    "div",
    "mul",
    "add",
)
SUM, ACCUM, SCALE = "sum", "accum", "scale"

UNARY_KINDS = (EXP, SILU, SQUARE, SQRT)
BINARY_KINDS = (DIV, MUL, ADD)
COMPUTE_KINDS = UNARY_KINDS + BINARY_KINDS + (MATMUL, SUM, ACCUM, SCALE)


@dataclass(frozen=True, order=True)
class ParallelDim:
    name: str
    kind: str  # "grid" | "forloop"

    @property
    def sym(self) -> ParamSym:
        return ParamSym(self.name)

    def __repr__(self):
        return f"{self.name}:{self.kind}"


def grid_dims(k: int) -> tuple[ParallelDim, ...]:
    if not 1 <= k <= len(GRID_NAMES):
        raise ValueError(f"grid rank {k} outside 1..{len(GRID_NAMES)}")
    return tuple(ParallelDim(GRID_NAMES[j], "grid") for j in range(k))


LOOP_DIM = ParallelDim(LOOP_NAME, "forloop")


@dataclass(frozen=True)
class TensorSpec:
    name: str
    dims: tuple[int, ...]
    role: str  # "input" | "intermediate" | "output"

    def __post_init__(self):
        if len(self.dims) < 1:
            raise ShapeError(f"{self.name}: rank must be >= 1")
        for d in self.dims:
            if d < 1 or d & (d - 1):
                raise ShapeError(f"{self.name}: size {d} is not a power of two")

    @property
    def rank(self) -> int:
        return len(self.dims)


# ---------------------------------------------------------------------------
# Kernel-level program


@dataclass(frozen=True)
class ProgOp:
    kind: str
    inputs: tuple[str, ...]
    out: str
    axis: Optional[int] = None  # summed data dim, left-indexed
    const: Optional[Fraction] = None  # scale factor


@dataclass(frozen=True)
class Program:
    name: str
    tensors: tuple[TensorSpec, ...]
    ops: tuple[ProgOp, ...]
    outputs: tuple[str, ...]

    def spec(self, name: str) -> TensorSpec:
        for t in self.tensors:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def inputs(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tensors if t.role == "input")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Shapes of every named value, derived op by op."""
        shapes = {t.name: t.dims for t in self.tensors if t.role == "input"}
        for op in self.ops:
            ins = []
            for nm in op.inputs:
                if nm not in shapes:
                    raise ShapeError(f"{op.out}: input {nm} not yet defined")
                ins.append(shapes[nm])
            shapes[op.out] = _op_shape(op.kind, ins, op.axis, out=op.out)
        for name in self.outputs:
            if name not in shapes:
                raise ShapeError(f"output {name} never produced")
            declared = self.spec(name).dims
            if shapes[name] != declared:
                raise ShapeError(
                    f"output {name}: produced {shapes[name]}, declared {declared}"
                )
        return shapes


def _op_shape(kind, ins, axis=None, out="?"):
    if kind in UNARY_KINDS or kind == SCALE or kind == ACCUM:
        return ins[0]
    if kind in BINARY_KINDS:
        a, b = ins
        if len(a) != len(b):
            raise ShapeError(f"{out}: rank mismatch {a} vs {b}")
        res = []
        for da, db in zip(a, b):
            if da == db or db == 1:
                res.append(da)
            elif da == 1:
                res.append(db)
            else:
                raise ShapeError(f"{out}: sizes {da} vs {db} do not broadcast")
        return tuple(res)
    if kind == MATMUL:
        a, b = ins
        if len(a) < 2 or len(a) != len(b):
            raise ShapeError(f"{out}: matmul needs equal ranks >= 2, got {a} x {b}")
        if a[-1] != b[-2] or a[:-2] != b[:-2]:
            raise ShapeError(f"{out}: matmul shapes {a} x {b} incompatible")
        return a[:-1] + (b[-1],)
    if kind == SUM:
        (a,) = ins
        if axis is None or not 0 <= axis < len(a):
            raise ShapeError(f"{out}: bad sum axis {axis} for {a}")
        return a[:axis] + (1,) + a[axis + 1 :]
    raise ShapeError(f"{out}: unknown op kind {kind}")


# ---------------------------------------------------------------------------
# Block graph


@dataclass(frozen=True)
class BlockNode:
    idx: int
    kind: str
    inputs: tuple[int, ...] = ()
    tensor: Optional[str] = None  # loader/saver: program tensor name
    axis: Optional[int] = None
    const: Optional[Fraction] = None

    def payload(self):
        # Sort-safe: every slot has a fixed comparable type.
        return (
            self.kind,
            self.tensor or "",
            -1 if self.axis is None else self.axis,
            "" if self.const is None else f"{self.const.numerator}/{self.const.denominator}",
        )


@dataclass(frozen=True)
class BlockGraph:
    grid: tuple[ParallelDim, ...]
    loop: ParallelDim
    nodes: tuple[BlockNode, ...]

    def __post_init__(self):
        for n in self.nodes:
            for j in n.inputs:
                if j >= n.idx:
                    raise ShapeError(f"node {n.idx}: forward edge to {j}")

    @property
    def pdims(self) -> tuple[ParallelDim, ...]:
        return self.grid + (self.loop,)

    def loaders(self) -> list[BlockNode]:
        return [n for n in self.nodes if n.kind == INPUT]

    def savers(self) -> list[BlockNode]:
        return [n for n in self.nodes if n.kind == OUTPUT]

    def consumers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.idx: [] for n in self.nodes}
        for n in self.nodes:
            for j in n.inputs:
                out[j].append(n.idx)
        return out

    def body_nodes(self) -> set[int]:
        """Nodes executed per loop iteration: accumulators and their ancestors."""
        body: set[int] = set()
        for n in self.nodes:
            if n.kind == ACCUM:
                stack = [n.idx]
                while stack:
                    j = stack.pop()
                    if j in body:
                        continue
                    body.add(j)
                    stack.extend(self.nodes[j].inputs)
        return body


# ---------------------------------------------------------------------------
# The searched template: block graph + symbolic mappings over a program


@dataclass(frozen=True)
class SymbolicGraph:
    program: Program
    block: BlockGraph
    store: ConstraintStore = field(compare=False)

    def mapping_vars(self) -> list[MapVar]:
        """All mapping variables in flatten order: loaders then savers, data
        dims left to right, grid dims then the loop."""
        out: list[MapVar] = []
        for node in self.block.nodes:
            if node.kind == INPUT:
                spec = self.program.spec(node.tensor)
                varname = spec.name
                pnames = [p.name for p in self.block.pdims]
            elif node.kind == OUTPUT:
                spec = self.program.spec(node.tensor)
                varname = saver_var_tensor(self.program, node.tensor)
                pnames = [p.name for p in self.block.grid]
            else:
                continue
            for d, size in enumerate(spec.dims):
                if size == 1:
                    continue  # splitting a unit extent is meaningless
                for pn in pnames:
                    out.append(MapVar(varname, d, pn))
        return out

    def param_syms(self) -> list[ParamSym]:
        return [p.sym for p in self.block.pdims]


def mapping_satisfies(graph: SymbolicGraph, mapping: dict) -> bool:
    """Re-checkable predicate: the two linear families, saver coverage, and
    every equality recorded during generation."""
    variables = graph.mapping_vars()
    if any(v not in mapping for v in variables):
        return False
    # Each parallel dim splits at most one data dim per tensor.
    by_tensor_p: dict = {}
    by_tensor_d: dict = {}
    for v in variables:
        by_tensor_p.setdefault((v.tensor, v.pdim), []).append(mapping[v])
        if v.pdim != LOOP_NAME:
            by_tensor_d.setdefault((v.tensor, v.dim), []).append(mapping[v])
    if any(sum(vals) > 1 for vals in by_tensor_p.values()):
        return False
    # Each data dim is split by at most one grid dim.
    if any(sum(vals) > 1 for vals in by_tensor_d.values()):
        return False
    # Every grid dim appears in every saver's output map.
    for saver in graph.block.savers():
        spec = graph.program.spec(saver.tensor)
        varname = saver_var_tensor(graph.program, saver.tensor)
        for p in graph.block.grid:
            hits = sum(
                mapping.get(MapVar(varname, d, p.name), 0) for d in range(spec.rank)
            )
            if hits != 1:
                return False
    # Recorded equalities and forcings.
    store = graph.store
    for v in variables:
        forced = store.value_of(v)
        if forced is not None and mapping[v] != forced:
            return False
    groups = store.classes(variables)
    for members in groups.values():
        vals = {mapping[v] for v in members}
        if len(vals) > 1:
            return False
    return True


# ---------------------------------------------------------------------------
# Shape derivation


def derive_shapes(graph: SymbolicGraph) -> dict[int, tuple[SymDimExpr, ...]]:
    """Symbolic per-block, per-iteration extents of every block tensor."""
    shapes: dict[int, tuple[SymDimExpr, ...]] = {}
    for node in graph.block.nodes:
        if node.kind == INPUT:
            shapes[node.idx] = loader_shape(graph, node)
        elif node.kind == OUTPUT:
            shapes[node.idx] = shapes[node.inputs[0]]
        else:
            ins = [shapes[j] for j in node.inputs]
            shapes[node.idx] = _sym_op_shape(node, ins)
    return shapes


def loader_shape(graph: SymbolicGraph, node: BlockNode) -> tuple[SymDimExpr, ...]:
    spec = graph.program.spec(node.tensor)
    pdims = [(p.name, p.sym) for p in graph.block.pdims]
    return tuple(
        SymDimExpr.const(size) if size == 1 else dim_expr(size, spec.name, d, pdims)
        for d, size in enumerate(spec.dims)
    )


def saver_target_shape(graph: SymbolicGraph, saver: BlockNode) -> tuple[SymDimExpr, ...]:
    """Extent the saver's input must have: output size over its grid factor."""
    spec = graph.program.spec(saver.tensor)
    varname = saver_var_tensor(graph.program, saver.tensor)
    pdims = [(p.name, p.sym) for p in graph.block.grid]
    return tuple(
        SymDimExpr.const(size) if size == 1 else dim_expr(size, varname, d, pdims)
        for d, size in enumerate(spec.dims)
    )


_LIT_ONE = SymDimExpr.const(1)


def _is_one(e: SymDimExpr) -> bool:
    return e == _LIT_ONE


def _sym_op_shape(node: BlockNode, ins) -> tuple[SymDimExpr, ...]:
    kind = node.kind
    if kind in UNARY_KINDS or kind == SCALE or kind == ACCUM:
        return ins[0]
    if kind in BINARY_KINDS:
        a, b = ins
        if len(a) != len(b):
            raise ShapeError(f"node {node.idx}: rank mismatch")
        return tuple(eb if _is_one(ea) else ea for ea, eb in zip(a, b))
    if kind == MATMUL:
        a, b = ins
        if len(a) < 2 or len(a) != len(b):
            raise ShapeError(f"node {node.idx}: matmul needs equal ranks >= 2")
        return a[:-1] + (b[-1],)
    if kind == SUM:
        (a,) = ins
        if node.axis is None or not 0 <= node.axis < len(a):
            raise ShapeError(f"node {node.idx}: bad sum axis")
        return a[: node.axis] + (_LIT_ONE,) + a[node.axis + 1 :]
    raise ShapeError(f"node {node.idx}: unknown kind {kind}")


# ---------------------------------------------------------------------------
# Concrete instantiation


@dataclass(frozen=True)
class ConcreteGraph:
    graph: SymbolicGraph
    mapping: dict
    params: dict[str, int]
    shapes: dict[int, tuple[int, ...]]


def instantiate(graph: SymbolicGraph, mapping: dict, params: dict[str, int]) -> ConcreteGraph:
    for name, v in params.items():
        if v < 1 or v & (v - 1):
            raise DivisibilityError(f"size of {name} must be a positive power of two, got {v}")
    if not mapping_satisfies(graph, mapping):
        raise ConstraintError("mapping violates the graph's constraints")
    assignment: dict = dict(mapping)
    for p in graph.block.pdims:
        if p.name not in params:
            raise ConstraintError(f"missing size for parallel dim {p.name}")
        assignment[p.sym] = params[p.name]
    sym_shapes = derive_shapes(graph)
    shapes: dict[int, tuple[int, ...]] = {}
    for idx, exprs in sym_shapes.items():
        dims = tuple(evaluate_int(e, assignment) for e in exprs)
        if any(d < 1 for d in dims):
            raise DivisibilityError(f"node {idx}: shape {dims} not positive")
        shapes[idx] = dims
    # Saver tiles must agree with the declared output extents.
    for saver in graph.block.savers():
        target = tuple(
            evaluate_int(e, assignment) for e in saver_target_shape(graph, saver)
        )
        if shapes[saver.idx] != target:
            raise DivisibilityError(
                f"saver {saver.tensor}: tile {shapes[saver.idx]} != target {target}"
            )
    return ConcreteGraph(graph, dict(mapping), dict(params), shapes)


# ---------------------------------------------------------------------------
# Canonical serialization

_PAYLOAD_VERSION = 1


def _canonical_nodes(block: BlockGraph) -> list[BlockNode]:
    """Renumber nodes into a canonical topological order.

    Structurally identical nodes collapse (they compute the same value), so
    keys are unique and the order is independent of construction order.
    """
    keys: dict[int, tuple] = {}
    canon_of: dict[int, int] = {}
    by_key: dict[tuple, int] = {}
    depth: dict[int, int] = {}
    for n in block.nodes:
        ins = tuple(canon_of[j] for j in n.inputs)
        key = (n.payload(), tuple(keys[j] for j in ins))
        if key in by_key:
            canon_of[n.idx] = by_key[key]
            continue
        canon_of[n.idx] = n.idx
        by_key[key] = n.idx
        keys[n.idx] = key
        depth[n.idx] = 1 + max((depth[j] for j in ins), default=0)
    live = sorted(by_key.values(), key=lambda i: (depth[i], keys[i]))
    renum = {old: new for new, old in enumerate(live)}
    return [
        BlockNode(
            idx=renum[old],
            kind=block.nodes[old].kind,
            inputs=tuple(renum[canon_of[j]] for j in block.nodes[old].inputs),
            tensor=block.nodes[old].tensor,
            axis=block.nodes[old].axis,
            const=block.nodes[old].const,
        )
        for old in live
    ]


def _node_dict(n: BlockNode) -> dict:
    d = {"id": n.idx, "op": n.kind, "in": list(n.inputs)}
    if n.tensor is not None:
        d["tensor"] = n.tensor
    if n.axis is not None:
        d["axis"] = n.axis
    if n.const is not None:
        d["const"] = [n.const.numerator, n.const.denominator]
    return d


def structure_dict(graph: SymbolicGraph) -> dict:
    return {
        "version": _PAYLOAD_VERSION,
        "workload": graph.program.name,
        "grid": [p.name for p in graph.block.grid],
        "loop": graph.block.loop.name,
        "nodes": [_node_dict(n) for n in _canonical_nodes(graph.block)],
    }


def template_key(graph: SymbolicGraph, mapping: Optional[dict] = None) -> str:
    """Identity of a template: structure plus (optionally) its mapping.

    Graphs that differ only in the launch-size values share a key.
    """
    payload = structure_dict(graph)
    if mapping is not None:
        payload["mapping"] = sorted(
            f"{v.tensor}.{v.dim}.{v.pdim}" for v, bit in mapping.items() if bit
        )
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def serialize(graph: SymbolicGraph, mapping: Optional[dict] = None,
              params: Optional[dict] = None) -> str:
    payload = structure_dict(graph)
    if mapping is not None:
        payload["mapping"] = sorted(
            f"{v.tensor}.{v.dim}.{v.pdim}" for v, bit in mapping.items() if bit
        )
    if params is not None:
        payload["params"] = {k: params[k] for k in sorted(params)}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def deserialize(text: str, program: Program) -> tuple[SymbolicGraph, Optional[dict], Optional[dict]]:
    try:
        payload = json.loads(text)
        nodes = []
        for nd in payload["nodes"]:
            nodes.append(
                BlockNode(
                    idx=nd["id"],
                    kind=nd["op"],
                    inputs=tuple(nd["in"]),
                    tensor=nd.get("tensor"),
                    axis=nd.get("axis"),
                    const=Fraction(*nd["const"]) if "const" in nd else None,
                )
            )
        block = BlockGraph(
            grid=tuple(ParallelDim(nm, "grid") for nm in payload["grid"]),
            loop=ParallelDim(payload["loop"], "forloop"),
            nodes=tuple(nodes),
        )
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise DeserializeError(str(exc)) from exc
    graph = SymbolicGraph(program=program, block=block, store=ConstraintStore())
    mapping = None
    if "mapping" in payload:
        on = set(payload["mapping"])
        mapping = {
            v: (1 if f"{v.tensor}.{v.dim}.{v.pdim}" in on else 0)
            for v in graph.mapping_vars()
        }
    params = payload.get("params")
    return graph, mapping, params


# ---------------------------------------------------------------------------
# DOT export


def to_dot(graph: SymbolicGraph, mapping: Optional[dict] = None) -> str:
    shapes = derive_shapes(graph)
    lines = ["digraph block {", "  rankdir=LR;"]
    for n in graph.block.nodes:
        shape = ", ".join(_short(e) for e in shapes[n.idx])
        name = n.kind if n.tensor is None else f"{n.kind} {n.tensor}"
        if n.kind == SUM:
            name += f" d{n.axis}"
        label = f"{name}\\n[{shape}]"
        lines.append(f'  n{n.idx} [label="{label}"];')
    for n in graph.block.nodes:
        for j in n.inputs:
            lines.append(f"  n{j} -> n{n.idx};")
    lines.append("}")
    return "\n".join(lines)


def _short(e: SymDimExpr) -> str:
    text = repr(e)
    return text if len(text) <= 40 else text[:37] + "..."
