"""Template search: incremental construction of block graphs.

Starting from one loader per program input, the search adds compute
operators and output savers depth-first, with three filters at every step:
symbolic dimension matching (operand extents must be reconcilable for every
launch size, recording the mapping-variable equalities it needs), an
expression check at unit launch sizes (each intermediate must stay inside
the saturated closure of the target expression), and canonical-form
deduplication of partial graphs.  The two pruning filters are separately
switchable so their effect is measurable; with both off the search is the
plain brute-force enumerator the tests compare against.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import ShapeError
from .graph import (
    ACCUM,
    BINARY_KINDS,
    INPUT,
    MATMUL,
    OUTPUT,
    SCALE,
    SUM,
    UNARY_KINDS,
    BlockGraph,
    BlockNode,
    LOOP_DIM,
    Program,
    SymbolicGraph,
    grid_dims,
    loader_shape,
    saver_target_shape,
    saver_var_tensor,
    template_key,
    _sym_op_shape,
    _is_one,
)
from .symdim import ConstraintStore, MapVar, match_dims
from .verifier import SaturationLimits, SubtermChecker, build_axioms, encode_program
from .verifier.terms import Expr, sum_, var

_DEFAULT_ORDER = ("exp", "silu", "square", "sqrt", "scale", "sum", "accum", "matmul", "div", "mul", "add")


@dataclass(frozen=True)
class SearchConfig:
    max_block_ops: int = 10
    num_grid_dims: int = 1
    operator_whitelist: Optional[tuple[str, ...]] = None
    dedup: bool = True
    prune_dims: bool = True
    prune_exprs: bool = True
    node_budget: int = 10**7
    time_budget_s: Optional[float] = None
    concrete_imap: bool = False
    concrete_fmap: bool = False
    concrete_omap: bool = False


@dataclass
class SearchStats:
    explored: int = 0
    pruned_dim: int = 0
    pruned_expr: int = 0
    dedup_hits: int = 0
    emitted: int = 0
    budget_exhausted: bool = False


@dataclass
class GenResult:
    graphs: list[SymbolicGraph]
    stats: SearchStats


class Pruned:
    """Extension rejection with its reason ('dim' or 'expr')."""

    def __init__(self, reason: str):
        self.reason = reason

    def __repr__(self):
        return f"Pruned({self.reason})"


@dataclass
class PartialGraph:
    program: Program
    grid: tuple
    nodes: tuple[BlockNode, ...]
    store: ConstraintStore
    shapes: tuple
    exprs: tuple[Expr, ...]
    consumed: tuple[bool, ...]
    accum_anc: frozenset[int]
    outputs_done: int
    doomed: bool = False
    forced_key: str = ""

    def graph(self) -> SymbolicGraph:
        return SymbolicGraph(
            program=self.program,
            block=BlockGraph(grid=self.grid, loop=LOOP_DIM, nodes=self.nodes),
            store=self.store,
        )

    def structure_key(self) -> str:
        return self.forced_key + template_key(self.graph())


def _whitelist(program: Program, config: SearchConfig) -> tuple[str, ...]:
    if config.operator_whitelist is not None:
        allowed = set(config.operator_whitelist)
    else:
        allowed = {op.kind for op in program.ops}
        allowed.add(ACCUM)
        if SUM in allowed or any(op.kind == "sum" for op in program.ops):
            allowed.add(SUM)
    return tuple(k for k in _DEFAULT_ORDER if k in allowed)


def _scale_consts(program: Program) -> list[Fraction]:
    seen = []
    for op in program.ops:
        if op.kind == SCALE and op.const not in seen:
            seen.append(op.const)
    return seen


def _match_into(store: ConstraintStore, a, b):
    """Apply one dimension match; 'ok', 'dim' (irreconcilable), or 'conflict'."""
    out = match_dims(a, b)
    if isinstance(out, tuple):
        return "ok" if store.add(out) else "conflict"
    return "dim"


def _loader_choices(program, name, grid, concrete_imap, concrete_fmap):
    """Forced-assignment branches for one loader under the ablation flags."""
    spec = program.spec(name)
    dims = [d for d, size in enumerate(spec.dims) if size > 1]
    imap_opts = [None]
    if concrete_imap:
        imap_opts = []
        for combo in itertools.product([None] + dims, repeat=len(grid)):
            chosen = [c for c in combo if c is not None]
            if len(set(chosen)) != len(chosen):
                continue  # one data dim cannot take two grid dims
            imap_opts.append(combo)
    fmap_opts = [None]
    if concrete_fmap:
        fmap_opts = [(c,) for c in [None] + dims]
    out = []
    for im in imap_opts:
        for fm in fmap_opts:
            forced: dict[MapVar, int] = {}
            if im is not None:
                for p, d_on in zip(grid, im):
                    for d in dims:
                        forced[MapVar(name, d, p.name)] = 1 if d == d_on else 0
            if fm is not None:
                for d in dims:
                    forced[MapVar(name, d, "i")] = 1 if d == fm[0] else 0
            out.append(forced)
    return out


def _saver_choices(program, name, grid, concrete_omap):
    spec = program.spec(name)
    varname = saver_var_tensor(program, name)
    dims = [d for d, size in enumerate(spec.dims) if size > 1]
    if not concrete_omap:
        return [{}]
    out = []
    for combo in itertools.product(dims, repeat=len(grid)):
        if len(set(combo)) != len(combo):
            continue
        forced = {}
        for p, d_on in zip(grid, combo):
            for d in dims:
                forced[MapVar(varname, d, p.name)] = 1 if d == d_on else 0
        out.append(forced)
    return out


def _apply_forced(store: ConstraintStore, forced: dict) -> bool:
    for v, bit in forced.items():
        ok = store.force_one(v) if bit else store.force_zero(v)
        if not ok:
            return False
    return True


def _forced_tag(forced: dict) -> str:
    if not forced:
        return ""
    bits = ",".join(f"{v.tensor}.{v.dim}.{v.pdim}={bit}" for v, bit in sorted(forced.items()))
    return f"[{bits}]"


class Generator:
    def __init__(self, program: Program, config: SearchConfig, axioms=None):
        floor = len(program.inputs) + len(program.outputs)
        if config.max_block_ops < floor:
            raise ValueError(
                f"max_block_ops={config.max_block_ops} below the "
                f"{floor} loaders+savers this program needs"
            )
        self.program = program
        self.config = config
        self.grid = grid_dims(config.num_grid_dims)
        self.whitelist = _whitelist(program, config)
        self.scale_consts = _scale_consts(program)
        self.stats = SearchStats()
        self.targets = encode_program(program)
        self.axioms = axioms or build_axioms(config.num_grid_dims)
        self.checker = (
            SubtermChecker(list(self.targets.values()), self.axioms,
                           SaturationLimits(max_nodes=20_000, max_iters=20, timeout_s=30.0))
            if config.prune_exprs
            else None
        )
        self.seen: set[str] = set()
        self.emitted_keys: set[str] = set()
        self.out: list[SymbolicGraph] = []
        self.deadline = (
            time.monotonic() + config.time_budget_s if config.time_budget_s else None
        )

    # -- state construction -------------------------------------------------

    def initial_states(self) -> list[PartialGraph]:
        cfg = self.config
        per_loader = [
            _loader_choices(self.program, name, self.grid, cfg.concrete_imap, cfg.concrete_fmap)
            for name in self.program.inputs
        ]
        states = []
        for combo in itertools.product(*per_loader):
            store = ConstraintStore()
            ok = True
            tag = ""
            for forced in combo:
                if not _apply_forced(store, forced):
                    ok = False
                    break
                tag += _forced_tag(forced)
            if not ok:
                continue
            nodes = []
            shapes = []
            exprs = []
            for idx, name in enumerate(self.program.inputs):
                node = BlockNode(idx, INPUT, tensor=name)
                nodes.append(node)
                exprs.append(var(name))
            state = PartialGraph(
                program=self.program,
                grid=self.grid,
                nodes=tuple(nodes),
                store=store,
                shapes=(),
                exprs=tuple(exprs),
                consumed=tuple(False for _ in nodes),
                accum_anc=frozenset(),
                outputs_done=0,
                forced_key=tag,
            )
            # Loader shapes need the finished graph skeleton.
            g = state.graph()
            state.shapes = tuple(loader_shape(g, n) for n in nodes)
            states.append(state)
            self.stats.explored += 1
        return states

    # -- extensions -----------------------------------------------------------

    def try_extend(self, state: PartialGraph, kind: str, inputs: tuple[int, ...],
                   axis=None, const=None):
        """Extended partial on success, Pruned(reason) otherwise, None when
        the extension is structurally inapplicable."""
        shapes = state.shapes
        ranks = [len(shapes[j]) for j in inputs]
        store = state.store.copy()
        doomed = state.doomed

        if kind == MATMUL:
            if ranks[0] < 2 or ranks[0] != ranks[1]:
                return None
            checks = [(shapes[inputs[0]][-1], shapes[inputs[1]][-2])]
            checks += [
                (shapes[inputs[0]][d], shapes[inputs[1]][d]) for d in range(ranks[0] - 2)
            ]
        elif kind in BINARY_KINDS:
            if ranks[0] != ranks[1]:
                return None
            checks = []
            for ea, eb in zip(shapes[inputs[0]], shapes[inputs[1]]):
                if _is_one(ea) or _is_one(eb):
                    continue  # unit extents broadcast
                checks.append((ea, eb))
        elif kind == SUM:
            if axis is None or not 0 <= axis < ranks[0] or _is_one(shapes[inputs[0]][axis]):
                return None
            checks = []
        else:
            checks = []
        if kind == ACCUM and (inputs[0] in state.accum_anc):
            return None

        for a, b in checks:
            verdict = _match_into(store, a, b)
            if verdict != "ok":
                if self.config.prune_dims:
                    self.stats.pruned_dim += 1
                    return Pruned("dim")
                doomed = True

        idx = len(state.nodes)
        node = BlockNode(idx, kind, inputs, axis=axis, const=const)
        try:
            shape = _sym_op_shape(node, [shapes[j] for j in inputs])
        except ShapeError:
            return None

        if kind == ACCUM:
            expr = state.exprs[inputs[0]]
        elif kind == SUM:
            expr = sum_(state.exprs[inputs[0]], len(shapes[inputs[0]]) - 1 - axis)
        elif kind == SCALE:
            expr = Expr("scale", (state.exprs[inputs[0]], Expr("rat", payload=const)))
        else:
            expr = Expr(kind, tuple(state.exprs[j] for j in inputs))

        if self.checker is not None and not self.checker.contains(expr):
            self.stats.pruned_expr += 1
            return Pruned("expr")

        consumed = list(state.consumed)
        for j in inputs:
            consumed[j] = True
        anc = state.accum_anc
        if kind == ACCUM or any(j in anc for j in inputs):
            anc = anc | {idx}
        return PartialGraph(
            program=state.program,
            grid=state.grid,
            nodes=state.nodes + (node,),
            store=store,
            shapes=state.shapes + (shape,),
            exprs=state.exprs + (expr,),
            consumed=tuple(consumed) + (False,),
            accum_anc=anc,
            outputs_done=state.outputs_done,
            doomed=doomed,
            forced_key=state.forced_key,
        )

    def try_save(self, state: PartialGraph, src: int, forced: dict):
        out_name = self.program.outputs[state.outputs_done]
        spec = self.program.spec(out_name)
        if len(state.shapes[src]) != spec.rank:
            return None
        idx = len(state.nodes)
        node = BlockNode(idx, OUTPUT, (src,), tensor=out_name)
        probe = PartialGraph(
            program=state.program, grid=state.grid,
            nodes=state.nodes + (node,), store=state.store,
            shapes=(), exprs=(), consumed=(), accum_anc=frozenset(),
            outputs_done=0,
        )
        target = saver_target_shape(probe.graph(), node)
        store = state.store.copy()
        doomed = state.doomed
        if not _apply_forced(store, forced):
            if self.config.prune_dims:
                self.stats.pruned_dim += 1
                return Pruned("dim")
            doomed = True
        for ea, eb in zip(state.shapes[src], target):
            if _is_one(ea) and _is_one(eb):
                continue
            verdict = _match_into(store, ea, eb)
            if verdict != "ok":
                if self.config.prune_dims:
                    self.stats.pruned_dim += 1
                    return Pruned("dim")
                doomed = True
        consumed = list(state.consumed)
        consumed[src] = True
        return PartialGraph(
            program=state.program,
            grid=state.grid,
            nodes=state.nodes + (node,),
            store=store,
            shapes=state.shapes + (state.shapes[src],),
            exprs=state.exprs + (state.exprs[src],),
            consumed=tuple(consumed) + (True,),
            accum_anc=state.accum_anc,
            outputs_done=state.outputs_done + 1,
            doomed=doomed,
            forced_key=state.forced_key + _forced_tag(forced),
        )

    # -- search ----------------------------------------------------------------

    def _extensions(self, state: PartialGraph):
        cfg = self.config
        slots = cfg.max_block_ops - len(state.nodes)
        savers_left = len(self.program.outputs) - state.outputs_done
        if slots < savers_left:
            return
        unconsumed = sum(
            1
            for n in state.nodes
            if n.kind != OUTPUT and not state.consumed[n.idx]
        )
        # Each new op nets at most one consumption; a closure must exist.
        if unconsumed > slots:
            return
        producers = [n.idx for n in state.nodes if n.kind != OUTPUT]

        if savers_left:
            out_name = self.program.outputs[state.outputs_done]
            for src in producers:
                for forced in _saver_choices(self.program, out_name, self.grid, cfg.concrete_omap):
                    yield self.try_save(state, src, forced)
        if slots - savers_left < 1:
            return
        for kind in self.whitelist:
            if kind in UNARY_KINDS or kind == ACCUM:
                for src in producers:
                    yield self.try_extend(state, kind, (src,))
            elif kind == SCALE:
                for src in producers:
                    for c in self.scale_consts:
                        yield self.try_extend(state, kind, (src,), const=c)
            elif kind == SUM:
                for src in producers:
                    for axis in range(len(state.shapes[src])):
                        yield self.try_extend(state, kind, (src,), axis=axis)
            elif kind == MATMUL or kind == "div":
                for a in producers:
                    for b in producers:
                        yield self.try_extend(state, kind, (a, b))
            else:  # commutative binary: unordered pairs
                for i, a in enumerate(producers):
                    for b in producers[i:]:
                        yield self.try_extend(state, kind, (a, b))

    def _emit(self, state: PartialGraph):
        if state.doomed:
            return
        for n in state.nodes:
            if n.kind != OUTPUT and not state.consumed[n.idx]:
                return
        key = state.structure_key()
        if key in self.emitted_keys:
            return
        self.emitted_keys.add(key)
        self.out.append(state.graph())
        self.stats.emitted += 1

    def run(self) -> GenResult:
        stack = list(reversed(self.initial_states()))
        while stack:
            if self.stats.explored >= self.config.node_budget or (
                self.deadline and time.monotonic() > self.deadline
            ):
                self.stats.budget_exhausted = True
                break
            state = stack.pop()
            children = []
            for child in self._extensions(state):
                if child is None or isinstance(child, Pruned):
                    continue
                if self.config.dedup:
                    key = child.structure_key()
                    if key in self.seen:
                        self.stats.dedup_hits += 1
                        continue
                    self.seen.add(key)
                self.stats.explored += 1
                if child.outputs_done == len(self.program.outputs):
                    self._emit(child)
                else:
                    children.append(child)
            stack.extend(reversed(children))
        return GenResult(graphs=self.out, stats=self.stats)


def generate(program: Program, config: SearchConfig, axioms=None) -> GenResult:
    """Every reachable template within the configured bounds."""
    return Generator(program, config, axioms).run()


def abstract_prune(partial: PartialGraph, checker: SubtermChecker) -> bool:
    """Keep a partial iff, at unit launch sizes, every intermediate value is
    equivalent to some subterm of the target expression.  Resource overflow
    in the checker keeps everything, so this never over-prunes."""
    return all(checker.contains(e) for e in partial.exprs)
