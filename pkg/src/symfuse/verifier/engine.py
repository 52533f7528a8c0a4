"""Rule compilation and the saturation driver.

Rewrite rules are authored as small pattern trees, compiled once per axiom
set into flat instruction lists, and executed by whichever core is
available: the compiled extension (`symfuse.verifier._core`) when built,
otherwise the pure-Python twin.  Set SYMFUSE_EGRAPH=py or =c to force one.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from fractions import Fraction

from ..errors import UnsupportedOpError
from .opcodes import (
    I_BIND,
    I_COMPARE,
    I_DISTINCT,
    I_INVARIANT,
    I_INVARIANT_LIT,
    I_ISLEAF,
    I_PAYLOAD_GE,
    I_PAYLOAD_LT,
    I_SIZE1,
    SRC_CLS,
    SRC_REG,
    SRC_TMP,
    TAG_DIM,
    TAG_OF_NAME,
    TAG_PAR,
    TAG_RAT,
    TAG_VAR,
)
from .terms import Expr

# -- backend selection -------------------------------------------------------

_choice = os.environ.get("SYMFUSE_EGRAPH", "auto")
if _choice in ("auto", "c"):
    try:
        from . import _core as _corelib
    except ImportError:
        if _choice == "c":
            raise
        from . import _core_py as _corelib
elif _choice == "py":
    from . import _core_py as _corelib
else:
    raise RuntimeError(f"SYMFUSE_EGRAPH={_choice!r}: expected auto, c, or py")


def backend_name() -> str:
    return _corelib.BACKEND


def core_module(backend: str | None = None):
    if backend is None:
        return _corelib
    if backend == "python":
        from . import _core_py

        return _core_py
    if backend == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {backend!r}")


# -- pattern trees -----------------------------------------------------------


@dataclass(frozen=True)
class PV:
    """Pattern variable: binds a whole class."""

    idx: int


@dataclass(frozen=True)
class PL:
    """Literal leaf (a specific dim index, parallel dim, or rational)."""

    tag: int
    payload: int


@dataclass(frozen=True)
class PN:
    """Operator node: a tag bitmask, an optional capture slot, children."""

    tagmask: int
    tagvar: int
    children: tuple


def pn(tag_name: str, *children) -> PN:
    return PN(1 << TAG_OF_NAME[tag_name], -1, children)


def pclass(tag_names, tagvar: int, *children) -> PN:
    mask = 0
    for nm in tag_names:
        mask |= 1 << TAG_OF_NAME[nm]
    return PN(mask, tagvar, children)


@dataclass
class Rule:
    name: str
    lhs: PN
    rhs: object  # PN | PV | PL
    guards: tuple = ()
    labels: frozenset = frozenset()


@dataclass
class CompiledRule:
    name: str
    index: int
    root_tagmask: int
    root_tagreg: int
    nregs: int
    ntagregs: int
    prog: list
    rhs: list
    rhs_result: tuple
    labels: frozenset = frozenset()


@dataclass
class RuleSet:
    pars: tuple[str, ...]
    rules: list[CompiledRule]
    leaves: list[tuple[int, int]]
    rat_values: list[Fraction]
    source_rules: list[Rule]

    def par_index(self, name: str) -> int:
        return self.pars.index(name)


def _single_tag(mask: int) -> int:
    if mask & (mask - 1):
        raise UnsupportedOpError("right-hand side tag must be concrete or captured")
    return mask.bit_length() - 1


class _Compiler:
    def __init__(self, leaf_table: dict, rat_table: dict):
        self.leaf_table = leaf_table  # (tag, payload) -> leaf index
        self.rat_table = rat_table  # Fraction -> rat payload

    def leaf_idx(self, tag: int, payload: int) -> int:
        key = (tag, payload)
        if key not in self.leaf_table:
            self.leaf_table[key] = len(self.leaf_table)
        return self.leaf_table[key]

    def compile(self, rule: Rule, index: int) -> CompiledRule:
        prog: list = []
        var_reg: dict[int, int] = {}
        tag_slots: dict[int, int] = {}
        nregs = 1  # reg 0 holds the matched root class

        def alloc() -> int:
            nonlocal nregs
            nregs += 1
            return nregs - 1

        def tag_slot(tv: int) -> int:
            if tv not in tag_slots:
                tag_slots[tv] = len(tag_slots)
            return tag_slots[tv]

        def visit_children(node: PN, base_regs: list[int]):
            for child, reg in zip(node.children, base_regs):
                if isinstance(child, PV):
                    if child.idx in var_reg:
                        prog.append((I_COMPARE, var_reg[child.idx], reg))
                    else:
                        var_reg[child.idx] = reg
                elif isinstance(child, PL):
                    prog.append((I_ISLEAF, reg, self.leaf_idx(child.tag, child.payload)))
                else:
                    regs = [alloc() for _ in range(len(child.children))]
                    slot = tag_slot(child.tagvar) if child.tagvar >= 0 else -1
                    prog.append((I_BIND, reg, child.tagmask, slot, regs[0] if regs else nregs))
                    visit_children(child, regs)

        root = rule.lhs
        root_regs = [alloc() for _ in range(len(root.children))]
        if root_regs and root_regs[0] != 1:
            raise AssertionError("root children must occupy registers 1..arity")
        root_tagreg = tag_slot(root.tagvar) if root.tagvar >= 0 else -1
        visit_children(root, root_regs)

        for g in rule.guards:
            kind = g[0]
            if kind == "distinct":
                prog.append((I_DISTINCT, var_reg[g[1]], var_reg[g[2]]))
            elif kind == "payload_ge":
                prog.append((I_PAYLOAD_GE, var_reg[g[1]], g[2]))
            elif kind == "payload_lt":
                prog.append((I_PAYLOAD_LT, var_reg[g[1]], g[2]))
            elif kind == "invariant":
                tv, pspec = g[1], g[2]
                if isinstance(pspec, PL):
                    prog.append((I_INVARIANT_LIT, var_reg[tv], pspec.payload))
                else:
                    prog.append((I_INVARIANT, var_reg[tv], var_reg[pspec]))
            elif kind == "size1":
                tv, dspec = g[1], g[2]
                if isinstance(dspec, int):
                    prog.append((I_SIZE1, var_reg[tv], dspec, 1))
                else:
                    prog.append((I_SIZE1, var_reg[tv], var_reg[dspec], 0))
            else:
                raise UnsupportedOpError(f"unknown guard {kind!r}")

        rhs_prog: list = []

        def emit(node) -> tuple:
            if isinstance(node, PV):
                return (SRC_REG, var_reg[node.idx])
            if isinstance(node, PL):
                return (SRC_CLS, self.leaf_idx(node.tag, node.payload))
            srcs = tuple(emit(ch) for ch in node.children)
            tagspec = -(tag_slot(node.tagvar) + 1) if node.tagvar >= 0 else _single_tag(node.tagmask)
            rhs_prog.append((tagspec, srcs))
            return (SRC_TMP, len(rhs_prog) - 1)

        result = emit(rule.rhs)
        return CompiledRule(
            name=rule.name,
            index=index,
            root_tagmask=root.tagmask,
            root_tagreg=root_tagreg,
            nregs=nregs,
            ntagregs=max(len(tag_slots), 1),
            prog=prog,
            rhs=rhs_prog,
            rhs_result=result,
            labels=rule.labels,
        )


def compile_rules(
    rules: list[Rule], pars: tuple[str, ...], rat_values: list[Fraction] = ()
) -> RuleSet:
    leaf_table: dict = {}
    comp = _Compiler(leaf_table, {})
    compiled = [comp.compile(r, i) for i, r in enumerate(rules)]
    leaves = [None] * len(leaf_table)
    for (tag, payload), idx in leaf_table.items():
        leaves[idx] = (tag, payload)
    return RuleSet(
        pars=pars, rules=compiled, leaves=leaves, rat_values=list(rat_values),
        source_rules=list(rules),
    )


# -- sessions ----------------------------------------------------------------


@dataclass
class SaturationLimits:
    max_nodes: int = 100_000
    max_iters: int = 30
    timeout_s: float = 10.0


@dataclass
class SaturationOutcome:
    status: str  # "saturated" | "proved" | "nodes" | "iters" | "time"
    iterations: int
    nodes: int

    @property
    def exhausted(self) -> bool:
        return self.status in ("nodes", "iters", "time")


class Session:
    """One e-graph bound to a compiled rule set."""

    def __init__(self, ruleset: RuleSet, backend: str | None = None, trace: bool = False):
        self.ruleset = ruleset
        self.core = core_module(backend).EGraph(trace=trace)
        self.rats: dict[Fraction, int] = {}
        for frac in ruleset.rat_values:
            self.rats[frac] = len(self.rats)
        self.vars: dict[str, int] = {}
        self.core.set_leaves(ruleset.leaves)

    def _intern_leaf(self, e: Expr):
        if e.tag == "var":
            payload = self.vars.setdefault(e.payload, len(self.vars))
            return TAG_VAR, (), payload
        if e.tag == "dim":
            return TAG_DIM, (), e.payload
        if e.tag == "par":
            try:
                payload = self.ruleset.par_index(e.payload)
            except ValueError:
                raise UnsupportedOpError(
                    f"parallel dim {e.payload!r} not in axiom set {self.ruleset.pars}"
                ) from None
            return TAG_PAR, (), payload
        if e.tag == "rat":
            payload = self.rats.setdefault(e.payload, len(self.rats))
            return TAG_RAT, (), payload
        return TAG_OF_NAME[e.tag], e.args, -1

    def insert(self, e: Expr) -> int:
        tag, args, payload = self._intern_leaf(e)
        child_ids = tuple(self.insert(a) for a in args)
        return self.core.add(tag, child_ids, payload)

    def equal(self, a: int, b: int) -> bool:
        return self.core.find(a) == self.core.find(b)

    def saturate(
        self,
        limits: SaturationLimits,
        stop_when_equal: tuple[int, int] | None = None,
        rules=None,
    ) -> SaturationOutcome:
        rules = self.ruleset.rules if rules is None else rules
        deadline = time.monotonic() + limits.timeout_s
        it = 0
        while it < limits.max_iters:
            it += 1
            merges = self.core.run_rules(rules, node_budget=limits.max_nodes)
            if stop_when_equal and self.equal(*stop_when_equal):
                return SaturationOutcome("proved", it, self.core.num_nodes)
            if merges == 0:
                return SaturationOutcome("saturated", it, self.core.num_nodes)
            if self.core.num_nodes > limits.max_nodes:
                return SaturationOutcome("nodes", it, self.core.num_nodes)
            if time.monotonic() > deadline:
                return SaturationOutcome("time", it, self.core.num_nodes)
        return SaturationOutcome("iters", it, self.core.num_nodes)

    def explain(self, a: int, b: int) -> list[str]:
        """Rule applications forming one path that joined the two roots."""
        log = self.core.merge_log
        if log is None or not self.equal(a, b):
            return []
        adj: dict[int, list[tuple[int, int]]] = {}
        for reason, x, y in log:
            adj.setdefault(x, []).append((y, reason))
            adj.setdefault(y, []).append((x, reason))
        start, goal = a, b
        prev: dict[int, tuple[int, int]] = {start: (-1, -1)}
        queue = [start]
        while queue:
            cur = queue.pop(0)
            if cur == goal:
                break
            for nxt, reason in adj.get(cur, ()):
                if nxt not in prev:
                    prev[nxt] = (cur, reason)
                    queue.append(nxt)
        if goal not in prev:
            return ["(roots merged by congruence alone)"]
        names = []
        cur = goal
        while cur != start:
            parent, reason = prev[cur]
            names.append(self.ruleset.rules[reason].name if reason >= 0 else "congruence")
            cur = parent
        return list(reversed(names))
