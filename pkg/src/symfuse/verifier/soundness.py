"""Interpreter-backed soundness checking of rewrite rules.

Every rule is checked by instantiating its pattern with random concrete
tensors and evaluating both sides at every parallel coordinate.  Pattern
variables guarded as invariant in some parallel dim are sampled constant in
that dim; everything else is sampled as a random function of all
coordinates, which is the strongest test the rule claims to survive.
Vector-guarded variables get a unit extent in the guarded axis.  Values are
positive so square roots and divisions stay well-conditioned; the operators
are rational enough that agreement on positives settles the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .engine import PL, PN, PV, Rule
from .opcodes import NAME_OF_TAG, TAG_DIM, TAG_PAR, TAG_RAT
from .semantics import terms_agree
from .terms import Expr, dim, par, rat

_TENSOR, _DIM, _PAR, _RAT = "tensor", "dim", "par", "rat"

_ARG_ROLES = {
    "part": (_TENSOR, _DIM, _PAR),
    "comb": (_TENSOR, _DIM, _PAR),
    "red": (_TENSOR, _PAR),
    "repl": (_TENSOR, _PAR),
    "sum": (_TENSOR, _DIM),
    "scale": (_TENSOR, _RAT),
}


def _roles(node, out: dict):
    if not isinstance(node, PN):
        return
    tags = [NAME_OF_TAG[t] for t in range(32) if (node.tagmask >> t) & 1]
    roles = _ARG_ROLES.get(tags[0], (_TENSOR,) * len(node.children))
    for child, role in zip(node.children, roles):
        if isinstance(child, PV):
            prev = out.setdefault(child.idx, role)
            if prev != role:
                raise ValueError(f"pattern var {child.idx} used as {prev} and {role}")
        else:
            _roles(child, out)


def _tag_slots(node, out: set):
    if isinstance(node, PN):
        if node.tagvar >= 0:
            out.add(node.tagvar)
        for ch in node.children:
            _tag_slots(ch, out)


@dataclass
class Assignment:
    tags: dict[int, str]
    dims: dict[int, int]
    rats: dict[int, Fraction]
    tensor_names: dict[int, str]


def _instantiate(node, asn: Assignment, pars: tuple[str, ...], roles) -> Expr:
    if isinstance(node, PV):
        role = roles[node.idx]
        if role == _TENSOR:
            return Expr("var", payload=asn.tensor_names[node.idx])
        if role == _DIM:
            return dim(asn.dims[node.idx])
        if role == _RAT:
            return rat(asn.rats[node.idx])
        raise ValueError(f"cannot instantiate bare {role} var")
    if isinstance(node, PL):
        if node.tag == TAG_DIM:
            return dim(node.payload)
        if node.tag == TAG_PAR:
            return par(pars[node.payload])
        if node.tag == TAG_RAT:
            return rat(Fraction(1))
        raise ValueError("unexpected literal kind")
    tag = NAME_OF_TAG[_single(node)] if node.tagvar < 0 else asn.tags[node.tagvar]
    return Expr(tag, tuple(_instantiate(ch, asn, pars, roles) for ch in node.children))


def _single(node: PN) -> int:
    mask = node.tagmask
    if mask & (mask - 1):
        raise ValueError("uncaptured tag class")
    return mask.bit_length() - 1


def _rule_rank(rule: Rule) -> int:
    # Leading-dim rules force a third axis; everything else runs rank 2.
    for g in rule.guards:
        if g[0] == "payload_ge":
            return g[2] + 1
    rank = 2
    stack = [rule.lhs, rule.rhs]
    while stack:
        node = stack.pop()
        if isinstance(node, PL) and node.tag == TAG_DIM:
            rank = max(rank, node.payload + 1)
        elif isinstance(node, PN):
            stack.extend(node.children)
    return rank


def check_rule(
    rule: Rule,
    pars: tuple[str, ...],
    instances: int = 50,
    tol: float = 1e-9,
    seed: int = 0,
    axis_size: int = 8,
    par_size: int = 2,
) -> tuple[bool, str]:
    """Evaluate both sides on random instances; (ok, detail-on-failure)."""
    roles: dict[int, str] = {}
    _roles(rule.lhs, roles)
    _roles(rule.rhs, roles)
    slots: set[int] = set()
    _tag_slots(rule.lhs, slots)
    rank = _rule_rank(rule)
    sizes = {p: par_size for p in pars}

    invariant_in: dict[int, set[str]] = {}
    unit_axis: dict[int, int] = {}
    for g in rule.guards:
        if g[0] == "invariant":
            pspec = g[2]
            pname = pars[pspec.payload] if isinstance(pspec, PL) else None
            if pname is not None:
                invariant_in.setdefault(g[1], set()).add(pname)
        elif g[0] == "size1":
            unit_axis[g[1]] = g[2]

    rng = np.random.default_rng(seed)
    unary_pool = ["exp", "silu", "square", "sqrt"]
    binary_pool = ["add", "mul", "div"]
    dim_pool = list(range(rank))

    for trial in range(instances):
        tags: dict[int, str] = {}
        for s in sorted(slots):
            pool = unary_pool if _slot_is_unary(rule.lhs, s) else binary_pool
            tags[s] = pool[(trial + s) % len(pool)]
        dims_asn: dict[int, int] = {}
        for idx, role in sorted(roles.items()):
            if role != _DIM:
                continue
            forced = _forced_dim(rule.guards, idx)
            if forced is not None:
                dims_asn[idx] = forced
            else:
                taken = set(dims_asn[j] for j in dims_asn if _must_differ(rule.guards, idx, j))
                choices = [d for d in dim_pool if d not in taken]
                dims_asn[idx] = choices[int(rng.integers(len(choices)))]
        rats_asn = {
            idx: Fraction(int(rng.integers(1, 5)), int(rng.integers(1, 5)))
            for idx, role in roles.items()
            if role == _RAT
        }
        names = {idx: f"T{idx}" for idx, role in roles.items() if role == _TENSOR}
        asn = Assignment(tags, dims_asn, rats_asn, names)

        lhs = _instantiate(rule.lhs, asn, pars, roles)
        rhs = _instantiate(rule.rhs, asn, pars, roles)

        bindings = {}
        for idx, name in names.items():
            shape = [axis_size] * rank
            if idx in unit_axis:
                shape[rank - 1 - unit_axis[idx]] = 1
            frozen = invariant_in.get(idx, set())
            varying = [p for p in pars if p not in frozen]
            table = 0.5 + np.abs(
                rng.standard_normal([par_size] * len(varying) + shape)
            )
            bindings[name] = _table_fn(table, varying)
        try:
            ok = terms_agree(lhs, rhs, bindings, sizes, tol=tol)
        except Exception as exc:  # shape errors are soundness failures too
            return False, f"instance {trial}: {type(exc).__name__}: {exc}"
        if not ok:
            return False, f"instance {trial}: values differ: {lhs!r} vs {rhs!r}"
    return True, ""


def _table_fn(table: np.ndarray, varying: list[str]):
    def fn(coord: dict[str, int]) -> np.ndarray:
        idx = tuple(coord[p] for p in varying)
        return table[idx]

    return fn


def _slot_is_unary(node, slot: int) -> bool:
    if isinstance(node, PN):
        if node.tagvar == slot:
            return len(node.children) == 1
        for ch in node.children:
            hit = _slot_is_unary(ch, slot)
            if hit is not None:
                return hit
    return None


def _forced_dim(guards, idx):
    for g in guards:
        if g[0] == "payload_ge" and g[1] == idx:
            return g[2]
    return None


def _must_differ(guards, a, b) -> bool:
    return any(g[0] == "distinct" and {g[1], g[2]} == {a, b} for g in guards)


def check_axiom_set(axioms, instances=50, tol=1e-9, seed=0):
    """(rule name, ok, detail) per rule."""
    out = []
    for i, rule in enumerate(axioms.rules):
        ok, detail = check_rule(rule, axioms.pars, instances, tol, seed + i)
        out.append((rule.name, ok, detail))
    return out
