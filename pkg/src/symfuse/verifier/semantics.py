"""Reference semantics of the term language.

A term denotes, for every coordinate of the parallel dimensions, one dense
tensor.  ``part`` takes the coordinate's contiguous chunk, ``comb``
concatenates the chunks over one coordinate axis, ``red`` sums them, and
``repl`` projects the argument onto coordinate zero so its value no longer
depends on that axis.  Bindings may be plain arrays (coordinate-invariant)
or functions of the coordinate, which is how the soundness harness feeds
coordinate-dependent instances.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..interp import apply_op
from .terms import COMB, DIM, PAR, PART, RAT, RED, REPL, SUM_T, SCALE, VAR, Expr


def eval_term(
    e: Expr,
    bindings: dict,
    sizes: dict[str, int],
    coord: dict[str, int] | None = None,
    _memo: dict | None = None,
) -> np.ndarray:
    coord = coord or {p: 0 for p in sizes}
    memo = _memo if _memo is not None else {}
    key = (id(e), tuple(sorted(coord.items())))
    if key in memo:
        return memo[key]

    def rec(t, c):
        return eval_term(t, bindings, sizes, c, memo)

    tag = e.tag
    if tag == VAR:
        bound = bindings[e.payload]
        val = bound(coord) if callable(bound) else np.asarray(bound)
    elif tag == PART:
        t, d, p = e.args
        arr = rec(t, coord)
        axis = arr.ndim - 1 - d.payload
        n = sizes[p.payload]
        if axis < 0 or arr.shape[axis] % n:
            raise ShapeError(f"cannot split axis {d.payload} of {arr.shape} into {n}")
        width = arr.shape[axis] // n
        j = coord[p.payload]
        val = np.take(arr, range(j * width, (j + 1) * width), axis=axis)
    elif tag == COMB:
        t, d, p = e.args
        n = sizes[p.payload]
        chunks = [rec(t, {**coord, p.payload: j}) for j in range(n)]
        axis = chunks[0].ndim - 1 - d.payload
        val = np.concatenate(chunks, axis=axis)
    elif tag == RED:
        t, p = e.args
        n = sizes[p.payload]
        val = rec(t, {**coord, p.payload: 0})
        for j in range(1, n):
            val = val + rec(t, {**coord, p.payload: j})
    elif tag == REPL:
        t, p = e.args
        val = rec(t, {**coord, p.payload: 0})
    elif tag == SUM_T:
        t, d = e.args
        arr = rec(t, coord)
        val = arr.sum(axis=arr.ndim - 1 - d.payload, keepdims=True)
    elif tag == SCALE:
        t, c = e.args
        val = float(c.payload) * rec(t, coord)
    elif tag in (DIM, PAR, RAT):
        raise ShapeError(f"cannot evaluate bare {tag} leaf")
    else:
        val = apply_op(tag, [rec(a, coord) for a in e.args])
    memo[key] = val
    return val


def eval_everywhere(e: Expr, bindings, sizes) -> dict[tuple, np.ndarray]:
    """Value of the term at every coordinate of the parallel dims."""
    import itertools

    names = sorted(sizes)
    memo: dict = {}
    out = {}
    for combo in itertools.product(*(range(sizes[p]) for p in names)):
        coord = dict(zip(names, combo))
        out[combo] = eval_term(e, bindings, sizes, coord, memo)
    return out


def terms_agree(a: Expr, b: Expr, bindings, sizes, tol=1e-9) -> bool:
    va = eval_everywhere(a, bindings, sizes)
    vb = eval_everywhere(b, bindings, sizes)
    for key in va:
        x, y = va[key], vb[key]
        if x.shape != y.shape:
            return False
        if not np.all(np.abs(x - y) <= tol):
            return False
    return True
