"""Equivalence queries and the subterm membership check used for pruning."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .axioms import AxiomSet
from .engine import SaturationLimits, Session
from .terms import Expr, subterms


@dataclass
class VerifyResult:
    equivalent: bool
    resource_exhausted: bool
    iterations: int
    nodes: int
    trace: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.equivalent


def equivalent(
    a: Expr,
    b: Expr,
    axioms: AxiomSet,
    limits: SaturationLimits = SaturationLimits(),
    use_inverse: bool = True,
    backend: str | None = None,
    trace: bool = False,
) -> VerifyResult:
    """Seed both terms into one graph and saturate; equivalent only when the
    roots land in one class.  Anything else is a rejection."""
    session = Session(axioms.ruleset, backend=backend, trace=trace)
    ra = session.insert(a)
    rb = session.insert(b)
    if session.equal(ra, rb):
        return VerifyResult(True, False, 0, session.core.num_nodes)
    out = session.saturate(
        limits, stop_when_equal=(ra, rb), rules=axioms.compiled(use_inverse)
    )
    eq = session.equal(ra, rb)
    result = VerifyResult(eq, out.exhausted and not eq, out.iterations, out.nodes)
    if trace and eq:
        result.trace = session.explain(ra, rb)
    return result


class SubtermChecker:
    """Membership of a term in the saturated closure of a target expression.

    Seeds the target and every subterm, saturates under the compute-only
    rules, then answers repeated queries incrementally.  Resource exhaustion
    flips the checker into keep-everything mode so pruning stays an
    under-approximation.
    """

    def __init__(
        self,
        targets: list[Expr],
        axioms: AxiomSet,
        limits: SaturationLimits = SaturationLimits(),
        backend: str | None = None,
    ):
        self.limits = limits
        self.session = Session(axioms.compute_ruleset, backend=backend)
        for t in targets:
            for s in subterms(t):
                if s.tag in ("dim", "par", "rat"):
                    continue
                self.session.insert(s)
        out = self.session.saturate(limits)
        self.overflowed = out.exhausted
        # Everything present now is a subterm of some rewritten target form.
        self.boundary = self.session.core.num_nodes
        self._memo: dict[Expr, bool] = {}

    def _member(self, cls: int) -> bool:
        root = self.session.core.find(cls)
        return any(nid < self.boundary for nid in self.session.core.class_nodes[root])

    def contains(self, e: Expr) -> bool:
        if self.overflowed:
            return True
        hit = self._memo.get(e)
        if hit is not None:
            return hit
        before = self.session.core.num_nodes
        cls = self.session.insert(e)
        result = self._member(cls)
        if not result and self.session.core.num_nodes > before:
            # Fresh structure: saturate incrementally, stopping as soon as
            # the query class touches the pre-existing graph.
            deadline = time.monotonic() + self.limits.timeout_s
            for _ in range(self.limits.max_iters):
                merges = self.session.core.run_rules(
                    self.session.ruleset.rules, node_budget=self.limits.max_nodes
                )
                if self._member(cls):
                    result = True
                    break
                if merges == 0:
                    break
                if (
                    self.session.core.num_nodes > self.limits.max_nodes
                    or time.monotonic() > deadline
                ):
                    self.overflowed = True
                    return True
        self._memo[e] = result
        return result
