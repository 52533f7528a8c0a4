"""Concrete mapping enumeration for a generated template.

Assignments are enumerated over the free union-find classes of the mapping
variables (variables equated during generation share one bit), filtered by
the two linear families plus saver coverage, and reduced to one
lexicographic representative per grid-dimension-permutation orbit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .graph import SymbolicGraph, mapping_satisfies
from .symdim import MapVar


@dataclass
class MappingCandidateSet:
    graph: SymbolicGraph
    assignments: list[dict]

    def __len__(self):
        return len(self.assignments)

    def __iter__(self):
        return iter(self.assignments)


def raw_enumerate(graph: SymbolicGraph) -> list[dict]:
    """All satisfying assignments, no symmetry reduction."""
    variables = graph.mapping_vars()
    store = graph.store
    groups = store.classes(variables)
    fixed: dict[MapVar, int] = {}
    free_reps: list = []
    members: dict = {}
    for rep, vs in groups.items():
        val = store.value_of(vs[0])
        if val is not None:
            for v in vs:
                fixed[v] = val
        else:
            free_reps.append(rep)
            members[rep] = vs
    out = []
    for bits in itertools.product((0, 1), repeat=len(free_reps)):
        mapping = dict(fixed)
        for rep, bit in zip(free_reps, bits):
            for v in members[rep]:
                mapping[v] = bit
        if mapping_satisfies(graph, mapping):
            out.append(mapping)
    return out


def _flat_key(mapping: dict, order: list[MapVar]) -> tuple:
    return tuple(mapping[v] for v in order)


def permute_grid(mapping: dict, perm: dict[str, str]) -> dict:
    """Rename grid dims everywhere; the loop dim never moves."""
    return {
        MapVar(v.tensor, v.dim, perm.get(v.pdim, v.pdim)): bit
        for v, bit in mapping.items()
    }


def symmetry_break(assignments: list[dict], graph: SymbolicGraph) -> list[dict]:
    """Keep the lexicographically smallest assignment of each orbit under
    grid-dimension permutation."""
    grid = [p.name for p in graph.block.grid]
    order = graph.mapping_vars()
    if len(grid) < 2:
        return list(assignments)
    perms = [dict(zip(grid, p)) for p in itertools.permutations(grid)]
    kept = []
    for mapping in assignments:
        key = _flat_key(mapping, order)
        smallest = min(_flat_key(permute_grid(mapping, perm), order) for perm in perms)
        if key == smallest:
            kept.append(mapping)
    return kept


def enumerate_mappings(graph: SymbolicGraph) -> MappingCandidateSet:
    """Satisfying assignments up to grid-dimension symmetry, in stable
    lexicographic order of the flattened variable vector."""
    raw = raw_enumerate(graph)
    kept = symmetry_break(raw, graph)
    order = graph.mapping_vars()
    kept.sort(key=lambda m: _flat_key(m, order))
    return MappingCandidateSet(graph=graph, assignments=kept)
