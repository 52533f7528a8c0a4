"""Pure-Python rewrite-engine core.

A congruence-closed term graph: hash-consed nodes grouped into classes by a
union-find, rebuilt to a fixpoint after merges.  Two per-class analyses ride
along: an upper bound on which parallel dims the value can vary over
(tightened by intersection on merge) and a lower bound on which innermost
data dims are provably unit-sized (widened by union on merge).  Rule
matching runs a small backtracking VM over pre-compiled instruction lists;
one `run_rules` call is a frozen match phase followed by batched rewrites.

The compiled backend in `_core.pyx` implements the same algorithm with the
same iteration orders; the two must stay behaviorally identical.
"""

from __future__ import annotations

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
    LEAF_TAGS,
    SRC_REG,
    SRC_TMP,
    TAG_ADD,
    TAG_COMB,
    TAG_DIV,
    TAG_MATMUL,
    TAG_MUL,
    TAG_PART,
    TAG_RED,
    TAG_REPL,
    TAG_SCALE,
    TAG_SUM,
)

BACKEND = "python"


def _node_masks(tag, cargs, payloads, var_masks, one_masks):
    """(variance upper bound, unit-dim lower bound) of one node."""
    if tag in LEAF_TAGS:
        return 0, 0
    if tag == TAG_PART:
        t, d, p = cargs
        return var_masks[t] | (1 << payloads[p]), one_masks[t] & ~(1 << payloads[d])
    if tag == TAG_COMB:
        t, d, p = cargs
        return var_masks[t] & ~(1 << payloads[p]), one_masks[t] & ~(1 << payloads[d])
    if tag == TAG_RED or tag == TAG_REPL:
        t, p = cargs
        return var_masks[t] & ~(1 << payloads[p]), one_masks[t]
    if tag == TAG_SUM:
        t, d = cargs
        return var_masks[t], one_masks[t] | (1 << payloads[d])
    if tag == TAG_SCALE:
        t, _c = cargs
        return var_masks[t], one_masks[t]
    if tag == TAG_MATMUL:
        a, b = cargs
        one = (one_masks[a] & one_masks[b] & ~3) | (one_masks[a] & 2) | (one_masks[b] & 1)
        return var_masks[a] | var_masks[b], one
    if tag in (TAG_ADD, TAG_MUL, TAG_DIV):
        a, b = cargs
        return var_masks[a] | var_masks[b], one_masks[a] & one_masks[b]
    # Remaining unary compute ops.
    (t,) = cargs
    return var_masks[t], one_masks[t]


class EGraph:
    def __init__(self, trace=False):
        self.node_tag: list[int] = []
        self.node_args: list[tuple[int, ...]] = []
        self.node_key: list[tuple] = []
        self.node_class: list[int] = []
        self.hashcons: dict[tuple, int] = {}
        self.parent: list[int] = []
        self.class_nodes: list[list[int]] = []
        self.class_parents: list[list[int]] = []
        self.var_mask: list[int] = []
        self.one_mask: list[int] = []
        self.payload: list[int] = []
        self.dirty: list[int] = []
        self.rule_leaf_cls: list[int] = []
        self.merge_log: list[tuple[int, int, int]] | None = [] if trace else None

    def set_leaves(self, leaves: list[tuple[int, int]]) -> None:
        """Intern the literal leaves referenced by the compiled rules."""
        self.rule_leaf_cls = [self.add(tag, (), payload) for tag, payload in leaves]

    # -- union-find ---------------------------------------------------------

    def find(self, c: int) -> int:
        parent = self.parent
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    @property
    def num_nodes(self) -> int:
        return len(self.node_tag)

    def class_ids(self) -> list[int]:
        return sorted({self.find(c) for c in range(len(self.parent))})

    # -- construction --------------------------------------------------------

    def add(self, tag: int, args: tuple[int, ...] = (), payload: int = -1) -> int:
        cargs = tuple(self.find(a) for a in args)
        key = (tag, cargs, payload)
        nid = self.hashcons.get(key)
        if nid is not None:
            return self.find(self.node_class[nid])
        nid = len(self.node_tag)
        self.node_tag.append(tag)
        self.node_args.append(cargs)
        self.node_key.append(key)
        self.node_class.append(nid)
        self.hashcons[key] = nid
        cls = len(self.parent)
        assert cls == nid
        self.parent.append(cls)
        self.class_nodes.append([nid])
        self.class_parents.append([])
        vm, om = _node_masks(tag, cargs, self.payload, self.var_mask, self.one_mask)
        self.var_mask.append(vm)
        self.one_mask.append(om)
        self.payload.append(payload)
        registered = []
        for a in cargs:
            if a not in registered:
                registered.append(a)
                self.class_parents[a].append(nid)
        return cls

    def add_term(self, expr, interner) -> int:
        """Insert a term given an interner mapping leaf payloads to ints."""
        tag, args, payload = interner(expr)
        child_ids = tuple(self.add_term(a, interner) for a in args)
        return self.add(tag, child_ids, payload)

    # -- merging and rebuilding ----------------------------------------------

    def merge(self, a: int, b: int, reason: int = -1) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        # Keep the smaller id as root for determinism.
        if rb < ra:
            ra, rb = rb, ra
        if self.merge_log is not None:
            self.merge_log.append((reason, ra, rb))
        self.parent[rb] = ra
        self.class_nodes[ra].extend(self.class_nodes[rb])
        self.class_nodes[rb] = []
        self.class_parents[ra].extend(self.class_parents[rb])
        self.class_parents[rb] = []
        new_var = self.var_mask[ra] & self.var_mask[rb]
        new_one = self.one_mask[ra] | self.one_mask[rb]
        if self.payload[ra] < 0:
            self.payload[ra] = self.payload[rb]
        self.var_mask[ra], self.one_mask[ra] = new_var, new_one
        self.dirty.append(ra)
        return ra

    def rebuild(self) -> None:
        while self.dirty:
            todo = sorted({self.find(c) for c in self.dirty})
            self.dirty = []
            for cls in todo:
                if self.find(cls) == cls:
                    self._repair(cls)

    def _repair(self, cls: int) -> None:
        parents = self.class_parents[cls]
        self.class_parents[cls] = []
        seen: dict[tuple, int] = {}
        keep: list[int] = []
        for nid in parents:
            old_key = self.node_key[nid]
            if self.hashcons.get(old_key) == nid:
                del self.hashcons[old_key]
            tag = self.node_tag[nid]
            cargs = tuple(self.find(a) for a in self.node_args[nid])
            key = (tag, cargs, old_key[2])
            self.node_args[nid] = cargs
            self.node_key[nid] = key
            other = self.hashcons.get(key)
            if other is not None and self.find(self.node_class[other]) != self.find(
                self.node_class[nid]
            ):
                self.merge(self.node_class[other], self.node_class[nid])
            elif other is None:
                self.hashcons[key] = nid
            if key not in seen:
                seen[key] = nid
                keep.append(nid)
            # Re-derive the analysis contribution of this parent node.
            vm, om = _node_masks(tag, cargs, self.payload, self.var_mask, self.one_mask)
            owner = self.find(self.node_class[nid])
            joined_var = self.var_mask[owner] & vm
            joined_one = self.one_mask[owner] | om
            if joined_var != self.var_mask[owner] or joined_one != self.one_mask[owner]:
                self.var_mask[owner] = joined_var
                self.one_mask[owner] = joined_one
                self.dirty.append(owner)
        root = self.find(cls)
        self.class_parents[root].extend(keep)

    # -- matching -------------------------------------------------------------

    def _exec(self, rule, regs, tags, pc, out, limit):
        prog = rule.prog
        if pc == len(prog):
            out.append((tuple(regs), tuple(tags)))
            return len(out) < limit
        insn = prog[pc]
        op = insn[0]
        if op == I_BIND:
            _, reg, tagmask, tagreg, out_base = insn
            cls = self.find(regs[reg])
            for nid in self.class_nodes[cls]:
                tag = self.node_tag[nid]
                if not (tagmask >> tag) & 1:
                    continue
                args = self.node_args[nid]
                for j, a in enumerate(args):
                    regs[out_base + j] = self.find(a)
                if tagreg >= 0:
                    tags[tagreg] = tag
                if not self._exec(rule, regs, tags, pc + 1, out, limit):
                    return False
            return True
        if op == I_COMPARE:
            if self.find(regs[insn[1]]) != self.find(regs[insn[2]]):
                return True
        elif op == I_DISTINCT:
            if self.find(regs[insn[1]]) == self.find(regs[insn[2]]):
                return True
        elif op == I_PAYLOAD_GE:
            if self.payload[self.find(regs[insn[1]])] < insn[2]:
                return True
        elif op == I_PAYLOAD_LT:
            if self.payload[self.find(regs[insn[1]])] >= insn[2]:
                return True
        elif op == I_INVARIANT:
            bit = self.payload[self.find(regs[insn[2]])]
            if self.var_mask[self.find(regs[insn[1]])] & (1 << bit):
                return True
        elif op == I_SIZE1:
            _, treg, dspec, is_lit = insn
            bit = dspec if is_lit else self.payload[self.find(regs[dspec])]
            if not (self.one_mask[self.find(regs[treg])] >> bit) & 1:
                return True
        elif op == I_ISLEAF:
            if self.find(regs[insn[1]]) != self.find(self.rule_leaf_cls[insn[2]]):
                return True
        elif op == I_INVARIANT_LIT:
            if self.var_mask[self.find(regs[insn[1]])] & (1 << insn[2]):
                return True
        return self._exec(rule, regs, tags, pc + 1, out, limit)

    def match_rule(self, rule, upto: int, limit=1 << 30) -> list:
        """Match against the first `upto` nodes (the match phase is frozen)."""
        matches: list = []
        regs = [0] * rule.nregs
        tags = [0] * max(rule.ntagregs, 1)
        mask = rule.root_tagmask
        node_tag = self.node_tag
        for nid in range(upto):
            tag = node_tag[nid]
            if not (mask >> tag) & 1:
                continue
            cls = self.find(self.node_class[nid])
            if self.hashcons.get(self.node_key[nid]) != nid:
                continue  # superseded duplicate
            regs[0] = cls
            for j, a in enumerate(self.node_args[nid]):
                regs[1 + j] = self.find(a)
            if rule.root_tagreg >= 0:
                tags[rule.root_tagreg] = tag
            if not self._exec(rule, regs, tags, 0, matches, limit):
                break
        return matches

    def _resolve(self, kind, val, tmps, regs):
        if kind == SRC_TMP:
            return tmps[val]
        if kind == SRC_REG:
            return self.find(regs[val])
        return self.find(self.rule_leaf_cls[val])

    def instantiate(self, rule, regs, tags) -> int:
        tmps: list[int] = []
        for tagspec, srcs in rule.rhs:
            tag = tags[-tagspec - 1] if tagspec < 0 else tagspec
            args = tuple(self._resolve(k, v, tmps, regs) for k, v in srcs)
            tmps.append(self.add(tag, args))
        kind, val = rule.rhs_result
        return self._resolve(kind, val, tmps, regs)

    def run_rules(self, rules, node_budget=1 << 60) -> int:
        """One frozen match phase followed by all rewrites; returns merges."""
        upto = self.num_nodes
        all_matches = []
        for rule in rules:
            for regs, tags in self.match_rule(rule, upto):
                all_matches.append((rule, regs, tags))
        merges = 0
        for rule, regs, tags in all_matches:
            made = self.instantiate(rule, regs, tags)
            root = self.find(regs[0])
            if self.find(made) != root:
                self.merge(root, made, rule.index)
                merges += 1
            if self.num_nodes > node_budget:
                break
        self.rebuild()
        return merges
