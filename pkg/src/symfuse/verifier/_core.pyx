# cython: language_level=3, boundscheck=False, wraparound=False
# distutils: language = c++
"""Compiled rewrite-engine core.

Same algorithm, data layout, and iteration orders as `_core_py.py`; the
union-find, node tables, congruence repair, and the matching VM run over
C++ vectors with typed locals.  Behavior must stay bit-identical to the
pure-Python twin: the test suite parametrizes over both.
"""

from libcpp.vector cimport vector

BACKEND = "compiled"

# Tag values pinned against symfuse.verifier.opcodes by a unit test.
cdef enum:
    TAG_VAR = 0
    TAG_DIM = 1
    TAG_PAR = 2
    TAG_RAT = 3
    TAG_MATMUL = 4
    TAG_SUM = 5
    TAG_ADD = 6
    TAG_MUL = 7
    TAG_DIV = 8
    TAG_EXP = 9
    TAG_SILU = 10
    TAG_SQUARE = 11
    TAG_SQRT = 12
    TAG_SCALE = 13
    TAG_PART = 14
    TAG_COMB = 15
    TAG_RED = 16
    TAG_REPL = 17

cdef enum:
    I_BIND = 0
    I_COMPARE = 1
    I_DISTINCT = 2
    I_PAYLOAD_GE = 3
    I_PAYLOAD_LT = 4
    I_INVARIANT = 5
    I_SIZE1 = 6
    I_ISLEAF = 7
    I_INVARIANT_LIT = 8

cdef enum:
    SRC_TMP = 0
    SRC_REG = 1
    SRC_CLS = 2


cdef class EGraph:
    cdef vector[int] parent
    cdef vector[int] node_tag, node_a, node_b, node_c, node_payload, node_class
    cdef public list node_key, class_nodes, class_parents
    cdef public list var_mask, one_mask, payload
    cdef public dict hashcons
    cdef public list dirty, rule_leaf_cls
    cdef public object merge_log

    def __init__(self, trace=False):
        self.node_key = []
        self.class_nodes = []
        self.class_parents = []
        self.var_mask = []
        self.one_mask = []
        self.payload = []
        self.hashcons = {}
        self.dirty = []
        self.rule_leaf_cls = []
        self.merge_log = [] if trace else None

    # -- union-find -----------------------------------------------------------

    cdef int cfind(self, int c):
        cdef int root = c, nxt
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[c] != root:
            nxt = self.parent[c]
            self.parent[c] = root
            c = nxt
        return root

    def find(self, int c):
        return self.cfind(c)

    @property
    def num_nodes(self):
        return <int> self.node_tag.size()

    def class_ids(self):
        cdef int c
        out = set()
        for c in range(<int> self.parent.size()):
            out.add(self.cfind(c))
        return sorted(out)

    def set_leaves(self, leaves):
        self.rule_leaf_cls = [self.add(tag, (), payload) for tag, payload in leaves]

    # -- analyses --------------------------------------------------------------

    cdef (long long, long long) _node_masks(self, int tag, int a, int b, int c):
        cdef long long vm = 0, om = 0, bit
        if tag <= TAG_RAT:
            return 0, 0
        vm = <long long> self.var_mask[a]
        om = <long long> self.one_mask[a]
        if tag == TAG_PART:
            bit = 1
            vm = vm | (bit << <int> self.payload[self.cfind(c)])
            om = om & ~(bit << <int> self.payload[self.cfind(b)])
        elif tag == TAG_COMB:
            bit = 1
            vm = vm & ~(bit << <int> self.payload[self.cfind(c)])
            om = om & ~(bit << <int> self.payload[self.cfind(b)])
        elif tag == TAG_RED or tag == TAG_REPL:
            bit = 1
            vm = vm & ~(bit << <int> self.payload[self.cfind(b)])
        elif tag == TAG_SUM:
            bit = 1
            om = om | (bit << <int> self.payload[self.cfind(b)])
        elif tag == TAG_SCALE:
            pass
        elif tag == TAG_MATMUL:
            vm = vm | <long long> self.var_mask[b]
            om = (om & <long long> self.one_mask[b] & ~3) | (om & 2) | (
                <long long> self.one_mask[b] & 1
            )
        elif tag == TAG_ADD or tag == TAG_MUL or tag == TAG_DIV:
            vm = vm | <long long> self.var_mask[b]
            om = om & <long long> self.one_mask[b]
        # Remaining unary compute ops keep the child's masks.
        return vm, om

    # -- construction -----------------------------------------------------------

    def add(self, int tag, tuple args=(), int payload=-1):
        cdef int a = -1, b = -1, c = -1, n = len(args)
        if n > 0:
            a = self.cfind(args[0])
        if n > 1:
            b = self.cfind(args[1])
        if n > 2:
            c = self.cfind(args[2])
        cdef tuple cargs
        if n == 0:
            cargs = ()
        elif n == 1:
            cargs = (a,)
        elif n == 2:
            cargs = (a, b)
        else:
            cargs = (a, b, c)
        key = (tag, cargs, payload)
        nid_obj = self.hashcons.get(key)
        if nid_obj is not None:
            return self.cfind(self.node_class[<int> nid_obj])
        cdef int nid = <int> self.node_tag.size()
        self.node_tag.push_back(tag)
        self.node_a.push_back(a)
        self.node_b.push_back(b)
        self.node_c.push_back(c)
        self.node_payload.push_back(payload)
        self.node_class.push_back(nid)
        self.node_key.append(key)
        self.hashcons[key] = nid
        self.parent.push_back(nid)
        self.class_nodes.append([nid])
        self.class_parents.append([])
        cdef long long vm = 0, om = 0
        if n > 0:
            vm, om = self._node_masks(tag, a, b, c)
        self.var_mask.append(vm)
        self.one_mask.append(om)
        self.payload.append(payload)
        cdef int seen_a = -1, seen_b = -1
        if n > 0:
            (<list> self.class_parents[a]).append(nid)
            seen_a = a
        if n > 1 and b != seen_a:
            (<list> self.class_parents[b]).append(nid)
            seen_b = b
        if n > 2 and c != seen_a and c != seen_b:
            (<list> self.class_parents[c]).append(nid)
        return nid

    # -- merging and rebuilding ---------------------------------------------------

    def merge(self, int a, int b, int reason=-1):
        cdef int ra = self.cfind(a), rb = self.cfind(b), tmp
        if ra == rb:
            return ra
        if rb < ra:
            tmp = ra
            ra = rb
            rb = tmp
        if self.merge_log is not None:
            self.merge_log.append((reason, ra, rb))
        self.parent[rb] = ra
        (<list> self.class_nodes[ra]).extend(<list> self.class_nodes[rb])
        self.class_nodes[rb] = []
        (<list> self.class_parents[ra]).extend(<list> self.class_parents[rb])
        self.class_parents[rb] = []
        self.var_mask[ra] = self.var_mask[ra] & self.var_mask[rb]
        self.one_mask[ra] = self.one_mask[ra] | self.one_mask[rb]
        if <int> self.payload[ra] < 0:
            self.payload[ra] = self.payload[rb]
        self.dirty.append(ra)
        return ra

    def rebuild(self):
        cdef int cls
        while self.dirty:
            todo = sorted({self.cfind(c) for c in self.dirty})
            self.dirty = []
            for cls in todo:
                if self.cfind(cls) == cls:
                    self._repair(cls)

    cdef _repair(self, int cls):
        cdef list parents = <list> self.class_parents[cls]
        self.class_parents[cls] = []
        cdef dict seen = {}
        cdef list keep = []
        cdef int nid, tag, a, b, c, n, owner, root
        cdef long long vm, om, jv, jo
        for nid_obj in parents:
            nid = <int> nid_obj
            old_key = self.node_key[nid]
            if self.hashcons.get(old_key) == nid:
                del self.hashcons[old_key]
            tag = self.node_tag[nid]
            a = self.node_a[nid]
            b = self.node_b[nid]
            c = self.node_c[nid]
            n = 0
            if a >= 0:
                a = self.cfind(a)
                self.node_a[nid] = a
                n = 1
            if b >= 0:
                b = self.cfind(b)
                self.node_b[nid] = b
                n = 2
            if c >= 0:
                c = self.cfind(c)
                self.node_c[nid] = c
                n = 3
            if n == 0:
                cargs = ()
            elif n == 1:
                cargs = (a,)
            elif n == 2:
                cargs = (a, b)
            else:
                cargs = (a, b, c)
            key = (tag, cargs, old_key[2])
            self.node_key[nid] = key
            other = self.hashcons.get(key)
            if other is not None and self.cfind(self.node_class[<int> other]) != self.cfind(
                self.node_class[nid]
            ):
                self.merge(self.node_class[<int> other], self.node_class[nid])
            elif other is None:
                self.hashcons[key] = nid
            if key not in seen:
                seen[key] = nid
                keep.append(nid)
            vm, om = self._node_masks(tag, a, b, c)
            owner = self.cfind(self.node_class[nid])
            jv = <long long> self.var_mask[owner] & vm
            jo = <long long> self.one_mask[owner] | om
            if jv != <long long> self.var_mask[owner] or jo != <long long> self.one_mask[owner]:
                self.var_mask[owner] = jv
                self.one_mask[owner] = jo
                self.dirty.append(owner)
        root = self.cfind(cls)
        (<list> self.class_parents[root]).extend(keep)

    # -- matching -----------------------------------------------------------------

    cdef bint _exec(self, object rule, list prog, int[64] regs, int[8] tags,
                    int pc, list out, long long limit):
        cdef int op, reg, tagreg, out_base, cls, nid, tag, j, bit, r1, r2, k
        cdef int nregs = rule.nregs, ntags
        cdef long long tagmask
        cdef list insns = prog
        if pc == len(insns):
            ntags = rule.ntagregs
            out.append((tuple([regs[j] for j in range(nregs)]),
                        tuple([tags[j] for j in range(ntags if ntags > 0 else 1)])))
            return len(out) < limit
        insn = insns[pc]
        op = <int> insn[0]
        if op == I_BIND:
            reg = <int> insn[1]
            tagmask = <long long> insn[2]
            tagreg = <int> insn[3]
            out_base = <int> insn[4]
            cls = self.cfind(regs[reg])
            for nid_obj in <list> self.class_nodes[cls]:
                nid = <int> nid_obj
                tag = self.node_tag[nid]
                if not (tagmask >> tag) & 1:
                    continue
                if self.node_a[nid] >= 0:
                    regs[out_base] = self.cfind(self.node_a[nid])
                if self.node_b[nid] >= 0:
                    regs[out_base + 1] = self.cfind(self.node_b[nid])
                if self.node_c[nid] >= 0:
                    regs[out_base + 2] = self.cfind(self.node_c[nid])
                if tagreg >= 0:
                    tags[tagreg] = tag
                if not self._exec(rule, prog, regs, tags, pc + 1, out, limit):
                    return False
            return True
        if op == I_COMPARE:
            if self.cfind(regs[<int> insn[1]]) != self.cfind(regs[<int> insn[2]]):
                return True
        elif op == I_DISTINCT:
            if self.cfind(regs[<int> insn[1]]) == self.cfind(regs[<int> insn[2]]):
                return True
        elif op == I_PAYLOAD_GE:
            if <int> self.payload[self.cfind(regs[<int> insn[1]])] < <int> insn[2]:
                return True
        elif op == I_PAYLOAD_LT:
            if <int> self.payload[self.cfind(regs[<int> insn[1]])] >= <int> insn[2]:
                return True
        elif op == I_INVARIANT:
            bit = <int> self.payload[self.cfind(regs[<int> insn[2]])]
            if (<long long> self.var_mask[self.cfind(regs[<int> insn[1]])] >> bit) & 1:
                return True
        elif op == I_SIZE1:
            r1 = <int> insn[1]
            r2 = <int> insn[2]
            k = <int> insn[3]
            bit = r2 if k else <int> self.payload[self.cfind(regs[r2])]
            if not (<long long> self.one_mask[self.cfind(regs[r1])] >> bit) & 1:
                return True
        elif op == I_ISLEAF:
            if self.cfind(regs[<int> insn[1]]) != self.cfind(
                <int> self.rule_leaf_cls[<int> insn[2]]
            ):
                return True
        elif op == I_INVARIANT_LIT:
            if (<long long> self.var_mask[self.cfind(regs[<int> insn[1]])] >> <int> insn[2]) & 1:
                return True
        return self._exec(rule, prog, regs, tags, pc + 1, out, limit)

    def match_rule(self, rule, int upto, long long limit=1 << 60):
        cdef list matches = []
        cdef int[64] regs
        cdef int[8] tags
        cdef int nid, tag, root_tagreg = rule.root_tagreg
        cdef long long mask = rule.root_tagmask
        cdef list prog = rule.prog
        for nid in range(upto):
            tag = self.node_tag[nid]
            if not (mask >> tag) & 1:
                continue
            if self.hashcons.get(self.node_key[nid]) != nid:
                continue
            regs[0] = self.cfind(self.node_class[nid])
            if self.node_a[nid] >= 0:
                regs[1] = self.cfind(self.node_a[nid])
            if self.node_b[nid] >= 0:
                regs[2] = self.cfind(self.node_b[nid])
            if self.node_c[nid] >= 0:
                regs[3] = self.cfind(self.node_c[nid])
            if root_tagreg >= 0:
                tags[root_tagreg] = tag
            if not self._exec(rule, prog, regs, tags, 0, matches, limit):
                break
        return matches

    cdef int _resolve(self, int kind, int val, list tmps, tuple regs):
        if kind == SRC_TMP:
            return <int> tmps[val]
        if kind == SRC_REG:
            return self.cfind(<int> regs[val])
        return self.cfind(<int> self.rule_leaf_cls[val])

    def instantiate(self, rule, tuple regs, tuple tags):
        cdef list tmps = []
        cdef int tag, kind, val
        for tagspec, srcs in rule.rhs:
            tag = <int> tags[-<int> tagspec - 1] if <int> tagspec < 0 else <int> tagspec
            args = tuple(
                self._resolve(<int> k, <int> v, tmps, regs) for k, v in srcs
            )
            tmps.append(self.add(tag, args))
        kind, val = rule.rhs_result
        return self._resolve(kind, val, tmps, regs)

    def run_rules(self, rules, long long node_budget=1 << 60):
        cdef int upto = <int> self.node_tag.size()
        cdef list all_matches = []
        for rule in rules:
            for regs, tags in self.match_rule(rule, upto):
                all_matches.append((rule, regs, tags))
        cdef int merges = 0, made, root
        for rule, regs, tags in all_matches:
            made = self.instantiate(rule, regs, tags)
            root = self.cfind(<int> regs[0])
            if self.cfind(made) != root:
                self.merge(root, made, rule.index)
                merges += 1
            if <long long> self.node_tag.size() > node_budget:
                break
        self.rebuild()
        return merges
