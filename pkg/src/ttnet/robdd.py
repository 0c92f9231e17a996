"""Reduced ordered BDDs with a hash-consed node store.

Terminal nodes are the ints 0 and 1.  Internal nodes are ints >= 2 indexing
into the store; each maps to (var, lo, hi) where lo is the var=0 branch.
Canonical for a fixed variable order: no node with lo == hi, no duplicate
(var, lo, hi) triples.  Also hosts the threshold-function BDDs used by the
pseudo-Boolean CNF encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .logic import Cover


@dataclass
class Robdd:
    num_vars: int
    # node id -> (var, lo, hi); ids 0 and 1 are the terminals
    nodes: list[tuple[int, int, int]] = field(default_factory=lambda: [(-1, -1, -1), (-1, -1, -1)])
    _unique: dict[tuple[int, int, int], int] = field(default_factory=dict)
    _cache: dict[tuple, int] = field(default_factory=dict)

    def mk(self, var: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        key = (var, lo, hi)
        node = self._unique.get(key)
        if node is None:
            self.nodes.append(key)
            node = len(self.nodes) - 1
            self._unique[key] = node
        return node

    def var_of(self, u: int) -> int:
        return self.nodes[u][0] if u > 1 else self.num_vars

    def ite(self, f: int, g: int, h: int) -> int:
        if f == 1:
            return g
        if f == 0:
            return h
        if g == h:
            return g
        if g == 1 and h == 0:
            return f
        key = ("ite", f, g, h)
        r = self._cache.get(key)
        if r is not None:
            return r
        v = min(self.var_of(f), self.var_of(g), self.var_of(h))

        def co(u: int, b: int) -> int:
            if u > 1 and self.nodes[u][0] == v:
                return self.nodes[u][1 + b]
            return u

        r = self.mk(v, self.ite(co(f, 0), co(g, 0), co(h, 0)),
                    self.ite(co(f, 1), co(g, 1), co(h, 1)))
        self._cache[key] = r
        return r

    def apply_and(self, a: int, b: int) -> int:
        return self.ite(a, b, 0)

    def apply_or(self, a: int, b: int) -> int:
        return self.ite(a, 1, b)

    def apply_not(self, a: int) -> int:
        return self.ite(a, 0, 1)

    def literal(self, var: int, positive: bool = True) -> int:
        return self.mk(var, 0, 1) if positive else self.mk(var, 1, 0)

    def eval(self, root: int, bits) -> int:
        u = root
        while u > 1:
            var, lo, hi = self.nodes[u]
            u = hi if bits[var] else lo
        return u

    def reachable(self, root: int) -> set[int]:
        seen: set[int] = set()
        stack = [root]
        while stack:
            u = stack.pop()
            if u in seen or u <= 1:
                continue
            seen.add(u)
            stack.extend(self.nodes[u][1:])
        return seen

    def node_count(self, root: int) -> int:
        """Internal (non-terminal) nodes reachable from root."""
        return len(self.reachable(root))

    def sat_count(self, root: int) -> int:
        """Number of satisfying assignments over all num_vars variables."""
        memo: dict[int, int] = {}

        def go(u: int) -> int:
            # counts assignments of the variables >= var_of(u)
            if u <= 1:
                return u
            if u in memo:
                return memo[u]
            var, lo, hi = self.nodes[u]
            total = (go(lo) << (self.var_of(lo) - var - 1)) + \
                    (go(hi) << (self.var_of(hi) - var - 1))
            memo[u] = total
            return total

        return go(root) << self.var_of(root)


def from_cover(cover: Cover, order: list[int] | None = None) -> tuple[Robdd, int]:
    """Build the ROBDD of a minimized cover.

    order maps rank -> original position; default is the identity
    (patch position order).  Returns (store, root).
    """
    order = order or list(range(cover.n))
    rank = {pos: i for i, pos in enumerate(order)}
    bdd = Robdd(num_vars=cover.n)
    if cover.constant is not None:
        return bdd, cover.constant
    clause_roots = []
    inner_or = cover.form == "cnf"
    for lits in cover.clause_literals():
        # build bottom-up in rank order for linear-size clause BDDs
        lits = sorted(lits, key=lambda lp: rank[lp[0]], reverse=True)
        acc = 0 if inner_or else 1
        for pos, positive in lits:
            lit = bdd.literal(rank[pos], positive)
            acc = bdd.apply_or(lit, acc) if inner_or else bdd.apply_and(lit, acc)
        clause_roots.append(acc)
    root = clause_roots[0]
    for c in clause_roots[1:]:
        root = bdd.apply_and(root, c) if inner_or else bdd.apply_or(root, c)
    return bdd, root


def from_table(entries, order: list[int] | None = None) -> tuple[Robdd, int]:
    """ROBDD straight from a 0/1 table (DCTs resolved to 0), via Shannon
    expansion bottom-up.  Row index has position 0 as MSB."""
    size = len(entries)
    n = size.bit_length() - 1
    order = order or list(range(n))
    bdd = Robdd(num_vars=n)
    # leaf value for assignment a (in rank order) = entries[row(a)]
    cur = []
    for a in range(size):
        row = 0
        for i, pos in enumerate(order):
            if (a >> (n - 1 - i)) & 1:
                row |= 1 << (n - 1 - pos)
        cur.append(1 if entries[row] == 1 else 0)
    for level in range(n - 1, -1, -1):
        cur = [bdd.mk(level, cur[2 * i], cur[2 * i + 1])
               for i in range(len(cur) // 2)]
    return bdd, cur[0]


def threshold_bdd(bdd: Robdd, coeffs: list[int], bound: int,
                  vars_: list[int]) -> int:
    """ROBDD root of the constraint sum(coeffs[i] * x_{vars_[i]}) <= bound.

    vars_ must be strictly increasing (already in BDD rank order).  Standard
    interval-memoized construction: states at depth i are collapsed by the
    residual bound, and negative coefficients are handled by tracking the
    reachable sum range.
    """
    memo: dict[tuple[int, int], int] = {}
    # suffix min/max of remaining sum, for early termination
    k = len(coeffs)
    suf_min = [0] * (k + 1)
    suf_max = [0] * (k + 1)
    for i in range(k - 1, -1, -1):
        suf_min[i] = suf_min[i + 1] + min(0, coeffs[i])
        suf_max[i] = suf_max[i + 1] + max(0, coeffs[i])

    def go(i: int, b: int) -> int:
        if suf_max[i] <= b:
            return 1
        if suf_min[i] > b:
            return 0
        key = (i, b)
        r = memo.get(key)
        if r is None:
            r = bdd.mk(vars_[i], go(i + 1, b), go(i + 1, b - coeffs[i]))
            memo[key] = r
        return r

    return go(0, bound)


def export_dot(bdd: Robdd, root: int, names: list[str] | None = None,
               title: str = "robdd") -> str:
    """Graphviz text: solid edge = var 1, dashed = var 0."""
    names = names or [f"x{j}" for j in range(bdd.num_vars)]
    lines = [f"digraph {title} {{",
             '  t0 [shape=box,label="0"]; t1 [shape=box,label="1"];']
    def ref(u):
        return f"t{u}" if u <= 1 else f"n{u}"
    for u in sorted(bdd.reachable(root)):
        var, lo, hi = bdd.nodes[u]
        lines.append(f'  n{u} [label="{names[var]}"];')
        lines.append(f"  n{u} -> {ref(lo)} [style=dashed];")
        lines.append(f"  n{u} -> {ref(hi)};")
    if root <= 1:
        lines.append(f'  root [shape=plaintext,label="f = {root}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
