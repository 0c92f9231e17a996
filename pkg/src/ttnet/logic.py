"""Two-level minimization of ternary truth tables (Quine-McCluskey with
don't-cares), cover selection, DNF/CNF emission, gate counting and 2-input
gate netlists.

Conventions used throughout the project:

* A table over n inputs has 2^n rows.  Row index r encodes the input bits
  with x0 as the most significant bit: x_j = (r >> (n-1-j)) & 1.
* An implicant (cube) is a pair of bitmasks (mask, value) aligned with the
  row index: the cube covers row r iff (r & mask) == value.  A cleared mask
  bit is a dash.
* Table entries are 0, 1 or DCT (= 2, don't care).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

ZERO, ONE, DCT = 0, 1, 2

# Exact cover selection (Petrick) is exponential; above this many residual
# primes we fall back to greedy max-coverage.
PETRICK_LIMIT = 24


@dataclass(frozen=True)
class Cube:
    """One implicant over n positions, encoded as (mask, value) bitmasks."""

    mask: int
    value: int
    n: int

    def covers(self, row: int) -> bool:
        return (row & self.mask) == self.value

    def literals(self) -> list[tuple[int, bool]]:
        """(position, positive?) pairs, position 0 = x0 (MSB of the row)."""
        out = []
        for j in range(self.n):
            bit = 1 << (self.n - 1 - j)
            if self.mask & bit:
                out.append((j, bool(self.value & bit)))
        return out

    def num_literals(self) -> int:
        return bin(self.mask).count("1")

    def rows(self) -> list[int]:
        """All row indices covered by this cube."""
        free = [1 << (self.n - 1 - j) for j in range(self.n)
                if not (self.mask & (1 << (self.n - 1 - j)))]
        rows = [self.value]
        for bit in free:
            rows += [r | bit for r in rows]
        return rows


@dataclass
class Cover:
    """A selected implicant cover of one table, in DNF or CNF form.

    For form == "cnf" each cube is a prime implicant of the *complement*;
    the corresponding clause is the complemented cube (literal x_j if the
    cube has value bit 0 at j, negated otherwise).
    """

    form: str  # "dnf" | "cnf"
    n: int
    cubes: list[Cube]
    constant: int | None = None  # 0/1 when the function is constant
    names: list[str] | None = None
    source: str = ""

    def eval_row(self, row: int) -> int:
        if self.constant is not None:
            return self.constant
        hit = any(c.covers(row) for c in self.cubes)
        if self.form == "dnf":
            return 1 if hit else 0
        return 0 if hit else 1  # some complement-cube fires -> f = 0

    def clause_literals(self) -> list[list[tuple[int, bool]]]:
        """Per clause: list of (position, positive?) literals.

        For DNF a clause is a conjunction; for CNF a disjunction (with the
        polarity of each literal flipped relative to the stored cube).
        """
        out = []
        for c in self.cubes:
            lits = c.literals()
            if self.form == "cnf":
                lits = [(j, not pos) for j, pos in lits]
            out.append(lits)
        return out

    def num_literals(self) -> int:
        return sum(c.num_literals() for c in self.cubes)

    def to_string(self, names: list[str] | None = None) -> str:
        names = names or self.names or [f"x{j}" for j in range(self.n)]
        if self.constant is not None:
            return str(self.constant)
        inner, outer = ("&", " | ") if self.form == "dnf" else ("|", " & ")
        parts = []
        for lits in self.clause_literals():
            terms = [(names[j] if pos else "~" + names[j]) for j, pos in lits]
            s = inner.join(terms) if len(terms) > 1 else terms[0]
            parts.append(f"({s})" if len(terms) > 1 else s)
        return outer.join(parts)


def _prime_implicants(n: int, on: list[int], dc: list[int]) -> list[Cube]:
    """Classic grouped-by-popcount merging pass with hash deduplication."""
    level: set[tuple[int, int]] = {((1 << n) - 1, r) for r in on + dc}
    primes: set[tuple[int, int]] = set()
    while level:
        groups: dict[tuple[int, int], list[int]] = {}
        for mask, value in level:
            groups.setdefault((mask, bin(value).count("1")), []).append(value)
        merged: set[tuple[int, int]] = set()
        nxt: set[tuple[int, int]] = set()
        for (mask, ones), values in groups.items():
            partner = groups.get((mask, ones + 1), [])
            if not partner:
                continue
            pset = set(partner)
            for v in values:
                for j in range(n):
                    bit = 1 << j
                    if not (mask & bit) or (v & bit):
                        continue
                    if (v | bit) in pset:
                        merged.add((mask, v))
                        merged.add((mask, v | bit))
                        nxt.add((mask & ~bit, v))
        primes |= level - merged
        level = nxt
    return [Cube(m, v, n) for m, v in primes]


def _select_cover(primes: list[Cube], required: list[int]) -> list[Cube]:
    """Essential-prime extraction, then Petrick (exact) or greedy fallback."""
    primes = sorted(primes, key=lambda c: (c.mask, c.value))
    cover_of = {r: [i for i, c in enumerate(primes) if c.covers(r)]
                for r in required}
    chosen: set[int] = set()
    uncovered = set(required)
    # essentials
    for r, cs in cover_of.items():
        if len(cs) == 1:
            chosen.add(cs[0])
    for i in chosen:
        uncovered -= set(primes[i].rows())
    uncovered = {r for r in uncovered
                 if not any(primes[i].covers(r) for i in chosen)}

    if uncovered:
        residual = sorted({i for r in uncovered for i in cover_of[r]})
        if len(residual) <= PETRICK_LIMIT:
            chosen |= _petrick(primes, residual, sorted(uncovered))
        else:
            chosen |= _greedy(primes, residual, set(uncovered))
    return sorted((primes[i] for i in chosen), key=lambda c: (c.mask, c.value))


def _petrick(primes: list[Cube], residual: list[int],
             uncovered: list[int]) -> set[int]:
    """Exact minimal selection by product-of-sums expansion.

    Minimizes total literal count first, then implicant count, with a
    lexicographic tie-break on the cube encodings for reproducibility.
    """
    products: set[frozenset[int]] = {frozenset()}
    for r in uncovered:
        options = [i for i in residual if primes[i].covers(r)]
        nxt: set[frozenset[int]] = set()
        for p in products:
            for i in options:
                nxt.add(p | {i})
        # prune dominated products (supersets of another product)
        pruned = {p for p in nxt
                  if not any(q < p for q in nxt)}
        products = pruned

    def key(p: frozenset[int]):
        lits = sum(primes[i].num_literals() for i in p)
        cubes = sorted((primes[i].mask, primes[i].value) for i in p)
        return (lits, len(p), cubes)

    return set(min(products, key=key))


def _greedy(primes: list[Cube], residual: list[int],
            uncovered: set[int]) -> set[int]:
    chosen: set[int] = set()
    while uncovered:
        best, best_key = None, None
        for i in residual:
            if i in chosen:
                continue
            gain = sum(1 for r in uncovered if primes[i].covers(r))
            if gain == 0:
                continue
            k = (-gain, primes[i].mask, primes[i].value)
            if best_key is None or k < best_key:
                best, best_key = i, k
        assert best is not None
        chosen.add(best)
        uncovered = {r for r in uncovered if not primes[best].covers(r)}
    return chosen


def qmc_minimize(entries: np.ndarray, form: str = "dnf",
                 names: list[str] | None = None, source: str = "") -> Cover:
    """Minimize a ternary table (values in {0,1,DCT}) into a DNF or CNF cover.

    DCT rows may be absorbed by implicants but never need to be covered.
    For CNF the complement is minimized and clauses are the complemented
    prime cubes.
    """
    entries = np.asarray(entries)
    size = len(entries)
    n = size.bit_length() - 1
    if size != 1 << n:
        raise ValueError(f"table length {size} is not a power of two")
    if form not in ("dnf", "cnf"):
        raise ValueError(f"unknown form {form!r}")

    target = ONE if form == "dnf" else ZERO
    on = [int(r) for r in np.nonzero(entries == target)[0]]
    dc = [int(r) for r in np.nonzero(entries == DCT)[0]]

    if not on:
        const = 0 if form == "dnf" else 1
        return Cover(form, n, [], constant=const, names=names, source=source)
    if len(on) + len(dc) == size:
        const = 1 if form == "dnf" else 0
        return Cover(form, n, [], constant=const, names=names, source=source)

    primes = _prime_implicants(n, on, dc)
    cubes = _select_cover(primes, on)
    return Cover(form, n, cubes, names=names, source=source)


def cover_agrees(cover: Cover, entries: np.ndarray) -> bool:
    """True iff the cover matches the table on every determined row."""
    for r, v in enumerate(entries):
        if v != DCT and cover.eval_row(r) != v:
            return False
    return True


def is_prime(cube: Cube, entries: np.ndarray, form: str) -> bool:
    """No single position of the cube can widen to dash and stay an implicant."""
    good = (ONE, DCT) if form == "dnf" else (ZERO, DCT)
    for j in range(cube.n):
        bit = 1 << (cube.n - 1 - j)
        if not (cube.mask & bit):
            continue
        widened = Cube(cube.mask & ~bit, cube.value & ~bit, cube.n)
        if all(entries[r] in good for r in widened.rows()):
            return False
    return True


# ---------------------------------------------------------------------------
# gate counting and netlists


def count_gates(cover: Cover) -> int:
    """2-input gate cost: a k-literal clause costs k-1 gates, m clauses cost
    m-1 combining gates; NOT is free."""
    if cover.constant is not None:
        return 0
    per_clause = sum(c.num_literals() - 1 for c in cover.cubes)
    return per_clause + (len(cover.cubes) - 1)


@dataclass
class Gate:
    op: str          # "and2" | "or2" | "not" | "const0" | "const1" | "input"
    a: int = -1      # node indices
    b: int = -1
    name: str = ""


@dataclass
class GateNetlist:
    """Flat 2-input AND/OR netlist with free NOT nodes on literals."""

    n_inputs: int
    nodes: list[Gate] = field(default_factory=list)
    output: int = -1
    input_names: list[str] = field(default_factory=list)

    def add(self, gate: Gate) -> int:
        self.nodes.append(gate)
        return len(self.nodes) - 1

    def gate_count(self) -> int:
        return sum(1 for g in self.nodes if g.op in ("and2", "or2"))

    def eval(self, bits: list[int]) -> int:
        vals: list[int] = []
        for g in self.nodes:
            if g.op == "input":
                vals.append(bits[g.a])
            elif g.op == "not":
                vals.append(1 - vals[g.a])
            elif g.op == "and2":
                vals.append(vals[g.a] & vals[g.b])
            elif g.op == "or2":
                vals.append(vals[g.a] | vals[g.b])
            elif g.op == "const0":
                vals.append(0)
            elif g.op == "const1":
                vals.append(1)
            else:
                raise ValueError(f"unknown gate op {g.op}")
        return vals[self.output]


def _tree(net: GateNetlist, op: str, leaves: list[int]) -> int:
    """Balanced binary tree of 2-input gates over the given leaf nodes."""
    while len(leaves) > 1:
        nxt = []
        for i in range(0, len(leaves) - 1, 2):
            nxt.append(net.add(Gate(op, leaves[i], leaves[i + 1])))
        if len(leaves) % 2:
            nxt.append(leaves[-1])
        leaves = nxt
    return leaves[0]


def to_netlist(cover: Cover, names: list[str] | None = None) -> GateNetlist:
    names = names or cover.names or [f"x{j}" for j in range(cover.n)]
    net = GateNetlist(n_inputs=cover.n, input_names=list(names))
    inputs = [net.add(Gate("input", a=j, name=names[j])) for j in range(cover.n)]
    if cover.constant is not None:
        net.output = net.add(Gate("const1" if cover.constant else "const0"))
        return net
    negs: dict[int, int] = {}

    def lit_node(j: int, pos: bool) -> int:
        if pos:
            return inputs[j]
        if j not in negs:
            negs[j] = net.add(Gate("not", a=inputs[j]))
        return negs[j]

    inner_op, outer_op = ("and2", "or2") if cover.form == "dnf" else ("or2", "and2")
    clause_nodes = []
    for lits in cover.clause_literals():
        leaves = [lit_node(j, pos) for j, pos in lits]
        clause_nodes.append(_tree(net, inner_op, leaves))
    net.output = _tree(net, outer_op, clause_nodes)
    return net


# ---------------------------------------------------------------------------
# BLIF-like text export / import
#
# Format (documented byte-exact):
#   .inputs <name> ...
#   .outputs y
#   .gate not   n<i> <src>
#   .gate and2  n<i> <srcA> <srcB>
#   .gate or2   n<i> <srcA> <srcB>
#   .gate const0|const1 n<i>
#   .assign y n<i>
#   .end
# Sources are input names or n<j> with j an earlier gate line.


def export_netlist(net: GateNetlist) -> str:
    lines = [".inputs " + " ".join(net.input_names), ".outputs y"]
    ids: dict[int, str] = {}
    for i, g in enumerate(net.nodes):
        if g.op == "input":
            ids[i] = g.name
            continue
        ids[i] = f"n{i}"
        if g.op == "not":
            lines.append(f".gate not {ids[i]} {ids[g.a]}")
        elif g.op in ("and2", "or2"):
            lines.append(f".gate {g.op} {ids[i]} {ids[g.a]} {ids[g.b]}")
        else:
            lines.append(f".gate {g.op} {ids[i]}")
    lines.append(f".assign y {ids[net.output]}")
    lines.append(".end")
    return "\n".join(lines) + "\n"


def import_netlist(text: str) -> GateNetlist:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(".inputs"):
        raise ValueError("netlist text must start with .inputs")
    names = lines[0].split()[1:]
    net = GateNetlist(n_inputs=len(names), input_names=names)
    by_name = {nm: net.add(Gate("input", a=j, name=nm))
               for j, nm in enumerate(names)}
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == ".outputs" or parts[0] == ".end":
            continue
        if parts[0] == ".gate":
            op, out = parts[1], parts[2]
            srcs = [by_name[s] for s in parts[3:]]
            if op == "not":
                by_name[out] = net.add(Gate("not", a=srcs[0]))
            elif op in ("and2", "or2"):
                by_name[out] = net.add(Gate(op, srcs[0], srcs[1]))
            elif op in ("const0", "const1"):
                by_name[out] = net.add(Gate(op))
            else:
                raise ValueError(f"unknown gate op {op!r}")
        elif parts[0] == ".assign":
            net.output = by_name[parts[2]]
        else:
            raise ValueError(f"unparsable netlist line: {ln!r}")
    if net.output < 0:
        raise ValueError("netlist has no .assign line")
    return net
