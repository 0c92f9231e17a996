"""CNF formulas, DIMACS emit/parse, a small CDCL solver with two-watched
literals, an external-solver bridge, and the encodings used by the
robustness verifier: truth-table block biconditionals and BDD-based
pseudo-Boolean constraints.

Literal convention matches DIMACS: variables are positive ints, a negated
literal is the negative int.
"""

from __future__ import annotations

import heapq
import subprocess
import time
from dataclasses import dataclass, field

from .logic import Cover
from .robdd import Robdd, threshold_bdd


@dataclass
class CnfFormula:
    num_vars: int = 0
    clauses: list[list[int]] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    def new_var(self) -> int:
        self.num_vars += 1
        return self.num_vars

    def add(self, clause: list[int]) -> None:
        assert clause, "empty clause added directly; use add_false()"
        for lit in clause:
            if abs(lit) > self.num_vars:
                self.num_vars = abs(lit)
        self.clauses.append(clause)

    def add_unit(self, lit: int) -> None:
        self.add([lit])

    def check(self, assignment: dict[int, bool]) -> bool:
        return all(any(assignment.get(abs(l), False) == (l > 0) for l in cl)
                   for cl in self.clauses)


def emit_dimacs(cnf: CnfFormula) -> str:
    lines = [f"c {c}" for c in cnf.comments]
    lines.append(f"p cnf {cnf.num_vars} {len(cnf.clauses)}")
    lines += [" ".join(map(str, cl)) + " 0" for cl in cnf.clauses]
    return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> CnfFormula:
    cnf = CnfFormula()
    lits: list[int] = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("c"):
            if ln.startswith("c "):
                cnf.comments.append(ln[2:])
            continue
        if ln.startswith("p"):
            parts = ln.split()
            if parts[:2] != ["p", "cnf"]:
                raise ValueError(f"bad problem line: {ln!r}")
            cnf.num_vars = int(parts[2])
            continue
        for tok in ln.split():
            v = int(tok)
            if v == 0:
                cnf.add(lits)
                lits = []
            else:
                lits.append(v)
    if lits:
        raise ValueError("dimacs clause not terminated by 0")
    return cnf


# ---------------------------------------------------------------------------
# CDCL with two watched literals


def solve(cnf: CnfFormula, assumptions: list[int] | None = None,
          max_decisions: int | None = None,
          timeout_s: float | None = None):
    """Returns (sat: bool | None, model: dict[var,bool] | None).

    sat is None if max_decisions or timeout_s was exhausted (treated as a
    timeout by callers).  CDCL: two watched literals, first-UIP clause
    learning with backjumping, VSIDS-style activities, phase saving and
    geometric restarts.
    """
    deadline = None if timeout_s is None else time.monotonic() + timeout_s
    nv = cnf.num_vars
    assign = [0] * (nv + 1)  # 0 unset, 1 true, -1 false
    level = [0] * (nv + 1)
    reason = [-1] * (nv + 1)  # antecedent clause index, -1 for decisions
    saved = [True] * (nv + 1)  # phase saving, positive first
    trail: list[int] = []
    trail_lim: list[int] = []
    qhead = 0
    watches: dict[int, list[int]] = {}
    clauses: list[list[int]] = []
    units: list[int] = list(assumptions or [])

    for cl in cnf.clauses:
        cl = list(dict.fromkeys(cl))
        if any(-l in cl for l in cl):
            continue  # tautology
        if not cl:
            return False, None
        if len(cl) == 1:
            units.append(cl[0])
            continue
        ci = len(clauses)
        clauses.append(cl)
        watches.setdefault(cl[0], []).append(ci)
        watches.setdefault(cl[1], []).append(ci)

    def value(lit: int) -> int:
        v = assign[abs(lit)]
        return v if lit > 0 else -v

    def enqueue(lit: int, rsn: int = -1) -> bool:
        v = value(lit)
        if v == -1:
            return False
        if v == 0:
            a = abs(lit)
            assign[a] = 1 if lit > 0 else -1
            level[a] = len(trail_lim)
            reason[a] = rsn
            trail.append(lit)
        return True

    def propagate() -> int:
        # returns conflicting clause index, or -1
        nonlocal qhead
        while qhead < len(trail):
            neg = -trail[qhead]
            qhead += 1
            ws = watches.get(neg)
            if not ws:
                continue
            i = 0
            while i < len(ws):
                ci = ws[i]
                cl = clauses[ci]
                if cl[0] == neg:
                    cl[0], cl[1] = cl[1], cl[0]
                if value(cl[0]) == 1:
                    i += 1
                    continue
                moved = False
                for k in range(2, len(cl)):
                    if value(cl[k]) != -1:
                        cl[1], cl[k] = cl[k], cl[1]
                        watches.setdefault(cl[1], []).append(ci)
                        ws[i] = ws[-1]
                        ws.pop()
                        moved = True
                        break
                if moved:
                    continue
                if not enqueue(cl[0], ci):
                    return ci
                i += 1
        return -1

    for lit in units:
        if not enqueue(lit):
            return False, None
    if propagate() != -1:
        return False, None

    activity = [0.0] * (nv + 1)
    for cl in clauses:
        for lit in cl:
            activity[abs(lit)] += 1.0
    var_inc = 1.0
    heap = [(-activity[v], v) for v in range(1, nv + 1)]
    heapq.heapify(heap)

    def bump(v: int):
        nonlocal var_inc
        activity[v] += var_inc
        heapq.heappush(heap, (-activity[v], v))
        if activity[v] > 1e100:
            for i in range(1, nv + 1):
                activity[i] *= 1e-100
            var_inc *= 1e-100

    seen = [False] * (nv + 1)

    def analyze(confl: int):
        # first-UIP conflict analysis; learnt[0] is the asserting literal
        learnt = [0]
        counter = 0
        p = 0
        idx = len(trail) - 1
        cur = len(trail_lim)
        cl = clauses[confl]
        first = 0
        while True:
            for q in cl[first:]:
                v = abs(q)
                if not seen[v] and level[v] > 0:
                    seen[v] = True
                    bump(v)
                    if level[v] == cur:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[abs(trail[idx])]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            seen[abs(p)] = False
            counter -= 1
            if counter == 0:
                break
            cl = clauses[reason[abs(p)]]
            first = 1  # cl[0] is p itself
        learnt[0] = -p
        for q in learnt[1:]:
            seen[abs(q)] = False
        if len(learnt) == 1:
            return learnt, 0
        # second slot must hold a literal from the backjump level
        mi = max(range(1, len(learnt)), key=lambda i: level[abs(learnt[i])])
        learnt[1], learnt[mi] = learnt[mi], learnt[1]
        return learnt, level[abs(learnt[1])]

    def backtrack(blevel: int):
        nonlocal qhead
        while len(trail_lim) > blevel:
            mark = trail_lim.pop()
            for l in trail[mark:]:
                a = abs(l)
                saved[a] = assign[a] == 1
                assign[a] = 0
                heapq.heappush(heap, (-activity[a], a))
            del trail[mark:]
        qhead = len(trail)

    decisions = 0
    conflicts_since_restart = 0
    restart_limit = 100.0
    while True:
        confl = propagate()
        if confl != -1:
            if not trail_lim:
                return False, None
            learnt, blevel = analyze(confl)
            backtrack(blevel)
            if len(learnt) == 1:
                enqueue(learnt[0])
            else:
                ci = len(clauses)
                clauses.append(learnt)
                watches.setdefault(learnt[0], []).append(ci)
                watches.setdefault(learnt[1], []).append(ci)
                enqueue(learnt[0], ci)
            var_inc /= 0.95
            conflicts_since_restart += 1
            if conflicts_since_restart >= restart_limit:
                conflicts_since_restart = 0
                restart_limit *= 1.5
                backtrack(0)
            continue
        v = 0
        while heap:
            act, cand = heapq.heappop(heap)
            if assign[cand] == 0 and -act == activity[cand]:
                v = cand
                break
        if v == 0:
            for cand in range(1, nv + 1):
                if assign[cand] == 0:
                    v = cand
                    break
        if v == 0:
            return True, {i: assign[i] == 1 for i in range(1, nv + 1)}
        decisions += 1
        if max_decisions is not None and decisions > max_decisions:
            return None, None
        if deadline is not None and decisions % 256 == 0 \
                and time.monotonic() > deadline:
            return None, None
        trail_lim.append(len(trail))
        enqueue(v if saved[v] else -v)


def run_external_solver(cnf: CnfFormula, command: list[str],
                        timeout_s: float | None = None):
    """Pipe DIMACS to an external solver and parse s/v lines.

    Accepts exit codes 10 (SAT) and 20 (UNSAT) as well as explicit
    's SATISFIABLE' / 's UNSATISFIABLE' lines.  Returns (sat, model).
    """
    proc = subprocess.run(command, input=emit_dimacs(cnf).encode(),
                          capture_output=True, timeout=timeout_s)
    out = proc.stdout.decode(errors="replace")
    sat = None
    model: dict[int, bool] = {}
    for ln in out.splitlines():
        if ln.startswith("s "):
            if "UNSATISFIABLE" in ln:
                sat = False
            elif "SATISFIABLE" in ln:
                sat = True
        elif ln.startswith("v "):
            for tok in ln[2:].split():
                v = int(tok)
                if v != 0:
                    model[abs(v)] = v > 0
    if sat is None:
        if proc.returncode == 10:
            sat = True
        elif proc.returncode == 20:
            sat = False
        else:
            raise RuntimeError(f"solver gave no verdict (rc={proc.returncode})")
    return sat, (model if sat else None)


# ---------------------------------------------------------------------------
# encodings


def encode_block(cnf: CnfFormula, dnf: Cover, cnf_cover: Cover,
                 in_vars: list[int], out_var: int) -> None:
    """Assert out_var <-> f(in_vars) for one truth-table block output.

    Uses the two minimized covers directly, no auxiliary variables:
    each CNF clause c gives (~out | c); each DNF term t gives (~t | out),
    i.e. one clause of negated term literals plus out.
    """
    def lit(pos: int, positive: bool) -> int:
        return in_vars[pos] if positive else -in_vars[pos]

    if dnf.constant is not None:
        cnf.add_unit(out_var if dnf.constant else -out_var)
        return
    for lits in cnf_cover.clause_literals():
        cnf.add([-out_var] + [lit(j, p) for j, p in lits])
    for lits in dnf.clause_literals():
        cnf.add([out_var] + [-lit(j, p) for j, p in lits])


def encode_pb_leq(cnf: CnfFormula, terms: list[tuple[int, int]],
                  bound: int) -> None:
    """Assert sum(coeff * lit) <= bound via a BDD of the constraint.

    terms are (coeff, literal) pairs; negative literals are rewritten as
    coeff*(1 - var).  Tseitin encodes each BDD node with an aux variable
    and asserts the root.
    """
    coeffs, vars_ = [], []
    for c, lit in terms:
        if c == 0:
            continue
        if lit < 0:
            bound -= c
            c = -c
            lit = -lit
        coeffs.append(c)
        vars_.append(lit)
    if not coeffs:
        if bound < 0:
            v = cnf.new_var()
            cnf.add([v])
            cnf.add([-v])
        return
    # deterministic order: by variable index
    pairs = sorted(zip(vars_, coeffs))
    vars_ = [p[0] for p in pairs]
    coeffs = [p[1] for p in pairs]

    bdd = Robdd(num_vars=len(coeffs))
    root = threshold_bdd(bdd, coeffs, bound, list(range(len(coeffs))))
    if root == 1:
        return
    if root == 0:
        v = vars_[0]
        cnf.add([v])
        cnf.add([-v])
        return

    aux: dict[int, int] = {}
    for u in sorted(bdd.reachable(root)):
        aux[u] = cnf.new_var()
    for u, a in aux.items():
        rank, lo, hi = bdd.nodes[u]
        x = vars_[rank]
        # a -> (x ? hi : lo)
        if hi == 0:
            cnf.add([-a, -x])
        elif hi != 1:
            cnf.add([-a, -x, aux[hi]])
        if lo == 0:
            cnf.add([-a, x])
        elif lo != 1:
            cnf.add([-a, x, aux[lo]])
    cnf.add([aux[root]])


def encode_pb_geq(cnf: CnfFormula, terms: list[tuple[int, int]],
                  bound: int) -> None:
    """sum(coeff * lit) >= bound, by negating to a <= constraint."""
    encode_pb_leq(cnf, [(-c, l) for c, l in terms], -bound)
