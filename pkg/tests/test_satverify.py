import itertools
import pathlib
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttnet.logic import qmc_minimize
from ttnet.satverify import (
    CnfFormula,
    emit_dimacs,
    encode_block,
    encode_pb_geq,
    encode_pb_leq,
    parse_dimacs,
    run_external_solver,
    solve,
)

GOLDEN_TABLE = np.array([0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1])


def brute_force(cnf):
    for bits in itertools.product([False, True], repeat=cnf.num_vars):
        asg = {i + 1: bits[i] for i in range(cnf.num_vars)}
        if cnf.check(asg):
            return True
    return False


def mk(nv, clauses):
    f = CnfFormula(num_vars=nv)
    for cl in clauses:
        f.add(list(cl))
    return f


def test_trivial_sat_unsat():
    sat, model = solve(mk(1, [[1]]))
    assert sat and model[1]
    sat, _ = solve(mk(1, [[1], [-1]]))
    assert sat is False
    sat, model = solve(mk(2, [[1, 2], [-1, 2], [1, -2]]))
    assert sat and model[1] and model[2]


def test_assumptions():
    f = mk(2, [[1, 2]])
    sat, model = solve(f, assumptions=[-1])
    assert sat and model[2]
    sat, _ = solve(f, assumptions=[-1, -2])
    assert sat is False


def test_php_unsat():
    # pigeonhole 4 pigeons / 3 holes, classic small UNSAT instance
    def v(p, h):
        return p * 3 + h + 1
    cls = [[v(p, h) for h in range(3)] for p in range(4)]
    for h in range(3):
        for p1 in range(4):
            for p2 in range(p1 + 1, 4):
                cls.append([-v(p1, h), -v(p2, h)])
    sat, _ = solve(mk(12, cls))
    assert sat is False


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 8), st.data())
def test_solver_matches_brute_force(nv, data):
    n_clauses = data.draw(st.integers(0, 20))
    lit = st.integers(1, nv).flatmap(
        lambda v: st.sampled_from([v, -v]))
    clauses = data.draw(st.lists(
        st.lists(lit, min_size=1, max_size=4), min_size=n_clauses,
        max_size=n_clauses))
    f = mk(nv, clauses)
    sat, model = solve(f)
    assert sat == brute_force(f)
    if sat:
        assert f.check(model)


def test_dimacs_roundtrip():
    f = mk(3, [[1, -2], [2, 3], [-3]])
    f.comments.append("hello")
    text = emit_dimacs(f)
    assert text.startswith("c hello\np cnf 3 3\n")
    g = parse_dimacs(text)
    assert g.num_vars == 3 and g.clauses == f.clauses


def test_external_solver_agrees():
    # bundled reference solver, exercised through the subprocess bridge
    script = pathlib.Path(__file__).resolve().parents[1] / "scripts" / "dimacs_solve.py"
    cmd = [sys.executable, str(script)]
    f = mk(2, [[1, 2], [-1, 2], [1, -2]])
    sat, model = run_external_solver(f, cmd)
    assert sat and f.check(model)
    g = mk(1, [[1], [-1]])
    sat, model = run_external_solver(g, cmd)
    assert sat is False and model is None


# --- block biconditional -------------------------------------------------


def assert_biconditional(entries):
    n = len(entries).bit_length() - 1
    dnf = qmc_minimize(entries, "dnf")
    cnf_cover = qmc_minimize(entries, "cnf")
    f = CnfFormula()
    in_vars = [f.new_var() for _ in range(n)]
    out = f.new_var()
    encode_block(f, dnf, cnf_cover, in_vars, out)
    for r in range(1 << n):
        asm = [in_vars[j] if (r >> (n - 1 - j)) & 1 else -in_vars[j]
               for j in range(n)]
        want = int(entries[r])
        sat_pos, _ = solve(f, assumptions=asm + [out])
        sat_neg, _ = solve(f, assumptions=asm + [-out])
        assert sat_pos == bool(want) and sat_neg == (not want)


def test_encode_block_golden():
    assert_biconditional(GOLDEN_TABLE)


def test_encode_block_clause_shape():
    # [PAPER] a one-literal function f = u yields exactly (~o | u), (~u | o)
    f = CnfFormula()
    u = f.new_var()
    o = f.new_var()
    t = np.array([0, 1])
    encode_block(f, qmc_minimize(t, "dnf"), qmc_minimize(t, "cnf"), [u], o)
    assert sorted(sorted(c) for c in f.clauses) == [[-o, u], [-u, o]]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.data())
def test_encode_block_random(n, data):
    entries = np.array(data.draw(st.lists(
        st.integers(0, 1), min_size=1 << n, max_size=1 << n)))
    assert_biconditional(entries)


# --- pseudo-Boolean ------------------------------------------------------


def pb_models(nv, f):
    out = []
    for bits in itertools.product([False, True], repeat=nv):
        asg = {i + 1: bits[i] for i in range(nv)}
        # project onto original vars; aux vars are existential
        sub = CnfFormula(num_vars=f.num_vars)
        sub.clauses = list(f.clauses)
        asm = [i + 1 if bits[i] else -(i + 1) for i in range(nv)]
        sat, _ = solve(sub, assumptions=asm)
        out.append((bits, sat))
    return out


@settings(max_examples=120, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=6),
       st.integers(-8, 8), st.data())
def test_pb_leq_exhaustive(coeffs, bound, data):
    nv = len(coeffs)
    f = CnfFormula(num_vars=nv)
    signs = data.draw(st.lists(st.sampled_from([1, -1]),
                               min_size=nv, max_size=nv))
    terms = [(c, s * (i + 1)) for i, (c, s) in enumerate(zip(coeffs, signs))]
    encode_pb_leq(f, terms, bound)
    for bits, sat in pb_models(nv, f):
        val = sum(c * (bits[abs(l) - 1] if l > 0 else not bits[abs(l) - 1])
                  for c, l in terms)
        assert sat == (val <= bound)


def test_pb_reference_constraint():
    # [PAPER] x1 - 2*x2 + 3*x3 <= 3: only assignment violating it is (1,0,1)
    f = CnfFormula(num_vars=3)
    encode_pb_leq(f, [(1, 1), (-2, 2), (3, 3)], 3)
    sats = [s for _, s in pb_models(3, f)]
    assert sats.count(True) == 7
    for bits, sat in pb_models(3, f):
        assert sat == (bits != (True, False, True))


def test_pb_geq():
    f = CnfFormula(num_vars=2)
    encode_pb_geq(f, [(2, 1), (3, 2)], 3)
    want = {(False, False): False, (True, False): False,
            (False, True): True, (True, True): True}
    for bits, sat in pb_models(2, f):
        assert sat == want[bits]
