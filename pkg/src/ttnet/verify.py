"""Sound and complete l-inf robustness verification of compiled models.

Pipeline per input: endpoint analysis finds the UNKNOWN input bits inside
the eps-ball (the preprocessing is monotone per pixel, so the two clamped
endpoints decide each bit); truth tables are cofactored on the fixed bits
(blocks with no unknown inputs collapse to constants); each surviving block
output gets a biconditional CNF from its two minimized covers; one SAT
query per adversarial target class adds the folded-final-layer
pseudo-Boolean constraint.  All UNSAT = VERIFIED; any SAT model decodes to
a concrete adversarial input which is replayed through the lookup-table
engine before being reported.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .logic import qmc_minimize
from .satverify import (CnfFormula, emit_dimacs, encode_block, encode_pb_geq,
                        run_external_solver, solve)
from .tables import CompiledModel, TruthTable


def unknown_bits(cm: CompiledModel, x: np.ndarray, eps: float,
                 clamp: tuple[float, float] = (0.0, 1.0)):
    """Per input element: fixed binarized value + UNKNOWN mask.

    Evaluates the monotone preprocess at the two clamped interval
    endpoints; a bit is UNKNOWN iff the endpoints binarize differently.
    Returns (bits_lo, bits_hi, unknown_mask) with batch dim stripped.
    """
    lo = np.clip(x - eps, *clamp)[None]
    hi = np.clip(x + eps, *clamp)[None]
    b_lo = cm.binarize_input(lo.astype(np.float32))[0]
    b_hi = cm.binarize_input(hi.astype(np.float32))[0]
    return b_lo, b_hi, b_lo != b_hi


def cofactor(table: TruthTable, fixed: dict[int, int]):
    """Restrict a table by fixing some patch positions.

    Returns (free_positions, entries) where entries covers the free bits in
    their original relative order; with no free bits it is a length-1 array
    holding the constant.
    """
    free = [j for j in range(table.n) if j not in fixed]
    m = len(free)
    out = np.empty(1 << m, dtype=table.entries.dtype)
    base = 0
    for j, v in fixed.items():
        if v:
            base |= 1 << (table.n - 1 - j)
    for rr in range(1 << m):
        r = base
        for i, j in enumerate(free):
            if (rr >> (m - 1 - i)) & 1:
                r |= 1 << (table.n - 1 - j)
        out[rr] = table.entries[r]
    return free, out


@dataclass
class VerifyResult:
    verdict: str                     # VERIFIED | ATTACK | TIMEOUT
    n_unknown: int
    time_s: float
    queries: int
    target: int | None = None
    witness: np.ndarray | None = None


class _Encoder:
    """Walks the compiled model once, building block clauses over the
    unknown input bits; features come out as constants or literals."""

    def __init__(self, cm: CompiledModel, bits: np.ndarray,
                 unknown: np.ndarray):
        self.cm = cm
        self.cnf = CnfFormula()
        self.input_vars: dict[int, int] = {}   # flat input index -> var
        # per position: value 0/1, or -1 meaning "variable"
        val = bits.astype(np.int64).copy()
        var = np.zeros(val.shape, dtype=np.int64)
        flat_unknown = np.nonzero(unknown.reshape(-1))[0]
        vflat = var.reshape(-1)
        fval = val.reshape(-1)
        for idx in flat_unknown:
            v = self.cnf.new_var()
            self.input_vars[int(idx)] = v
            vflat[idx] = v
            fval[idx] = -1
        self.features_val, self.features_var = self._walk(val, var)

    def _walk(self, val, var):
        cm = self.cm
        for layer, geom in enumerate(cm.blocks):
            luts = cm.tables[layer]
            cpg = geom.in_channels // geom.groups
            fpg = geom.out_channels // geom.groups
            if geom.dims == 1:
                (k,), (s,) = geom.kernel, geom.stride
                n_pos = (val.shape[1] - k) // s + 1
                nval = np.zeros((geom.out_channels, n_pos), dtype=np.int64)
                nvar = np.zeros_like(nval)
                for f in range(geom.out_channels):
                    g = f // fpg
                    for p in range(n_pos):
                        pv = val[g * cpg:(g + 1) * cpg, p * s:p * s + k].reshape(-1)
                        pr = var[g * cpg:(g + 1) * cpg, p * s:p * s + k].reshape(-1)
                        nval[f, p], nvar[f, p] = self._block_out(
                            luts[f], pv, pr)
                val, var = nval, nvar
            else:
                kh, kw = geom.kernel
                sh, sw = geom.stride
                nh = (val.shape[1] - kh) // sh + 1
                nw = (val.shape[2] - kw) // sw + 1
                nval = np.zeros((geom.out_channels, nh, nw), dtype=np.int64)
                nvar = np.zeros_like(nval)
                for f in range(geom.out_channels):
                    g = f // fpg
                    for ph in range(nh):
                        for pw in range(nw):
                            pv = val[g * cpg:(g + 1) * cpg,
                                     ph * sh:ph * sh + kh,
                                     pw * sw:pw * sw + kw].reshape(-1)
                            pr = var[g * cpg:(g + 1) * cpg,
                                     ph * sh:ph * sh + kh,
                                     pw * sw:pw * sw + kw].reshape(-1)
                            nval[f, ph, pw], nvar[f, ph, pw] = \
                                self._block_out(luts[f], pv, pr)
                val, var = nval, nvar
        return val.reshape(-1), var.reshape(-1)

    def _block_out(self, table: TruthTable, pv, pr):
        """One (filter, patch): constant lookup or cofactored encoding.

        Verification models the deployed function, so the eval-time `hard`
        values are used, not the ternary minimization entries."""
        unknown_pos = [j for j in range(table.n) if pv[j] < 0]
        if not unknown_pos:
            r = 0
            for j in range(table.n):
                r = (r << 1) | int(pv[j])
            return int(table.hard[r]), 0
        fixed = {j: int(pv[j]) for j in range(table.n) if pv[j] >= 0}
        hard = TruthTable(table.n, table.hard, table.hard)
        free, sub = cofactor(hard, fixed)
        if (sub == sub[0]).all():
            return int(sub[0]), 0
        dnf = qmc_minimize(sub, "dnf")
        cnfc = qmc_minimize(sub, "cnf")
        out = self.cnf.new_var()
        in_vars = [int(pr[j]) for j in free]
        encode_block(self.cnf, dnf, cnfc, in_vars, out)
        return -1, out


def _class_query(enc: _Encoder, cm: CompiledModel, y: int, j: int) -> CnfFormula:
    """CNF asserting 'class j beats class y', sharing the block clauses."""
    q = CnfFormula(num_vars=enc.cnf.num_vars)
    q.clauses = list(enc.cnf.clauses)
    d = cm.w_tilde[j] - cm.w_tilde[y]
    bound = int(cm.b_tilde[y] - cm.b_tilde[j])
    terms = []
    for k in range(len(d)):
        if enc.features_val[k] >= 0:
            bound -= int(d[k]) * int(enc.features_val[k])
        elif d[k]:
            terms.append((int(d[k]), int(enc.features_var[k])))
    # argmax takes the first maximal index: a tie counts as an attack only
    # when the target class comes first
    if j > y:
        bound += 1
    # sum(terms) >= bound
    if not terms:
        if 0 >= bound:
            return q  # trivially SAT as-is
        v = q.new_var()
        q.add([v])
        q.add([-v])
        return q
    encode_pb_geq(q, terms, bound)
    return q


def _decode_witness(cm: CompiledModel, x, eps, clamp, b_lo, unknown,
                    input_vars, model) -> np.ndarray:
    lo = np.clip(x - eps, *clamp)
    hi = np.clip(x + eps, *clamp)
    adv = x.copy()
    flat_adv = adv.reshape(-1)
    flat_lo = lo.reshape(-1)
    flat_hi = hi.reshape(-1)
    flat_blo = b_lo.reshape(-1)
    for idx, var in input_vars.items():
        want = 1 if model.get(var, False) else 0
        flat_adv[idx] = flat_lo[idx] if flat_blo[idx] == want else flat_hi[idx]
    return adv


def verify_input(cm: CompiledModel, x: np.ndarray, y: int, eps: float,
                 solver_cmd: list[str] | None = None,
                 clamp: tuple[float, float] = (0.0, 1.0),
                 max_decisions: int | None = None,
                 timeout_s: float = 60.0,
                 dimacs_dir: str | None = None,
                 tag: str = "q") -> VerifyResult:
    """VERIFIED / ATTACK(witness) / TIMEOUT for one correctly classified x."""
    t0 = time.monotonic()
    x = np.asarray(x, dtype=np.float32)
    b_lo, b_hi, unknown = unknown_bits(cm, x, eps, clamp)
    n_unknown = int(unknown.sum())
    if n_unknown == 0:
        return VerifyResult("VERIFIED", 0, time.monotonic() - t0, 0)
    enc = _Encoder(cm, b_lo, unknown)
    queries = 0
    for j in range(cm.classes):
        if j == y:
            continue
        q = _class_query(enc, cm, y, j)
        queries += 1
        if dimacs_dir is not None:
            with open(f"{dimacs_dir}/{tag}_target{j}.cnf", "w") as f:
                f.write(emit_dimacs(q))
        if solver_cmd:
            sat, model = run_external_solver(q, solver_cmd, timeout_s)
        else:
            sat, model = solve(q, max_decisions=max_decisions,
                               timeout_s=timeout_s)
        if sat is None:
            return VerifyResult("TIMEOUT", n_unknown,
                                time.monotonic() - t0, queries, target=j)
        if sat:
            adv = _decode_witness(cm, x, eps, clamp, b_lo, unknown,
                                  enc.input_vars, model or {})
            pred = int(cm.predict(adv[None])[0])
            if pred == y:
                raise RuntimeError(
                    "SAT witness replay still classifies correctly; "
                    "encoding is unsound for this instance")
            return VerifyResult("ATTACK", n_unknown, time.monotonic() - t0,
                                queries, target=j, witness=adv)
    return VerifyResult("VERIFIED", n_unknown, time.monotonic() - t0, queries)


def verified_accuracy(cm: CompiledModel, x: np.ndarray, y: np.ndarray,
                      eps: float, solver_cmd: list[str] | None = None,
                      clamp: tuple[float, float] = (0.0, 1.0),
                      max_decisions: int | None = None,
                      timeout_s: float = 60.0,
                      jsonl_path: str | None = None) -> dict:
    """Fraction of inputs both correctly classified and VERIFIED."""
    preds = cm.predict(x)
    records = []
    n_ver = n_att = n_to = n_mis = 0
    times = []
    for i in range(len(x)):
        if preds[i] != y[i]:
            n_mis += 1
            records.append({"index": i, "verdict": "MISCLASSIFIED"})
            continue
        res = verify_input(cm, x[i], int(y[i]), eps, solver_cmd, clamp,
                           max_decisions, timeout_s)
        times.append(res.time_s)
        rec = {"index": i, "verdict": res.verdict,
               "unknown_bits": res.n_unknown, "time_s": res.time_s,
               "queries": res.queries}
        if res.verdict == "ATTACK":
            n_att += 1
            rec["target"] = res.target
        elif res.verdict == "TIMEOUT":
            n_to += 1
        else:
            n_ver += 1
        records.append(rec)
    if jsonl_path:
        with open(jsonl_path, "w") as f:
            for r in records:
                f.write(json.dumps(r) + "\n")
    total = len(x)
    return {
        "total": total,
        "natural_accuracy": float((preds == y).mean()),
        "verified": n_ver,
        "verified_accuracy": n_ver / total,
        "attacked": n_att,
        "timeouts": n_to,
        "misclassified": n_mis,
        "mean_time_s": float(np.mean(times)) if times else 0.0,
        "max_time_s": float(np.max(times)) if times else 0.0,
        "eps": eps,
    }


def brute_force_verdict(cm: CompiledModel, x: np.ndarray, y: int, eps: float,
                        clamp: tuple[float, float] = (0.0, 1.0),
                        limit_bits: int = 20) -> str:
    """Exhaustive oracle: try every combination of UNKNOWN bit endpoint
    values.  Only usable when 2^unknown is enumerable."""
    x = np.asarray(x, dtype=np.float32)
    b_lo, b_hi, unknown = unknown_bits(cm, x, eps, clamp)
    idxs = np.nonzero(unknown.reshape(-1))[0]
    if len(idxs) > limit_bits:
        raise ValueError(f"{len(idxs)} unknown bits exceed the brute-force "
                         f"limit {limit_bits}")
    lo = np.clip(x - eps, *clamp).reshape(-1)
    hi = np.clip(x + eps, *clamp).reshape(-1)
    flat_blo = b_lo.reshape(-1)
    cands = []
    for m in range(1 << len(idxs)):
        adv = x.copy().reshape(-1)
        for i, idx in enumerate(idxs):
            want = (m >> i) & 1
            adv[idx] = lo[idx] if flat_blo[idx] == want else hi[idx]
        cands.append(adv.reshape(x.shape))
    preds = cm.predict(np.stack(cands))
    return "ATTACK" if (preds != y).any() else "VERIFIED"
