"""Per-patch rule instantiation from minimized covers, rule-set evaluation
(provably equal to lookup-table inference before edits), human rule editing
with re-evaluation reports, and per-rule ROBDD/DOT export.

A rule is one filter's DNF applied at one patch position: the literals are
renamed to the dataset features that patch reads, and the rule carries the
folded final-layer weight column of the feature it produces ("class
points").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .logic import Cover, Cube, count_gates, qmc_minimize
from .robdd import export_dot, from_cover
from .tables import CompiledModel, inject_dcts


@dataclass
class Rule:
    cover: Cover                 # DNF over patch positions
    input_bits: list[int]        # global input-bit index per patch position
    names: list[str]             # feature name per patch position
    points: np.ndarray           # per-class contribution when the rule fires
    layer: int = 0
    filter: int = 0
    patch: int = 0
    feature_index: int = -1      # column in V; -1 for human-added rules
    origin: str = "model"        # "model" | "human"

    def fires(self, bits: np.ndarray) -> np.ndarray:
        """Evaluate on binarized inputs of shape (batch, total_bits)."""
        if self.cover.constant is not None:
            return np.full(len(bits), self.cover.constant, dtype=np.int64)
        out = np.zeros(len(bits), dtype=bool)
        for lits in self.cover.clause_literals():
            term = np.ones(len(bits), dtype=bool)
            for j, pos in lits:
                v = bits[:, self.input_bits[j]].astype(bool)
                term &= v if pos else ~v
            out |= term
        return out.astype(np.int64)

    def to_string(self) -> str:
        return self.cover.to_string(self.names)


def _feature_grid_names(cm: CompiledModel, n_inputs: int) -> list[str]:
    if cm.feature_names and len(cm.feature_names) >= n_inputs:
        return list(cm.feature_names[:n_inputs])
    return [f"in{j}" for j in range(n_inputs)]


def instantiate_rules(cm: CompiledModel, input_len: int,
                      skip_zero_weight: bool = True,
                      hk: list[list[str]] | None = None) -> list[Rule]:
    """Rules for a single-LTT-layer 1D model: one rule per (filter, patch).

    Patch bit j of filter f at patch p reads input bit (channel, p*s + j')
    with channel-major flattening; for the tabular case (1 input channel)
    that is simply input feature p*s + j.
    """
    if len(cm.blocks) != 1 or cm.blocks[0].dims != 1:
        raise ValueError("rule naming is defined for single-layer 1D models")
    geom = cm.blocks[0]
    (k,), (s,) = geom.kernel, geom.stride
    cpg = geom.in_channels // geom.groups
    n_pos = (input_len - k) // s + 1
    names = _feature_grid_names(cm, input_len * geom.in_channels)
    rules = []
    for f, table in enumerate(cm.tables[0]):
        cover = qmc_minimize(table.entries, "dnf")
        g = f // (geom.out_channels // geom.groups)
        for p in range(n_pos):
            fi = f * n_pos + p
            points = cm.w_tilde[:, fi]
            if skip_zero_weight and not points.any():
                continue
            bit_idx, bit_names = [], []
            for j in range(table.n):
                c = g * cpg + j // k
                off = p * s + j % k
                idx = c * input_len + off
                bit_idx.append(idx)
                bit_names.append(names[idx])
            cover_p = cover
            if hk:
                # mutual exclusions are named over dataset features; they
                # land on different patch positions per patch, so the
                # shared per-filter cover cannot carry them
                here = {nm: j for j, nm in enumerate(bit_names)}
                pos_groups = [[here[nm] for nm in grp if nm in here]
                              for grp in hk]
                pos_groups = [g for g in pos_groups if len(g) >= 2]
                if pos_groups:
                    cover_p = qmc_minimize(
                        inject_dcts(table, pos_groups).entries, "dnf")
            rules.append(Rule(cover_p, bit_idx, bit_names, points.copy(),
                              table.layer, f, p, fi))
    return rules


def evaluate_rules(rules: list[Rule], b_tilde: np.ndarray,
                   bits: np.ndarray) -> np.ndarray:
    """Class logits from the rule set: sum of fired rules' points + bias."""
    logits = np.tile(b_tilde.astype(np.int64), (len(bits), 1))
    for r in rules:
        logits += np.outer(r.fires(bits), r.points)
    return logits


def total_complexity(rules: list[Rule]) -> int:
    """Total number of conditions (literals) over all instantiated rules."""
    return sum(r.cover.num_literals() for r in rules)


def total_gates(rules: list[Rule]) -> int:
    """2-input gate cost summed over instantiated rules (final layer
    excluded)."""
    return sum(count_gates(r.cover) for r in rules)


def rules_report(rules: list[Rule]) -> str:
    lines = []
    for i, r in enumerate(rules):
        pts = ",".join(str(int(p)) for p in r.points)
        lines.append(f"rule {i} [{r.origin} f{r.filter} p{r.patch} "
                     f"points {pts}]: {r.to_string()}")
    return "\n".join(lines) + "\n"


def rule_dot(rule: Rule) -> str:
    """ROBDD diagram of one rule (variable order = patch position order)."""
    bdd, root = from_cover(rule.cover)
    return export_dot(bdd, root, names=rule.names,
                      title=f"rule_f{rule.filter}_p{rule.patch}")


# ---------------------------------------------------------------------------
# editing


def _parse_dnf(expr: str, name_to_bit: dict[str, int]):
    """Parse "(A&~B)|C" over known feature names into (cover, bits, names)."""
    expr = expr.strip()
    used: list[str] = []

    def bit_of(name: str) -> int:
        if name not in name_to_bit:
            raise ValueError(f"unknown feature {name!r} in rule expression")
        if name not in used:
            used.append(name)
        return used.index(name)

    clauses = []
    for part in expr.split("|"):
        part = part.strip().strip("()").strip()
        lits = []
        for tok in part.split("&"):
            tok = tok.strip()
            neg = tok.startswith("~")
            name = tok[1:].strip() if neg else tok
            lits.append((bit_of(name), not neg))
        clauses.append(lits)
    n = len(used)
    cubes = []
    for lits in clauses:
        mask = value = 0
        for j, pos in lits:
            bit = 1 << (n - 1 - j)
            mask |= bit
            if pos:
                value |= bit
        cubes.append(Cube(mask, value, n))
    cover = Cover("dnf", n, cubes)
    return cover, [name_to_bit[nm] for nm in used], used


def edit_rules(rules: list[Rule], edits: list[str],
               name_to_bit: dict[str, int],
               classes: int) -> list[Rule]:
    """Apply text edit commands and return a new rule list.

    Commands (whitespace-separated key=value form):
      add-rule points=<c0,c1,...> expr=<dnf over feature names>
      delete-condition rule=<i> clause=<ci> lit=<feature name>
      modify-condition rule=<i> clause=<ci> old=<name> new=<[~]name>
    """
    out = [replace(r, input_bits=list(r.input_bits), names=list(r.names))
           for r in rules]
    for line in edits:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cmd, *kvs = line.split(None, 1)
        args = {}
        if kvs:
            for part in _split_args(kvs[0]):
                k, _, v = part.partition("=")
                args[k] = v
        if cmd == "add-rule":
            points = np.array([int(v) for v in args["points"].split(",")],
                              dtype=np.int64)
            if len(points) != classes:
                raise ValueError(f"add-rule needs {classes} point values")
            cover, bits, names = _parse_dnf(args["expr"], name_to_bit)
            out.append(Rule(cover, bits, names, points, origin="human"))
        elif cmd == "delete-condition":
            r = out[int(args["rule"])]
            ci = int(args["clause"])
            j = r.names.index(args["lit"])
            cube = r.cover.cubes[ci]
            bit = 1 << (r.cover.n - 1 - j)
            if not cube.mask & bit:
                raise ValueError(f"literal {args['lit']} not in clause {ci}")
            new = Cube(cube.mask & ~bit, cube.value & ~bit, cube.n)
            cubes = list(r.cover.cubes)
            if new.mask == 0:
                r.cover = Cover("dnf", r.cover.n, [], constant=1)
            else:
                cubes[ci] = new
                r.cover = Cover("dnf", r.cover.n, cubes)
            r.origin = "human"
        elif cmd == "modify-condition":
            r = out[int(args["rule"])]
            ci = int(args["clause"])
            j = r.names.index(args["old"])
            new_tok = args["new"]
            neg = new_tok.startswith("~")
            new_name = new_tok[1:] if neg else new_tok
            if new_name not in name_to_bit:
                raise ValueError(f"unknown feature {new_name!r}")
            cube = r.cover.cubes[ci]
            bit = 1 << (r.cover.n - 1 - j)
            if not cube.mask & bit:
                raise ValueError(f"literal {args['old']} not in clause {ci}")
            r.names[j] = new_name
            r.input_bits[j] = name_to_bit[new_name]
            value = (cube.value & ~bit) | (0 if neg else bit)
            cubes = list(r.cover.cubes)
            cubes[ci] = Cube(cube.mask, value, cube.n)
            r.cover = Cover("dnf", r.cover.n, cubes)
            r.origin = "human"
        else:
            raise ValueError(f"unknown edit command {cmd!r}")
    return out


def _split_args(s: str) -> list[str]:
    """Split "a=1 b=x&y c=2" on spaces that precede a key= token."""
    parts = []
    cur = []
    for tok in s.split(" "):
        if "=" in tok and not cur:
            cur = [tok]
        elif "=" in tok and tok.split("=")[0].replace("-", "").isalnum() \
                and not tok.startswith("~"):
            parts.append(" ".join(cur))
            cur = [tok]
        else:
            cur.append(tok)
    if cur:
        parts.append(" ".join(cur))
    return parts


def evaluation_report(rules: list[Rule], b_tilde: np.ndarray,
                      bits: np.ndarray, y: np.ndarray) -> dict:
    pred = evaluate_rules(rules, b_tilde, bits).argmax(1)
    return {"accuracy": float((pred == y).mean()), "count": int(len(y))}


RULES_VERSION = 1


def _cover_to_json(c: Cover) -> dict:
    return {"form": c.form, "n": c.n, "constant": c.constant,
            "cubes": [[q.mask, q.value] for q in c.cubes]}


def _cover_from_json(d: dict) -> Cover:
    return Cover(d["form"], d["n"],
                 [Cube(m, v, d["n"]) for m, v in d["cubes"]],
                 constant=d["constant"])


def save_rules(path: str, rules: list[Rule], b_tilde: np.ndarray,
               meta: dict | None = None) -> None:
    doc = {
        "version": RULES_VERSION,
        "b_tilde": [int(v) for v in b_tilde],
        "meta": meta or {},
        "rules": [{
            "cover": _cover_to_json(r.cover),
            "input_bits": list(r.input_bits),
            "names": list(r.names),
            "points": [int(v) for v in r.points],
            "layer": r.layer, "filter": r.filter, "patch": r.patch,
            "feature_index": r.feature_index, "origin": r.origin,
        } for r in rules],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_rules(path: str):
    """Returns (rules, b_tilde, meta)."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != RULES_VERSION:
        raise ValueError(f"{path}: unsupported rules version "
                         f"{doc.get('version')!r}")
    rules = [Rule(_cover_from_json(d["cover"]), list(d["input_bits"]),
                  list(d["names"]), np.array(d["points"], dtype=np.int64),
                  d["layer"], d["filter"], d["patch"], d["feature_index"],
                  d["origin"])
             for d in doc["rules"]]
    return rules, np.array(doc["b_tilde"], dtype=np.int64), doc["meta"]
