"""Command-line pipeline: train -> extract -> minimize -> rules / edit /
export-circuit, plus infer / eval / verify.

Every command writes its artifact into --out and appends one JSON line to
<out>/metrics.jsonl.  Exit codes: 0 success, 2 bad usage or config,
3 missing upstream artifact (the error names the command that produces it),
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np
import torch

from . import configs as cfgmod
from . import data as datamod
from .logic import to_netlist, export_netlist
from .model import (load_model, permute_augment, save_model, train)
from .nn import pgd_attack
from .rules import (edit_rules, evaluate_rules, instantiate_rules,
                    load_rules, rule_dot, rules_report, save_rules,
                    total_complexity, total_gates)
from .tables import compile_model, load_compiled, save_compiled
from .verify import verified_accuracy

SOLVER_ENV = "TTNET_SAT_SOLVER"


class MissingArtifact(Exception):
    pass


def _need(path: str, producer: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifact(
            f"{path} not found; run `ttnet {producer}` first")
    return path


def _metrics(out_dir: str, cmd: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    rec = {"cmd": cmd, **payload}
    with open(os.path.join(out_dir, "metrics.jsonl"), "a") as f:
        f.write(json.dumps(rec) + "\n")


def _load_config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.get_config(args.config)
    overrides = {}
    if getattr(args, "config_file", None):
        overrides.update(cfgmod.parse_config_file(args.config_file))
    for kv in getattr(args, "override", None) or []:
        if "=" not in kv:
            raise ValueError(f"--set expects key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        overrides[k.strip()] = cfgmod._parse_value(v.strip())
    return cfgmod.apply_overrides(cfg, overrides)


def _load_dataset(cfg, args):
    """Returns (x_train, y_train, x_test, y_test, feature_names)."""
    if getattr(args, "data", None):
        spec = datamod.DatasetSpec(
            source=args.data, format="csv", labels=cfg.label_column,
            categorical=cfg.categorical, numeric_bits=cfg.numeric_bits,
            drop=cfg.drop, positive_label=cfg.positive_label,
            split_seed=cfg.train.seed, fold=args.fold)
        ds = datamod.ingest(spec)
        x, names = ds.x[:, 0, :], ds.feature_names
        if cfg.permutations:
            x, names = permute_augment(
                x, names, cfg.permutations,
                np.random.default_rng(cfg.train.seed))
        if cfg.pad_to_stride:
            blk = cfg.blocks[0]
            x, names = datamod.pad_features(x, names, blk.kernel, blk.stride)
        x = x[:, None, :].astype(np.float32)
        tr, te = datamod.split_80_20(len(x), cfg.train.seed, args.fold)
        return x[tr], ds.y[tr], x[te], ds.y[te], names
    if getattr(args, "images", None):
        def load(images, labels):
            spec = datamod.DatasetSpec(source=images, format="idx-images",
                                       labels=labels)
            ds = datamod.ingest(spec)
            x = ds.x
            if cfg.crop:
                x = datamod.center_crop(x, cfg.crop)
            return x, ds.y, ds.feature_names
        x, y, names = load(args.images, args.labels)
        if getattr(args, "test_images", None):
            xt, yt, _ = load(args.test_images, args.test_labels)
            return x, y, xt, yt, names
        tr, te = datamod.split_80_20(len(x), cfg.train.seed, args.fold)
        return x[tr], y[tr], x[te], y[te], names
    raise ValueError("no dataset given: use --data CSV or --images/--labels")


def _solver_cmd(args, cfg=None):
    if getattr(args, "solver", None):
        return args.solver.split()
    if cfg is not None and cfg.solver_cmd:
        return cfg.solver_cmd
    env = os.environ.get(SOLVER_ENV)
    return env.split() if env else None


# --- commands ---------------------------------------------------------------

def cmd_train(args):
    cfg = _load_config(args)
    xtr, ytr, xte, yte, names = _load_dataset(cfg, args)
    classes = int(max(ytr.max(), yte.max())) + 1
    torch.manual_seed(cfg.train.seed)  # weight init precedes train()
    model = cfgmod.build_model(cfg, xtr.shape[1:], classes, names)
    t0 = time.monotonic()
    log_rows = []
    train(model, xtr, ytr, cfg.train,
          log=lambda rec: log_rows.append(rec))
    took = time.monotonic() - t0
    model.eval()
    with torch.no_grad():
        acc_tr = float((model.predict(torch.as_tensor(xtr)).numpy()
                        == ytr).mean())
        acc_te = float((model.predict(torch.as_tensor(xte)).numpy()
                        == yte).mean())
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "model.ttn")
    save_model(model, path)
    for msg in log_rows:
        _metrics(args.out, "train-epoch", {"msg": msg})
    _metrics(args.out, "train", {"config": cfg.name, "train_acc": acc_tr,
                                 "test_acc": acc_te, "time_s": took,
                                 "classes": classes,
                                 "features": len(names), "model": path})
    print(f"train: acc train {acc_tr:.4f} test {acc_te:.4f} "
          f"({took:.1f}s) -> {path}")
    return 0


def cmd_eval(args):
    cfg = _load_config(args)
    model = load_model(_need(os.path.join(args.out, "model.ttn"), "train"))
    model.eval()
    _, _, xte, yte, _ = _load_dataset(cfg, args)
    with torch.no_grad():
        pred = model.predict(torch.as_tensor(xte)).numpy()
    acc = float((pred == yte).mean())
    rec = {"test_acc": acc, "count": len(yte)}
    if args.pgd_eps > 0:
        xt = torch.as_tensor(xte)
        yt = torch.as_tensor(yte)
        adv = pgd_attack(model, xt, yt, args.pgd_eps, steps=10,
                         step_size=args.pgd_eps / 4)
        with torch.no_grad():
            rob = float((model.predict(adv).numpy() == yte).mean())
        rec["pgd_eps"] = args.pgd_eps
        rec["pgd_robust_acc"] = rob
    _metrics(args.out, "eval", rec)
    print("eval: " + json.dumps(rec))
    return 0


def cmd_extract(args):
    model = load_model(_need(os.path.join(args.out, "model.ttn"), "train"))
    model.eval()
    t0 = time.monotonic()
    cm, report = compile_model(model, dedup_threshold=args.dedup)
    path = os.path.join(args.out, "model.lut")
    save_compiled(cm, path)
    rec = {"tables": sum(len(t) for t in cm.tables),
           "features": cm.w_tilde.shape[1],
           "time_s": time.monotonic() - t0, "artifact": path}
    if report is not None:
        rec["dedup_merged"] = len(report.pairs)
    _metrics(args.out, "extract", rec)
    print("extract: " + json.dumps(rec))
    return 0


def _input_len(cm, args):
    if args.input_len:
        return args.input_len
    if cm.feature_names:
        return len(cm.feature_names)
    raise ValueError("compiled artifact has no feature names; "
                     "pass --input-len")


def cmd_minimize(args):
    cm = load_compiled(_need(os.path.join(args.out, "model.lut"), "extract"))
    hk = cfgmod.load_hk(args.hk) if args.hk else None
    if hk and cm.feature_names:
        known = set(cm.feature_names)
        bad = [n for g in hk for n in g if n not in known]
        if bad:
            raise ValueError("HK features not in the model: "
                             + ", ".join(sorted(set(bad))))
    t0 = time.monotonic()
    rules = instantiate_rules(cm, _input_len(cm, args), hk=hk)
    path = os.path.join(args.out, "rules.json")
    save_rules(path, rules, cm.b_tilde,
               meta={"hk": args.hk, "input_len": _input_len(cm, args)})
    rec = {"rules": len(rules), "complexity": total_complexity(rules),
           "gates": total_gates(rules), "hk": args.hk,
           "time_s": time.monotonic() - t0, "artifact": path}
    _metrics(args.out, "minimize", rec)
    print("minimize: " + json.dumps(rec))
    return 0


def cmd_rules(args):
    rules, b_tilde, _ = load_rules(
        _need(os.path.join(args.out, "rules.json"), "minimize"))
    print(rules_report(rules))
    if args.dot:
        os.makedirs(args.dot, exist_ok=True)
        for i, r in enumerate(rules):
            with open(os.path.join(args.dot, f"rule{i:04d}.dot"), "w") as f:
                f.write(rule_dot(r))
    rec = {"rules": len(rules), "complexity": total_complexity(rules),
           "gates": total_gates(rules)}
    _metrics(args.out, "rules", rec)
    return 0


def cmd_edit(args):
    path = _need(os.path.join(args.out, "rules.json"), "minimize")
    rules, b_tilde, meta = load_rules(path)
    edits = list(args.apply or [])
    if args.script:
        with open(args.script) as f:
            edits += [l.strip() for l in f if l.strip()
                      and not l.startswith("#")]
    name_to_bit = {}
    for r in rules:
        for nm, b in zip(r.names, r.input_bits):
            name_to_bit[nm] = b
    new_rules = edit_rules(rules, edits, name_to_bit, len(b_tilde))
    out_path = args.out_rules or path
    save_rules(out_path, new_rules, b_tilde, meta=meta)
    rec = {"edits": len(edits), "rules": len(new_rules),
           "gates": total_gates(new_rules), "artifact": out_path}
    _metrics(args.out, "edit", rec)
    print("edit: " + json.dumps(rec))
    return 0


def cmd_infer(args):
    cfg = _load_config(args)
    cm = load_compiled(_need(os.path.join(args.out, "model.lut"), "extract"))
    _, _, xte, yte, _ = _load_dataset(cfg, args)
    pred = cm.predict(xte)
    rec = {"test_acc": float((pred == yte).mean()), "count": len(yte)}
    rules_path = os.path.join(args.out, "rules.json")
    if args.with_rules:
        rules, b_tilde, _ = load_rules(_need(rules_path, "minimize"))
        bits = cm.binarize_input(xte).reshape(len(xte), -1)
        rpred = evaluate_rules(rules, b_tilde, bits).argmax(1)
        rec["rules_acc"] = float((rpred == yte).mean())
        rec["rules_agree"] = float((rpred == pred).mean())
    _metrics(args.out, "infer", rec)
    print("infer: " + json.dumps(rec))
    return 0


def cmd_verify(args):
    cfg = _load_config(args)
    cm = load_compiled(_need(os.path.join(args.out, "model.lut"), "extract"))
    _, _, xte, yte, _ = _load_dataset(cfg, args)
    if args.limit:
        xte, yte = xte[:args.limit], yte[:args.limit]
    eps_list = args.eps if args.eps else (cfg.eps or [0.1])
    solver = _solver_cmd(args, cfg)
    for eps in eps_list:
        jsonl = os.path.join(args.out, f"verify_eps{eps:g}.jsonl")
        rep = verified_accuracy(cm, xte, yte, eps, solver_cmd=solver,
                                timeout_s=args.timeout, jsonl_path=jsonl)
        rep["report"] = jsonl
        _metrics(args.out, "verify", rep)
        print(f"verify eps={eps:g}: " + json.dumps(rep))
    return 0


def cmd_export_circuit(args):
    rules, _, _ = load_rules(
        _need(os.path.join(args.out, "rules.json"), "minimize"))
    os.makedirs(args.circuit_dir, exist_ok=True)
    gates = 0
    for i, r in enumerate(rules):
        net = to_netlist(r.cover)
        gates += net.gate_count()
        with open(os.path.join(args.circuit_dir,
                               f"rule{i:04d}.net"), "w") as f:
            f.write(export_netlist(net))
    rec = {"rules": len(rules), "gates": gates, "dir": args.circuit_dir}
    _metrics(args.out, "export-circuit", rec)
    print("export-circuit: " + json.dumps(rec))
    return 0


# --- wiring -----------------------------------------------------------------

def _add_common(p, data=False, config=False):
    p.add_argument("--out", default=".", help="artifact directory")
    if config:
        p.add_argument("--config", required=True,
                       help="named config, e.g. adult-small")
        p.add_argument("--config-file", help="key=value overrides file")
        p.add_argument("--set", dest="override", action="append",
                       metavar="KEY=VALUE", help="inline config override")
    if data:
        p.add_argument("--data", help="tabular CSV path")
        p.add_argument("--images", help="IDX images path")
        p.add_argument("--labels", help="IDX labels path")
        p.add_argument("--test-images", help="held-out IDX images")
        p.add_argument("--test-labels", help="held-out IDX labels")
        p.add_argument("--fold", type=int, default=0,
                       help="which fifth is the 20%% test split")


def build_parser():
    p = argparse.ArgumentParser(
        prog="ttnet",
        description="truth-table network pipeline: train, compile to "
                    "lookup tables, minimize to rules, verify robustness")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("train", help="train a model from a named config")
    _add_common(sp, data=True, config=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="neural-engine test accuracy (+PGD)")
    _add_common(sp, data=True, config=True)
    sp.add_argument("--pgd-eps", type=float, default=0.0)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("extract", help="compile the model to truth tables")
    _add_common(sp)
    sp.add_argument("--dedup", type=float, default=None,
                    help="TTC threshold for last-layer filter merging")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("minimize", help="minimize tables into rules")
    _add_common(sp)
    sp.add_argument("--hk", help="mutual-exclusion constraint file")
    sp.add_argument("--input-len", type=int, default=0)
    sp.set_defaults(func=cmd_minimize)

    sp = sub.add_parser("rules", help="print the rule report")
    _add_common(sp)
    sp.add_argument("--dot", help="write per-rule BDD DOT files here")
    sp.set_defaults(func=cmd_rules)

    sp = sub.add_parser("edit", help="apply human rule edits")
    _add_common(sp)
    sp.add_argument("--apply", action="append", metavar="EDIT",
                    help="edit command, e.g. 'delete-condition rule=3 "
                         "clause=0 lit=0'")
    sp.add_argument("--script", help="file with one edit per line")
    sp.add_argument("--out-rules", help="write here instead of in place")
    sp.set_defaults(func=cmd_edit)

    sp = sub.add_parser("infer", help="lookup-table engine accuracy")
    _add_common(sp, data=True, config=True)
    sp.add_argument("--with-rules", action="store_true",
                    help="also run the rule engine and compare")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("verify", help="l-inf robustness verification")
    _add_common(sp, data=True, config=True)
    sp.add_argument("--eps", type=float, action="append")
    sp.add_argument("--limit", type=int, default=0,
                    help="verify only the first N test inputs")
    sp.add_argument("--timeout", type=float, default=60.0,
                    help="per-query solver timeout (s)")
    sp.add_argument("--solver", help="external DIMACS solver command "
                                     f"(or ${SOLVER_ENV})")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("export-circuit", help="rules as gate netlists")
    _add_common(sp)
    sp.add_argument("--circuit-dir", default="circuit",
                    help="output directory for netlist files")
    sp.set_defaults(func=cmd_export_circuit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingArtifact as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - last resort
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
