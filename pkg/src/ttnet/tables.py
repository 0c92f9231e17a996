"""Compilation of trained LTT blocks into exact ternary truth tables,
don't-care injection, truth-table correlation dedup, the pure lookup-table
inference engine, and the compiled-artifact file format.

Bit order, fixed project-wide and recorded in the artifact header: a patch
is flattened channel-major (channel within the filter's group, then spatial
position row-major), and patch element j is bit n-1-j of the table row
index, i.e. x0 is the MSB.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .logic import DCT, ONE, ZERO
from .model import TtnetModel, fold_final_layer
from .nn import dual_step_zone

MAX_FAN_IN = 16


@dataclass
class TruthTable:
    n: int
    entries: np.ndarray          # uint8, 2^n, values in {ZERO, ONE, DCT}
    hard: np.ndarray             # uint8 0/1: eval-time value incl. noise rows
    layer: int = 0
    filter: int = 0
    dct_source: np.ndarray | None = None  # 0 none, 1 noise zone, 2 human

    def with_dcts(self, rows: np.ndarray, source: int) -> "TruthTable":
        entries = self.entries.copy()
        src = (self.dct_source.copy() if self.dct_source is not None
               else np.zeros(len(entries), dtype=np.uint8))
        entries[rows] = DCT
        src[rows] = np.where(src[rows] == 0, source, src[rows])
        return TruthTable(self.n, entries, self.hard, self.layer,
                          self.filter, src)


@dataclass
class TtcReport:
    # (filter a, filter b, ttc value, action)
    pairs: list[tuple[int, int, float, str]] = field(default_factory=list)


def row_bits(r: int, n: int) -> list[int]:
    return [(r >> (n - 1 - j)) & 1 for j in range(n)]


def enumerate_block(block, layer_idx: int = 0) -> list[TruthTable]:
    """Tabulate every output filter of a trained LTT block (eval-mode BN).

    All 2^n patch patterns go through the block in one batched forward.
    Pre-activations inside the dual-step noise zone become DCT rows; the
    eval-time (deterministic) value is kept alongside in `hard`.
    """
    spec = block.spec
    n = spec.fan_in()
    if n > MAX_FAN_IN:
        raise ValueError(f"layer {layer_idx}: fan-in {n} exceeds "
                         f"{MAX_FAN_IN}, cannot tabulate")
    rows = 1 << n
    cpg = spec.in_channels // spec.groups
    ker = spec.kernel if isinstance(spec.kernel, tuple) else (spec.kernel,)
    if spec.dims == 2 and len(ker) == 1:
        ker = (ker[0], ker[0])
    elems = int(np.prod(ker))

    # bit j of the patch = (channel c, spatial s) with j = c*elems + s;
    # every group sees the same enumeration so one forward covers all filters
    r = np.arange(rows, dtype=np.int64)
    bits = ((r[:, None] >> (n - 1 - np.arange(n))) & 1).astype(np.float32)
    patch = bits.reshape(rows, cpg, *ker)
    full = np.tile(patch, (1, spec.groups) + (1,) * len(ker))
    x = torch.from_numpy(full)

    block.eval()
    with torch.no_grad():
        z = block.pre_activation(x)
    z = z.reshape(rows, spec.out_channels).numpy()
    hard = (z > 0).astype(np.uint8)
    noise = dual_step_zone(torch.from_numpy(z), spec.noise_t).numpy()

    out = []
    for f in range(spec.out_channels):
        entries = hard[:, f].copy()
        src = np.zeros(rows, dtype=np.uint8)
        entries[noise[:, f]] = DCT
        src[noise[:, f]] = 1
        out.append(TruthTable(n, entries, hard[:, f].copy(), layer_idx, f,
                              src if noise[:, f].any() else None))
    return out


def inject_dcts(table: TruthTable, groups: list[list[int]]) -> TruthTable:
    """Mark rows violating mutual-exclusion groups (>= 2 bits set) as DCT.

    groups hold patch bit positions (0 = x0 = MSB of the row index).
    Determined rows are never flipped, only freed; DCT set grows
    monotonically under constraint union.
    """
    rows = np.arange(1 << table.n)
    bad = np.zeros(len(rows), dtype=bool)
    for g in groups:
        if len(g) < 2:
            raise ValueError(f"mutual-exclusion group {g} needs >= 2 bits")
        count = np.zeros(len(rows), dtype=np.int32)
        for j in g:
            if not 0 <= j < table.n:
                raise ValueError(f"bit position {j} outside patch of "
                                 f"size {table.n}")
            count += (rows >> (table.n - 1 - j)) & 1
        bad |= count >= 2
    if not bad.any():
        return table
    return table.with_dcts(np.nonzero(bad)[0], source=2)


def ttc(t1: TruthTable, t2: TruthTable) -> float | None:
    """Truth-table correlation over shared determined rows.

    ttc = 1 - 2*HW/m with HW the Hamming distance and m the number of rows
    compared; +1 identical, -1 complementary.  (The source formulation is
    stated piecewise per sign but is inconsistent with its own anchors —
    it gives 0 for identical tables — so the normalized form, which meets
    every stated property, is used.)  None when no rows are comparable.
    """
    if t1.n != t2.n:
        raise ValueError("tables have different fan-in")
    det = (t1.entries != DCT) & (t2.entries != DCT)
    m = int(det.sum())
    if m == 0:
        return None
    hw = int((t1.entries[det] != t2.entries[det]).sum())
    return 1.0 - 2.0 * hw / m


def dedup(tables: list[TruthTable], w_tilde: np.ndarray, b_tilde: np.ndarray,
          positions: int, threshold: float = 0.9):
    """Merge correlated filters of one (final) LTT layer.

    w_tilde is the folded (classes, filters*positions) matrix, flattened
    filter-major to match the network's feature order.  For ttc >= +t the
    duplicate's weights move onto the survivor; for ttc <= -t the survivor
    is read complemented: w*V_dup = w*(1-V_surv) = w - w*V_surv.

    Returns (kept filter indices, TtcReport, new w_tilde, new b_tilde);
    the dropped filters' weight columns end up zero and are removed.
    """
    w = w_tilde.copy().astype(np.int64)
    b = b_tilde.copy().astype(np.int64)
    report = TtcReport()
    alive = list(range(len(tables)))
    i = 0
    while i < len(alive):
        j = i + 1
        while j < len(alive):
            s, r = alive[i], alive[j]
            c = ttc(tables[s], tables[r])
            if c is None or abs(c) < threshold:
                report.pairs.append((s, r, c if c is not None else float("nan"),
                                     "keep"))
                j += 1
                continue
            cs = slice(s * positions, (s + 1) * positions)
            cr = slice(r * positions, (r + 1) * positions)
            if c > 0:
                w[:, cs] += w[:, cr]
                report.pairs.append((s, r, c, "merge"))
            else:
                b += w[:, cr].sum(axis=1)
                w[:, cs] -= w[:, cr]
                report.pairs.append((s, r, c, "negate-merge"))
            w[:, cr] = 0
            alive.pop(j)
        i += 1
    keep_cols = np.concatenate(
        [np.arange(f * positions, (f + 1) * positions) for f in alive])
    return alive, report, w[:, keep_cols], b


# ---------------------------------------------------------------------------
# compiled model + lookup-table inference


@dataclass
class BlockGeom:
    dims: int
    in_channels: int
    out_channels: int
    kernel: tuple
    stride: tuple
    groups: int


@dataclass
class CompiledModel:
    bit_order: str               # always "x0-msb"
    # preprocessing parameters (floats allowed here, nowhere later)
    pre_enabled: bool
    s_q: float | None
    pre_gamma: np.ndarray | None
    pre_beta: np.ndarray | None
    pre_mean: np.ndarray | None
    pre_var: np.ndarray | None
    blocks: list[BlockGeom]
    tables: list[list[TruthTable]]   # per layer, per filter
    w_tilde: np.ndarray          # (classes, features) int64
    b_tilde: np.ndarray          # (classes,) int64
    feature_names: list[str] | None = None

    @property
    def classes(self) -> int:
        return len(self.b_tilde)

    def binarize_input(self, x: np.ndarray) -> np.ndarray:
        if not self.pre_enabled:
            return (x > 0.5).astype(np.uint8)
        if self.s_q is not None:
            x = np.floor(x / self.s_q) * self.s_q
        shape = [1, -1] + [1] * (x.ndim - 2)
        z = (self.pre_gamma.reshape(shape)
             * (x - self.pre_mean.reshape(shape))
             / np.sqrt(self.pre_var.reshape(shape) + 1e-5)
             + self.pre_beta.reshape(shape))
        return (z > 0).astype(np.uint8)

    def block_features(self, bits: np.ndarray, layer: int) -> np.ndarray:
        """One LTT layer as pure table lookups on a uint8 bit tensor."""
        geom = self.blocks[layer]
        luts = self.tables[layer]
        cpg = geom.in_channels // geom.groups
        fpg = geom.out_channels // geom.groups
        if geom.dims == 1:
            (k,), (s,) = geom.kernel, geom.stride
            n_pos = (bits.shape[2] - k) // s + 1
            out = np.zeros((bits.shape[0], geom.out_channels, n_pos),
                           dtype=np.uint8)
            for f in range(geom.out_channels):
                g = f // fpg
                chans = bits[:, g * cpg:(g + 1) * cpg, :]
                lut = luts[f].hard
                n = luts[f].n
                for p in range(n_pos):
                    patch = chans[:, :, p * s:p * s + k].reshape(len(bits), -1)
                    idx = np.zeros(len(bits), dtype=np.int64)
                    for j in range(n):
                        idx = (idx << 1) | patch[:, j]
                    out[:, f, p] = lut[idx]
            return out
        kh, kw = geom.kernel
        sh, sw = geom.stride
        nh = (bits.shape[2] - kh) // sh + 1
        nw = (bits.shape[3] - kw) // sw + 1
        out = np.zeros((bits.shape[0], geom.out_channels, nh, nw),
                       dtype=np.uint8)
        for f in range(geom.out_channels):
            g = f // fpg
            chans = bits[:, g * cpg:(g + 1) * cpg, :, :]
            lut = luts[f].hard
            n = luts[f].n
            for ph in range(nh):
                for pw in range(nw):
                    patch = chans[:, :, ph * sh:ph * sh + kh,
                                  pw * sw:pw * sw + kw].reshape(len(bits), -1)
                    idx = np.zeros(len(bits), dtype=np.int64)
                    for j in range(n):
                        idx = (idx << 1) | patch[:, j]
                    out[:, f, ph, pw] = lut[idx]
        return out

    def features(self, x: np.ndarray) -> np.ndarray:
        bits = self.binarize_input(np.asarray(x, dtype=np.float32))
        for layer in range(len(self.blocks)):
            bits = self.block_features(bits, layer)
        return bits.reshape(len(bits), -1)

    def logits(self, x: np.ndarray) -> np.ndarray:
        v = self.features(x).astype(np.int64)
        return v @ self.w_tilde.T + self.b_tilde

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.logits(x).argmax(axis=1)


def lut_infer(compiled: CompiledModel, x: np.ndarray) -> np.ndarray:
    """Class logits via pure table lookups + integer final layer."""
    return compiled.logits(x)


def compile_model(model: TtnetModel, hk_groups=None,
                  dedup_threshold: float | None = None):
    """Enumerate all blocks, fold the final layer, optionally dedup the
    last LTT layer.  hk_groups (patch-position mutual exclusions, applied
    to first-layer tables) are carried on `entries` for minimization only;
    `hard` keeps eval-time values so inference is unaffected.

    Returns (CompiledModel, TtcReport | None).
    """
    tables = []
    geoms = []
    for li, blk in enumerate(model.blocks):
        spec = blk.spec
        tabs = enumerate_block(blk, li)
        if li == 0 and hk_groups:
            tabs = [inject_dcts(t, hk_groups) for t in tabs]
        tables.append(tabs)
        ker = spec.kernel if isinstance(spec.kernel, tuple) else \
            ((spec.kernel, spec.kernel) if spec.dims == 2 else (spec.kernel,))
        st = spec.stride if isinstance(spec.stride, tuple) else \
            ((spec.stride, spec.stride) if spec.dims == 2 else (spec.stride,))
        geoms.append(BlockGeom(spec.dims, spec.in_channels, spec.out_channels,
                               tuple(ker), tuple(st), spec.groups))
    w_t, b_t = fold_final_layer(model)

    pre = model.preprocess_spec
    if pre.enabled:
        bn = model.pre_bn
        cm = CompiledModel(
            "x0-msb", True, pre.s_q,
            bn.weight.detach().numpy().astype(np.float64),
            bn.bias.detach().numpy().astype(np.float64),
            bn.running_mean.detach().numpy().astype(np.float64),
            bn.running_var.detach().numpy().astype(np.float64),
            geoms, tables, w_t, b_t, model.feature_names)
    else:
        cm = CompiledModel("x0-msb", False, None, None, None, None, None,
                           geoms, tables, w_t, b_t, model.feature_names)

    report = None
    if dedup_threshold is not None:
        last = tables[-1]
        positions = w_t.shape[1] // len(last)
        alive, report, w2, b2 = dedup(last, w_t, b_t, positions,
                                      dedup_threshold)
        cm.tables[-1] = [last[f] for f in alive]
        g = cm.blocks[-1]
        if len(alive) != g.out_channels:
            # group structure must survive filter removal for lut_infer;
            # only drop filters when grouping stays consistent
            if g.groups == 1:
                cm.blocks[-1] = BlockGeom(g.dims, g.in_channels, len(alive),
                                          g.kernel, g.stride, 1)
                for newf, t in enumerate(cm.tables[-1]):
                    t.filter = newf
                cm.w_tilde, cm.b_tilde = w2, b2
            else:
                # grouped layer: dropping filters would break the group
                # structure lut_infer relies on, so keep the geometry and
                # re-expand the merged weights with zero columns for the
                # dropped filters (they still contribute no gates or rules)
                cm.tables[-1] = last
                cm.w_tilde, cm.b_tilde = _expand_merged(
                    w2, b2, alive, g.out_channels, positions)
        else:
            cm.w_tilde, cm.b_tilde = w2, b2
    return cm, report


def _expand_merged(w2, b2, alive, out_channels, positions):
    w = np.zeros((w2.shape[0], out_channels * positions), dtype=np.int64)
    for k, f in enumerate(alive):
        w[:, f * positions:(f + 1) * positions] = \
            w2[:, k * positions:(k + 1) * positions]
    return w, b2


# ---------------------------------------------------------------------------
# artifact file: magic line, JSON manifest line, blob (packed tables + ints)

LUT_MAGIC = b"TTNET-LUT v1\n"


def _pack2(entries: np.ndarray) -> bytes:
    """4 ternary entries per byte, little-end first."""
    e = entries.astype(np.uint8)
    pad = (-len(e)) % 4
    if pad:
        e = np.concatenate([e, np.zeros(pad, dtype=np.uint8)])
    e = e.reshape(-1, 4)
    return bytes(e[:, 0] | (e[:, 1] << 2) | (e[:, 2] << 4) | (e[:, 3] << 6))


def _unpack2(raw: bytes, count: int) -> np.ndarray:
    b = np.frombuffer(raw, dtype=np.uint8)
    out = np.empty(len(b) * 4, dtype=np.uint8)
    for k in range(4):
        out[k::4] = (b >> (2 * k)) & 3
    return out[:count]


def save_compiled(cm: CompiledModel, path: str) -> None:
    blob = bytearray()
    table_meta = []
    for li, layer in enumerate(cm.tables):
        for t in layer:
            packed = _pack2(t.entries)
            hard_packed = _pack2(t.hard)
            table_meta.append({
                "layer": li, "filter": t.filter, "n": t.n,
                "off": len(blob), "hard_off": len(blob) + len(packed),
            })
            blob += packed
            blob += hard_packed
    w_off = len(blob)
    blob += cm.w_tilde.astype("<i8").tobytes()
    manifest = {
        "bit_order": cm.bit_order,
        "pre_enabled": cm.pre_enabled,
        "s_q": cm.s_q,
        "pre": None if not cm.pre_enabled else {
            k: getattr(cm, "pre_" + k).tolist()
            for k in ("gamma", "beta", "mean", "var")},
        "blocks": [{"dims": g.dims, "in_channels": g.in_channels,
                    "out_channels": g.out_channels, "kernel": list(g.kernel),
                    "stride": list(g.stride), "groups": g.groups}
                   for g in cm.blocks],
        "tables": table_meta,
        "w_off": w_off, "w_shape": list(cm.w_tilde.shape),
        "b_tilde": cm.b_tilde.tolist(),
        "feature_names": cm.feature_names,
        "blob_sha256": hashlib.sha256(bytes(blob)).hexdigest(),
    }
    with open(path, "wb") as f:
        f.write(LUT_MAGIC)
        f.write(json.dumps(manifest).encode() + b"\n")
        f.write(bytes(blob))


def load_compiled(path: str) -> CompiledModel:
    with open(path, "rb") as f:
        if f.readline() != LUT_MAGIC:
            raise ValueError(f"{path}: not a compiled artifact (bad magic)")
        man = json.loads(f.readline())
        blob = f.read()
    if hashlib.sha256(blob).hexdigest() != man["blob_sha256"]:
        raise ValueError(f"{path}: blob checksum mismatch")
    if man["bit_order"] != "x0-msb":
        raise ValueError(f"{path}: unsupported bit order {man['bit_order']}")
    geoms = [BlockGeom(b["dims"], b["in_channels"], b["out_channels"],
                       tuple(b["kernel"]), tuple(b["stride"]), b["groups"])
             for b in man["blocks"]]
    tables: list[list[TruthTable]] = [[] for _ in geoms]
    for tm in man["tables"]:
        rows = 1 << tm["n"]
        nbytes = (rows + 3) // 4
        entries = _unpack2(blob[tm["off"]:tm["off"] + nbytes], rows)
        hard = _unpack2(blob[tm["hard_off"]:tm["hard_off"] + nbytes], rows)
        tables[tm["layer"]].append(
            TruthTable(tm["n"], entries, hard, tm["layer"], tm["filter"]))
    w_shape = man["w_shape"]
    w = np.frombuffer(blob, dtype="<i8", count=w_shape[0] * w_shape[1],
                      offset=man["w_off"]).reshape(w_shape).copy()
    b = np.array(man["b_tilde"], dtype=np.int64)
    pre = man["pre"]
    return CompiledModel(
        man["bit_order"], man["pre_enabled"], man["s_q"],
        None if pre is None else np.array(pre["gamma"]),
        None if pre is None else np.array(pre["beta"]),
        None if pre is None else np.array(pre["mean"]),
        None if pre is None else np.array(pre["var"]),
        geoms, tables, w, b, man["feature_names"])
