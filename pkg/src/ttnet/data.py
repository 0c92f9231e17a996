"""Dataset ingestion: CSV tabular binarization and IDX image files.

Tabular recipe: categorical columns one-hot (feature name "col=value"),
numeric columns quantile-threshold bits (feature name "col>thr").  The
recipe is configurable because upstream feature counts like "18 binary
features" come without one; the produced feature-name map is what feeds
rule instantiation and HK constraint files.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class DatasetSpec:
    source: str                      # csv path, or images idx path
    format: str = "csv"              # csv | idx-images
    labels: str | None = None        # label column name / labels idx path
    categorical: list[str] = field(default_factory=list)
    numeric_bits: int = 4            # quantile thresholds per numeric col
    drop: list[str] = field(default_factory=list)
    positive_label: str | None = None
    split_seed: int = 0
    fold: int = 0                    # which fifth is the test split


@dataclass
class Dataset:
    x: np.ndarray                    # float32 (N, C, ...) model-ready
    y: np.ndarray                    # int64 (N,)
    feature_names: list[str]
    class_names: list[str]


def read_csv_rows(path: str):
    """Header + rows; raises with the 1-based line number on a bad row."""
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt", newline="") as f:
        reader = csv.reader(f, skipinitialspace=True)
        rows = []
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if header is None:
                header = [c.strip() for c in row]
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} fields, "
                    f"got {len(row)}")
            rows.append([c.strip() for c in row])
    if header is None:
        return [], []
    return header, rows


def binarize_table(header, rows, spec: DatasetSpec):
    """One-hot + quantile bits; returns (x uint8 (N,F), y, names, classes)."""
    if rows and spec.labels not in header:
        raise ValueError(f"label column {spec.labels!r} not in header")
    names: list[str] = []
    cols: list[np.ndarray] = []
    y = None
    class_names: list[str] = []
    if rows:
        data = {h: [r[i] for r in rows] for i, h in enumerate(header)}
        raw = data[spec.labels]
        class_names = sorted(set(raw))
        if spec.positive_label is not None and len(class_names) == 2:
            class_names.sort(key=lambda c: c == spec.positive_label)
        idx = {c: i for i, c in enumerate(class_names)}
        y = np.array([idx[v] for v in raw], dtype=np.int64)
        for h in header:
            if h == spec.labels or h in spec.drop:
                continue
            vals = data[h]
            numeric = h not in spec.categorical
            if numeric:
                try:
                    fv = np.array([float(v) for v in vals])
                except ValueError:
                    numeric = False
            if numeric:
                qs = np.linspace(0, 1, spec.numeric_bits + 2)[1:-1]
                thrs = sorted(set(np.quantile(fv, qs).tolist()))
                for t in thrs:
                    names.append(f"{h}>{t:g}")
                    cols.append((fv > t).astype(np.uint8))
            else:
                for v in sorted(set(vals)):
                    names.append(f"{h}={v}")
                    cols.append(np.array([int(x == v) for x in vals],
                                         dtype=np.uint8))
    x = (np.stack(cols, axis=1) if cols
         else np.zeros((0, 0), dtype=np.uint8))
    return x, (y if y is not None else np.zeros(0, dtype=np.int64)), \
        names, class_names


def pad_features(x: np.ndarray, names: list[str], kernel: int, stride: int):
    """Append zero bits until (F - kernel) is a stride multiple."""
    f = x.shape[1]
    while f < kernel or (f - kernel) % stride:
        f += 1
    if f == x.shape[1]:
        return x, names
    pad = np.zeros((len(x), f - x.shape[1]), dtype=x.dtype)
    names = names + [f"pad{i}" for i in range(f - x.shape[1])]
    return np.concatenate([x, pad], axis=1), names


def read_idx(path: str) -> np.ndarray:
    """IDX format with magic validation; transparently gunzips."""
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_IMAGES_MAGIC:
        n, h, w = struct.unpack(">III", raw[4:16])
        body = np.frombuffer(raw, dtype=np.uint8, offset=16)
        if body.size != n * h * w:
            raise ValueError(f"{path}: size mismatch for {n}x{h}x{w} images")
        return body.reshape(n, h, w)
    if magic == IDX_LABELS_MAGIC:
        (n,) = struct.unpack(">I", raw[4:8])
        body = np.frombuffer(raw, dtype=np.uint8, offset=8)
        if body.size != n:
            raise ValueError(f"{path}: size mismatch for {n} labels")
        return body
    raise ValueError(f"{path}: bad IDX magic 0x{magic:08x}")


def ingest(spec: DatasetSpec) -> Dataset:
    if spec.format == "csv":
        header, rows = read_csv_rows(spec.source)
        x, y, names, classes = binarize_table(header, rows, spec)
        x = x[:, None, :].astype(np.float32)  # (N, 1, F)
        return Dataset(x, y, names, classes)
    if spec.format == "idx-images":
        imgs = read_idx(spec.source)
        labels = read_idx(spec.labels)
        if imgs.shape[0] != labels.shape[0]:
            raise ValueError("image/label count mismatch")
        x = (imgs.astype(np.float32) / 255.0)[:, None, :, :]
        names = [f"px{r}_{c}" for r in range(imgs.shape[1])
                 for c in range(imgs.shape[2])]
        return Dataset(x, labels.astype(np.int64), names,
                       [str(c) for c in range(int(labels.max()) + 1 if
                                              len(labels) else 0)])
    raise ValueError(f"unknown dataset format {spec.format!r}")


def split_80_20(n: int, seed: int, fold: int = 0):
    """Deterministic 80/20 split; fold in 0..4 picks the held-out fifth."""
    if not 0 <= fold < 5:
        raise ValueError("fold must be in 0..4")
    perm = np.random.default_rng(seed).permutation(n)
    k = n // 5
    test = perm[fold * k:(fold + 1) * k]
    train = np.concatenate([perm[:fold * k], perm[(fold + 1) * k:]])
    return train, test


def center_crop(x: np.ndarray, size: int) -> np.ndarray:
    h, w = x.shape[-2:]
    r = (h - size) // 2
    c = (w - size) // 2
    return x[..., r:r + size, c:c + size]
