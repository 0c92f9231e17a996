"""CSV binarization, IDX reading, and deterministic splits."""

import gzip
import struct

import numpy as np
import pytest

from ttnet.data import (Dataset, DatasetSpec, binarize_table, center_crop,
                        ingest, pad_features, read_csv_rows, read_idx,
                        split_80_20)


def _csv(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


TOY = """age,color,label
30,red,no
50,green,yes
40,blue,no
60,red,yes
"""


def test_csv_onehot_and_quantiles(tmp_path):
    spec = DatasetSpec(source=_csv(tmp_path, TOY), labels="label",
                       numeric_bits=2)
    ds = ingest(spec)
    assert ds.x.shape[0] == 4 and ds.x.ndim == 3
    assert any(n.startswith("age>") for n in ds.feature_names)
    assert {"color=red", "color=green", "color=blue"} <= set(ds.feature_names)
    assert ds.class_names == ["no", "yes"]
    # one-hot columns: exactly one set per row
    cols = [i for i, n in enumerate(ds.feature_names)
            if n.startswith("color=")]
    assert (ds.x[:, 0, cols].sum(axis=1) == 1).all()


def test_csv_positive_label_ordering(tmp_path):
    spec = DatasetSpec(source=_csv(tmp_path, TOY), labels="label",
                       positive_label="yes")
    ds = ingest(spec)
    assert ds.class_names == ["no", "yes"]
    assert ds.y.tolist() == [0, 1, 0, 1]


def test_csv_reingest_identical(tmp_path):
    spec = DatasetSpec(source=_csv(tmp_path, TOY), labels="label")
    a, b = ingest(spec), ingest(spec)
    assert np.array_equal(a.x, b.x) and a.feature_names == b.feature_names


def test_csv_malformed_row_names_line(tmp_path):
    path = _csv(tmp_path, "a,b,label\n1,2,no\n1,2\n")
    with pytest.raises(ValueError, match=r":3"):
        read_csv_rows(path)


def test_empty_csv(tmp_path):
    ds = ingest(DatasetSpec(source=_csv(tmp_path, ""), labels="label"))
    assert ds.x.shape[0] == 0 and ds.feature_names == []


def test_csv_drop_and_categorical_override(tmp_path):
    text = "id,code,label\n1,10,no\n2,20,yes\n"
    spec = DatasetSpec(source=_csv(tmp_path, text), labels="label",
                       drop=["id"], categorical=["code"])
    ds = ingest(spec)
    assert set(ds.feature_names) == {"code=10", "code=20"}


def test_bad_label_column(tmp_path):
    spec = DatasetSpec(source=_csv(tmp_path, TOY), labels="nope")
    with pytest.raises(ValueError, match="label column"):
        ingest(spec)


def test_pad_features():
    x = np.ones((3, 7), dtype=np.uint8)
    x2, names = pad_features(x, [f"f{i}" for i in range(7)], 5, 5)
    assert x2.shape == (3, 10) and names[-1] == "pad2"
    assert (x2[:, 7:] == 0).all()
    x3, names3 = pad_features(x2, names, 5, 5)
    assert x3.shape == (3, 10) and names3 == names


def _idx_images(n=4, h=3, w=2):
    body = np.arange(n * h * w, dtype=np.uint8)
    return struct.pack(">IIII", 0x803, n, h, w) + body.tobytes()


def _idx_labels(n=4):
    return struct.pack(">II", 0x801, n) + bytes(range(n))


def test_read_idx_roundtrip(tmp_path):
    p = tmp_path / "img.idx"
    p.write_bytes(_idx_images())
    img = read_idx(str(p))
    assert img.shape == (4, 3, 2) and img[0, 0, 1] == 1
    g = tmp_path / "lab.idx.gz"
    with gzip.open(g, "wb") as f:
        f.write(_idx_labels())
    assert read_idx(str(g)).tolist() == [0, 1, 2, 3]


def test_read_idx_bad_magic(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(struct.pack(">II", 0xdead, 1))
    with pytest.raises(ValueError, match="magic"):
        read_idx(str(p))


def test_read_idx_truncated(tmp_path):
    p = tmp_path / "short.idx"
    p.write_bytes(struct.pack(">IIII", 0x803, 10, 3, 2) + b"\x00" * 5)
    with pytest.raises(ValueError, match="size mismatch"):
        read_idx(str(p))


def test_ingest_idx_pair(tmp_path):
    (tmp_path / "img.idx").write_bytes(_idx_images())
    (tmp_path / "lab.idx").write_bytes(_idx_labels())
    ds = ingest(DatasetSpec(source=str(tmp_path / "img.idx"),
                            format="idx-images",
                            labels=str(tmp_path / "lab.idx")))
    assert ds.x.shape == (4, 1, 3, 2)
    assert ds.x.max() <= 1.0 and ds.y.tolist() == [0, 1, 2, 3]


def test_split_deterministic_and_disjoint():
    tr, te = split_80_20(100, seed=7)
    tr2, te2 = split_80_20(100, seed=7)
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)
    assert len(te) == 20 and len(tr) == 80
    assert not set(tr) & set(te)
    assert set(tr) | set(te) == set(range(100))


def test_split_folds_partition():
    tests = [set(split_80_20(50, seed=1, fold=k)[1]) for k in range(5)]
    assert set().union(*tests) == set(range(50))
    for a in range(5):
        for b in range(a + 1, 5):
            assert not tests[a] & tests[b]
    with pytest.raises(ValueError):
        split_80_20(50, seed=1, fold=5)


def test_center_crop():
    x = np.arange(36, dtype=np.float32).reshape(1, 1, 6, 6)
    c = center_crop(x, 4)
    assert c.shape == (1, 1, 4, 4) and c[0, 0, 0, 0] == 7.0
