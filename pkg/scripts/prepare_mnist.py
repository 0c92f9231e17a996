#!/usr/bin/env python3
"""Convert the npm `mnist` package (a 10k-digit MNIST subset, 28x28 float
images) into IDX files under data/mnist/.

The package ships each digit class as digits/<d>.json holding ~1001
flattened 784-float images.  We interleave classes, split 80/20
deterministically, and write gzipped IDX files in the standard magic-number
format so the CLI's --images/--labels flags can consume them.

Usage:
  python3 scripts/prepare_mnist.py [--tarball /tmp/mnist-1.1.0.tgz]
                                   [--out data/mnist]
If no tarball is present, fetch one first:  npm pack mnist@1.1.0
"""

import argparse
import gzip
import io
import json
import os
import struct
import sys
import tarfile

import numpy as np


def load_tarball(path):
    xs, ys = [], []
    with tarfile.open(path, "r:gz") as tar:
        for d in range(10):
            member = tar.getmember(f"package/src/digits/{d}.json")
            doc = json.load(io.TextIOWrapper(tar.extractfile(member)))
            flat = np.asarray(doc["data"], dtype=np.float32)
            imgs = flat.reshape(-1, 28, 28)
            xs.append(imgs)
            ys.append(np.full(len(imgs), d, dtype=np.uint8))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    perm = np.random.default_rng(0).permutation(len(x))
    return x[perm], y[perm]


def write_idx_images(path, imgs):
    raw = np.clip(np.round(imgs * 255.0), 0, 255).astype(np.uint8)
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, *raw.shape))
        f.write(raw.tobytes())


def write_idx_labels(path, labels):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tarball", default="/tmp/mnist-1.1.0.tgz")
    ap.add_argument("--out", default="data/mnist")
    args = ap.parse_args()
    if not os.path.exists(args.tarball):
        print(f"{args.tarball} not found; run `npm pack mnist@1.1.0` and "
              "point --tarball at the result", file=sys.stderr)
        return 1
    x, y = load_tarball(args.tarball)
    n_test = len(x) // 5
    os.makedirs(args.out, exist_ok=True)
    write_idx_images(f"{args.out}/train-images-idx3-ubyte.gz", x[n_test:])
    write_idx_labels(f"{args.out}/train-labels-idx1-ubyte.gz", y[n_test:])
    write_idx_images(f"{args.out}/test-images-idx3-ubyte.gz", x[:n_test])
    write_idx_labels(f"{args.out}/test-labels-idx1-ubyte.gz", y[:n_test])
    print(f"wrote {len(x) - n_test} train / {n_test} test images to "
          f"{args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
