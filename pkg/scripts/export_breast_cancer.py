#!/usr/bin/env python3
"""Dump the scikit-learn Breast Cancer Wisconsin dataset to CSV so the CLI
can ingest it like any other tabular source.

Usage: python3 scripts/export_breast_cancer.py [--out data/breast_cancer.csv]
"""

import argparse
import csv
import os
import sys

from sklearn.datasets import load_breast_cancer


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/breast_cancer.csv")
    args = ap.parse_args()
    ds = load_breast_cancer()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([n.replace(" ", "_") for n in ds.feature_names]
                   + ["target"])
        for row, y in zip(ds.data, ds.target):
            w.writerow([f"{v:.6g}" for v in row] + [int(y)])
    print(f"wrote {len(ds.data)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
