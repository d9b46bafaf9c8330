#!/usr/bin/env python3
"""Build the bundled MNIST subset (IDX format) from the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist, MIT) ships 10,010 MNIST
digits as JSON arrays of intensities in [0, 1] rounded to three decimals.
This script shuffles them with a fixed seed and writes a 1000-image training
split and a disjoint 100-image test split in the standard IDX layout.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist_subset
"""
import argparse
import json
import pathlib
import struct

import numpy as np


def write_idx(prefix: pathlib.Path, images: np.ndarray, labels: np.ndarray) -> None:
    n, rows, cols = images.shape
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--test", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20190607)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        data = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        arr = np.asarray(data, dtype=np.float64).reshape(-1, 28, 28)
        images.append(np.rint(arr * 255.0).clip(0, 255))
        labels.append(np.full(arr.shape[0], digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    train = order[: args.train]
    test = order[args.train : args.train + args.test]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train", images[train], labels[train])
    write_idx(args.out_dir / "test", images[test], labels[test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
