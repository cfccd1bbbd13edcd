#!/usr/bin/env python3
"""Convert the per-class JSON dumps of the `fashion-mnist` npm package to IDX files.

The package ships all 70,000 FashionMNIST images grouped by class but without
the official train/test split. This script writes a deterministic split: the
first 6,000 images of every class go to train, the next 1,000 to test. Samples
are interleaved round-robin over classes so any prefix is class-balanced.

usage: fashion_mnist_from_npm.py <package_dir> <out_dir>
    package_dir  directory containing src/clothes/{0..9}.json (npm pack + tar xzf)
"""
import json
import os
import struct
import sys

TRAIN_PER_CLASS = 6000
TEST_PER_CLASS = 1000


def write_idx(out_dir, stem, images, labels):
    with open(os.path.join(out_dir, f"{stem}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(os.path.join(out_dir, f"{stem}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    pkg, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    per_class = []
    for c in range(10):
        with open(os.path.join(pkg, "src", "clothes", f"{c}.json")) as f:
            rows = [r for r in json.load(f)["data"] if len(r) == 28 * 28]  # the dump has a few empty rows
        if len(rows) < TRAIN_PER_CLASS + TEST_PER_CLASS:
            sys.exit(f"class {c}: only {len(rows)} images")
        per_class.append(rows)

    def interleave(lo, hi):
        images, labels = [], []
        for k in range(lo, hi):
            for c in range(10):
                images.append(per_class[c][k])
                labels.append(c)
        return images, labels

    write_idx(out, "train", *interleave(0, TRAIN_PER_CLASS))
    write_idx(out, "t10k", *interleave(TRAIN_PER_CLASS, TRAIN_PER_CLASS + TEST_PER_CLASS))


if __name__ == "__main__":
    main()
