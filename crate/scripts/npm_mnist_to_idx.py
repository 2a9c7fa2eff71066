#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The npm package ships 10,000 MNIST digits as JSON arrays of [0, 1] floats,
one file per class. This script writes a stratified 8,000 / 2,000 partition
as `train-*` and `t10k-*` IDX files (uncompressed) so the CLI can load them
with `--data-dir`. Use the official MNIST files instead when available.

usage: npm_mnist_to_idx.py <package-dir> <out-dir>
"""
import json
import os
import random
import struct
import sys


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    rng = random.Random(20171)
    train, test = [], []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        samples = [
            [int(round(v * 255)) for v in flat[i : i + 784]]
            for i in range(0, len(flat), 784)
        ]
        rng.shuffle(samples)
        cut = len(samples) // 5
        test += [(s, digit) for s in samples[:cut]]
        train += [(s, digit) for s in samples[cut:]]
    rng.shuffle(train)
    rng.shuffle(test)
    for prefix, rows in (("train", train), ("t10k", test)):
        write_images(os.path.join(out, f"{prefix}-images-idx3-ubyte"), [r[0] for r in rows])
        write_labels(os.path.join(out, f"{prefix}-labels-idx1-ubyte"), [r[1] for r in rows])
        print(f"{prefix}: {len(rows)} samples")


if __name__ == "__main__":
    main()
