#!/usr/bin/env python3
"""Convert the 10k MNIST digits bundled in the `mnist` npm package into gzipped IDX files.

Usage: npm pack mnist && tar xzf mnist-*.tgz && \
       python3 scripts/mnist_npm_to_idx.py package/src/digits data/mnist-desk

Pixels in the package are stored as round(byte / 255, 3); three decimals are enough
to recover the original byte exactly. Digits are interleaved class by class with a
fixed seed and split 8000 train / 2000 test.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            pix = bytes(round(v * 255) for v in data[i * 784:(i + 1) * 784])
            samples.append((pix, digit))
    random.Random(20160101).shuffle(samples)
    splits = {"train": samples[:8000], "t10k": samples[8000:10000]}
    dst.mkdir(parents=True, exist_ok=True)
    for name, rows in splits.items():
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 0x803, [len(rows), 28, 28],
                  b"".join(p for p, _ in rows))
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 0x801, [len(rows)],
                  bytes(l for _, l in rows))
        print(name, len(rows))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
