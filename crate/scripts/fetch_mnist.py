#!/usr/bin/env python3
"""Rebuild IDX files from the digit samples shipped in the `mnist` npm package.

The npm package stores each 28x28 image as 784 floats (byte / 255 rounded to
three decimals). Rounding back through x * 255 recovers the original bytes
exactly, so the output is a faithful IDX container of those samples.

    python3 scripts/fetch_mnist.py [--package mnist|fashion-mnist] [--out data/mnist]
"""
import argparse
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile

SUBDIR = {"mnist": "digits", "fashion-mnist": "clothes"}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--package", default="mnist", choices=sorted(SUBDIR))
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = pathlib.Path(args.out or f"data/{args.package}")
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", args.package], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        tgz = next(pathlib.Path(tmp).glob("*.tgz"))
        with tarfile.open(tgz) as tf:
            tf.extractall(tmp)
        root = pathlib.Path(tmp) / "package" / "src" / SUBDIR[args.package]
        samples = []
        for label in range(10):
            data = json.loads((root / f"{label}.json").read_text())["data"]
            assert len(data) % 784 == 0
            for i in range(0, len(data), 784):
                px = bytes(int(round(v * 255)) for v in data[i:i + 784])
                samples.append((px, label))

    random.Random(args.seed).shuffle(samples)
    n = len(samples)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for px, _ in samples:
            f.write(px)
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
