#!/usr/bin/env python3
"""Write an IDX image/label pair holding a few digits of the MNIST 5k sample
shipped inside the mlxtend wheel (500 images per digit, 28x28, uint8).

usage: mnist_fixture.py WHEEL OUT_DIR [--digits 0,1,7] [--per-digit 250]
"""
import argparse
import gzip
import io
import struct
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out_dir")
    ap.add_argument("--digits", default="0,1,7")
    ap.add_argument("--per-digit", type=int, default=250)
    args = ap.parse_args()
    digits = [int(d) for d in args.digits.split(",")]

    with zipfile.ZipFile(args.wheel) as whl:
        raw = gzip.decompress(whl.read(MEMBER)).decode()

    taken = {d: 0 for d in digits}
    images, labels = [], []
    for line in io.StringIO(raw):
        row = [int(float(v)) for v in line.strip().split(",")]
        label = row[-1]
        if label in taken and taken[label] < args.per_digit:
            taken[label] += 1
            images.append(bytes(row[:-1]))
            labels.append(label)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(labels)
    with open(out / "mnist-017-images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for img in images:
            f.write(img)
    with open(out / "mnist-017-labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(labels))
    print(f"{n} images, per digit {taken}")


if __name__ == "__main__":
    main()
