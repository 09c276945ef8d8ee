"""Convert a CSV of MNIST digits (784 pixel columns, then the label) into IDX files.

Usage: python mnist_to_idx.py SOURCE OUT_DIR

SOURCE may be a .csv, a .csv.gz, or a wheel/zip containing an mnist*.csv.gz
(for example mlxtend's bundled mnist_5k.csv.gz). Rows are written in a fixed
shuffled order so that any prefix covers every class.
"""

import gzip
import os
import random
import struct
import sys
import zipfile


def read_rows(source):
    if zipfile.is_zipfile(source):
        with zipfile.ZipFile(source) as z:
            name = next(n for n in z.namelist() if "mnist" in n and n.endswith(".csv.gz"))
            text = gzip.decompress(z.read(name)).decode()
    elif source.endswith(".gz"):
        with gzip.open(source, "rt") as f:
            text = f.read()
    else:
        with open(source) as f:
            text = f.read()
    rows = [[int(float(v)) for v in line.split(",")] for line in text.splitlines() if line.strip()]
    for r in rows:
        if len(r) != 785 or not all(0 <= v <= 255 for v in r):
            raise ValueError("expected 784 pixels in 0..255 followed by a label")
    return rows


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    source, out = sys.argv[1], sys.argv[2]
    rows = read_rows(source)
    random.Random(0).shuffle(rows)
    os.makedirs(out, exist_ok=True)
    n = len(rows)
    with open(os.path.join(out, "train-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(bytes(v for r in rows for v in r[:784]))
    with open(os.path.join(out, "train-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(r[784] for r in rows))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
