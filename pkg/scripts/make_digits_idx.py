"""Build the desk-scale digit corpus used by the end-to-end tests.

The 5000-image MNIST subset bundled in the ``mlxtend`` wheel is split per
class into 100 training and 100 held-out images and written as gzipped IDX
files. Usage::

    pip download mlxtend --no-deps -d /tmp/wheels
    python scripts/make_digits_idx.py /tmp/wheels/mlxtend-*.whl tests/data
"""
import argparse
import gzip
import io
import struct
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def write_idx(path, images, labels):
    with gzip.GzipFile(path.with_name(path.name + "-images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, *images.shape))
        f.write(images.astype(np.uint8).tobytes())
    with gzip.GzipFile(path.with_name(path.name + "-labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("wheel", type=Path)
    parser.add_argument("outdir", type=Path)
    parser.add_argument("--per-class", type=int, default=100)
    args = parser.parse_args()

    raw = gzip.decompress(zipfile.ZipFile(args.wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    pixels, labels = table[:, :-1], table[:, -1]

    train, test = [], []
    for cls in range(10):
        idx = np.flatnonzero(labels == cls)
        train.extend(idx[: args.per_class])
        test.extend(idx[args.per_class : 2 * args.per_class])
    args.outdir.mkdir(parents=True, exist_ok=True)
    for name, idx in (("digits-train", train), ("digits-test", test)):
        idx = np.asarray(idx)
        write_idx(args.outdir / name, pixels[idx].reshape(-1, 28, 28), labels[idx])


if __name__ == "__main__":
    main()
