"""Write the 5,000-sample MNIST subset bundled in the mlxtend wheel as IDX files.

Usage: python scripts/build_mnist5k.py path/to/mlxtend-*.whl data/mnist5k

The CSV inside the wheel is class-sorted (500 per digit, label in the last
column). Each class is split 400 train / 100 test with a fixed seed, so the
output mirrors the usual MNIST file names at 4000/1000 scale.
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, 0x08, array.ndim)
    header += struct.pack(">" + "I" * array.ndim, *array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + array.tobytes())


def main(wheel, out_dir):
    raw = zipfile.ZipFile(wheel).read(CSV_MEMBER)
    table = np.loadtxt(io.StringIO(gzip.decompress(raw).decode()), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)

    rng = np.random.default_rng(0)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = rng.permutation(np.flatnonzero(labels == digit))
        train_idx.append(idx[:400])
        test_idx.append(idx[400:])
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = rng.permutation(np.concatenate(test_idx))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", images[train_idx])
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[train_idx])
    write_idx(out / "t10k-images-idx3-ubyte.gz", images[test_idx])
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[test_idx])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
