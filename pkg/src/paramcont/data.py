"""MNIST IDX parsing, 6x6 downsampling, a synthetic stand-in and batching."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "PARAMCONT_DATA_DIR"
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray | None = None
    split: str = "train"

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("inputs must be (n, features)")
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "inputs", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise ValueError("need one label per input")
            if y.size and (y.min() < 0 or y.max() > 9):
                raise ValueError("labels must be in 0..9")
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx) -> Dataset:
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.inputs[idx], labels, self.split)


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Parse an IDX file (optionally gzipped) into an array of its declared shape."""
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype_code not in IDX_DTYPES or ndim == 0:
        raise FormatError(f"{path}: bad magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack(">" + "I" * ndim, raw[4:header])
    dtype = IDX_DTYPES[dtype_code]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) - header != expected:
        raise FormatError(f"{path}: payload is {len(raw) - header} bytes, header says {expected}")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(shape).astype(dtype.newbyteorder("="))


def downsample_6x6(image28) -> np.ndarray:
    """Crop the 2-pixel border of a 28x28 image and average-pool 4x4 blocks."""
    img = np.asarray(image28, dtype=np.float64)
    if img.shape[-2:] != (28, 28):
        raise ValueError(f"expected (..., 28, 28), got {img.shape}")
    crop = img[..., 2:26, 2:26]
    return crop.reshape(crop.shape[:-2] + (6, 4, 6, 4)).mean(axis=(-3, -1))


def _find(data_dir, stem):
    for name in (stem, stem + ".gz"):
        p = Path(data_dir) / name
        if p.exists():
            return p
    raise FileNotFoundError(f"no {stem}[.gz] in {data_dir}")


def default_data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "mnist5k"


def load_mnist(data_dir=None, split="train", n=None, seed=0) -> Dataset:
    """Load an MNIST split as 36-pixel vectors in [0, 1].

    If ``n`` is smaller than the split, a seeded random subset is drawn.
    """
    data_dir = Path(data_dir) if data_dir else default_data_dir()
    img_stem, lbl_stem = MNIST_FILES[split]
    images = read_idx(_find(data_dir, img_stem))
    labels = read_idx(_find(data_dir, lbl_stem))
    if images.shape[0] != labels.shape[0]:
        raise FormatError("image and label counts differ")
    if n is not None and n < images.shape[0]:
        idx = np.sort(np.random.default_rng(seed).choice(images.shape[0], n, replace=False))
        images, labels = images[idx], labels[idx]
    x = downsample_6x6(images / 255.0).reshape(len(images), 36)
    return Dataset(np.clip(x, 0.0, 1.0), labels.astype(np.int64), split)


def synthetic_dataset(n, seed=0, split="train", noise=0.05) -> Dataset:
    """Blurred blobs on the 6x6 grid, one position per class.

    Class k puts a Gaussian blob near one of ten fixed centres; position
    jitter, width and pixel noise are drawn from ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    centres = np.array([(1, 1), (1, 2.5), (1, 4), (2.5, 1), (2.5, 4),
                        (4, 1), (4, 2.5), (4, 4), (2.5, 2.5), (0.5, 5)])
    labels = np.arange(n) % 10
    rng.shuffle(labels)
    rr, cc = np.mgrid[0:6, 0:6]
    jitter = rng.normal(0.0, 0.5, size=(n, 2))
    width = rng.uniform(0.7, 1.3, size=n)
    c = centres[labels] + jitter
    d2 = (rr[None] - c[:, 0, None, None]) ** 2 + (cc[None] - c[:, 1, None, None]) ** 2
    img = np.exp(-d2 / (2.0 * width[:, None, None] ** 2))
    img += rng.normal(0.0, noise, size=img.shape)
    return Dataset(np.clip(img.reshape(n, 36), 0.0, 1.0), labels, split)


def batches(dataset: Dataset, batch_size, seed=0, shuffle=True, epoch=0):
    """Yield ``(x, y)`` minibatches for one epoch; the last partial batch is kept.

    The permutation depends on ``(seed, epoch)`` only.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(dataset)
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(n)
    else:
        order = np.arange(n)
    targets = dataset.labels if dataset.labels is not None else dataset.inputs
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.inputs[idx], targets[idx]
