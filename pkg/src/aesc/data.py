"""MNIST (IDX) and CIFAR-10 (binary batches) ingestion, splitting and batching."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_TRAIN = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST = ["test_batch.bin"]
CIFAR_RECORD = 1 + 3 * 32 * 32

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# canonical sizes of the published sets (train, test)
FULL_COUNTS = {"mnist": (60000, 10000), "cifar10": (50000, 10000)}


class DataError(Exception):
    """Raised for missing, truncated or malformed dataset files."""


@dataclass(frozen=True)
class Dataset:
    name: str
    split: str
    images: np.ndarray  # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.name, self.split, self.images[:n], self.labels[:n])


def normalize(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float32) / np.float32(255.0)


def denormalize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _read_bytes(path: Path) -> bytes:
    if path.exists():
        return path.read_bytes()
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gzip.decompress(gz.read_bytes())
    raise DataError(f"missing dataset file: {path}")


def read_idx(path: Path, magic: int) -> np.ndarray:
    data = _read_bytes(Path(path))
    if len(data) < 8:
        raise DataError(f"{path}: truncated IDX header")
    (got,) = struct.unpack(">I", data[:4])
    if got != magic:
        raise DataError(f"{path}: bad IDX magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = got & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DataError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    need = int(np.prod(dims, dtype=np.int64))
    if len(data) - header != need:
        raise DataError(f"{path}: expected {need} payload bytes for dims {dims}, found {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def _mnist_raw(root: Path, part: str):
    img_name, lbl_name = MNIST_FILES[part]
    images = read_idx(root / img_name, IDX_IMAGES_MAGIC)
    labels = read_idx(root / lbl_name, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{root / img_name}: {images.shape[0]} images but {labels.shape[0]} labels")
    if images.shape[1:] != (28, 28):
        raise DataError(f"{root / img_name}: images are {images.shape[1:]}, expected 28x28")
    return images[:, None], labels


def _cifar_raw(root: Path, names: list[str]):
    imgs, lbls = [], []
    for name in names:
        data = _read_bytes(root / name)
        if len(data) == 0 or len(data) % CIFAR_RECORD:
            raise DataError(f"{root / name}: size {len(data)} is not a multiple of {CIFAR_RECORD}-byte records")
        rec = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        lbls.append(rec[:, 0])
        imgs.append(rec[:, 1:].reshape(-1, 3, 32, 32))
    return np.concatenate(imgs), np.concatenate(lbls)


def _split_indices(n: int, val_fraction: float, seed: int):
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _load(name: str, root, split: str, seed: int, val_fraction: float, strict: bool) -> Dataset:
    root = Path(root)
    if split not in ("train", "val", "test"):
        raise ValueError(f"unknown split {split!r}")
    part = "test" if split == "test" else "train"
    if name == "mnist":
        images, labels = _mnist_raw(root, part)
    else:
        images, labels = _cifar_raw(root, CIFAR_TEST if part == "test" else CIFAR_TRAIN)
    if labels.size and labels.max() > 9:
        raise DataError(f"{root}: label {labels.max()} outside 0-9")
    if strict:
        want = FULL_COUNTS[name][0 if part == "train" else 1]
        if len(labels) != want:
            raise DataError(f"{root}: {name} {part} has {len(labels)} records, expected {want}")
    if part == "train":
        tr, va = _split_indices(len(labels), val_fraction, seed)
        idx = tr if split == "train" else va
        images, labels = images[idx], labels[idx]
    return Dataset(name, split, normalize(images), labels.astype(np.int64))


def load_mnist(root, split: str = "train", seed: int = 0, val_fraction: float = 0.1, strict: bool = False) -> Dataset:
    """Load an MNIST split from the four IDX files (optionally gzipped).

    ``train``/``val`` are carved from the IDX train file by ``seed``; ``strict``
    additionally insists on the published 60000/10000 record counts.
    """
    return _load("mnist", root, split, seed, val_fraction, strict)


def load_cifar10(root, split: str = "train", seed: int = 0, val_fraction: float = 0.1, strict: bool = False) -> Dataset:
    """Load a CIFAR-10 split from data_batch_1..5.bin / test_batch.bin."""
    return _load("cifar10", root, split, seed, val_fraction, strict)


def load_dataset(name: str, root, split: str = "train", seed: int = 0, **kw) -> Dataset:
    if name == "mnist":
        return load_mnist(root, split, seed, **kw)
    if name == "cifar10":
        return load_cifar10(root, split, seed, **kw)
    raise ValueError(f"unknown dataset {name!r}")


@dataclass(frozen=True)
class BatchIterator:
    batch_size: int
    seed: int = 0
    drop_last: bool = False
    shuffle: bool = True

    def epoch_order(self, n: int, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(n)
        return np.random.default_rng([self.seed, epoch]).permutation(n)

    def __call__(self, ds: Dataset, epoch: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return batches(ds, self, epoch)


def batches(ds: Dataset, it: BatchIterator, epoch: int = 0):
    """Yield (images, labels) covering the split once; order derived from (seed, epoch)."""
    n = len(ds)
    if it.batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = it.epoch_order(n, epoch)
    for start in range(0, n, it.batch_size):
        idx = order[start : start + it.batch_size]
        if it.drop_last and len(idx) < it.batch_size:
            break
        yield ds.images[idx], ds.labels[idx]


def write_idx(path, array: np.ndarray, magic: int) -> None:
    """Write a uint8 array in IDX format (used by the subset script and tests)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())
