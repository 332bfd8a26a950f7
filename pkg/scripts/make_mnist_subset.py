#!/usr/bin/env python3
"""Write the 5000-digit MNIST sample bundled in the mlxtend wheel as IDX files.

The full MNIST archive is not reachable from the build sandbox; the mlxtend
wheel (BSD licensed) ships 500 digits per class taken from the original set.
They are split per class into train (400) and t10k (100) IDX files so the
normal loader path is exercised end to end.

    python scripts/make_mnist_subset.py --out data/mnist
"""

import argparse
import gzip
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from aesc.data import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, write_idx  # noqa: E402

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "mlxtend==0.24.0", "-d", str(dest)],
        check=True,
    )
    return next(dest.glob("mlxtend-*.whl"))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--wheel", help="already-downloaded mlxtend wheel")
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2021)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = Path(args.wheel) if args.wheel else fetch_wheel(Path(tmp))
        raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    pixels, labels = table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)

    rng = np.random.default_rng(args.seed)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(labels == c))
        test_idx.append(idx[: args.test_per_class])
        train_idx.append(idx[args.test_per_class :])
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = rng.permutation(np.concatenate(test_idx))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, idx in (("train", train_idx), ("t10k", test_idx)):
        write_idx(out / f"{prefix}-images-idx3-ubyte", pixels[idx].reshape(-1, 28, 28), IDX_IMAGES_MAGIC)
        write_idx(out / f"{prefix}-labels-idx1-ubyte", labels[idx], IDX_LABELS_MAGIC)
        print(f"{prefix}: {len(idx)} images -> {out}")


if __name__ == "__main__":
    main()
