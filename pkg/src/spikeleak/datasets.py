"""Local dataset preparation.

The sandbox has no route to the MNIST mirrors, so the real-MNIST experiments
use the 5000-digit training subset bundled with ``mlxtend`` (500 per class),
re-encoded as standard IDX files and split 4000/1000 into train/test.
"""

from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from .data_ingest import LabeledDataset, encode_idx, load_idx

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    "test": ("t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"),
}


def write_mnist_subset_idx(dest, n_test: int = 1000, seed: int = 0) -> Path:
    """Write gzipped IDX train/test files for the mlxtend MNIST subset into ``dest``."""
    from mlxtend.data import mnist_data

    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    X, y = mnist_data()
    order = np.random.default_rng(seed).permutation(len(y))
    splits = {"test": order[:n_test], "train": order[n_test:]}
    for split, idx in splits.items():
        img, lab = encode_idx(X[idx].reshape(-1, 28, 28).astype(np.uint8), y[idx].astype(np.uint8))
        img_name, lab_name = MNIST_FILES[split]
        # mtime=0 keeps the gzip bytes reproducible
        (dest / img_name).write_bytes(gzip.compress(img, mtime=0))
        (dest / lab_name).write_bytes(gzip.compress(lab, mtime=0))
    return dest


def load_mnist_dir(path) -> tuple[LabeledDataset, LabeledDataset]:
    """Load ``(train, test)`` from a directory holding the four IDX files (gz or raw)."""
    path = Path(path)
    out = []
    for split, names in MNIST_FILES.items():
        files = []
        for name in names:
            p = path / name
            if not p.exists() and (path / name[:-3]).exists():
                p = path / name[:-3]
            files.append(p)
        out.append(load_idx(*files, split=split))
    return out[0], out[1]


def ensure_mnist(path) -> tuple[LabeledDataset, LabeledDataset]:
    path = Path(path)
    if not (path / MNIST_FILES["train"][0]).exists():
        write_mnist_subset_idx(path)
    return load_mnist_dir(path)
