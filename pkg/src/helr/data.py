"""Dataset types, normalization, MNIST restructuring, and CSV/IDX I/O.

A ``Dataset`` holds the design matrix with an explicit all-ones bias
column and labels in {-1, +1}.  The ``ZMatrix`` folds the labels into the
samples (z[i][j] = y[i] * x[i][j]) so the gradient becomes a polynomial
in Z and the weights, which is the form the packed encrypted circuit
consumes.
"""

from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "ZMatrix",
    "SplitSpec",
    "make_dataset",
    "build_z",
    "normalize",
    "restructure_mnist",
    "read_idx",
    "load_mnist",
    "mnist_datasets",
    "synth_financial",
    "split_dataset",
    "read_csv",
    "write_csv",
    "default_data_dir",
]

DATA_DIR_ENV = "HELR_DATA_DIR"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix with bias column plus labels in {-1, +1}.

    Invariants checked at construction: column 0 is all ones, labels are
    exactly -1 or +1, and all values are finite.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if X.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        if not np.array_equal(X[:, 0], np.ones(X.shape[0])):
            raise ValueError("column 0 of X must be the all-ones bias column")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be exactly -1 or +1")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        """Feature count excluding the bias column."""
        return self.X.shape[1] - 1


@dataclass(frozen=True, eq=False)
class ZMatrix:
    """Labels folded into the samples: Z[i] = y[i] * X[i]."""

    Z: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=np.float64)
        object.__setattr__(self, "Z", Z)
        if Z.ndim != 2:
            raise ValueError(f"Z must be 2-D, got shape {Z.shape}")
        if not np.all(np.isin(Z[:, 0], (-1.0, 1.0))):
            raise ValueError("Z column 0 must carry the labels (-1 or +1)")


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/validation split parameters."""

    train_fraction: float
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def make_dataset(features: np.ndarray, labels: np.ndarray) -> Dataset:
    """Build a Dataset from raw features (no bias column) and labels.

    Labels given as {0, 1} are remapped to {-1, +1}; the gradient formulas
    assume the signed convention.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if set(np.unique(labels)) <= {0.0, 1.0}:
        labels = 2.0 * labels - 1.0
    X = np.hstack([np.ones((features.shape[0], 1)), features])
    return Dataset(X, labels)


def build_z(ds: Dataset) -> ZMatrix:
    return ZMatrix(ds.y[:, None] * ds.X)


def normalize(ds: Dataset) -> Dataset:
    """Min-max scale each non-bias column into [0, 1].

    Constant columns map to all zeros.  Non-finite inputs are rejected at
    Dataset construction, so only a defensive check remains here.
    """
    X = ds.X.copy()
    for j in range(1, X.shape[1]):
        col = X[:, j]
        if not np.all(np.isfinite(col)):
            raise ValueError(f"column {j} contains non-finite values")
        lo, hi = col.min(), col.max()
        if hi > lo:
            X[:, j] = (col - lo) / (hi - lo)
        else:
            X[:, j] = 0.0
    return Dataset(X, ds.y)


def read_idx(path) -> np.ndarray:
    """Read one IDX-format array (plain or gzip-compressed)."""
    path = str(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        header = fh.read(4)
        if len(header) < 4 or header[0] != 0 or header[1] != 0:
            raise ValueError(f"{path}: not an IDX file")
        dtype_code, ndim = header[2], header[3]
        if dtype_code != 0x08:
            raise ValueError(f"{path}: only unsigned-byte IDX data supported, got code {dtype_code:#x}")
        dims = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
        raw = fh.read()
    data = np.frombuffer(raw, dtype=np.uint8)
    expected = int(np.prod(dims))
    if data.size != expected:
        raise ValueError(f"{path}: payload has {data.size} bytes, header promises {expected}")
    return data.reshape(dims)


def default_data_dir() -> Path:
    """MNIST cache directory: $HELR_DATA_DIR, else ./data/mnist."""
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path("data") / "mnist"


def _find_idx(data_dir: Path, stem: str) -> Path:
    for candidate in (data_dir / stem, data_dir / (stem + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(
        f"{stem}[.gz] not found under {data_dir}; set ${DATA_DIR_ENV} or pass --data-dir"
    )


def load_mnist(data_dir=None) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Raw MNIST arrays: (train_images, train_labels, test_images, test_labels)."""
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    return (
        read_idx(_find_idx(data_dir, MNIST_FILES["train_images"])),
        read_idx(_find_idx(data_dir, MNIST_FILES["train_labels"])),
        read_idx(_find_idx(data_dir, MNIST_FILES["test_images"])),
        read_idx(_find_idx(data_dir, MNIST_FILES["test_labels"])),
    )


def restructure_mnist(images: np.ndarray, labels: np.ndarray) -> Dataset:
    """Binary 3-vs-8 task with 2x2-average-pooled 14x14 images.

    Keeps only digits 3 and 8, pools each 28x28 image down to 196 features,
    scales pixels into [0, 1], and prepends the bias column.  The label
    convention is fixed as 3 -> +1 and 8 -> -1 so ranking metrics have a
    stable sign.
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3 or images.shape[1:] != (28, 28):
        raise ValueError(f"expected (k, 28, 28) images, got shape {images.shape}")
    if labels.shape != (images.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match {images.shape[0]} images")
    keep = (labels == 3) | (labels == 8)
    imgs = images[keep].astype(np.float64) / 255.0
    pooled = imgs.reshape(-1, 14, 2, 14, 2).mean(axis=(2, 4)).reshape(-1, 196)
    y = np.where(labels[keep] == 3, 1.0, -1.0)
    X = np.hstack([np.ones((pooled.shape[0], 1)), pooled])
    return Dataset(X, y)


def mnist_datasets(data_dir=None) -> tuple[Dataset, Dataset]:
    """Restructured (train, validation) pair from the raw MNIST splits."""
    tr_img, tr_lab, te_img, te_lab = load_mnist(data_dir)
    return restructure_mnist(tr_img, tr_lab), restructure_mnist(te_img, te_lab)


def synth_financial(n: int, f: int, seed: int, flip_rate: float = 0.10) -> Dataset:
    """Synthetic stand-in for a private credit dataset.

    Features are uniform in [0, 1]; labels come from a random ground-truth
    linear model thresholded at its median score, then a fraction of labels
    is flipped.  The median threshold pins the class balance near 1/2 and
    the flips give the task a nontrivial Bayes error while keeping it
    comfortably learnable.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if f < 1:
        raise ValueError(f"need f >= 1, got {f}")
    rng = np.random.default_rng(seed)
    feats = rng.uniform(0.0, 1.0, size=(n, f))
    w_true = rng.normal(0.0, 2.0, size=f)
    scores = feats @ w_true
    y = np.where(scores - np.median(scores) >= 0.0, 1.0, -1.0)
    flips = rng.random(n) < flip_rate
    y[flips] = -y[flips]
    X = np.hstack([np.ones((n, 1)), feats])
    return Dataset(X, y)


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic train/validation split; both halves must be nonempty."""
    n = ds.n_samples
    idx = np.arange(n)
    if spec.shuffle:
        np.random.default_rng(spec.seed).shuffle(idx)
    cut = int(round(spec.train_fraction * n))
    if cut == 0 or cut == n:
        raise ValueError(f"split of {n} samples at fraction {spec.train_fraction} leaves an empty side")
    tr, va = idx[:cut], idx[cut:]
    return Dataset(ds.X[tr], ds.y[tr]), Dataset(ds.X[va], ds.y[va])


def write_csv(ds: Dataset, path) -> None:
    """Full-precision CSV with a ``label`` column and the non-bias features."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"x{j}" for j in range(1, ds.X.shape[1])])
        for i in range(ds.n_samples):
            writer.writerow([repr(float(ds.y[i]))] + [repr(float(v)) for v in ds.X[i, 1:]])


def read_csv(path) -> Dataset:
    """Inverse of :func:`write_csv`; also accepts {0,1} labels.

    Malformed rows are reported with their 1-based line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if "label" not in header:
            raise ValueError(f"{path}: no 'label' column in header {header}")
        label_col = header.index("label")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            labels.append(vals[label_col])
            rows.append([v for j, v in enumerate(vals) if j != label_col])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return make_dataset(np.asarray(rows), np.asarray(labels))


def ground_truth_accuracy(n: int, f: int, seed: int, flip_rate: float = 0.10) -> float:
    """Accuracy of the synthetic generator's own model on its own data."""
    rng = np.random.default_rng(seed)
    feats = rng.uniform(0.0, 1.0, size=(n, f))
    w_true = rng.normal(0.0, 2.0, size=f)
    scores = feats @ w_true
    bias = -np.median(scores)
    ds = synth_financial(n, f, seed, flip_rate)
    pred = np.where(feats @ w_true + bias >= 0.0, 1.0, -1.0)
    return float(np.mean(pred == ds.y))
