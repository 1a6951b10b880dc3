"""Dataset loading, subsampling, and on-disk formats.

Two binary formats live here:

* IDX image/label files (the classic big-endian MNIST container,
  magics 0x00000803 and 0x00000801).
* A flat cache format for preprocessed datasets: 8-byte magic
  ``PPRUNE01``, u64 example count ``m``, u64 feature count ``d``,
  then little-endian float64 features (row-major) followed by
  float64 labels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
CACHE_MAGIC = b"PPRUNE01"


class IdxFormatError(ValueError):
    """Malformed IDX file."""


class IdxMagicError(IdxFormatError):
    """Unexpected magic number."""


class IdxTruncatedError(IdxFormatError):
    """Payload shorter than the header promises."""


class IdxCountMismatchError(IdxFormatError):
    """Image and label files disagree on the example count."""


@dataclass
class Dataset:
    """An in-memory dataset of m examples with d features each.

    ``labels`` are float targets (raw class ids, or 0/1 after
    binarization).  ``class_ids`` keeps the original integer classes
    when they exist, so per-class subsampling stays possible after
    the labels have been rewritten.
    """

    features: np.ndarray
    labels: np.ndarray
    class_ids: np.ndarray | None = None
    normalized: bool = False

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"labels have shape {self.labels.shape}, expected "
                f"({self.features.shape[0]},)"
            )
        if self.class_ids is not None:
            self.class_ids = np.ascontiguousarray(self.class_ids, dtype=np.int64)
            if self.class_ids.shape != self.labels.shape:
                raise ValueError("class_ids must align with labels")

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _read_exact(f, n: int, path: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IdxTruncatedError(f"{path}: expected {n} more bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1] by dividing by 255.  The raw integer
    classes are kept in ``class_ids`` and copied into float ``labels``.

    Raises
    ------
    IdxMagicError, IdxTruncatedError, IdxCountMismatchError
        On a bad magic number, short payload, or image/label count
        disagreement.  The message names the offending file.
    """
    images_path, labels_path = str(images_path), str(labels_path)
    with open(images_path, "rb") as f:
        magic, n_images, n_rows, n_cols = struct.unpack(
            ">IIII", _read_exact(f, 16, images_path)
        )
        if magic != IMAGE_MAGIC:
            raise IdxMagicError(
                f"{images_path}: magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
            )
        raw = _read_exact(f, n_images * n_rows * n_cols, images_path)
        if f.read(1):
            raise IdxFormatError(f"{images_path}: trailing bytes after payload")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n_images, n_rows * n_cols)

    with open(labels_path, "rb") as f:
        magic, n_labels = struct.unpack(">II", _read_exact(f, 8, labels_path))
        if magic != LABEL_MAGIC:
            raise IdxMagicError(
                f"{labels_path}: magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
            )
        raw = _read_exact(f, n_labels, labels_path)
        if f.read(1):
            raise IdxFormatError(f"{labels_path}: trailing bytes after payload")
    classes = np.frombuffer(raw, dtype=np.uint8)

    if n_images != n_labels:
        raise IdxCountMismatchError(
            f"{images_path} holds {n_images} images but {labels_path} holds "
            f"{n_labels} labels"
        )
    return Dataset(
        features=pixels.astype(np.float64) / 255.0,
        labels=classes.astype(np.float64),
        class_ids=classes.astype(np.int64),
    )


def save_idx(ds: Dataset, images_path, labels_path) -> None:
    """Write a Dataset back out as an IDX pair.

    Expects [0, 1]-scaled pixel features as produced by load_idx; the
    byte payload round-trips exactly for such data.  Features are laid
    out as d x 1 "images" unless d is a perfect square.
    """
    if ds.class_ids is None:
        raise ValueError("save_idx needs integer class_ids for the label file")
    m, d = ds.features.shape
    side = int(np.sqrt(d))
    rows, cols = (side, side) if side * side == d else (d, 1)
    pixels = np.rint(ds.features * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("features are not [0, 1] pixel data")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, m, rows, cols))
        f.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, m))
        f.write(ds.class_ids.astype(np.uint8).tobytes())


def binarize_labels(ds: Dataset, threshold: int = 5) -> Dataset:
    """Collapse integer classes to binary targets: class < threshold maps
    to 0.0 and the rest to 1.0.  class_ids are preserved untouched."""
    if ds.class_ids is None:
        raise ValueError("binarize_labels needs class_ids")
    return replace(ds, labels=(ds.class_ids >= threshold).astype(np.float64))


def subsample_uniform(
    ds: Dataset, target_size: int, seed: int, per_class_uniform: bool = True
) -> Dataset:
    """Draw a seeded subsample of ``target_size`` examples without
    replacement.

    With ``per_class_uniform`` (the default) the draw takes an equal
    number of examples from each class present in ``class_ids``;
    ``target_size`` must then be divisible by the class count, and every
    class must be large enough.  Selected indices are sorted ascending,
    so identical (target_size, seed) pairs give identical subsets.
    """
    if not 0 < target_size <= ds.n_examples:
        raise ValueError(
            f"target_size {target_size} out of range (1..{ds.n_examples})"
        )
    rng = np.random.default_rng(seed)
    if per_class_uniform:
        if ds.class_ids is None:
            raise ValueError("per-class subsampling needs class_ids")
        classes = np.unique(ds.class_ids)
        if target_size % len(classes):
            raise ValueError(
                f"target_size {target_size} not divisible by {len(classes)} classes"
            )
        per = target_size // len(classes)
        picks = []
        for c in classes:
            pool = np.flatnonzero(ds.class_ids == c)
            if len(pool) < per:
                raise ValueError(f"class {c} has {len(pool)} examples, needs {per}")
            picks.append(rng.choice(pool, size=per, replace=False))
        idx = np.sort(np.concatenate(picks))
    else:
        idx = np.sort(rng.choice(ds.n_examples, size=target_size, replace=False))
    return replace(
        ds,
        features=ds.features[idx],
        labels=ds.labels[idx],
        class_ids=None if ds.class_ids is None else ds.class_ids[idx],
    )


def normalize_rows(ds: Dataset) -> Dataset:
    """Scale every feature row to unit Euclidean norm."""
    norms = np.linalg.norm(ds.features, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"row {zero[0]} has zero norm, cannot normalize")
    return replace(ds, features=ds.features / norms[:, None], normalized=True)


def make_synthetic(
    m: int, d: int, task: str = "binary", seed: int = 0, noise: float = 0.1
) -> Dataset:
    """Generate a seeded synthetic dataset with unit-norm rows.

    ``binary`` labels come from a random linear threshold; ``regression``
    targets are a random linear map plus bounded uniform noise.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((m, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    if task == "binary":
        labels = (x @ w > 0).astype(np.float64)
        return Dataset(x, labels, class_ids=labels.astype(np.int64), normalized=True)
    if task == "regression":
        labels = x @ w + rng.uniform(-noise, noise, size=m)
        return Dataset(x, labels, normalized=True)
    raise ValueError(f"unknown task {task!r}")


def make_class_blobs(
    m: int,
    d: int,
    n_classes: int = 10,
    seed: int = 0,
    spread: float = 0.8,
) -> Dataset:
    """Balanced multi-class gaussian blobs on the unit sphere.

    A stand-in for image data when exercising the per-class pipeline:
    each class is a unit-norm center plus isotropic noise of scale
    ``spread``, rows re-normalized.  m must be divisible by n_classes.
    """
    if m % n_classes:
        raise ValueError(f"m {m} not divisible by {n_classes} classes")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    per = m // n_classes
    class_ids = np.repeat(np.arange(n_classes), per)
    x = centers[class_ids] + spread * rng.standard_normal((m, d)) / np.sqrt(d)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    perm = rng.permutation(m)
    x, class_ids = x[perm], class_ids[perm]
    return Dataset(
        x, class_ids.astype(np.float64), class_ids=class_ids, normalized=True
    )


def train_val_split(ds: Dataset, val_fraction: float, seed: int):
    """Seeded uniform split into (train, validation) Datasets."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n_examples)
    n_val = int(round(val_fraction * ds.n_examples))
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])

    def take(idx):
        return replace(
            ds,
            features=ds.features[idx],
            labels=ds.labels[idx],
            class_ids=None if ds.class_ids is None else ds.class_ids[idx],
        )

    return take(train_idx), take(val_idx)


def save_cache(ds: Dataset, path) -> None:
    """Write the flat binary cache format (see module docstring)."""
    m, d = ds.features.shape
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<QQ", m, d))
        f.write(ds.features.astype("<f8").tobytes())
        f.write(ds.labels.astype("<f8").tobytes())


def load_cache(path) -> Dataset:
    """Read a dataset cache written by save_cache."""
    path = str(path)
    data = Path(path).read_bytes()
    if data[:8] != CACHE_MAGIC:
        raise ValueError(f"{path}: bad cache magic {data[:8]!r}")
    m, d = struct.unpack("<QQ", data[8:24])
    need = 24 + 8 * m * d + 8 * m
    if len(data) != need:
        raise ValueError(f"{path}: cache holds {len(data)} bytes, expected {need}")
    features = np.frombuffer(data, dtype="<f8", count=m * d, offset=24)
    labels = np.frombuffer(data, dtype="<f8", count=m, offset=24 + 8 * m * d)
    return Dataset(features.reshape(m, d).copy(), labels.copy())
