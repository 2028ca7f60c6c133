"""Datasets for the active-learning loop: MNIST loading, synthetic blobs, splits.

A Dataset keeps features, true labels, and stable integer ids side by side.
Ids never change when a dataset is filtered or split, so the engine can track
examples across the labeled set, the pool, and the test set without copying
feature data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .idx import parse_idx_images, parse_idx_labels, read_idx_bytes


class DataError(Exception):
    """Base class for dataset construction failures."""


class CountMismatch(DataError):
    """Image file and label file disagree on example count."""


class InfeasibleSplit(DataError):
    """Requested split sizes exceed the dataset."""


class SeedNotDiverse(DataError):
    """Could not draw a seed set containing two distinct classes."""


@dataclass(frozen=True)
class Example:
    """One labeled example; the label is only for oracles and evaluation."""

    id: int
    features: np.ndarray
    true_label: int


@dataclass
class Dataset:
    """Ordered collection of examples sharing a feature dimension.

    ids[i], features[i], labels[i] describe the i-th example. Ids are unique
    non-negative ints, stable under filtering and splitting.
    """

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_names: list[str]
    _row_of: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d array of shape (n, feature_dim)")
        n = self.ids.size
        if self.labels.size != n or self.features.shape[0] != n:
            raise DataError("ids, labels, and features must have matching lengths")
        if self.num_classes < 2:
            raise DataError("need at least two classes")
        if len(self.class_names) != self.num_classes:
            raise DataError("class_names must have one entry per class")
        if np.unique(self.ids).size != n:
            raise DataError("ids must be unique")
        if n and (self.ids.min() < 0):
            raise DataError("ids must be non-negative")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError("labels must lie in [0, num_classes)")
        present = np.unique(self.labels)
        if present.size != self.num_classes:
            missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
            raise DataError(f"classes without examples: {missing}")
        if n and (self.features.min() < 0.0 or self.features.max() > 1.0):
            raise DataError("features must lie in [0, 1]")
        self._row_of = {int(i): r for r, i in enumerate(self.ids)}

    def __len__(self) -> int:
        return self.ids.size

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def rows_for(self, ids: np.ndarray) -> np.ndarray:
        """Row indices for the given example ids; KeyError on unknown ids."""
        return np.array([self._row_of[int(i)] for i in np.asarray(ids)], dtype=np.int64)

    def features_for(self, ids: np.ndarray) -> np.ndarray:
        return self.features[self.rows_for(ids)]

    def labels_for(self, ids: np.ndarray) -> np.ndarray:
        return self.labels[self.rows_for(ids)]

    def example(self, example_id: int) -> Example:
        row = self._row_of[int(example_id)]
        return Example(int(self.ids[row]), self.features[row], int(self.labels[row]))


@dataclass(frozen=True)
class SplitSpec:
    """Sizes and seed for carving a dataset into seed / pool / test parts."""

    seed_size: int
    test_size: int
    rng_seed: int

    def __post_init__(self) -> None:
        if self.seed_size < 1:
            raise ValueError("seed_size must be >= 1")
        if self.test_size < 0:
            raise ValueError("test_size must be >= 0")


@dataclass(frozen=True)
class SplitResult:
    """Disjoint id partitions. seed_ids keep draw order; pool/test are sorted."""

    seed_ids: np.ndarray
    pool_ids: np.ndarray
    test_ids: np.ndarray


def load_mnist(
    image_path: str | Path,
    label_path: str | Path,
    class_filter: set[int] | None = None,
) -> Dataset:
    """Load an MNIST image/label file pair into a Dataset.

    Pixels are scaled to [0, 1] by 1/255. When class_filter is given, only
    those classes are kept and their labels are re-indexed densely to
    [0, len(filter)) in ascending original order; ids keep their original
    file positions.
    """
    n_img, rows, cols, pixels = parse_idx_images(read_idx_bytes(image_path))
    n_lab, labels = parse_idx_labels(read_idx_bytes(label_path))
    if n_img != n_lab:
        raise CountMismatch(f"{n_img} images but {n_lab} labels")

    ids = np.arange(n_img, dtype=np.int64)
    labels = labels.astype(np.int64)
    if class_filter is not None:
        kept_classes = sorted(int(c) for c in class_filter)
        if len(kept_classes) < 2:
            raise DataError("class_filter must keep at least two classes")
        mask = np.isin(labels, kept_classes)
        ids, labels, pixels = ids[mask], labels[mask], pixels[mask]
        remap = {orig: new for new, orig in enumerate(kept_classes)}
        labels = np.array([remap[int(c)] for c in labels], dtype=np.int64)
        class_names = [str(c) for c in kept_classes]
        num_classes = len(kept_classes)
    else:
        class_names = [str(c) for c in range(10)]
        num_classes = 10

    features = pixels.astype(np.float64) / 255.0
    return Dataset(
        ids=ids,
        features=features.reshape(len(ids), rows * cols),
        labels=labels,
        num_classes=num_classes,
        class_names=class_names,
    )


def synth_blobs(
    num_classes: int,
    dim: int,
    per_class: int,
    spread: float,
    rng_seed: int,
) -> Dataset:
    """Gaussian-blob classification task with controllable difficulty.

    Cluster means sit on a line with unit spacing; every coordinate carries
    signal. Points are squashed into [0, 1] by a single affine map so the
    geometry (and therefore the difficulty set by `spread`) is preserved.
    Deterministic for a fixed seed.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if spread <= 0:
        raise ValueError("spread must be positive")

    rng = np.random.default_rng(rng_seed)
    direction = np.full(dim, 1.0 / np.sqrt(dim))
    chunks = []
    for c in range(num_classes):
        mean = c * direction
        chunks.append(mean + rng.normal(0.0, spread, size=(per_class, dim)))
    raw = np.concatenate(chunks, axis=0)
    lo, hi = raw.min(), raw.max()
    features = (raw - lo) / (hi - lo)

    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    return Dataset(
        ids=np.arange(n, dtype=np.int64),
        features=features,
        labels=labels,
        num_classes=num_classes,
        class_names=[f"blob{c}" for c in range(num_classes)],
    )


_SEED_RETRY_CAP = 100


def split_ids(ids: np.ndarray, labels: np.ndarray, spec: SplitSpec) -> SplitResult:
    """Split aligned (ids, labels) arrays into (seed, pool, test) id sets.

    The shuffle is driven solely by spec.rng_seed. The seed set must contain
    at least two distinct classes; non-diverse draws are retried up to 100
    times before giving up.

    Raises:
        InfeasibleSplit: seed_size + test_size exceeds the available ids.
        SeedNotDiverse: retry budget exhausted (e.g. seed_size == 1).
    """
    n = ids.size
    if spec.seed_size + spec.test_size > n:
        raise InfeasibleSplit(
            f"seed_size {spec.seed_size} + test_size {spec.test_size} > available size {n}"
        )
    rng = np.random.default_rng(spec.rng_seed)
    for _ in range(_SEED_RETRY_CAP):
        perm = rng.permutation(n)
        test_rows = perm[: spec.test_size]
        seed_rows = perm[spec.test_size : spec.test_size + spec.seed_size]
        pool_rows = perm[spec.test_size + spec.seed_size :]
        if np.unique(labels[seed_rows]).size >= 2:
            return SplitResult(
                seed_ids=ids[seed_rows],
                pool_ids=np.sort(ids[pool_rows]),
                test_ids=np.sort(ids[test_rows]),
            )
    raise SeedNotDiverse(
        f"no seed set of size {spec.seed_size} with >= 2 classes in {_SEED_RETRY_CAP} draws"
    )


def split(dataset: Dataset, spec: SplitSpec) -> SplitResult:
    """Carve a dataset into (seed, pool, test) id sets; see split_ids."""
    return split_ids(dataset.ids, dataset.labels, spec)


def concat(train: Dataset, test: Dataset) -> tuple[Dataset, np.ndarray]:
    """Stack two datasets, offsetting the second one's ids past the first.

    Returns the combined dataset and the (re-numbered) ids of the second
    part, so callers can pin it as a fixed test set.
    """
    if train.num_classes != test.num_classes or train.class_names != test.class_names:
        raise DataError("datasets disagree on classes")
    if train.feature_dim != test.feature_dim:
        raise DataError("datasets disagree on feature_dim")
    offset = int(train.ids.max()) + 1 if len(train) else 0
    shifted = test.ids + offset
    combined = Dataset(
        ids=np.concatenate([train.ids, shifted]),
        features=np.concatenate([train.features, test.features]),
        labels=np.concatenate([train.labels, test.labels]),
        num_classes=train.num_classes,
        class_names=list(train.class_names),
    )
    return combined, np.sort(shifted)
