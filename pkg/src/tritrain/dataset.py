"""Data model and splitting operations for labeled sets and the unlabeled pool.

Datasets are immutable values: every operation returns new objects and never
mutates its inputs. All randomized operations take an explicit seed and are
pure functions of (inputs, seed).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed inputs or violated dataset preconditions."""


class SplitMode(Enum):
    DISJOINT_THIRDS = "disjoint_thirds"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class Example:
    """One sample: an id, a feature vector, and an optional class index."""

    id: str
    features: tuple[float, ...]
    label: int | None = None


@dataclass(frozen=True)
class LabeledDataset:
    """An ordered collection of labeled examples over a fixed class alphabet."""

    examples: tuple[Example, ...]
    alphabet: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.alphabet:
            raise DatasetError("alphabet must be nonempty")
        _check_ids_unique(self.examples)
        _check_dims(self.examples)
        k = len(self.alphabet)
        for ex in self.examples:
            if ex.label is None:
                raise DatasetError(f"example {ex.id!r} has no label")
            if not 0 <= ex.label < k:
                raise DatasetError(
                    f"example {ex.id!r} label {ex.label} outside alphabet of size {k}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def n_classes(self) -> int:
        return len(self.alphabet)

    @property
    def dim(self) -> int:
        if not self.examples:
            raise DatasetError("empty dataset has no dimensionality")
        return len(self.examples[0].features)

    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]

    def feature_matrix(self) -> np.ndarray:
        return np.array([ex.features for ex in self.examples], dtype=float)

    def label_vector(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=int)


@dataclass(frozen=True)
class UnlabeledPool:
    """Unlabeled examples plus withheld ground truth.

    `hidden_labels` exists because the experimental setting withholds known
    labels from training; only selection strategies and evaluation may read it.
    """

    examples: tuple[Example, ...]
    hidden_labels: dict[str, int] = field(compare=True)
    alphabet: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        _check_ids_unique(self.examples)
        _check_dims(self.examples)
        ids = {ex.id for ex in self.examples}
        if set(self.hidden_labels) != ids:
            raise DatasetError("hidden_labels must cover exactly the pool ids")

    def __len__(self) -> int:
        return len(self.examples)

    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]


def pool_from_labeled(ds: LabeledDataset) -> UnlabeledPool:
    """Withhold a labeled set's labels into a pool's hidden ground truth."""

    return UnlabeledPool(
        examples=tuple(Example(ex.id, ex.features) for ex in ds.examples),
        hidden_labels={ex.id: ex.label for ex in ds.examples},
        alphabet=ds.alphabet,
    )


def labeled_from_pool(pool: UnlabeledPool) -> LabeledDataset:
    """Restore a pool's hidden labels; requires the pool to carry an alphabet."""

    if not pool.alphabet:
        raise DatasetError("pool has no alphabet; cannot restore labels")
    return LabeledDataset(
        examples=tuple(
            Example(ex.id, ex.features, pool.hidden_labels[ex.id])
            for ex in pool.examples
        ),
        alphabet=pool.alphabet,
    )


def _check_ids_unique(examples: Sequence[Example]) -> None:
    seen: set[str] = set()
    for ex in examples:
        if ex.id in seen:
            raise DatasetError(f"duplicate id {ex.id!r}")
        seen.add(ex.id)


def _check_dims(examples: Sequence[Example]) -> None:
    if not examples:
        return
    dim = len(examples[0].features)
    for ex in examples:
        if len(ex.features) != dim:
            raise DatasetError(
                f"example {ex.id!r} has {len(ex.features)} features, expected {dim}"
            )
        for v in ex.features:
            if not np.isfinite(v):
                raise DatasetError(f"example {ex.id!r} has non-finite feature {v!r}")


# ---------------------------------------------------------------------------
# CSV ingestion / emission
#
# Format: UTF-8, comma-separated, header row. Optional `id` column, one label
# column (default name `label`), every remaining column a finite real feature.
# Missing values are rejected, not imputed.
# ---------------------------------------------------------------------------


def load_csv(
    path: str | Path,
    label_column: str = "label",
    alphabet: Sequence[str] | None = None,
) -> LabeledDataset:
    """Load a labeled dataset from CSV.

    Ids come from an `id` column when present, else `row<N>` by position.
    The alphabet is inferred from distinct label values in sorted order unless
    an explicit `alphabet` override is given (for files whose observed labels
    undercover the class set).
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return _parse_csv(fh, label_column, alphabet, source=str(path))


def parse_csv_bytes(
    data: bytes,
    label_column: str = "label",
    alphabet: Sequence[str] | None = None,
) -> LabeledDataset:
    return _parse_csv(
        io.StringIO(data.decode("utf-8")), label_column, alphabet, source="<bytes>"
    )


def _parse_csv(fh, label_column, alphabet, source: str) -> LabeledDataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError(f"{source}: empty file") from None
    if label_column not in header:
        raise DatasetError(f"{source}: missing label column {label_column!r}")
    label_idx = header.index(label_column)
    id_idx = header.index("id") if "id" in header else None
    feature_idx = [
        i for i in range(len(header)) if i not in (label_idx, id_idx)
    ]

    rows: list[tuple[str, tuple[float, ...], str]] = []
    for n, row in enumerate(reader):
        if len(row) != len(header):
            raise DatasetError(f"{source}: row {n} has {len(row)} cells, expected {len(header)}")
        ex_id = row[id_idx] if id_idx is not None else f"row{n}"
        feats = []
        for i in feature_idx:
            try:
                v = float(row[i])
            except ValueError:
                raise DatasetError(
                    f"{source}: non-numeric feature {row[i]!r} in column {header[i]!r}, row {n}"
                ) from None
            if not np.isfinite(v):
                raise DatasetError(f"{source}: non-finite feature in column {header[i]!r}, row {n}")
            feats.append(v)
        rows.append((ex_id, tuple(feats), row[label_idx]))

    if not rows:
        raise DatasetError(f"{source}: no data rows")

    if alphabet is None:
        alphabet = sorted({label for _, _, label in rows})
    label_to_idx = {name: i for i, name in enumerate(alphabet)}
    examples = []
    for ex_id, feats, label in rows:
        if label not in label_to_idx:
            raise DatasetError(f"{source}: label {label!r} not in alphabet {list(alphabet)}")
        examples.append(Example(ex_id, feats, label_to_idx[label]))
    return LabeledDataset(tuple(examples), tuple(alphabet))


def save_csv(ds: LabeledDataset, path: str | Path) -> None:
    """Write a labeled dataset as id,f0..f{d-1},label."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        dim = ds.dim if ds.examples else 0
        writer.writerow(["id"] + [f"f{i}" for i in range(dim)] + ["label"])
        for ex in ds.examples:
            writer.writerow([ex.id] + [repr(v) for v in ex.features] + [ds.alphabet[ex.label]])


def save_pool_csv(pool: UnlabeledPool, path: str | Path) -> None:
    """Write pool features as id,f0..f{d-1} (no label column, no hidden truth)."""
    save_examples_csv(pool.examples, path)


def save_examples_csv(examples: Sequence[Example], path: str | Path) -> None:
    """Write bare examples in the unlabeled wire format (id + features)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        dim = len(examples[0].features) if examples else 0
        writer.writerow(["id"] + [f"f{i}" for i in range(dim)])
        for ex in examples:
            writer.writerow([ex.id] + [repr(v) for v in ex.features])


def load_pool_csv(path: str | Path) -> list[Example]:
    """Load unlabeled examples from an id,f0.. CSV (the pool wire format)."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if "id" not in header:
            raise DatasetError(f"{path}: missing id column")
        id_idx = header.index("id")
        feature_idx = [i for i in range(len(header)) if i != id_idx]
        examples = []
        for n, row in enumerate(reader):
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {n} has {len(row)} cells, expected {len(header)}")
            try:
                feats = tuple(float(row[i]) for i in feature_idx)
            except ValueError:
                raise DatasetError(f"{path}: non-numeric feature in row {n}") from None
            examples.append(Example(row[id_idx], feats))
        _check_ids_unique(examples)
        _check_dims(examples)
        return examples


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


def generate_blobs(
    n: int,
    k: int,
    dim: int,
    separation: float,
    sigma: float,
    seed: int,
) -> LabeledDataset:
    """Generate an isotropic-Gaussian blob dataset.

    Class centers are drawn once from the seed and rescaled so every pair is
    at least `separation` apart. Samples are assigned round-robin across the
    classes (sample i belongs to class i mod k) with noise `sigma`.
    """
    if k < 1:
        raise DatasetError(f"need at least one class, got k={k}")
    if n < k:
        raise DatasetError(f"need n >= k, got n={n}, k={k}")
    if dim < 1:
        raise DatasetError(f"need dim >= 1, got {dim}")
    if sigma <= 0:
        raise DatasetError(f"sigma must be positive, got {sigma}")

    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k, dim))
    if k > 1:
        dists = [
            float(np.linalg.norm(centers[i] - centers[j]))
            for i in range(k)
            for j in range(i + 1, k)
        ]
        min_dist = min(dists)
        if min_dist <= 0:
            raise DatasetError("degenerate center draw; use a different seed")
        if min_dist < separation:
            centers = centers * (separation / min_dist)

    examples = []
    for i in range(n):
        cls = i % k
        feats = centers[cls] + rng.normal(scale=sigma, size=dim)
        examples.append(Example(f"g{i:05d}", tuple(float(v) for v in feats), cls))
    alphabet = tuple(f"c{j}" for j in range(k))
    return LabeledDataset(tuple(examples), alphabet)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def holdout_split(
    ds: LabeledDataset,
    train_fraction: float,
    stratified: bool = False,
    seed: int = 0,
) -> tuple[LabeledDataset, UnlabeledPool]:
    """Split into a train set and an unlabeled pool with withheld truth.

    Train receives floor(train_fraction * n) examples (per-class floors when
    stratified); the remainder becomes the pool, its labels moved into
    hidden_labels. Membership is random per seed, output order follows the
    input order.
    """
    if not ds.examples:
        raise DatasetError("cannot split an empty dataset")
    if not 0 < train_fraction <= 1:
        raise DatasetError(f"train_fraction must be in (0, 1], got {train_fraction}")

    n = len(ds.examples)
    rng = np.random.default_rng(seed)
    if stratified:
        train_idx: list[int] = []
        for cls in range(len(ds.alphabet)):
            members = [i for i, ex in enumerate(ds.examples) if ex.label == cls]
            take = int(np.floor(train_fraction * len(members)))
            order = rng.permutation(len(members))
            train_idx.extend(members[j] for j in order[:take])
    else:
        take = int(np.floor(train_fraction * n))
        order = rng.permutation(n)
        train_idx = list(order[:take])

    train_set = set(train_idx)
    train_examples = tuple(ex for i, ex in enumerate(ds.examples) if i in train_set)
    pool_rows = [ex for i, ex in enumerate(ds.examples) if i not in train_set]
    pool_examples = tuple(
        Example(ex.id, ex.features, None) for ex in pool_rows
    )
    hidden = {ex.id: ex.label for ex in pool_rows}
    return (
        LabeledDataset(train_examples, ds.alphabet),
        UnlabeledPool(pool_examples, hidden, ds.alphabet),
    )


def three_way_split(
    base: LabeledDataset,
    mode: SplitMode = SplitMode.DISJOINT_THIRDS,
    seed: int = 0,
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Split a dataset into the three per-model training views.

    DISJOINT_THIRDS: a seeded shuffle partitioned into parts whose sizes
    differ by at most one and whose disjoint union is `base`.
    BOOTSTRAP: three independent draws of len(base) examples with
    replacement, deduplicated within each part (training-set semantics).
    Parts preserve the base ordering.
    """
    n = len(base.examples)
    if n < 3:
        raise DatasetError(f"need at least 3 examples to split, got {n}")
    rng = np.random.default_rng(seed)
    parts_idx: list[list[int]] = []
    if mode is SplitMode.DISJOINT_THIRDS:
        order = rng.permutation(n)
        sizes = [n // 3 + (1 if r < n % 3 else 0) for r in range(3)]
        at = 0
        for size in sizes:
            parts_idx.append(sorted(int(i) for i in order[at : at + size]))
            at += size
    elif mode is SplitMode.BOOTSTRAP:
        for _ in range(3):
            draws = rng.integers(0, n, size=n)
            parts_idx.append(sorted(set(int(i) for i in draws)))
    else:
        raise DatasetError(f"unknown split mode {mode!r}")

    return tuple(
        LabeledDataset(tuple(base.examples[i] for i in idx), base.alphabet)
        for idx in parts_idx
    )


# ---------------------------------------------------------------------------
# Augmentation bookkeeping
# ---------------------------------------------------------------------------


def apply_augmentation(
    train: LabeledDataset,
    pool: UnlabeledPool,
    selections: Iterable,
) -> tuple[LabeledDataset, UnlabeledPool]:
    """Move selected pool examples into the train set with assigned labels.

    Each selection's example is appended to train (selection order) under the
    selection's assigned label and removed from the pool permanently.
    """
    selections = list(selections)
    if not selections:
        return train, pool

    by_id = {ex.id: ex for ex in pool.examples}
    seen: set[str] = set()
    appended = []
    for sel in selections:
        if sel.id in seen:
            raise DatasetError(f"duplicate selection id {sel.id!r}")
        seen.add(sel.id)
        if sel.id not in by_id:
            raise DatasetError(f"selection id {sel.id!r} not in pool")
        src = by_id[sel.id]
        appended.append(Example(src.id, src.features, sel.assigned_label))

    new_train = LabeledDataset(train.examples + tuple(appended), train.alphabet)
    remaining = tuple(ex for ex in pool.examples if ex.id not in seen)
    hidden = {i: l for i, l in pool.hidden_labels.items() if i not in seen}
    new_pool = UnlabeledPool(remaining, hidden, pool.alphabet)
    return new_train, new_pool
