"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from tritrain.dataset import Example, LabeledDataset, UnlabeledPool
from tritrain.learner import PredictionSet


def make_labeled(rows, alphabet=("a", "b", "c")) -> LabeledDataset:
    """rows: list of (id, (features...), label_index)."""

    return LabeledDataset(
        examples=tuple(Example(i, tuple(float(v) for v in f), y) for i, f, y in rows),
        alphabet=tuple(alphabet),
    )


def make_pool(rows, alphabet=("a", "b", "c")) -> UnlabeledPool:
    """rows: list of (id, (features...), hidden_label_index)."""

    return UnlabeledPool(
        examples=tuple(Example(i, tuple(float(v) for v in f)) for i, f, _ in rows),
        hidden_labels={i: y for i, _, y in rows},
        alphabet=tuple(alphabet),
    )


def make_pset(labels: dict[str, int], tag: str = "m", score: float = 1.0) -> PredictionSet:
    return PredictionSet(model_tag=tag, entries={i: (y, score) for i, y in labels.items()})


@pytest.fixture
def small_train() -> LabeledDataset:
    """12 well-separated 2-d points, 4 per class, 3 classes."""

    rows = []
    centers = {0: (0.0, 0.0), 1: (10.0, 0.0), 2: (0.0, 10.0)}
    rng = np.random.default_rng(42)
    n = 0
    for cls, (cx, cy) in centers.items():
        for _ in range(4):
            rows.append((f"t{n:02d}", (cx + rng.normal(), cy + rng.normal()), cls))
            n += 1
    return make_labeled(rows)
