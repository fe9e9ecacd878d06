"""Polling strategies over three prediction sets, plus the random control.

Strategies operate purely in label space: they compare predicted labels,
never features or scores. All outputs follow the pool's example order, so
identical inputs always yield identical selection lists.

Strategy semantics (canonical numbering 1..3):
  1. any2_ground_truth  - any two models agree; assigned label = hidden truth
  2. all3_ground_truth  - all three agree; assigned label = hidden truth
  3. all3_predicted     - all three agree; assigned label = the agreed
                          prediction, even when it is wrong

Unanimous agreement counts as "any two agree" (superset reading): the
alternative exactly-two reading would exclude the strongest samples from
strategy 1 and contradict its larger selection counts.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import UnlabeledPool
from .learner import PredictionSet


class StrategyError(ValueError):
    """Raised when strategy preconditions are violated."""


class StrategyKind(Enum):
    ANY_TWO_GROUND_TRUTH = "any2_ground_truth"
    ALL_THREE_GROUND_TRUTH = "all3_ground_truth"
    ALL_THREE_PREDICTED = "all3_predicted"

    @classmethod
    def parse(cls, text: str) -> "StrategyKind":
        """Accept canonical names or the numeric aliases 1/2/3."""
        aliases = {
            "1": cls.ANY_TWO_GROUND_TRUTH,
            "2": cls.ALL_THREE_GROUND_TRUTH,
            "3": cls.ALL_THREE_PREDICTED,
        }
        key = text.strip().lower()
        if key in aliases:
            return aliases[key]
        for kind in cls:
            if kind.value == key:
                return kind
        raise StrategyError(
            f"unknown strategy {text!r} (expected one of "
            f"{[k.value for k in cls]} or 1/2/3)"
        )


class AgreementKind(Enum):
    NONE = "none"
    PAIR = "pair"
    UNANIMOUS = "unanimous"


@dataclass(frozen=True)
class Agreement:
    kind: AgreementKind
    label: int | None = None  # the agreed label for PAIR / UNANIMOUS


class Provenance(Enum):
    GROUND_TRUTH = "ground_truth"
    PREDICTED = "predicted"


@dataclass(frozen=True)
class Selection:
    """A pool example chosen for augmentation with its assigned label."""

    id: str
    assigned_label: int
    provenance: Provenance


def _require_same_ids(p1: PredictionSet, p2: PredictionSet, p3: PredictionSet) -> None:
    ids1, ids2, ids3 = set(p1.entries), set(p2.entries), set(p3.entries)
    if not (ids1 == ids2 == ids3):
        raise StrategyError("prediction sets cover different id sets")


def agreement_table(
    p1: PredictionSet, p2: PredictionSet, p3: PredictionSet
) -> dict[str, Agreement]:
    """Classify each id by how the three predicted labels agree.

    All three equal -> UNANIMOUS; exactly two equal -> PAIR with the shared
    label; all distinct -> NONE.
    """
    _require_same_ids(p1, p2, p3)
    table: dict[str, Agreement] = {}
    for ex_id in p1.entries:
        labels = [p1.label_of(ex_id), p2.label_of(ex_id), p3.label_of(ex_id)]
        counts = Counter(labels)
        if len(counts) == 1:
            table[ex_id] = Agreement(AgreementKind.UNANIMOUS, labels[0])
        elif len(counts) == 3:
            table[ex_id] = Agreement(AgreementKind.NONE)
        else:
            pairs = [label for label, c in counts.items() if c == 2]
            # three predictions admit at most one agreeing pair
            assert len(pairs) == 1, f"ambiguous pair agreement for {ex_id!r}: {labels}"
            table[ex_id] = Agreement(AgreementKind.PAIR, pairs[0])
    return table


def select(
    strategy: StrategyKind,
    p1: PredictionSet,
    p2: PredictionSet,
    p3: PredictionSet,
    pool: UnlabeledPool,
) -> list[Selection]:
    """Apply a polling strategy to three prediction sets over the pool.

    Output is ordered by pool order. Ground-truth strategies read the pool's
    hidden labels; the predicted-label strategy deliberately keeps the
    unanimous prediction even when it disagrees with the hidden truth.
    """
    pool_ids = set(pool.hidden_labels)
    if set(p1.entries) != pool_ids:
        raise StrategyError("prediction ids do not match the pool")
    table = agreement_table(p1, p2, p3)

    selections: list[Selection] = []
    for ex in pool.examples:
        agreement = table[ex.id]
        if strategy is StrategyKind.ANY_TWO_GROUND_TRUTH:
            if agreement.kind in (AgreementKind.PAIR, AgreementKind.UNANIMOUS):
                selections.append(
                    Selection(ex.id, pool.hidden_labels[ex.id], Provenance.GROUND_TRUTH)
                )
        elif strategy is StrategyKind.ALL_THREE_GROUND_TRUTH:
            if agreement.kind is AgreementKind.UNANIMOUS:
                selections.append(
                    Selection(ex.id, pool.hidden_labels[ex.id], Provenance.GROUND_TRUTH)
                )
        elif strategy is StrategyKind.ALL_THREE_PREDICTED:
            if agreement.kind is AgreementKind.UNANIMOUS:
                selections.append(
                    Selection(ex.id, agreement.label, Provenance.PREDICTED)
                )
        else:
            raise StrategyError(f"unknown strategy {strategy!r}")
    return selections


def random_select(pool: UnlabeledPool, count: int, seed: int) -> list[Selection]:
    """Uniform sample without replacement, labeled with hidden ground truth."""
    if count < 0:
        raise StrategyError(f"count must be non-negative, got {count}")
    if count > len(pool.examples):
        raise StrategyError(
            f"cannot select {count} from a pool of {len(pool.examples)}"
        )
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.permutation(len(pool.examples))[:count])
    return [
        Selection(
            pool.examples[i].id,
            pool.hidden_labels[pool.examples[i].id],
            Provenance.GROUND_TRUTH,
        )
        for i in chosen
    ]


# ---------------------------------------------------------------------------
# Aggregated-results wire format: id,label,provenance (header row, UTF-8)
# ---------------------------------------------------------------------------


def selections_to_bytes(
    selections: Sequence[Selection], alphabet: Sequence[str]
) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["id", "label", "provenance"])
    for sel in selections:
        writer.writerow([sel.id, alphabet[sel.assigned_label], sel.provenance.value])
    return buf.getvalue().encode("utf-8")


def selections_from_bytes(data: bytes, alphabet: Sequence[str]) -> list[Selection]:
    label_to_idx = {name: i for i, name in enumerate(alphabet)}
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise StrategyError("selection file is empty") from None
    if header != ["id", "label", "provenance"]:
        raise StrategyError(f"bad selection header {header!r}")
    out: list[Selection] = []
    for n, row in enumerate(reader):
        if len(row) != 3:
            raise StrategyError(f"selection row {n} has {len(row)} cells")
        ex_id, label, prov = row
        if label not in label_to_idx:
            raise StrategyError(f"unknown label {label!r} in selection row {n}")
        try:
            provenance = Provenance(prov)
        except ValueError:
            raise StrategyError(f"unknown provenance {prov!r} in row {n}") from None
        out.append(Selection(ex_id, label_to_idx[label], provenance))
    return out


def write_selections_csv(
    selections: Sequence[Selection], alphabet: Sequence[str], path: str | Path
) -> None:
    Path(path).write_bytes(selections_to_bytes(selections, alphabet))


def read_selections_csv(path: str | Path, alphabet: Sequence[str]) -> list[Selection]:
    return selections_from_bytes(Path(path).read_bytes(), alphabet)
