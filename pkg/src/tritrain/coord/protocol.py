"""Sans-IO protocol for three cooperating training workers.

One worker (the aggregator) additionally merges the round's predictions into
a selection file that every worker applies to its local copy of the data.
The protocol is written as a generator that yields effect objects and
receives their results, so the same logic drives both the deterministic
simulator and the real multi-process runner.

Per iteration i (1-based) each worker:

1. puts `training_status_w<idx>` = ("at iteration: i", i - 1, finished=False),
2. re-splits the shared labeled set with a seed derived from (seed, 7, i)
   and trains on part `split_index`,
3. uploads `w<idx>/iter<i>/model.bin`, `.../predictions.csv` (pool
   predictions) and `.../accuracy.txt` (training accuracy on its own part),
4. puts `training_status_w<idx>` = ("Finished", i, finished=True),
5. aggregator: polls peer statuses, downloads peer predictions, runs the
   selection strategy, uploads `agg/iter<i>/selected.csv`, then puts
   `aggregate_status` = ("Waiting for splits to complete", i, True);
   followers: poll `aggregate_status` and download the selection file,
6. applies the selections to its labeled set and pool.

Statuses are created with finished=True before any round runs ("at
iteration: 0"), so a bare `finished` check can pass on stale state. The
ready predicate therefore also requires `last_iteration == i`; passing
``unsafe_status_check=True`` drops that requirement on the aggregator's
peer poll to reproduce the premature-aggregation hazard (a
``premature_aggregation`` note is emitted whenever the unsafe predicate
fires early).

`model.bin` is write-only under this protocol; builtin learners store a
float64 `.npy` array of shape (classes, dim + 1) holding [weights | bias].
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Callable, Generator, Sequence

import numpy as np

from ..dataset import (
    Example,
    LabeledDataset,
    SplitMode,
    UnlabeledPool,
    apply_augmentation,
    three_way_split,
)
from ..experiment import FitPredict, derive_seed
from ..learner import (
    Model,
    PredictionSet,
    TrainConfig,
    fit_softmax,
    predict,
    predictions_from_bytes,
    predictions_to_bytes,
)
from ..strategy import (
    Selection,
    StrategyKind,
    select,
    selections_from_bytes,
    selections_to_bytes,
)
from .stores import AGGREGATE_STATUS_KEY, StatusRecord, training_status_key

WAITING_TEXT = "Waiting for splits to complete"
AGGREGATING_TEXT = "Aggregating"


class ProtocolError(RuntimeError):
    """Raised when the protocol observes an impossible store state."""


class CoordinationTimeout(ProtocolError):
    """Raised when a poll loop exceeds the worker's wait budget."""


# ---------------------------------------------------------------------------
# Effects


@dataclass(frozen=True)
class PutStatus:
    key: str
    record: StatusRecord


@dataclass(frozen=True)
class GetStatus:
    key: str


@dataclass(frozen=True)
class Upload:
    name: str
    data: bytes


@dataclass(frozen=True)
class Download:
    name: str


@dataclass(frozen=True)
class Sleep:
    seconds: float


@dataclass(frozen=True)
class Note:
    """Pure trace marker; interpreters record it and send back None."""

    kind: str
    detail: dict = field(default_factory=dict)


Effect = PutStatus | GetStatus | Upload | Download | Sleep | Note


def model_blob(worker: int, iteration: int) -> str:
    return f"w{worker}/iter{iteration}/model.bin"


def predictions_blob(worker: int, iteration: int) -> str:
    return f"w{worker}/iter{iteration}/predictions.csv"


def accuracy_blob(worker: int, iteration: int) -> str:
    return f"w{worker}/iter{iteration}/accuracy.txt"


def selected_blob(iteration: int) -> str:
    return f"agg/iter{iteration}/selected.csv"


# ---------------------------------------------------------------------------
# Worker description


@dataclass(frozen=True)
class WorkerSpec:
    """Static description of one worker's role in a run."""

    index: int
    is_aggregator: bool
    strategy: StrategyKind = StrategyKind.ANY_TWO_GROUND_TRUTH
    iterations: int = 3
    split_mode: SplitMode = SplitMode.DISJOINT_THIRDS
    split_index: int | None = None
    poll_interval: float = 1.0
    timeout: float = 600.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.index not in (0, 1, 2):
            raise ValueError(f"worker index must be 0, 1 or 2, got {self.index}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.poll_interval <= 0 or self.timeout <= 0:
            raise ValueError("poll_interval and timeout must be positive")
        if self.split_index is not None and self.split_index not in (0, 1, 2):
            raise ValueError("split_index must be 0, 1 or 2")

    @property
    def part(self) -> int:
        return self.index if self.split_index is None else self.split_index


def make_specs(
    *,
    strategy: StrategyKind = StrategyKind.ANY_TWO_GROUND_TRUTH,
    iterations: int = 3,
    split_mode: SplitMode = SplitMode.DISJOINT_THIRDS,
    poll_interval: float = 1.0,
    timeout: float = 600.0,
    seed: int = 0,
    aggregator: int = 0,
) -> tuple[WorkerSpec, WorkerSpec, WorkerSpec]:
    """Three matching specs with worker `aggregator` doing the merging."""

    return tuple(
        WorkerSpec(
            index=i,
            is_aggregator=(i == aggregator),
            strategy=strategy,
            iterations=iterations,
            split_mode=split_mode,
            poll_interval=poll_interval,
            timeout=timeout,
            seed=seed,
        )
        for i in range(3)
    )


def validate_specs(specs: Sequence[WorkerSpec]) -> None:
    """Reject spec sets that could not converge to one shared dataset."""

    if len(specs) != 3 or sorted(s.index for s in specs) != [0, 1, 2]:
        raise ValueError("exactly three workers with indices 0, 1, 2 required")
    if sum(s.is_aggregator for s in specs) != 1:
        raise ValueError("exactly one worker must be the aggregator")
    if len({s.part for s in specs}) != 3:
        raise ValueError("workers must train on three distinct parts")
    shared = {(s.strategy, s.iterations, s.split_mode, s.seed) for s in specs}
    if len(shared) != 1:
        raise ValueError("strategy, iterations, split_mode and seed must match")


@dataclass(frozen=True)
class WorkerData:
    """Initial local state; identical across the three workers."""

    train: LabeledDataset
    pool: UnlabeledPool


@dataclass(frozen=True)
class WorkerResult:
    train: LabeledDataset
    pool: UnlabeledPool
    train_accuracies: tuple[float, ...]
    selected_counts: tuple[int, ...]


# A coordination learner returns the model blob payload alongside the
# predictions, so builtin models can be archived without a second fit.
CoordFit = Callable[
    [LabeledDataset, Sequence[Example], str, int], tuple[bytes, PredictionSet]
]


def _pack_model(model: Model) -> bytes:
    packed = np.concatenate([model.weights, model.bias[:, None]], axis=1)
    buf = io.BytesIO()
    np.save(buf, packed)
    return buf.getvalue()


def builtin_coord_fit(train_cfg: TrainConfig) -> CoordFit:
    """Softmax-regression learner that archives its fitted parameters."""

    def fit(
        train: LabeledDataset, targets: Sequence[Example], tag: str, seed: int
    ) -> tuple[bytes, PredictionSet]:
        model = fit_softmax(train, replace(train_cfg, seed=seed))
        return _pack_model(model), predict(model, targets, tag=tag)

    return fit


def coord_fit_from_fit_predict(fit_predict: FitPredict) -> CoordFit:
    """Adapt a plain fit-predict boundary; external learners never hand
    back parameters, so the archived model blob is a short text stub."""

    def fit(
        train: LabeledDataset, targets: Sequence[Example], tag: str, seed: int
    ) -> tuple[bytes, PredictionSet]:
        preds = fit_predict(train, targets, tag, seed)
        stub = f"external model: tag={tag} seed={seed} train_size={len(train)}\n"
        return stub.encode("ascii"), preds

    return fit


# ---------------------------------------------------------------------------
# The protocol generator


def worker_protocol(
    spec: WorkerSpec,
    data: WorkerData,
    coord_fit: CoordFit,
    *,
    unsafe_status_check: bool = False,
) -> Generator[Effect, object, WorkerResult]:
    """Drive one worker through all iterations; returns its final state."""

    labeled = data.train
    pool = data.pool
    my_key = training_status_key(spec.index)
    accuracies: list[float] = []
    counts: list[int] = []

    # Initial markers; note finished=True before any work has happened.
    yield PutStatus(my_key, StatusRecord("at iteration: 0", 0, True))
    if spec.is_aggregator:
        yield PutStatus(AGGREGATE_STATUS_KEY, StatusRecord(WAITING_TEXT, 0, True))

    for i in range(1, spec.iterations + 1):
        yield PutStatus(my_key, StatusRecord(f"at iteration: {i}", i - 1, False))

        parts = three_way_split(labeled, spec.split_mode, derive_seed(spec.seed, 7, i))
        part = parts[spec.part]
        model_bytes, pool_preds, train_acc = _train_round(spec, part, pool, i, coord_fit)
        accuracies.append(train_acc)

        yield Upload(model_blob(spec.index, i), model_bytes)
        yield Upload(
            predictions_blob(spec.index, i),
            predictions_to_bytes(pool_preds, labeled.alphabet),
        )
        yield Upload(accuracy_blob(spec.index, i), f"{train_acc!r}\n".encode("ascii"))
        yield PutStatus(my_key, StatusRecord("Finished", i, True))

        if spec.is_aggregator:
            selections = yield from _aggregate(
                spec, i, labeled.alphabet, pool, pool_preds, unsafe_status_check
            )
        else:
            selections = yield from _follow(spec, i, labeled.alphabet)

        labeled, pool = apply_augmentation(labeled, pool, selections)
        counts.append(len(selections))
        yield Note(
            "augmented",
            {"iteration": i, "selected": len(selections), "train_size": len(labeled)},
        )

    return WorkerResult(labeled, pool, tuple(accuracies), tuple(counts))


def _train_round(
    spec: WorkerSpec,
    part: LabeledDataset,
    pool: UnlabeledPool,
    iteration: int,
    coord_fit: CoordFit,
) -> tuple[bytes, PredictionSet, float]:
    """Fit on `part`, predict the pool, measure accuracy on the part."""

    targets: list[Example] = list(pool.examples) + [
        Example(id=ex.id, features=ex.features) for ex in part.examples
    ]
    tag = f"w{spec.index}/iter{iteration}"
    seed = derive_seed(spec.seed, 6, spec.index, iteration)
    model_bytes, preds = coord_fit(part, targets, tag, seed)

    pool_entries = {ex.id: preds.entries[ex.id] for ex in pool.examples}
    pool_preds = PredictionSet(model_tag=tag, entries=pool_entries)

    hits = sum(1 for ex in part.examples if preds.entries[ex.id][0] == ex.label)
    train_acc = hits / len(part.examples)
    return model_bytes, pool_preds, train_acc


def _ready(record: StatusRecord | None, iteration: int, *, unsafe: bool) -> bool:
    if record is None or not record.finished:
        return False
    return unsafe or record.last_iteration == iteration


def _aggregate(
    spec: WorkerSpec,
    iteration: int,
    alphabet: tuple[str, ...],
    pool: UnlabeledPool,
    own_preds: PredictionSet,
    unsafe: bool,
) -> Generator[Effect, object, list[Selection]]:
    """Wait for peers, merge the three prediction sets, publish selections."""

    peers = [w for w in (0, 1, 2) if w != spec.index]
    waited = 0.0
    while True:
        records: list[StatusRecord | None] = []
        for w in peers:
            records.append((yield GetStatus(training_status_key(w))))  # type: ignore[arg-type]
        if all(_ready(r, iteration, unsafe=unsafe) for r in records):
            stale = [
                (w, r.last_iteration)
                for w, r in zip(peers, records)
                if r is not None and r.last_iteration != iteration
            ]
            if stale:
                yield Note(
                    "premature_aggregation",
                    {"iteration": iteration, "stale_peers": stale},
                )
            break
        if waited >= spec.timeout:
            raise CoordinationTimeout(
                f"worker {spec.index} timed out waiting for peer statuses "
                f"at iteration {iteration}"
            )
        yield Sleep(spec.poll_interval)
        waited += spec.poll_interval

    yield PutStatus(
        AGGREGATE_STATUS_KEY, StatusRecord(AGGREGATING_TEXT, iteration - 1, False)
    )

    by_worker: dict[int, PredictionSet] = {spec.index: own_preds}
    for w in peers:
        blob = yield Download(predictions_blob(w, iteration))
        if blob is None:
            raise ProtocolError(
                f"predictions blob for worker {w} iteration {iteration} is missing "
                "despite a Finished status"
            )
        by_worker[w] = predictions_from_bytes(bytes(blob), alphabet, tag=f"w{w}")  # type: ignore[arg-type]

    p0, p1, p2 = (by_worker[w] for w in sorted(by_worker))
    selections = select(spec.strategy, p0, p1, p2, pool)
    yield Upload(selected_blob(iteration), selections_to_bytes(selections, alphabet))
    yield PutStatus(AGGREGATE_STATUS_KEY, StatusRecord(WAITING_TEXT, iteration, True))
    return selections


def _follow(
    spec: WorkerSpec,
    iteration: int,
    alphabet: tuple[str, ...],
) -> Generator[Effect, object, list[Selection]]:
    """Wait for this iteration's aggregation, then apply its output."""

    waited = 0.0
    while True:
        record = yield GetStatus(AGGREGATE_STATUS_KEY)
        # Followers always require last_iteration to match: the aggregate
        # status starts life finished=True at iteration 0.
        if _ready(record, iteration, unsafe=False):  # type: ignore[arg-type]
            break
        if waited >= spec.timeout:
            raise CoordinationTimeout(
                f"worker {spec.index} timed out waiting for aggregation "
                f"at iteration {iteration}"
            )
        yield Sleep(spec.poll_interval)
        waited += spec.poll_interval

    blob = yield Download(selected_blob(iteration))
    if blob is None:
        raise ProtocolError(
            f"selection blob for iteration {iteration} is missing despite a "
            "Finished aggregate status"
        )
    return selections_from_bytes(bytes(blob), alphabet)  # type: ignore[arg-type]
