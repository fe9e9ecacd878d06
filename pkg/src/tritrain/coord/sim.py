"""Deterministic cooperative simulator for the three-worker protocol.

All three protocol generators run in one process against shared in-memory
stores. A virtual clock starts at zero and only advances when every live
worker is sleeping; among runnable workers the next step is picked by a
seeded generator, so a (scheduler_seed, specs, data) triple always produces
the same trace, byte for byte. Sleeps cost no wall time, which makes
sweeping hundreds of interleavings cheap.

A `FaultPlan` kills one worker immediately before a chosen upload, leaving
its previous store writes intact — the crash happens between effects, never
inside one, mirroring the atomicity of the directory backends.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .protocol import (
    CoordFit,
    CoordinationTimeout,
    Download,
    GetStatus,
    Note,
    ProtocolError,
    PutStatus,
    Sleep,
    Upload,
    WorkerData,
    WorkerResult,
    WorkerSpec,
    predictions_blob,
    selected_blob,
    validate_specs,
    worker_protocol,
)
from .stores import InMemoryBlobstore, InMemoryDatastore

KILL_BEFORE_PREDICTIONS_UPLOAD = "predictions_upload"
KILL_BEFORE_SELECTED_UPLOAD = "selected_upload"


@dataclass(frozen=True)
class FaultPlan:
    """Kill `worker` right before one of its uploads in `iteration`."""

    worker: int
    iteration: int = 1
    point: str = KILL_BEFORE_SELECTED_UPLOAD

    def __post_init__(self) -> None:
        if self.point not in (KILL_BEFORE_PREDICTIONS_UPLOAD, KILL_BEFORE_SELECTED_UPLOAD):
            raise ValueError(f"unknown fault point {self.point!r}")
        if self.iteration < 1:
            raise ValueError("fault iteration must be >= 1")

    def matches(self, worker: int, effect: object) -> bool:
        if worker != self.worker or not isinstance(effect, Upload):
            return False
        if self.point == KILL_BEFORE_PREDICTIONS_UPLOAD:
            return effect.name == predictions_blob(self.worker, self.iteration)
        return effect.name == selected_blob(self.iteration)


@dataclass(frozen=True)
class TraceEvent:
    time: float
    worker: int
    kind: str
    detail: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class SimResult:
    trace: tuple[TraceEvent, ...]
    results: dict[int, WorkerResult]
    failures: dict[int, str]
    flags: frozenset[str]
    clock: float
    steps: int
    datastore: InMemoryDatastore
    blobstore: InMemoryBlobstore

    @property
    def ok(self) -> bool:
        return not self.failures and not self.flags

    def events(self, kind: str) -> list[TraceEvent]:
        return [ev for ev in self.trace if ev.kind == kind]

    def aggregation_count(self) -> int:
        prefix_match = [
            ev
            for ev in self.trace
            if ev.kind == "upload" and str(ev.detail.get("name", "")).startswith("agg/")
        ]
        return len(prefix_match)


def simulate(
    specs: Sequence[WorkerSpec],
    data: WorkerData,
    coord_fit: CoordFit,
    scheduler_seed: int,
    *,
    fault_plan: FaultPlan | None = None,
    unsafe_status_check: bool = False,
    max_steps: int = 100_000,
) -> SimResult:
    """Run all three workers to completion under one interleaving."""

    validate_specs(specs)
    datastore = InMemoryDatastore()
    blobstore = InMemoryBlobstore()
    rng = np.random.default_rng(scheduler_seed)

    gens = {
        spec.index: worker_protocol(
            spec, data, coord_fit, unsafe_status_check=unsafe_status_check
        )
        for spec in specs
    }
    pending: dict[int, object] = {i: None for i in gens}
    wake: dict[int, float] = {i: 0.0 for i in gens}
    alive = set(gens)

    trace: list[TraceEvent] = []
    results: dict[int, WorkerResult] = {}
    failures: dict[int, str] = {}
    flags: set[str] = set()
    clock = 0.0
    steps = 0

    def emit(worker: int, kind: str, detail: Mapping[str, object]) -> None:
        trace.append(TraceEvent(clock, worker, kind, dict(detail)))

    while alive:
        runnable = sorted(i for i in alive if wake[i] <= clock)
        if not runnable:
            clock = min(wake[i] for i in alive)
            continue
        steps += 1
        if steps > max_steps:
            flags.add("deadlock")
            for i in sorted(alive):
                failures.setdefault(i, "no progress within the step budget")
            break

        w = runnable[int(rng.integers(len(runnable)))]
        sent, pending[w] = pending[w], None
        try:
            effect = gens[w].send(sent)
        except StopIteration as stop:
            results[w] = stop.value
            alive.discard(w)
            emit(w, "worker_done", {
                "train_size": len(stop.value.train),
                "pool_size": len(stop.value.pool.examples),
            })
            continue
        except CoordinationTimeout as exc:
            failures[w] = str(exc)
            flags.add("timeout")
            alive.discard(w)
            emit(w, "worker_timeout", {"error": str(exc)})
            continue
        except ProtocolError as exc:
            failures[w] = str(exc)
            flags.add("worker_failed")
            alive.discard(w)
            emit(w, "worker_failed", {"error": str(exc)})
            continue

        if fault_plan is not None and fault_plan.matches(w, effect):
            flags.add("fault")
            alive.discard(w)
            gens[w].close()
            emit(w, "worker_killed", {
                "iteration": fault_plan.iteration,
                "point": fault_plan.point,
            })
            continue

        if isinstance(effect, PutStatus):
            datastore.put(effect.key, effect.record)
            emit(w, "put_status", {
                "key": effect.key,
                "status": effect.record.status,
                "last_iteration": effect.record.last_iteration,
                "finished": effect.record.finished,
            })
        elif isinstance(effect, GetStatus):
            record = datastore.get(effect.key)
            pending[w] = record
            emit(w, "get_status", {
                "key": effect.key,
                "found": record is not None,
                "last_iteration": None if record is None else record.last_iteration,
                "finished": None if record is None else record.finished,
            })
        elif isinstance(effect, Upload):
            blobstore.upload(effect.name, effect.data)
            emit(w, "upload", {"name": effect.name, "size": len(effect.data)})
        elif isinstance(effect, Download):
            blob = blobstore.download(effect.name)
            pending[w] = blob
            emit(w, "download", {"name": effect.name, "found": blob is not None})
        elif isinstance(effect, Sleep):
            wake[w] = clock + effect.seconds
            emit(w, "sleep", {"seconds": effect.seconds})
        elif isinstance(effect, Note):
            if effect.kind == "premature_aggregation":
                flags.add("premature_aggregation")
            emit(w, effect.kind, effect.detail)
        else:  # pragma: no cover - the effect union is closed
            raise TypeError(f"unknown effect {effect!r}")

    return SimResult(
        trace=tuple(trace),
        results=results,
        failures=failures,
        flags=frozenset(flags),
        clock=clock,
        steps=steps,
        datastore=datastore,
        blobstore=blobstore,
    )


def converged(result: SimResult) -> bool:
    """True when every worker finished with identical final datasets."""

    if len(result.results) != 3:
        return False
    finals: Iterable[WorkerResult] = result.results.values()
    first = next(iter(finals))
    return all(
        r.train == first.train and r.pool == first.pool
        for r in result.results.values()
    )
