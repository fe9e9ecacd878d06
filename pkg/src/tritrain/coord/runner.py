"""Wall-clock interpreter for the worker protocol.

Drives one protocol generator against real store backends (normally the
directory-backed ones, shared between OS processes through a common
directory). Sleeps block the calling thread; timeouts surface as
`CoordinationTimeout` for the caller to map onto its own error handling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .protocol import (
    CoordFit,
    Download,
    Effect,
    GetStatus,
    Note,
    PutStatus,
    Sleep,
    Upload,
    WorkerData,
    WorkerResult,
    WorkerSpec,
    worker_protocol,
)
from .stores import Blobstore, Datastore


@dataclass(frozen=True)
class RunEvent:
    """Wall-clock trace entry; timestamps come from time.monotonic()."""

    time: float
    kind: str
    detail: Mapping[str, object] = field(default_factory=dict)


def run_worker(
    spec: WorkerSpec,
    data: WorkerData,
    coord_fit: CoordFit,
    datastore: Datastore,
    blobstore: Blobstore,
    *,
    unsafe_status_check: bool = False,
    sleep_fn: Callable[[float], None] = time.sleep,
    clock_fn: Callable[[], float] = time.monotonic,
) -> tuple[WorkerResult, list[RunEvent]]:
    """Run one worker to completion against the given stores.

    Returns its final state plus the observed effect trace. Protocol errors
    (including `CoordinationTimeout`) propagate to the caller.
    """

    gen = worker_protocol(spec, data, coord_fit, unsafe_status_check=unsafe_status_check)
    events: list[RunEvent] = []

    def emit(kind: str, detail: Mapping[str, object]) -> None:
        events.append(RunEvent(clock_fn(), kind, dict(detail)))

    value: object = None
    while True:
        try:
            effect: Effect = gen.send(value)
        except StopIteration as stop:
            result: WorkerResult = stop.value
            emit("worker_done", {
                "train_size": len(result.train),
                "pool_size": len(result.pool.examples),
            })
            return result, events

        value = None
        if isinstance(effect, PutStatus):
            datastore.put(effect.key, effect.record)
            emit("put_status", {"key": effect.key, "status": effect.record.status})
        elif isinstance(effect, GetStatus):
            value = datastore.get(effect.key)
            emit("get_status", {"key": effect.key, "found": value is not None})
        elif isinstance(effect, Upload):
            blobstore.upload(effect.name, effect.data)
            emit("upload", {"name": effect.name, "size": len(effect.data)})
        elif isinstance(effect, Download):
            value = blobstore.download(effect.name)
            emit("download", {"name": effect.name, "found": value is not None})
        elif isinstance(effect, Sleep):
            emit("sleep", {"seconds": effect.seconds})
            sleep_fn(effect.seconds)
        elif isinstance(effect, Note):
            emit(effect.kind, effect.detail)
        else:  # pragma: no cover - the effect union is closed
            raise TypeError(f"unknown effect {effect!r}")
