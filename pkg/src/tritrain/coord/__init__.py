"""Coordination layer: shared stores, the worker protocol, and its runners."""

from .protocol import (
    CoordFit,
    CoordinationTimeout,
    ProtocolError,
    WorkerData,
    WorkerResult,
    WorkerSpec,
    builtin_coord_fit,
    coord_fit_from_fit_predict,
    make_specs,
    validate_specs,
    worker_protocol,
)
from .runner import RunEvent, run_worker
from .sim import FaultPlan, SimResult, TraceEvent, converged, simulate
from .stores import (
    AGGREGATE_STATUS_KEY,
    Blobstore,
    Datastore,
    DirectoryBlobstore,
    DirectoryDatastore,
    InMemoryBlobstore,
    InMemoryDatastore,
    StatusRecord,
    StoreError,
    training_status_key,
)

__all__ = [
    "AGGREGATE_STATUS_KEY",
    "Blobstore",
    "CoordFit",
    "CoordinationTimeout",
    "Datastore",
    "DirectoryBlobstore",
    "DirectoryDatastore",
    "FaultPlan",
    "InMemoryBlobstore",
    "InMemoryDatastore",
    "ProtocolError",
    "RunEvent",
    "SimResult",
    "StatusRecord",
    "StoreError",
    "TraceEvent",
    "WorkerData",
    "WorkerResult",
    "WorkerSpec",
    "builtin_coord_fit",
    "converged",
    "coord_fit_from_fit_predict",
    "make_specs",
    "run_worker",
    "simulate",
    "training_status_key",
    "validate_specs",
    "worker_protocol",
]
