"""Offload-side trip processing: clean, filter, synchronize."""

from .clean import CleanReport, clean_trip
from .filters import (
    FilterDecision,
    FilterPolicy,
    FilterThresholds,
    RemovalReason,
    filter_trip,
    quarantine_trip,
)
from .sync import (
    SyncGrid,
    assign_frames,
    build_sync_grid,
    extract_epochs,
    sync_can,
    synchronize_trip,
)

__all__ = [
    "CleanReport",
    "clean_trip",
    "FilterDecision",
    "FilterPolicy",
    "FilterThresholds",
    "RemovalReason",
    "filter_trip",
    "quarantine_trip",
    "SyncGrid",
    "assign_frames",
    "build_sync_grid",
    "extract_epochs",
    "sync_can",
    "synchronize_trip",
]
