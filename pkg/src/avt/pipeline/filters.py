"""Trip removal criteria and the fixed first-match evaluation order.

A trip is kept only when no criterion matches; a removed trip carries the
first matching reason.  Thresholds are configurable with defaults of
15 MiB total data, 30 s shortest camera, 0.5 m/s motion floor, 60 s
subsystem mismatch, and 1 MiB / 1000 lines for essential error files.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path

from ..canbus import DecodeTable, decode_trip, parse_raw_can_csv, read_frame_csv
from ..errors import MalformedName
from ..trip import MICROS_PER_SECOND, TripDirectoryLayout, parse_trip_id, validate_layout


class RemovalReason(Enum):
    NONCONSENTING_DRIVER = "NonconsentingDriver"
    REQUESTED_REMOVAL = "RequestedRemoval"
    NO_MOTION = "NoMotion"
    TOO_SMALL = "TooSmall"
    TOO_SHORT = "TooShort"
    MISSING_ESSENTIAL = "MissingEssential"
    OUTSIDE_PARTICIPATION = "OutsideParticipation"
    LARGE_ERROR_FILES = "LargeErrorFiles"
    SUBSYSTEM_MISMATCH = "SubsystemMismatch"


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: RemovalReason | None = None

    @classmethod
    def kept(cls) -> "FilterDecision":
        return cls(keep=True)

    @classmethod
    def removed(cls, reason: RemovalReason) -> "FilterDecision":
        return cls(keep=False, reason=reason)


@dataclass
class FilterThresholds:
    min_total_bytes: int = 15 * 1024 * 1024  # 15 MiB
    min_camera_duration_s: float = 30.0
    min_speed_mps: float = 0.5
    subsystem_mismatch_us: int = 60 * MICROS_PER_SECOND
    max_error_bytes: int = 1024 * 1024
    max_error_lines: int = 1000


@dataclass
class FilterPolicy:
    """Study-administration inputs to filtering."""

    consented_riders: set[int] | None = None  # None: consent not checked
    removal_requests: set[str] = field(default_factory=set)  # trip names
    # rider id -> (first, last) participation dates, inclusive
    participation: dict[int, tuple[date, date]] = field(default_factory=dict)
    decode_table: DecodeTable | None = None
    speed_signal: str = "speed"
    thresholds: FilterThresholds = field(default_factory=FilterThresholds)


def _total_data_bytes(layout: TripDirectoryLayout) -> int:
    total = 0
    for path in layout.root.rglob("*"):
        if path.is_file() and ".backup" not in path.parts:
            total += path.stat().st_size
    return total


def _camera_durations_s(layout: TripDirectoryLayout) -> list[float] | None:
    durations = []
    for cam in layout.cameras:
        path = layout.camera_csv(cam)
        if not path.exists():
            return None
        rows = read_frame_csv(path)
        if not rows:
            return None
        durations.append((rows[-1][1] - rows[0][1]) / MICROS_PER_SECOND)
    return durations or None


def _max_speed(layout: TripDirectoryLayout, policy: FilterPolicy) -> float | None:
    can_path = layout.data_csv("can")
    if not can_path.exists() or policy.decode_table is None:
        return None
    frames, _ = parse_raw_can_csv(can_path)
    timeline = decode_trip(frames, policy.decode_table)
    points = timeline.get(policy.speed_signal)
    if not points:
        return None
    return max(v for _, v in points)


def _subsystem_ends(layout: TripDirectoryLayout) -> dict[str, int] | None:
    """End timestamp per essential subsystem (cameras and CAN)."""
    ends = {}
    for cam in layout.cameras:
        path = layout.camera_csv(cam)
        if not path.exists():
            return None
        rows = read_frame_csv(path)
        if not rows:
            return None
        ends[cam] = rows[-1][1]
    frames, _ = parse_raw_can_csv(layout.data_csv("can"))
    if not frames:
        return None
    ends["can"] = frames[-1].ts
    return ends


def filter_trip(trip_dir: Path, policy: FilterPolicy) -> FilterDecision:
    """Decide whether a cleaned trip stays in the dataset."""
    trip_dir = Path(trip_dir)
    layout = TripDirectoryLayout.discover(trip_dir)
    t = policy.thresholds

    try:
        trip_id = parse_trip_id(trip_dir.name)
    except MalformedName:
        trip_id = None

    # NonconsentingDriver
    if policy.consented_riders is not None:
        if trip_id is None or trip_id.rider_id not in policy.consented_riders:
            return FilterDecision.removed(RemovalReason.NONCONSENTING_DRIVER)

    # RequestedRemoval
    if trip_dir.name in policy.removal_requests:
        return FilterDecision.removed(RemovalReason.REQUESTED_REMOVAL)

    # NoMotion (undecidable without decodable speed -> MissingEssential)
    if policy.decode_table is not None:
        max_speed = _max_speed(layout, policy)
        if max_speed is None:
            return FilterDecision.removed(RemovalReason.MISSING_ESSENTIAL)
        if max_speed < t.min_speed_mps:
            return FilterDecision.removed(RemovalReason.NO_MOTION)

    # TooSmall
    if _total_data_bytes(layout) < t.min_total_bytes:
        return FilterDecision.removed(RemovalReason.TOO_SMALL)

    # TooShort
    durations = _camera_durations_s(layout)
    if durations is None:
        return FilterDecision.removed(RemovalReason.MISSING_ESSENTIAL)
    if min(durations) < t.min_camera_duration_s:
        return FilterDecision.removed(RemovalReason.TOO_SHORT)

    # MissingEssential
    if not validate_layout(layout).valid:
        return FilterDecision.removed(RemovalReason.MISSING_ESSENTIAL)

    # OutsideParticipation
    if trip_id is not None and trip_id.rider_id in policy.participation:
        first, last = policy.participation[trip_id.rider_id]
        if not (first <= trip_id.date <= last):
            return FilterDecision.removed(RemovalReason.OUTSIDE_PARTICIPATION)

    # LargeErrorFiles (essential subsystems only: cameras and CAN)
    error_files = [layout.error_file("can")] + [
        layout.camera_error(cam) for cam in layout.cameras
    ]
    for path in error_files:
        if not path.exists():
            continue
        size = path.stat().st_size
        if size > t.max_error_bytes:
            return FilterDecision.removed(RemovalReason.LARGE_ERROR_FILES)
        if size and len(path.read_text().splitlines()) > t.max_error_lines:
            return FilterDecision.removed(RemovalReason.LARGE_ERROR_FILES)

    # SubsystemMismatch
    ends = _subsystem_ends(layout)
    if ends is None:
        return FilterDecision.removed(RemovalReason.MISSING_ESSENTIAL)
    if max(ends.values()) - min(ends.values()) >= t.subsystem_mismatch_us:
        return FilterDecision.removed(RemovalReason.SUBSYSTEM_MISMATCH)

    return FilterDecision.kept()


def quarantine_trip(trip_dir: Path, quarantine_root: Path) -> Path:
    """Move a removed trip into the quarantine area (never deletes)."""
    trip_dir = Path(trip_dir)
    quarantine_root = Path(quarantine_root)
    quarantine_root.mkdir(parents=True, exist_ok=True)
    dest = quarantine_root / trip_dir.name
    if dest.exists():
        raise FileExistsError(f"quarantine already holds {trip_dir.name}")
    shutil.move(str(trip_dir), str(dest))
    return dest
