"""30 fps master-grid synchronization of camera frames and CAN signals.

The grid spans the overlap of all camera recordings: it starts at the
latest camera start and ends no later than the earliest camera end, with
slot k at t0 + floor(k * 1e6 / 30) microseconds.  Frames are assigned
latest-at-or-before (a slot never shows a future frame); CAN values are
nearest-by-timestamp with ties going to the earlier point.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from pathlib import Path

from ..canbus import (
    DecodeTable,
    SignalTimeline,
    decode_trip,
    parse_raw_can_csv,
    read_frame_csv,
)
from ..errors import EmptyOverlap, NoFrameBefore
from ..trip import MICROS_PER_SECOND, TripDirectoryLayout

SLOT_RATE = 30


def slot_offset(k: int) -> int:
    return (k * MICROS_PER_SECOND) // SLOT_RATE


@dataclass(frozen=True)
class SyncGrid:
    t0: int
    n_slots: int

    def slot_ts(self, k: int) -> int:
        return self.t0 + slot_offset(k)

    def timestamps(self) -> list[int]:
        return [self.slot_ts(k) for k in range(self.n_slots)]


def build_sync_grid(camera_frames: dict[str, list[tuple[int, int]]]) -> SyncGrid:
    """Grid over the common range of all cameras' (frame_id, ts) rows."""
    if not camera_frames or any(not rows for rows in camera_frames.values()):
        raise ValueError("every camera needs at least one frame")
    t0 = max(rows[0][1] for rows in camera_frames.values())
    t_end = min(rows[-1][1] for rows in camera_frames.values())
    if t0 > t_end:
        raise EmptyOverlap(f"latest start {t0} after earliest end {t_end}")
    # count slots with offset <= t_end - t0
    span = t_end - t0
    k = (span * SLOT_RATE) // MICROS_PER_SECOND
    while slot_offset(k + 1) <= span:
        k += 1
    while slot_offset(k) > span:
        k -= 1
    return SyncGrid(t0=t0, n_slots=k + 1)


def assign_frames(grid: SyncGrid, frames: list[tuple[int, int]]) -> list[int]:
    """Per-slot frame ids: for each slot, the frame with greatest ts <= slot ts."""
    if not frames or frames[0][1] > grid.t0:
        raise NoFrameBefore("camera has no frame at or before the grid origin")
    ts_list = [ts for _, ts in frames]
    assigned = []
    for k in range(grid.n_slots):
        i = bisect_right(ts_list, grid.slot_ts(k)) - 1
        assigned.append(frames[i][0])
    return assigned


def sync_can(grid: SyncGrid, timeline: SignalTimeline) -> dict[str, list[float | None]]:
    """Per-slot signal values, nearest timestamp with earlier-on-tie."""
    out: dict[str, list[float | None]] = {}
    for name, points in timeline.items():
        if not points:
            out[name] = [None] * grid.n_slots
            continue
        ts_list = [ts for ts, _ in points]
        values: list[float | None] = []
        for k in range(grid.n_slots):
            target = grid.slot_ts(k)
            i = bisect_left(ts_list, target)
            if i == 0:
                best = 0
            elif i >= len(ts_list):
                best = len(ts_list) - 1
            else:
                before, after = ts_list[i - 1], ts_list[i]
                # tie goes to the earlier point
                best = i - 1 if target - before <= after - target else i
            values.append(points[best][1])
        out[name] = values
    return out


def extract_epochs(
    grid: SyncGrid, values: list[bool], label: str = ""
) -> list[tuple[int, int]]:
    """Maximal inclusive slot ranges where the per-slot value is true."""
    if len(values) != grid.n_slots:
        raise ValueError("values must cover every slot")
    epochs = []
    start = None
    for k, v in enumerate(values):
        if v and start is None:
            start = k
        elif not v and start is not None:
            epochs.append((start, k - 1))
            start = None
    if start is not None:
        epochs.append((start, grid.n_slots - 1))
    return epochs


def synchronize_trip(
    trip_dir: Path, table: DecodeTable, processed_root: Path
) -> Path:
    """Write synced_video.csv and synced_can.csv for a kept trip.

    Output goes to a directory named by the same trip convention under
    ``processed_root``.  Nothing is written when grid construction fails.
    """
    trip_dir = Path(trip_dir)
    layout = TripDirectoryLayout.discover(trip_dir)
    cameras = layout.cameras
    camera_rows = {cam: read_frame_csv(layout.camera_csv(cam)) for cam in cameras}
    grid = build_sync_grid(camera_rows)

    assignments = {cam: assign_frames(grid, camera_rows[cam]) for cam in cameras}
    frames, _ = parse_raw_can_csv(layout.data_csv("can"))
    synced_values = sync_can(grid, decode_trip(frames, table))
    signals = table.signal_names()

    out_dir = Path(processed_root) / trip_dir.name
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "synced_video.csv", "w", newline="") as f:
        f.write("slot,ts_micro," + ",".join(f"{cam}_frame" for cam in cameras) + "\n")
        for k in range(grid.n_slots):
            row = [str(k), str(grid.slot_ts(k))] + [str(assignments[cam][k]) for cam in cameras]
            f.write(",".join(row) + "\n")

    with open(out_dir / "synced_can.csv", "w", newline="") as f:
        f.write("slot,ts_micro," + ",".join(signals) + "\n")
        for k in range(grid.n_slots):
            cells = [
                "" if synced_values[name][k] is None else f"{synced_values[name][k]:g}"
                for name in signals
            ]
            f.write(",".join([str(k), str(grid.slot_ts(k))] + cells) + "\n")

    return out_dir
