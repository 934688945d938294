"""Trip recorder: spools simulated streams into an on-disk trip directory.

One writer per subsystem, all stamping from the same stream clock.  A
failing writer is restarted up to twice; the third failure stops that
subsystem, logs to its .error file, and the trip is still finalized.

This module deliberately exposes no CAN transmit capability of any kind;
the bus is only ever read.
"""

from __future__ import annotations

import errno
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Iterable

from .canbus import CanFrame
from .errors import DiskFull, SinkClosed, SubsystemFailed
from .sim import SimStreams
from .trip import (
    DacmanConfig,
    TripDirectoryLayout,
    TripId,
    TripSpecs,
)

RESTART_BUDGET = 2

# first byte of a frame-container file, distinguishing it from a real
# H264 elementary stream (which never starts with 0xAF)
CONTAINER_MARKER = 0xAF

FRAME_PAYLOAD_BYTES = 4096


def frame_payload(ts: int) -> bytes:
    """Deterministic opaque stand-in for encoded frame bytes."""
    h = hashlib.sha256(str(ts).encode()).digest()
    return (h * ((FRAME_PAYLOAD_BYTES // len(h)) + 1))[:FRAME_PAYLOAD_BYTES]


def write_frame_container(path: Path, payloads: Iterable[bytes]) -> int:
    """Write length-prefixed frames; returns the frame count."""
    count = 0
    with open(path, "wb") as f:
        f.write(bytes([CONTAINER_MARKER]))
        for payload in payloads:
            f.write(struct.pack("<I", len(payload)))
            f.write(payload)
            count += 1
    return count


def read_frame_container(path: Path) -> list[bytes]:
    data = Path(path).read_bytes()
    if not data or data[0] != CONTAINER_MARKER:
        raise ValueError(f"{path}: not a frame container")
    frames = []
    pos = 1
    while pos < len(data):
        if pos + 4 > len(data):
            raise ValueError(f"{path}: truncated length prefix")
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise ValueError(f"{path}: truncated frame")
        frames.append(data[pos : pos + length])
        pos += length
    return frames


def count_container_frames(path: Path) -> int:
    return len(read_frame_container(path))


def record_can_listen_only(
    frames: Iterable[CanFrame | tuple], sink: IO[str], error_sink: IO[str] | None = None
) -> int:
    """Append raw CAN rows to an open CSV sink in arrival order.

    Accepts either CanFrame objects or raw (ts, id, dlc, payload) tuples;
    tuples whose dlc disagrees with the payload length are skipped with a
    line in the error sink.  Returns the row count written.
    """
    if sink.closed:
        raise SinkClosed("CAN sink is closed")
    count = 0
    for item in frames:
        if isinstance(item, CanFrame):
            sink.write(item.to_csv_row() + "\n")
            count += 1
            continue
        ts, arb_id, dlc, payload = item
        if len(payload) != dlc or not 0 <= dlc <= 8:
            if error_sink is not None:
                error_sink.write(f"{ts},malformed frame: dlc {dlc} payload {len(payload)} bytes\n")
            continue
        sink.write(f"{ts},{arb_id:x},{dlc},{payload.hex()}\n")
        count += 1
    return count


@dataclass
class RecorderStatus:
    """Per-subsystem writer outcome after a recording run."""

    states: dict[str, str] = field(default_factory=dict)  # running|done|stopped
    restarts: dict[str, int] = field(default_factory=dict)

    def record_failure(self, kind: str) -> bool:
        """Count one failure; True while a restart is still allowed."""
        n = self.restarts.get(kind, 0) + 1
        self.restarts[kind] = n
        return n <= RESTART_BUDGET


def _truncate(rows: list, stop_at_us: int | None) -> list:
    if stop_at_us is None:
        return rows
    return [r for r in rows if (r if isinstance(r, int) else r[0] if isinstance(r, tuple) else r.ts) <= stop_at_us]


def _write_rows_csv(path: Path, header: str, rows: list[tuple]) -> None:
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(str(v) for v in row) + "\n")


def compute_specs_from_files(layout: TripDirectoryLayout) -> TripSpecs:
    """Re-derive per-subsystem start/end from the rows actually on disk."""
    from .canbus import parse_raw_can_csv, read_frame_csv

    subsystems: dict[str, tuple[int, int]] = {}
    for cam in layout.cameras:
        csv_path = layout.camera_csv(cam)
        if csv_path.exists():
            rows = read_frame_csv(csv_path)
            if rows:
                subsystems[cam] = (rows[0][1], rows[-1][1])
    can_path = layout.data_csv("can")
    if can_path.exists():
        frames, _ = parse_raw_can_csv(can_path)
        if frames:
            subsystems["can"] = (frames[0].ts, frames[-1].ts)
    for sub in ("gps", "imu"):
        path = layout.data_csv(sub)
        if path.exists():
            ts_values = []
            for line in path.read_text().splitlines():
                parts = line.split(",")
                # torn trailing rows must not contribute timestamps
                if len(parts) != 7 or parts[0] == "ts_micro":
                    continue
                try:
                    ts_values.append(int(parts[0]))
                except ValueError:
                    continue
            if ts_values:
                subsystems[sub] = (ts_values[0], ts_values[-1])
    return TripSpecs(subsystems=subsystems)


def finalize_trip(layout: TripDirectoryLayout) -> TripSpecs:
    """Write trip_specs.json from on-disk rows; a no-op when already current."""
    specs = compute_specs_from_files(layout)
    new_text = json.dumps(specs.to_dict(), indent=2) + "\n"
    path = layout.specs_json
    if not path.exists() or path.read_text() != new_text:
        path.write_text(new_text)
    return specs


def run_recorder(
    config: DacmanConfig,
    streams: SimStreams,
    root: Path,
    stop_at_us: int | None = None,
    fault_injector: Callable[[str, int], None] | None = None,
) -> TripDirectoryLayout:
    """Record all streams into a new trip directory under ``root``.

    ``fault_injector(kind, attempt)`` is called before each writer attempt
    and may raise to exercise the restart policy.  ``stop_at_us`` mirrors
    the graceful-shutdown signal: no row later than it is written.
    """
    starts = []
    for frames in streams.camera_frames.values():
        if frames:
            starts.append(frames[0])
    if streams.can_frames:
        starts.append(streams.can_frames[0].ts)
    if streams.gps_rows:
        starts.append(streams.gps_rows[0][0])
    if streams.imu_rows:
        starts.append(streams.imu_rows[0][0])
    if not starts:
        raise ValueError("streams are empty")
    trip_id = TripId.for_start(config.rider_id, min(starts))

    trip_root = Path(root) / trip_id.render()
    trip_root.mkdir(parents=True, exist_ok=False)
    layout = TripDirectoryLayout(root=trip_root, cameras=list(streams.camera_frames))

    status = RecorderStatus()
    diagnostics: list[str] = []

    def run_writer(kind: str, attempt_fn: Callable[[], None], error_path: Path) -> None:
        status.states[kind] = "running"
        while True:
            try:
                if fault_injector is not None:
                    fault_injector(kind, status.restarts.get(kind, 0))
                attempt_fn()
            except OSError as e:
                if e.errno == errno.ENOSPC:
                    raise DiskFull(str(e)) from e
                raise
            except SubsystemFailed:
                raise
            except Exception as e:
                if status.record_failure(kind):
                    diagnostics.append(f"restarting {kind} after error: {e}")
                    continue
                status.states[kind] = "stopped"
                with open(error_path, "a") as ef:
                    ef.write(f"{kind} stopped after {RESTART_BUDGET} restarts: {e}\n")
                diagnostics.append(f"{kind} stopped after restart budget: {e}")
                return
            status.states[kind] = "done"
            return

    config.save(layout.dacman_json)

    for cam, frame_ts in streams.camera_frames.items():
        cam_dir = layout.camera_dir(cam)
        cam_dir.mkdir(exist_ok=True)
        layout.camera_error(cam).touch()
        kept = _truncate(list(frame_ts), stop_at_us)

        def write_camera(cam=cam, kept=kept):
            write_frame_container(layout.camera_container(cam), (frame_payload(t) for t in kept))
            _write_rows_csv(
                layout.camera_csv(cam), "frame,ts_micro", [(i, t) for i, t in enumerate(kept)]
            )

        run_writer(cam, write_camera, layout.camera_error(cam))
        if status.states[cam] == "stopped":
            # leave no partial camera data behind
            for partial in (layout.camera_container(cam), layout.camera_csv(cam)):
                partial.unlink(missing_ok=True)

    layout.error_file("can").touch()
    can_frames = _truncate(list(streams.can_frames), stop_at_us)

    def write_can():
        with open(layout.data_csv("can"), "w", newline="") as sink, open(
            layout.error_file("can"), "a"
        ) as esink:
            sink.write("ts_micro,arbitration_id,data_length,packet_data\n")
            record_can_listen_only(can_frames, sink, esink)

    run_writer("can", write_can, layout.error_file("can"))

    layout.error_file("gps").touch()
    run_writer(
        "gps",
        lambda: _write_rows_csv(
            layout.data_csv("gps"),
            "ts_micro,latitude,longitude,altitude,speed,track,climb",
            _truncate(list(streams.gps_rows), stop_at_us),
        ),
        layout.error_file("gps"),
    )

    layout.error_file("imu").touch()
    run_writer(
        "imu",
        lambda: _write_rows_csv(
            layout.data_csv("imu"),
            "ts_micro,x_accel,y_accel,z_accel,roll,pitch,yaw",
            _truncate(list(streams.imu_rows), stop_at_us),
        ),
        layout.error_file("imu"),
    )

    layout.error_file("audio").touch()
    run_writer("audio", lambda: layout.audio_raw.write_bytes(b""), layout.error_file("audio"))

    # simulated diagnostics, one block per 10 s of trip time
    with open(layout.diagnostics_log, "w") as f:
        span_start, span_end = streams.bus_active
        t = span_start
        i = 0
        while t <= span_end:
            f.write(f"{t},external_temp_c,{21.0 + (i % 5) * 0.1:.1f}\n")
            f.write(f"{t},pmu_temp_c,{38.0 + (i % 7) * 0.2:.1f}\n")
            f.write(f"{t},hdd_temp_c,{33.0 + (i % 3) * 0.3:.1f}\n")
            f.write(f"{t},power_usage_w,{7.2 + (i % 4) * 0.1:.1f}\n")
            f.write(f"{t},free_disk_bytes,{900_000_000_000 - i * 50_000_000}\n")
            t += 10_000_000
            i += 1
        for line in diagnostics:
            f.write(f"{span_end},note,{line}\n")

    # drop cameras that never produced data from the layout before finalizing
    layout.cameras = [c for c in layout.cameras if layout.camera_csv(c).exists()]
    finalize_trip(layout)
    return layout
