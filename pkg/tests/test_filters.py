import json
from datetime import date
from pathlib import Path

import pytest

from avt.canbus import CanFrame, pack_signal, serialize_can_csv
from avt.pipeline import (
    FilterDecision,
    FilterPolicy,
    FilterThresholds,
    RemovalReason,
    filter_trip,
    quarantine_trip,
)
from avt.recorder import write_frame_container
from avt.trip import DacmanConfig, TripSpecs

TRIP_NAME = "20_20160726_1469546998634990"
START = 1_469_546_998_634_990
CAMERAS = ("face", "dash", "front")
SIZE_FLOOR = 15 * 1024 * 1024


def total_bytes(trip_dir: Path) -> int:
    return sum(
        p.stat().st_size
        for p in trip_dir.rglob("*")
        if p.is_file() and ".backup" not in p.parts
    )


def build_trip(
    root: Path,
    decode_table,
    name: str = TRIP_NAME,
    duration_s: float = 60.0,
    speed_mps: float = 15.0,
    can_end_offset_us: int = 0,
    pad_to_bytes: int | None = SIZE_FLOOR,
) -> Path:
    """A minimal filterable trip with exactly controllable size and durations."""
    trip_dir = root / name
    trip_dir.mkdir(parents=True)

    DacmanConfig(
        rider_id=int(name.split("_")[0]),
        subject_id=7,
        vehicle_id=3,
        study_id=1,
        cameras=[(cam, i) for i, cam in enumerate(CAMERAS)],
        lighthouse_interval_s=60.0,
    ).save(trip_dir / "trip_dacman.json")

    frame_ts = [START + round(i * 1_000_000 / 30) for i in range(int(duration_s * 30) + 1)]
    for cam in CAMERAS:
        cam_dir = trip_dir / cam
        cam_dir.mkdir()
        write_frame_container(cam_dir / f"{cam}.h264", [b"\x00" * 64] * len(frame_ts))
        with open(cam_dir / f"{cam}.csv", "w") as f:
            f.write("frame,ts_micro\n")
            for i, ts in enumerate(frame_ts):
                f.write(f"{i},{ts}\n")

    spec = decode_table.spec("speed")
    end = frame_ts[-1] + can_end_offset_us
    can_ts = list(range(START, end + 1, 20_000))
    if can_ts[-1] != end:
        can_ts.append(end)
    frames = [
        CanFrame(ts, spec.arbitration_id, 8, bytes(pack_signal(spec, speed_mps)))
        for ts in can_ts
    ]
    serialize_can_csv(frames, trip_dir / "data_can.csv")

    subsystems = {cam: (frame_ts[0], frame_ts[-1]) for cam in CAMERAS}
    subsystems["can"] = (can_ts[0], can_ts[-1])
    TripSpecs(subsystems).save(trip_dir / "trip_specs.json")

    if pad_to_bytes is not None:
        deficit = pad_to_bytes - total_bytes(trip_dir)
        assert deficit >= 0, "trip already larger than the requested size"
        (trip_dir / "audio.raw").write_bytes(b"\x00" * deficit)
        assert total_bytes(trip_dir) == pad_to_bytes
    return trip_dir


@pytest.fixture
def policy(decode_table):
    return FilterPolicy(decode_table=decode_table)


class TestKeep:
    def test_healthy_trip_is_kept(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table)
        assert filter_trip(trip, policy) == FilterDecision.kept()


class TestSizeBoundary:
    def test_exactly_at_floor_kept(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, pad_to_bytes=SIZE_FLOOR)
        assert filter_trip(trip, policy).keep

    def test_one_byte_under_floor_removed(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, pad_to_bytes=SIZE_FLOOR - 1)
        decision = filter_trip(trip, policy)
        assert decision.reason is RemovalReason.TOO_SMALL

    def test_backup_bytes_do_not_count(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, pad_to_bytes=SIZE_FLOOR - 1)
        backup = trip / ".backup"
        backup.mkdir()
        (backup / "big.bin").write_bytes(b"\x00" * 1024)
        assert filter_trip(trip, policy).reason is RemovalReason.TOO_SMALL


class TestDurationBoundary:
    def test_exactly_30s_kept(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, duration_s=30.0)
        assert filter_trip(trip, policy).keep

    def test_just_under_30s_removed(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, duration_s=29.9)
        assert filter_trip(trip, policy).reason is RemovalReason.TOO_SHORT

    def test_shortest_camera_governs(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table)
        # shorten one camera below the floor while the others stay long
        csv = trip / "dash" / "dash.csv"
        lines = csv.read_text().splitlines()
        csv.write_text("\n".join(lines[: 1 + 30 * 29]) + "\n")
        deficit = SIZE_FLOOR - total_bytes(trip)
        with open(trip / "audio.raw", "ab") as f:
            f.write(b"\x00" * deficit)
        assert filter_trip(trip, policy).reason is RemovalReason.TOO_SHORT


class TestMotion:
    def test_parked_trip_removed(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, speed_mps=0.0)
        assert filter_trip(trip, policy).reason is RemovalReason.NO_MOTION

    def test_just_below_half_meter_per_second(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, speed_mps=0.49)
        assert filter_trip(trip, policy).reason is RemovalReason.NO_MOTION

    def test_at_half_meter_per_second_kept(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, speed_mps=0.5)
        assert filter_trip(trip, policy).keep

    def test_undecidable_speed_is_missing_essential(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table)
        (trip / "data_can.csv").write_text("ts_micro,arbitration_id,data_length,packet_data\n")
        assert filter_trip(trip, policy).reason is RemovalReason.MISSING_ESSENTIAL


class TestAdministrative:
    def test_nonconsenting_rider_removed(self, tmp_path, decode_table):
        policy = FilterPolicy(consented_riders={21, 22}, decode_table=decode_table)
        trip = build_trip(tmp_path, decode_table)
        assert filter_trip(trip, policy).reason is RemovalReason.NONCONSENTING_DRIVER

    def test_consenting_rider_kept(self, tmp_path, decode_table):
        policy = FilterPolicy(consented_riders={20}, decode_table=decode_table)
        trip = build_trip(tmp_path, decode_table)
        assert filter_trip(trip, policy).keep

    def test_requested_removal(self, tmp_path, decode_table):
        policy = FilterPolicy(removal_requests={TRIP_NAME}, decode_table=decode_table)
        trip = build_trip(tmp_path, decode_table)
        assert filter_trip(trip, policy).reason is RemovalReason.REQUESTED_REMOVAL

    def test_outside_participation_window(self, tmp_path, decode_table):
        policy = FilterPolicy(
            participation={20: (date(2016, 8, 1), date(2016, 9, 1))},
            decode_table=decode_table,
        )
        trip = build_trip(tmp_path, decode_table)  # trip date is 2016-07-26
        assert filter_trip(trip, policy).reason is RemovalReason.OUTSIDE_PARTICIPATION

    def test_inside_participation_window_kept(self, tmp_path, decode_table):
        policy = FilterPolicy(
            participation={20: (date(2016, 7, 26), date(2016, 9, 1))},
            decode_table=decode_table,
        )
        trip = build_trip(tmp_path, decode_table)
        assert filter_trip(trip, policy).keep


class TestErrorFiles:
    def test_large_essential_error_file(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, pad_to_bytes=None)
        (trip / "face" / "face.error").write_bytes(b"e" * (1024 * 1024 + 1))
        deficit = SIZE_FLOOR - total_bytes(trip)
        (trip / "audio.raw").write_bytes(b"\x00" * deficit)
        assert filter_trip(trip, policy).reason is RemovalReason.LARGE_ERROR_FILES

    def test_many_lines_essential_error_file(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, pad_to_bytes=None)
        (trip / "can.error").write_text("bad frame\n" * 1001)
        deficit = SIZE_FLOOR - total_bytes(trip)
        (trip / "audio.raw").write_bytes(b"\x00" * deficit)
        assert filter_trip(trip, policy).reason is RemovalReason.LARGE_ERROR_FILES

    def test_small_error_file_tolerated(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, pad_to_bytes=None)
        (trip / "face" / "face.error").write_text("transient glitch\n" * 10)
        deficit = SIZE_FLOOR - total_bytes(trip)
        (trip / "audio.raw").write_bytes(b"\x00" * deficit)
        assert filter_trip(trip, policy).keep

    def test_nonessential_error_file_ignored(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, pad_to_bytes=None)
        (trip / "gps.error").write_bytes(b"e" * (2 * 1024 * 1024))
        deficit = SIZE_FLOOR - total_bytes(trip)
        if deficit > 0:
            (trip / "audio.raw").write_bytes(b"\x00" * deficit)
        assert filter_trip(trip, policy).keep


class TestSubsystemMismatch:
    def test_exactly_60s_gap_removed(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, can_end_offset_us=60_000_000)
        assert filter_trip(trip, policy).reason is RemovalReason.SUBSYSTEM_MISMATCH

    def test_one_microsecond_under_kept(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, can_end_offset_us=59_999_999)
        assert filter_trip(trip, policy).keep


class TestEvaluationOrder:
    def test_first_match_wins(self, tmp_path, decode_table):
        # a parked, undersized trip with a removal request reports the
        # earliest criterion in the fixed order
        policy = FilterPolicy(removal_requests={TRIP_NAME}, decode_table=decode_table)
        trip = build_trip(tmp_path, decode_table, speed_mps=0.0, pad_to_bytes=None)
        assert filter_trip(trip, policy).reason is RemovalReason.REQUESTED_REMOVAL

    def test_motion_checked_before_size(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, speed_mps=0.0, pad_to_bytes=None)
        assert filter_trip(trip, policy).reason is RemovalReason.NO_MOTION


class TestQuarantine:
    def test_removed_trip_is_moved_not_deleted(self, tmp_path, decode_table, policy):
        trip = build_trip(tmp_path, decode_table, speed_mps=0.0)
        before = sorted(p.relative_to(trip) for p in trip.rglob("*"))
        dest = quarantine_trip(trip, tmp_path / "quarantine")
        assert not trip.exists()
        assert dest == tmp_path / "quarantine" / TRIP_NAME
        assert sorted(p.relative_to(dest) for p in dest.rglob("*")) == before

    def test_collision_refused(self, tmp_path, decode_table):
        trip = build_trip(tmp_path / "a", decode_table, pad_to_bytes=None)
        other = build_trip(tmp_path / "b", decode_table, pad_to_bytes=None)
        quarantine_trip(trip, tmp_path / "quarantine")
        with pytest.raises(FileExistsError):
            quarantine_trip(other, tmp_path / "quarantine")
