"""Status report schema and server-side device key registry."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import AuthenticationFailed, ReplayDetected, UnknownSender
from .crypto import TelemetryEnvelope, open_sealed

REPORT_VERSION = 1


@dataclass
class StatusReport:
    rider_id: int
    seq: int
    sent_ts: int  # epoch microseconds
    trip_name: str | None = None
    trip_start_ts: int | None = None
    elapsed_s: float = 0.0
    lat: float | None = None
    lon: float | None = None
    power_w: float = 0.0
    temp_external: float = 0.0
    temp_pmu: float = 0.0
    temp_hdd: float = 0.0
    free_disk_bytes: int = 0
    capacity_bytes: int = 0

    def __post_init__(self):
        if self.capacity_bytes and self.free_disk_bytes > self.capacity_bytes:
            raise ValueError("free_disk_bytes exceeds disk capacity")

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "rider_id": self.rider_id,
            "seq": self.seq,
            "sent_ts": self.sent_ts,
            "trip": {
                "name": self.trip_name,
                "start_ts_micro": self.trip_start_ts,
                "elapsed_s": self.elapsed_s,
            },
            "gps": {"lat": self.lat, "lon": self.lon},
            "power_w": self.power_w,
            "temperatures_c": {
                "external": self.temp_external,
                "pmu": self.temp_pmu,
                "hdd": self.temp_hdd,
            },
            "free_disk_bytes": self.free_disk_bytes,
            "capacity_bytes": self.capacity_bytes,
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True).encode()

    @classmethod
    def from_dict(cls, d: dict) -> "StatusReport":
        if d.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {d.get('version')}")
        trip = d.get("trip") or {}
        gps = d.get("gps") or {}
        temps = d.get("temperatures_c") or {}
        return cls(
            rider_id=int(d["rider_id"]),
            seq=int(d["seq"]),
            sent_ts=int(d["sent_ts"]),
            trip_name=trip.get("name"),
            trip_start_ts=trip.get("start_ts_micro"),
            elapsed_s=float(trip.get("elapsed_s") or 0.0),
            lat=gps.get("lat"),
            lon=gps.get("lon"),
            power_w=float(d.get("power_w") or 0.0),
            temp_external=float(temps.get("external") or 0.0),
            temp_pmu=float(temps.get("pmu") or 0.0),
            temp_hdd=float(temps.get("hdd") or 0.0),
            free_disk_bytes=int(d.get("free_disk_bytes") or 0),
            capacity_bytes=int(d.get("capacity_bytes") or 0),
        )

    @classmethod
    def from_json_bytes(cls, data: bytes) -> "StatusReport":
        return cls.from_dict(json.loads(data.decode()))


@dataclass
class DeviceRegistry:
    """Maps rider ids to device public keys and tracks per-rider sequence state."""

    server_secret: bytes
    server_public: bytes
    devices: dict[int, bytes] = field(default_factory=dict)  # rider -> public key
    intervals_s: dict[int, float] = field(default_factory=dict)
    last_seq: dict[int, int] = field(default_factory=dict)

    def register(self, rider_id: int, public_key: bytes, interval_s: float = 60.0) -> None:
        self.devices[rider_id] = public_key
        self.intervals_s[rider_id] = interval_s

    def rider_for_key(self, public_key: bytes) -> int | None:
        for rider_id, key in self.devices.items():
            if key == public_key:
                return rider_id
        return None

    def open_envelope(self, env: TelemetryEnvelope) -> tuple[int, StatusReport]:
        """Decrypt and admit one envelope.

        Raises UnknownSender for unregistered keys, AuthenticationFailed on
        tampering, ReplayDetected for non-increasing sequence numbers.
        """
        rider_id = self.rider_for_key(env.sender_public)
        if rider_id is None:
            raise UnknownSender("sender key not registered")
        plaintext = open_sealed(env, self.server_secret)
        try:
            report = StatusReport.from_json_bytes(plaintext)
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            raise AuthenticationFailed(f"undecodable report body: {e}") from e
        if report.rider_id != rider_id:
            raise AuthenticationFailed("report rider does not match sender key")
        if report.seq <= self.last_seq.get(rider_id, -1):
            raise ReplayDetected(f"seq {report.seq} already seen for rider {rider_id}")
        self.last_seq[rider_id] = report.seq
        return rider_id, report

    def save(self, path: Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "server_secret": self.server_secret.hex(),
                    "server_public": self.server_public.hex(),
                    "devices": {str(r): k.hex() for r, k in self.devices.items()},
                    "intervals_s": {str(r): v for r, v in self.intervals_s.items()},
                },
                indent=2,
            )
            + "\n"
        )

    @classmethod
    def load(cls, path: Path) -> "DeviceRegistry":
        d = json.loads(Path(path).read_text())
        return cls(
            server_secret=bytes.fromhex(d["server_secret"]),
            server_public=bytes.fromhex(d["server_public"]),
            devices={int(r): bytes.fromhex(k) for r, k in d.get("devices", {}).items()},
            intervals_s={int(r): float(v) for r, v in d.get("intervals_s", {}).items()},
        )
