"""Trip identity, directory layout and the shared timestamp discipline.

All timestamps anywhere in the package are integer microseconds since the
Unix epoch, UTC.  Trip directories follow the rider_date_timestamp naming
convention and the fixed per-subsystem file set.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

from .errors import DateMismatch, MalformedName, NotADirectory

MICROS_PER_SECOND = 1_000_000

# camera streams and CAN are essential; gps/imu/audio may be dropped
# without invalidating a trip
ESSENTIAL_SUBSYSTEMS = ("can",)
NONESSENTIAL_SUBSYSTEMS = ("gps", "imu", "audio")

CAMERA_NAMES = ("face", "dash", "front", "cluster")

_TRIP_NAME_RE = re.compile(r"^(\d+)_(\d{8})_(\d+)$")


def utc_date_of(ts_micro: int) -> date:
    """UTC calendar date containing the given epoch-microsecond instant."""
    return datetime.fromtimestamp(ts_micro / MICROS_PER_SECOND, tz=timezone.utc).date()


@dataclass(frozen=True)
class TripId:
    rider_id: int
    date: date
    start_ts: int  # epoch microseconds

    def render(self) -> str:
        return f"{self.rider_id}_{self.date:%Y%m%d}_{self.start_ts}"

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def for_start(cls, rider_id: int, start_ts: int) -> "TripId":
        return cls(rider_id=rider_id, date=utc_date_of(start_ts), start_ts=start_ts)


def parse_trip_id(name: str) -> TripId:
    """Parse a trip directory name of the form ``<rider>_<YYYYMMDD>_<ts_micro>``.

    Raises MalformedName for structural problems and DateMismatch when the
    date segment disagrees with the UTC date of the timestamp segment.
    """
    m = _TRIP_NAME_RE.match(name)
    if not m:
        raise MalformedName(f"not a trip name: {name!r}")
    rider_id = int(m.group(1))
    if rider_id <= 0:
        raise MalformedName(f"rider id must be positive: {name!r}")
    try:
        named_date = datetime.strptime(m.group(2), "%Y%m%d").date()
    except ValueError:
        raise MalformedName(f"bad date segment in {name!r}") from None
    start_ts = int(m.group(3))
    if utc_date_of(start_ts) != named_date:
        raise DateMismatch(
            f"{name!r}: date segment {named_date} but timestamp is on {utc_date_of(start_ts)} UTC"
        )
    return TripId(rider_id=rider_id, date=named_date, start_ts=start_ts)


@dataclass
class DacmanConfig:
    """Contents of trip_dacman.json.

    Unknown keys found on load are preserved in ``extras`` and written back
    verbatim, so configs survive round trips through newer/older tooling.
    """

    rider_id: int
    subject_id: int
    vehicle_id: int
    study_id: int
    cameras: list[tuple[str, int]] = field(default_factory=list)
    lighthouse_interval_s: float = 60.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [name for name, _ in self.cameras]
        if len(names) != len(set(names)):
            raise ValueError("camera names must be unique")
        if self.lighthouse_interval_s <= 0:
            raise ValueError("lighthouse_interval_s must be positive")

    def camera_names(self) -> list[str]:
        return [name for name, _ in self.cameras]

    def to_dict(self) -> dict:
        d = dict(self.extras)
        d.update(
            {
                "rider_id": self.rider_id,
                "subject_id": self.subject_id,
                "vehicle_id": self.vehicle_id,
                "study_id": self.study_id,
                "cameras": [{"name": n, "device_id": i} for n, i in self.cameras],
                "lighthouse_interval_s": self.lighthouse_interval_s,
            }
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DacmanConfig":
        known = {
            "rider_id",
            "subject_id",
            "vehicle_id",
            "study_id",
            "cameras",
            "lighthouse_interval_s",
        }
        return cls(
            rider_id=int(d["rider_id"]),
            subject_id=int(d["subject_id"]),
            vehicle_id=int(d["vehicle_id"]),
            study_id=int(d["study_id"]),
            cameras=[(c["name"], int(c["device_id"])) for c in d.get("cameras", [])],
            lighthouse_interval_s=float(d.get("lighthouse_interval_s", 60.0)),
            extras={k: v for k, v in d.items() if k not in known},
        )

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Path) -> "DacmanConfig":
        return cls.from_dict(json.loads(path.read_text()))


@dataclass
class TripSpecs:
    """Per-subsystem and whole-trip start/end timestamps (trip_specs.json)."""

    subsystems: dict[str, tuple[int, int]]  # name -> (start_ts, end_ts)

    @property
    def trip_start(self) -> int:
        return min(s for s, _ in self.subsystems.values())

    @property
    def trip_end(self) -> int:
        return max(e for _, e in self.subsystems.values())

    def to_dict(self) -> dict:
        return {
            "trip": {"start_ts_micro": self.trip_start, "end_ts_micro": self.trip_end},
            "subsystems": {
                name: {"start_ts_micro": s, "end_ts_micro": e}
                for name, (s, e) in self.subsystems.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TripSpecs":
        return cls(
            subsystems={
                name: (int(v["start_ts_micro"]), int(v["end_ts_micro"]))
                for name, v in d["subsystems"].items()
            }
        )

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Path) -> "TripSpecs":
        return cls.from_dict(json.loads(path.read_text()))


@dataclass
class TripDirectoryLayout:
    """Resolved file locations inside one trip directory."""

    root: Path
    cameras: list[str]

    @property
    def name(self) -> str:
        return self.root.name

    def camera_dir(self, camera: str) -> Path:
        return self.root / camera

    def camera_container(self, camera: str) -> Path:
        return self.root / camera / f"{camera}.h264"

    def camera_csv(self, camera: str) -> Path:
        return self.root / camera / f"{camera}.csv"

    def camera_error(self, camera: str) -> Path:
        return self.root / camera / f"{camera}.error"

    def data_csv(self, subsystem: str) -> Path:
        return self.root / f"data_{subsystem}.csv"

    def error_file(self, subsystem: str) -> Path:
        return self.root / f"{subsystem}.error"

    @property
    def audio_raw(self) -> Path:
        return self.root / "audio.raw"

    @property
    def dacman_json(self) -> Path:
        return self.root / "trip_dacman.json"

    @property
    def specs_json(self) -> Path:
        return self.root / "trip_specs.json"

    @property
    def diagnostics_log(self) -> Path:
        return self.root / "trip_diagnostics.log"

    def essential_files(self) -> list[Path]:
        files = [self.dacman_json, self.data_csv("can")]
        for cam in self.cameras:
            files += [self.camera_container(cam), self.camera_csv(cam)]
        return files

    def expected_files(self) -> list[Path]:
        files = list(self.essential_files())
        for cam in self.cameras:
            files.append(self.camera_error(cam))
        files += [
            self.data_csv("gps"),
            self.data_csv("imu"),
            self.audio_raw,
            self.error_file("can"),
            self.error_file("gps"),
            self.error_file("imu"),
            self.error_file("audio"),
            self.specs_json,
            self.diagnostics_log,
        ]
        return files

    @classmethod
    def discover(cls, root: Path) -> "TripDirectoryLayout":
        """Build a layout for an existing directory.

        The camera set comes from trip_dacman.json when present, otherwise
        from subdirectories that look like camera directories.
        """
        root = Path(root)
        if not root.is_dir():
            raise NotADirectory(str(root))
        dacman = root / "trip_dacman.json"
        cameras: list[str]
        if dacman.is_file():
            try:
                cameras = DacmanConfig.load(dacman).camera_names()
            except (ValueError, KeyError, json.JSONDecodeError):
                cameras = []
        else:
            cameras = []
        if not cameras:
            cameras = sorted(
                p.name for p in root.iterdir() if p.is_dir() and (p / f"{p.name}.csv").exists()
            )
        return cls(root=root, cameras=cameras)


@dataclass
class LayoutReport:
    """Per-file presence report for one trip directory."""

    statuses: dict[str, str]  # relative path -> present | missing
    missing_essential: list[str]
    missing_nonessential: list[str]

    @property
    def valid(self) -> bool:
        return not self.missing_essential


def validate_layout(layout: TripDirectoryLayout) -> LayoutReport:
    """Check every expected file; the trip is invalid iff an essential one is missing."""
    if not layout.root.is_dir():
        raise NotADirectory(str(layout.root))
    essential = {str(p.relative_to(layout.root)) for p in layout.essential_files()}
    statuses: dict[str, str] = {}
    missing_essential: list[str] = []
    missing_nonessential: list[str] = []
    for path in layout.expected_files():
        rel = str(path.relative_to(layout.root))
        if path.exists():
            statuses[rel] = "present"
        else:
            statuses[rel] = "missing"
            if rel in essential:
                missing_essential.append(rel)
            else:
                missing_nonessential.append(rel)
    if not layout.cameras:
        # no identifiable camera subsystem at all counts as essential loss
        missing_essential.append("<cameras>")
    return LayoutReport(
        statuses=statuses,
        missing_essential=sorted(missing_essential),
        missing_nonessential=sorted(missing_nonessential),
    )
