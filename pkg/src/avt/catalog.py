"""Relational fleet catalog: riders, vehicles, trips, epochs, homebase log.

Backed by an embedded sqlite database behind a narrow interface.  Trip
files remain the source of truth: aggregates stored at registration are
recomputable from the raw and processed directories, and the whole catalog
can be rebuilt from a directory tree.
"""

from __future__ import annotations

import json
import re
import sqlite3
import threading
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .canbus import DecodeTable, read_frame_csv
from .errors import DuplicateTrip, ForeignKeyViolation, UnknownLabel
from .pipeline.sync import synchronize_trip  # noqa: F401  (re-export convenience)
from .trip import MICROS_PER_SECOND, TripDirectoryLayout, parse_trip_id

METERS_PER_MILE = 1609.344
NOMINAL_SLOT_GAP_US = MICROS_PER_SECOND // 30

_SCHEMA = """
CREATE TABLE IF NOT EXISTS riders (
    id INTEGER PRIMARY KEY,
    notes TEXT DEFAULT '',
    address TEXT DEFAULT ''
);
CREATE TABLE IF NOT EXISTS vehicles (
    id INTEGER PRIMARY KEY,
    make TEXT, model TEXT, year INTEGER, color TEXT,
    technologies TEXT DEFAULT ''
);
CREATE TABLE IF NOT EXISTS instrumentations (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    rider_id INTEGER NOT NULL REFERENCES riders(id),
    vehicle_id INTEGER NOT NULL REFERENCES vehicles(id),
    installed_date TEXT,
    removed_date TEXT
);
CREATE TABLE IF NOT EXISTS participations (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    subject_id INTEGER NOT NULL,
    study_id INTEGER NOT NULL,
    rider_id INTEGER REFERENCES riders(id),
    role TEXT CHECK (role IN ('primary', 'secondary'))
);
CREATE TABLE IF NOT EXISTS trips (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL UNIQUE,
    rider_id INTEGER NOT NULL REFERENCES riders(id),
    vehicle_id INTEGER NOT NULL REFERENCES vehicles(id),
    subject_id INTEGER,
    study_id INTEGER,
    trip_date TEXT NOT NULL,
    start_ts INTEGER NOT NULL,
    sync_state TEXT DEFAULT 'raw',
    cameras TEXT DEFAULT '',
    n_slots INTEGER DEFAULT 0,
    frame_count INTEGER DEFAULT 0,
    miles REAL DEFAULT 0.0,
    raw_path TEXT,
    processed_path TEXT,
    metadata TEXT DEFAULT '{}'
);
CREATE TABLE IF NOT EXISTS homebase_log (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    rider_id INTEGER NOT NULL,
    recv_ts INTEGER NOT NULL,
    sent_ts INTEGER NOT NULL,
    seq INTEGER NOT NULL,
    trip_name TEXT,
    trip_start_ts INTEGER,
    elapsed_s REAL,
    lat REAL, lon REAL,
    power_w REAL,
    temp_external REAL, temp_pmu REAL, temp_hdd REAL,
    free_disk_bytes INTEGER,
    capacity_bytes INTEGER
);
CREATE TABLE IF NOT EXISTS maintenance (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    rider_id INTEGER NOT NULL,
    ts INTEGER NOT NULL,
    action TEXT NOT NULL CHECK (action IN ('drive_swap', 'repair')),
    note TEXT DEFAULT ''
);
"""

_LABEL_RE = re.compile(r"^[a-z][a-z0-9_]*$")


@dataclass
class FleetStats:
    participant_days: int = 0
    miles: float = 0.0
    frame_count: int = 0
    trip_count: int = 0
    driver_count: int = 0
    vehicle_count: int = 0

    def to_dict(self) -> dict:
        return {
            "participant_days": self.participant_days,
            "miles": round(self.miles, 3),
            "frame_count": self.frame_count,
            "trip_count": self.trip_count,
            "driver_count": self.driver_count,
            "vehicle_count": self.vehicle_count,
        }


def trip_miles(processed_dir: Path, speed_signal: str = "speed") -> float:
    """Integrate per-slot decoded speed over the sync grid, in miles."""
    path = Path(processed_dir) / "synced_can.csv"
    if not path.exists():
        return 0.0
    lines = path.read_text().splitlines()
    if len(lines) < 2:
        return 0.0
    header = lines[0].split(",")
    try:
        col = header.index(speed_signal)
    except ValueError:
        return 0.0
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        cell = parts[col] if col < len(parts) else ""
        rows.append((int(parts[1]), float(cell) if cell else None))
    meters = 0.0
    for i, (ts, speed) in enumerate(rows):
        if speed is None:
            continue
        gap = (rows[i + 1][0] - ts) if i + 1 < len(rows) else NOMINAL_SLOT_GAP_US
        meters += speed * gap / MICROS_PER_SECOND
    return meters / METERS_PER_MILE


def trip_frame_count(raw_dir: Path) -> int:
    """Total rows across every camera frame CSV of a raw trip."""
    layout = TripDirectoryLayout.discover(Path(raw_dir))
    return sum(len(read_frame_csv(layout.camera_csv(c))) for c in layout.cameras
               if layout.camera_csv(c).exists())


class FleetCatalog:
    def __init__(self, path: Path | str = ":memory:"):
        self.path = str(path)
        if self.path != ":memory:":
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        # served over HTTP and TCP handlers, so the connection is shared
        # across threads behind a lock
        self.conn = sqlite3.connect(self.path, check_same_thread=False)
        self._lock = threading.RLock()
        self.conn.row_factory = sqlite3.Row
        self.conn.execute("PRAGMA foreign_keys = ON")
        self.conn.executescript(_SCHEMA)
        self.conn.commit()

    def close(self) -> None:
        self.conn.close()

    # --- reference data ---------------------------------------------------

    def add_rider(self, rider_id: int, notes: str = "", address: str = "") -> None:
        self.conn.execute(
            "INSERT OR IGNORE INTO riders (id, notes, address) VALUES (?, ?, ?)",
            (rider_id, notes, address),
        )
        self.conn.commit()

    def add_vehicle(
        self,
        vehicle_id: int,
        make: str = "",
        model: str = "",
        year: int = 0,
        color: str = "",
        technologies: list[str] | None = None,
    ) -> None:
        self.conn.execute(
            "INSERT OR IGNORE INTO vehicles (id, make, model, year, color, technologies)"
            " VALUES (?, ?, ?, ?, ?, ?)",
            (vehicle_id, make, model, year, color, ",".join(technologies or [])),
        )
        self.conn.commit()

    def add_instrumentation(self, rider_id: int, vehicle_id: int, installed: str) -> None:
        try:
            self.conn.execute(
                "INSERT INTO instrumentations (rider_id, vehicle_id, installed_date)"
                " VALUES (?, ?, ?)",
                (rider_id, vehicle_id, installed),
            )
            self.conn.commit()
        except sqlite3.IntegrityError as e:
            raise ForeignKeyViolation(str(e)) from e

    def add_participation(
        self, subject_id: int, study_id: int, rider_id: int, role: str = "primary"
    ) -> None:
        try:
            self.conn.execute(
                "INSERT INTO participations (subject_id, study_id, rider_id, role)"
                " VALUES (?, ?, ?, ?)",
                (subject_id, study_id, rider_id, role),
            )
            self.conn.commit()
        except sqlite3.IntegrityError as e:
            raise ForeignKeyViolation(str(e)) from e

    # --- trips ------------------------------------------------------------

    def register_trip(
        self,
        name: str,
        rider_id: int,
        vehicle_id: int,
        subject_id: int | None = None,
        study_id: int | None = None,
        cameras: list[str] | None = None,
        n_slots: int = 0,
        frame_count: int = 0,
        miles: float = 0.0,
        sync_state: str = "raw",
        raw_path: str | None = None,
        processed_path: str | None = None,
        metadata: dict | None = None,
    ) -> int:
        trip_id = parse_trip_id(name)
        try:
            cur = self.conn.execute(
                "INSERT INTO trips (name, rider_id, vehicle_id, subject_id, study_id,"
                " trip_date, start_ts, sync_state, cameras, n_slots, frame_count, miles,"
                " raw_path, processed_path, metadata)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    name,
                    rider_id,
                    vehicle_id,
                    subject_id,
                    study_id,
                    trip_id.date.isoformat(),
                    trip_id.start_ts,
                    sync_state,
                    ",".join(cameras or []),
                    n_slots,
                    frame_count,
                    miles,
                    raw_path,
                    processed_path,
                    json.dumps(metadata or {}),
                ),
            )
            self.conn.commit()
            return cur.lastrowid
        except sqlite3.IntegrityError as e:
            if "UNIQUE" in str(e):
                raise DuplicateTrip(name) from e
            raise ForeignKeyViolation(str(e)) from e

    def ingest_trip(
        self,
        raw_dir: Path,
        processed_dir: Path | None,
        rider_id: int,
        vehicle_id: int,
        subject_id: int | None = None,
        study_id: int | None = None,
        speed_signal: str = "speed",
    ) -> int:
        """Register a trip with aggregates computed from its files."""
        raw_dir = Path(raw_dir)
        layout = TripDirectoryLayout.discover(raw_dir)
        n_slots = 0
        miles = 0.0
        sync_state = "raw"
        if processed_dir is not None and (Path(processed_dir) / "synced_video.csv").exists():
            sync_state = "synced"
            n_slots = max(
                0, len(Path(processed_dir, "synced_video.csv").read_text().splitlines()) - 1
            )
            miles = trip_miles(Path(processed_dir), speed_signal)
        return self.register_trip(
            name=raw_dir.name,
            rider_id=rider_id,
            vehicle_id=vehicle_id,
            subject_id=subject_id,
            study_id=study_id,
            cameras=layout.cameras,
            n_slots=n_slots,
            frame_count=trip_frame_count(raw_dir),
            miles=miles,
            sync_state=sync_state,
            raw_path=str(raw_dir),
            processed_path=str(processed_dir) if processed_dir else None,
        )

    # --- epochs -----------------------------------------------------------

    def _epoch_table(self, label: str, create: bool = False) -> str:
        if not _LABEL_RE.match(label):
            raise UnknownLabel(f"bad epoch label: {label!r}")
        table = f"epochs_{label}"
        exists = self.conn.execute(
            "SELECT 1 FROM sqlite_master WHERE type='table' AND name=?", (table,)
        ).fetchone()
        if not exists:
            if not create:
                raise UnknownLabel(label)
            self.conn.execute(
                f"CREATE TABLE {table} ("
                " id INTEGER PRIMARY KEY AUTOINCREMENT,"
                " trip_id INTEGER NOT NULL REFERENCES trips(id),"
                " start_slot INTEGER NOT NULL,"
                " end_slot INTEGER NOT NULL)"
            )
            self.conn.commit()
        return table

    def add_epoch(self, label: str, trip_db_id: int, start_slot: int, end_slot: int) -> None:
        table = self._epoch_table(label, create=True)
        row = self.conn.execute(
            "SELECT n_slots FROM trips WHERE id=?", (trip_db_id,)
        ).fetchone()
        if row is None:
            raise ForeignKeyViolation(f"no trip with id {trip_db_id}")
        if row["n_slots"] and not (0 <= start_slot <= end_slot < row["n_slots"]):
            raise ValueError("epoch slots outside trip grid")
        self.conn.execute(
            f"INSERT INTO {table} (trip_id, start_slot, end_slot) VALUES (?, ?, ?)",
            (trip_db_id, start_slot, end_slot),
        )
        self.conn.commit()

    # --- homebase log / maintenance ---------------------------------------

    def append_homebase_log(self, row: dict) -> int:
        cols = (
            "rider_id", "recv_ts", "sent_ts", "seq", "trip_name", "trip_start_ts",
            "elapsed_s", "lat", "lon", "power_w", "temp_external", "temp_pmu",
            "temp_hdd", "free_disk_bytes", "capacity_bytes",
        )
        with self._lock:
            cur = self.conn.execute(
                f"INSERT INTO homebase_log ({', '.join(cols)})"
                f" VALUES ({', '.join('?' for _ in cols)})",
                tuple(row.get(c) for c in cols),
            )
            self.conn.commit()
            return cur.lastrowid

    def homebase_rows(self, rider_id: int | None = None) -> list[sqlite3.Row]:
        with self._lock:
            if rider_id is None:
                return self.conn.execute(
                    "SELECT * FROM homebase_log ORDER BY recv_ts"
                ).fetchall()
            return self.conn.execute(
                "SELECT * FROM homebase_log WHERE rider_id=? ORDER BY recv_ts", (rider_id,)
            ).fetchall()

    def record_maintenance(self, rider_id: int, ts: int, action: str, note: str = "") -> int:
        with self._lock:
            cur = self.conn.execute(
                "INSERT INTO maintenance (rider_id, ts, action, note) VALUES (?, ?, ?, ?)",
                (rider_id, ts, action, note),
            )
            self.conn.commit()
            return cur.lastrowid

    def maintenance_rows(self, rider_id: int | None = None) -> list[sqlite3.Row]:
        with self._lock:
            if rider_id is None:
                return self.conn.execute("SELECT * FROM maintenance ORDER BY ts").fetchall()
            return self.conn.execute(
                "SELECT * FROM maintenance WHERE rider_id=? ORDER BY ts", (rider_id,)
            ).fetchall()

    # --- statistics and queries --------------------------------------------

    def fleet_stats(self, rider_id: int | None = None) -> FleetStats:
        where = ""
        params: tuple = ()
        if rider_id is not None:
            where = " WHERE rider_id=?"
            params = (rider_id,)
        row = self.conn.execute(
            f"SELECT COUNT(*) AS trips, COALESCE(SUM(miles), 0) AS miles,"
            f" COALESCE(SUM(frame_count), 0) AS frames,"
            f" COUNT(DISTINCT rider_id) AS drivers,"
            f" COUNT(DISTINCT vehicle_id) AS vehicles"
            f" FROM trips{where}",
            params,
        ).fetchone()
        days = self.conn.execute(
            f"SELECT COUNT(*) FROM (SELECT DISTINCT vehicle_id, trip_date FROM trips{where})",
            params,
        ).fetchone()[0]
        return FleetStats(
            participant_days=days,
            miles=row["miles"],
            frame_count=row["frames"],
            trip_count=row["trips"],
            driver_count=row["drivers"],
            vehicle_count=row["vehicles"],
        )

    def query_trips(
        self,
        rider_id: int | None = None,
        date_from: date | None = None,
        date_to: date | None = None,
        epoch_label: str | None = None,
        technology: str | None = None,
    ) -> list[sqlite3.Row]:
        sql = "SELECT DISTINCT trips.* FROM trips"
        clauses = []
        params: list = []
        if epoch_label is not None:
            table = self._epoch_table(epoch_label)
            sql += f" JOIN {table} ON {table}.trip_id = trips.id"
        if technology is not None:
            sql += " JOIN vehicles ON vehicles.id = trips.vehicle_id"
            clauses.append(
                "(',' || vehicles.technologies || ',') LIKE ?"
            )
            params.append(f"%,{technology},%")
        if rider_id is not None:
            clauses.append("trips.rider_id = ?")
            params.append(rider_id)
        if date_from is not None:
            clauses.append("trips.trip_date >= ?")
            params.append(date_from.isoformat())
        if date_to is not None:
            clauses.append("trips.trip_date <= ?")
            params.append(date_to.isoformat())
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY trips.start_ts"
        return self.conn.execute(sql, params).fetchall()

    # --- exports and rebuild -----------------------------------------------

    def export_geojson(self) -> dict:
        """GPS traces of every registered trip as a GeoJSON FeatureCollection."""
        features = []
        for row in self.conn.execute("SELECT name, raw_path FROM trips ORDER BY start_ts"):
            if not row["raw_path"]:
                continue
            gps = Path(row["raw_path"]) / "data_gps.csv"
            if not gps.exists():
                continue
            coords = []
            for line in gps.read_text().splitlines()[1:]:
                parts = line.split(",")
                if len(parts) >= 3:
                    try:
                        coords.append([float(parts[2]), float(parts[1])])
                    except ValueError:
                        continue
            if len(coords) >= 2:
                features.append(
                    {
                        "type": "Feature",
                        "properties": {"trip": row["name"]},
                        "geometry": {"type": "LineString", "coordinates": coords},
                    }
                )
        return {"type": "FeatureCollection", "features": features}

    def rebuild_trips(
        self,
        raw_root: Path,
        processed_root: Path,
        rider_vehicle: dict[int, int],
        table: DecodeTable | None = None,
        speed_signal: str = "speed",
    ) -> int:
        """Re-register every trip directory found under ``raw_root``.

        ``rider_vehicle`` maps rider ids to the vehicle each rode in.
        Returns the number of trips registered.
        """
        count = 0
        for trip_dir in sorted(Path(raw_root).iterdir()):
            if not trip_dir.is_dir():
                continue
            try:
                trip_id = parse_trip_id(trip_dir.name)
            except Exception:
                continue
            vehicle_id = rider_vehicle.get(trip_id.rider_id)
            if vehicle_id is None:
                continue
            processed = Path(processed_root) / trip_dir.name
            self.ingest_trip(
                trip_dir,
                processed if processed.is_dir() else None,
                rider_id=trip_id.rider_id,
                vehicle_id=vehicle_id,
                speed_signal=speed_signal,
            )
            count += 1
        return count
