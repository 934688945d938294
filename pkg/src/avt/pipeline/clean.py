"""Recoverable-inconsistency repair for offloaded trip directories.

Fix order: permission normalization, backup of raw essential files,
trip_specs.json reconstruction, id repair from directory context, removal
of failed nonessential subsystems, torn-final-line removal.  Content is
backed up before any content mutation; a second pass over a cleaned trip
applies zero fixes.
"""

from __future__ import annotations

import shutil
import stat
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import BackupFailed, MalformedName, NotADirectory
from ..recorder import compute_specs_from_files
from ..trip import DacmanConfig, TripDirectoryLayout, parse_trip_id, validate_layout

DIR_MODE = 0o770
FILE_MODE = 0o660

BACKUP_DIRNAME = ".backup"

_CSV_FIELD_COUNTS = {
    "data_can.csv": 4,
    "data_gps.csv": 7,
    "data_imu.csv": 7,
}


@dataclass
class CleanReport:
    trip: str
    fixes: list[str] = field(default_factory=list)
    unrecoverable: list[str] = field(default_factory=list)
    backup_dir: Path | None = None
    reconstructed: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.unrecoverable


def _data_csvs(layout: TripDirectoryLayout) -> dict[Path, int]:
    """Every row CSV in the trip with its expected field count."""
    files = {}
    for name, count in _CSV_FIELD_COUNTS.items():
        files[layout.root / name] = count
    for cam in layout.cameras:
        files[layout.camera_csv(cam)] = 2
    return files


def _torn_final_line(path: Path, n_fields: int) -> str | None:
    """The trailing line to drop when it is malformed, else None."""
    if not path.exists():
        return None
    lines = path.read_text().splitlines()
    if not lines:
        return None
    last = lines[-1]
    if not last.strip():
        return None
    parts = last.split(",")
    if len(parts) != n_fields:
        return last
    first = parts[0]
    if first == "ts_micro" or first == "frame":
        return None  # header-only file
    try:
        int(first)
    except ValueError:
        return last
    if path.name == "data_can.csv":
        # a torn CAN row can keep its field count but lose payload bytes
        try:
            dlc = int(parts[2])
            payload = bytes.fromhex(parts[3])
        except ValueError:
            return last
        if len(payload) != dlc:
            return last
    return None


def _failed_nonessential(layout: TripDirectoryLayout) -> list[str]:
    failed = []
    for sub in ("gps", "imu", "audio"):
        err = layout.error_file(sub)
        data = layout.audio_raw if sub == "audio" else layout.data_csv(sub)
        if err.exists() and err.stat().st_size > 0 and data.exists():
            failed.append(sub)
    return failed


def _id_mismatch(layout: TripDirectoryLayout) -> int | None:
    """Rider id from the directory name when trip_dacman.json disagrees."""
    try:
        trip_id = parse_trip_id(layout.root.name)
    except MalformedName:
        return None
    if not layout.dacman_json.exists():
        return None
    try:
        config = DacmanConfig.load(layout.dacman_json)
    except (ValueError, KeyError):
        return None
    if config.rider_id != trip_id.rider_id:
        return trip_id.rider_id
    return None


def clean_trip(trip_dir: Path) -> CleanReport:
    """Inspect and repair one trip directory in place."""
    trip_dir = Path(trip_dir)
    if not trip_dir.is_dir():
        raise NotADirectory(str(trip_dir))
    layout = TripDirectoryLayout.discover(trip_dir)
    report = CleanReport(trip=trip_dir.name)

    # 1. permission normalization (metadata only, no backup needed)
    changed = 0
    for path in [trip_dir, *trip_dir.rglob("*")]:
        if BACKUP_DIRNAME in path.parts:
            continue
        want = DIR_MODE if path.is_dir() else FILE_MODE
        if stat.S_IMODE(path.stat().st_mode) != want:
            path.chmod(want)
            changed += 1
    if changed:
        report.fixes.append(f"normalized permissions on {changed} paths")

    # decide which content mutations are pending before touching anything
    csv_fields = _data_csvs(layout)
    torn = {p: line for p, fields in csv_fields.items() if (line := _torn_final_line(p, fields))}
    missing_specs = not layout.specs_json.exists()
    failed_subs = _failed_nonessential(layout)
    rider_fix = _id_mismatch(layout)

    mutations_pending = bool(torn or missing_specs or failed_subs or rider_fix is not None)

    # 2. backup raw essential files before any content mutation
    backup_dir = trip_dir / BACKUP_DIRNAME
    if mutations_pending:
        try:
            backup_dir.mkdir(exist_ok=True)
            for src in layout.essential_files():
                if src.exists():
                    dst = backup_dir / src.relative_to(trip_dir)
                    if not dst.exists():
                        dst.parent.mkdir(parents=True, exist_ok=True)
                        shutil.copy2(src, dst)
        except OSError as e:
            raise BackupFailed(str(e)) from e
        report.backup_dir = backup_dir
    elif backup_dir.is_dir():
        report.backup_dir = backup_dir

    # 3. trip_specs.json reconstruction from row timestamps
    if missing_specs:
        specs = compute_specs_from_files(layout)
        if specs.subsystems:
            specs.save(layout.specs_json)
            layout.specs_json.chmod(FILE_MODE)
            report.fixes.append("reconstructed trip_specs.json from row timestamps")
            report.reconstructed.append("trip_specs.json")
        else:
            report.unrecoverable.append("trip_specs.json missing and not reconstructable")

    # 4. id repair from directory-name context
    if rider_fix is not None:
        config = DacmanConfig.load(layout.dacman_json)
        config.rider_id = rider_fix
        config.save(layout.dacman_json)
        layout.dacman_json.chmod(FILE_MODE)
        report.fixes.append(f"repaired rider_id to {rider_fix} from directory name")

    # 5. drop failed nonessential subsystems, preserving the trip
    for sub in failed_subs:
        data = layout.audio_raw if sub == "audio" else layout.data_csv(sub)
        dst = backup_dir / data.name
        if not dst.exists():
            shutil.move(str(data), str(dst))
        else:
            data.unlink()
        report.fixes.append(f"removed failed nonessential subsystem {sub}")

    # 6. torn-final-line removal
    for path, line in torn.items():
        if not path.exists():  # may have been removed with its subsystem
            continue
        lines = path.read_text().splitlines()
        if lines and lines[-1] == line:
            path.write_text("\n".join(lines[:-1]) + ("\n" if len(lines) > 1 else ""))
            path.chmod(FILE_MODE)
            report.fixes.append(f"removed torn final line from {path.name}")

    # anything essential still missing is beyond repair here
    layout = TripDirectoryLayout.discover(trip_dir)
    layout_report = validate_layout(layout)
    for missing in layout_report.missing_essential:
        report.unrecoverable.append(f"missing essential file: {missing}")

    return report
