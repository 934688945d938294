"""Fleet health derivation and the engineer-facing HTTP surface.

A rider is stale when no report has arrived for more than three times its
configured send interval; a rider needs a drive swap when its latest
report shows free space below 10% of capacity and no drive swap has been
recorded since that report.
"""

import time
from dataclasses import dataclass, field

from ..catalog import FleetCatalog
from ..trip import MICROS_PER_SECOND


@dataclass
class HeartbeatThresholds:
    staleness_multiplier: float = 3.0
    low_disk_fraction: float = 0.10
    default_interval_s: float = 60.0
    intervals_s: dict[int, float] = field(default_factory=dict)

    def interval_for(self, rider_id: int) -> float:
        return self.intervals_s.get(rider_id, self.default_interval_s)


@dataclass
class RiderStatus:
    rider_id: int
    last_report_ts: int
    age_s: float
    stale: bool
    needs_drive_swap: bool
    last_trip: str | None
    free_disk_bytes: int
    capacity_bytes: int
    interval_s: float

    @property
    def healthy(self) -> bool:
        return not (self.stale or self.needs_drive_swap)

    def to_dict(self) -> dict:
        return {
            "rider_id": self.rider_id,
            "last_report_ts": self.last_report_ts,
            "age_s": round(self.age_s, 3),
            "stale": self.stale,
            "needs_drive_swap": self.needs_drive_swap,
            "status": (
                "stale"
                if self.stale
                else "needs_drive_swap" if self.needs_drive_swap else "healthy"
            ),
            "last_trip": self.last_trip,
            "free_disk_bytes": self.free_disk_bytes,
            "capacity_bytes": self.capacity_bytes,
            "interval_s": self.interval_s,
        }


@dataclass
class FleetStatus:
    generated_ts: int
    riders: dict[int, RiderStatus]

    def to_dict(self) -> dict:
        return {
            "generated_ts": self.generated_ts,
            "riders": [self.riders[r].to_dict() for r in sorted(self.riders)],
        }


def heartbeat_snapshot(
    catalog: FleetCatalog, thresholds: HeartbeatThresholds, now_us: int
) -> FleetStatus:
    """Pure derivation of fleet health from the homebase log and maintenance events."""
    riders: dict[int, RiderStatus] = {}
    by_rider: dict[int, list] = {}
    for row in catalog.homebase_rows():
        by_rider.setdefault(row["rider_id"], []).append(row)
    swaps: dict[int, int] = {}
    for row in catalog.maintenance_rows():
        if row["action"] == "drive_swap":
            swaps[row["rider_id"]] = max(swaps.get(row["rider_id"], 0), row["ts"])

    for rider_id, rows in by_rider.items():
        last = rows[-1]
        interval = thresholds.interval_for(rider_id)
        age_s = (now_us - last["recv_ts"]) / MICROS_PER_SECOND
        stale = age_s > thresholds.staleness_multiplier * interval

        capacity = last["capacity_bytes"] or 0
        low_disk = bool(
            capacity and last["free_disk_bytes"] < thresholds.low_disk_fraction * capacity
        )
        needs_swap = low_disk and swaps.get(rider_id, -1) < last["recv_ts"]

        riders[rider_id] = RiderStatus(
            rider_id=rider_id,
            last_report_ts=last["recv_ts"],
            age_s=age_s,
            stale=stale,
            needs_drive_swap=needs_swap,
            last_trip=last["trip_name"],
            free_disk_bytes=last["free_disk_bytes"],
            capacity_bytes=capacity,
            interval_s=interval,
        )
    return FleetStatus(generated_ts=now_us, riders=riders)


def create_heartbeat_app(
    catalog: FleetCatalog,
    thresholds: HeartbeatThresholds | None = None,
    now_fn=None,
):
    """FastAPI app exposing the fleet-health endpoints."""
    from fastapi import FastAPI, HTTPException
    from pydantic import BaseModel

    thresholds = thresholds or HeartbeatThresholds()
    now_fn = now_fn or (lambda: int(time.time() * 1_000_000))

    class MaintenanceRequest(BaseModel):
        action: str
        note: str = ""

    app = FastAPI(title="heartbeat")

    @app.get("/fleet")
    def fleet():
        snapshot = heartbeat_snapshot(catalog, thresholds, now_fn())
        body = snapshot.to_dict()
        body["poll_interval_s"] = thresholds.default_interval_s
        return body

    @app.get("/riders/{rider_id}/history")
    def history(rider_id: int):
        reports = [dict(r) for r in catalog.homebase_rows(rider_id)]
        maintenance = [dict(r) for r in catalog.maintenance_rows(rider_id)]
        if not reports and not maintenance:
            raise HTTPException(status_code=404, detail="unknown rider")
        return {"rider_id": rider_id, "reports": reports, "maintenance": maintenance}

    @app.post("/riders/{rider_id}/maintenance")
    def maintenance(rider_id: int, req: MaintenanceRequest):
        if req.action not in ("drive_swap", "repair"):
            raise HTTPException(status_code=422, detail="action must be drive_swap or repair")
        if not catalog.homebase_rows(rider_id):
            raise HTTPException(status_code=404, detail="unknown rider")
        ts = now_fn()
        event_id = catalog.record_maintenance(rider_id, ts, req.action, req.note)
        return {"id": event_id, "rider_id": rider_id, "ts": ts, "action": req.action,
                "note": req.note}

    return app
