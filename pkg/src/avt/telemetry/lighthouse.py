"""Device-side status sender: periodic sealed reports over a stream socket."""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass, field

from ..trip import DacmanConfig
from .crypto import frame_message, seal_report
from .reports import StatusReport


@dataclass
class Lighthouse:
    """Builds, seals and sends status reports for one device."""

    config: DacmanConfig
    device_secret: bytes
    server_public: bytes
    capacity_bytes: int = 1_000_000_000_000
    seq: int = field(default=0)

    def build_report(
        self,
        sent_ts: int,
        trip_name: str | None = None,
        trip_start_ts: int | None = None,
        lat: float | None = None,
        lon: float | None = None,
        power_w: float = 7.5,
        temps: tuple[float, float, float] = (21.0, 38.5, 33.2),
        free_disk_bytes: int | None = None,
    ) -> StatusReport:
        report = StatusReport(
            rider_id=self.config.rider_id,
            seq=self.seq,
            sent_ts=sent_ts,
            trip_name=trip_name,
            trip_start_ts=trip_start_ts,
            elapsed_s=(
                (sent_ts - trip_start_ts) / 1_000_000 if trip_start_ts is not None else 0.0
            ),
            lat=lat,
            lon=lon,
            power_w=power_w,
            temp_external=temps[0],
            temp_pmu=temps[1],
            temp_hdd=temps[2],
            free_disk_bytes=(
                free_disk_bytes if free_disk_bytes is not None else self.capacity_bytes // 2
            ),
            capacity_bytes=self.capacity_bytes,
        )
        self.seq += 1
        return report

    def sealed_message(self, report: StatusReport) -> bytes:
        env = seal_report(report, self.device_secret, self.server_public)
        return frame_message(env.to_bytes())

    def send(self, host: str, port: int, report: StatusReport) -> None:
        with socket.create_connection((host, port), timeout=10) as sock:
            sock.sendall(self.sealed_message(report))

    def run(
        self,
        host: str,
        port: int,
        n_reports: int | None = None,
        interval_s: float | None = None,
        **report_kwargs,
    ) -> int:
        """Send reports at the configured cadence; returns how many were sent."""
        interval = interval_s if interval_s is not None else self.config.lighthouse_interval_s
        sent = 0
        while n_reports is None or sent < n_reports:
            report = self.build_report(sent_ts=int(time.time() * 1_000_000), **report_kwargs)
            self.send(host, port, report)
            sent += 1
            if n_reports is not None and sent >= n_reports:
                break
            time.sleep(interval)
        return sent
