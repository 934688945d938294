"""Server-side ingestion of sealed status reports into the homebase log."""

from __future__ import annotations

import socketserver
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable

from ..catalog import FleetCatalog
from ..errors import AuthenticationFailed, ReplayDetected, UnknownSender
from .crypto import TelemetryEnvelope, decode_frames
from .reports import DeviceRegistry, StatusReport


@dataclass
class IngestResult:
    accepted: int = 0
    rejects: dict[str, int] = field(default_factory=dict)

    def reject(self, reason: str) -> None:
        self.rejects[reason] = self.rejects.get(reason, 0) + 1

    @property
    def total_rejected(self) -> int:
        return sum(self.rejects.values())


def _log_row(rider_id: int, report: StatusReport, recv_ts: int) -> dict:
    return {
        "rider_id": rider_id,
        "recv_ts": recv_ts,
        "sent_ts": report.sent_ts,
        "seq": report.seq,
        "trip_name": report.trip_name,
        "trip_start_ts": report.trip_start_ts,
        "elapsed_s": report.elapsed_s,
        "lat": report.lat,
        "lon": report.lon,
        "power_w": report.power_w,
        "temp_external": report.temp_external,
        "temp_pmu": report.temp_pmu,
        "temp_hdd": report.temp_hdd,
        "free_disk_bytes": report.free_disk_bytes,
        "capacity_bytes": report.capacity_bytes,
    }


def homebase_ingest(
    messages: Iterable[bytes],
    registry: DeviceRegistry,
    catalog: FleetCatalog,
    now_us: int | None = None,
) -> IngestResult:
    """Decrypt and record a batch of envelope payloads.

    Bad messages are counted per reason and never abort the batch.
    """
    result = IngestResult()
    lock = threading.Lock()
    for payload in messages:
        try:
            env = TelemetryEnvelope.from_bytes(payload)
            rider_id, report = registry.open_envelope(env)
        except UnknownSender:
            result.reject("unknown_sender")
            continue
        except AuthenticationFailed:
            result.reject("authentication_failed")
            continue
        except ReplayDetected:
            result.reject("replay_detected")
            continue
        except Exception:
            result.reject("malformed")
            continue
        recv_ts = now_us if now_us is not None else int(time.time() * 1_000_000)
        with lock:
            catalog.append_homebase_log(_log_row(rider_id, report, recv_ts))
        result.accepted += 1
    return result


class HomebaseServer:
    """TCP server accepting length-prefixed envelope streams."""

    def __init__(self, registry: DeviceRegistry, catalog: FleetCatalog, host="127.0.0.1", port=0):
        self.registry = registry
        self.catalog = catalog
        self.result = IngestResult()
        self._ingest_lock = threading.Lock()
        server = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                buffer = b""
                while True:
                    try:
                        chunk = self.request.recv(65536)
                    except OSError:
                        return
                    if not chunk:
                        return
                    buffer += chunk
                    frames, errors, buffer = decode_frames(buffer)
                    with server._ingest_lock:
                        for _ in range(errors):
                            server.result.reject("framing")
                        batch = homebase_ingest(frames, server.registry, server.catalog)
                        server.result.accepted += batch.accepted
                        for reason, n in batch.rejects.items():
                            server.result.rejects[reason] = (
                                server.result.rejects.get(reason, 0) + n
                            )
                    if errors:
                        return  # corrupted stream: drop the connection

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def serve_forever(self) -> None:
        self._server.serve_forever()
