"""Encrypted fleet telemetry: device-side sender, server-side ingest, health view."""

from .crypto import (
    TelemetryEnvelope,
    decode_frames,
    frame_message,
    generate_keypair,
    open_envelope,
    open_sealed,
    public_key_of,
    seal,
    seal_report,
)
from .reports import DeviceRegistry, StatusReport
from .homebase import HomebaseServer, homebase_ingest
from .heartbeat import FleetStatus, HeartbeatThresholds, create_heartbeat_app, heartbeat_snapshot
from .lighthouse import Lighthouse

__all__ = [
    "TelemetryEnvelope",
    "decode_frames",
    "frame_message",
    "generate_keypair",
    "open_envelope",
    "open_sealed",
    "public_key_of",
    "seal",
    "seal_report",
    "DeviceRegistry",
    "StatusReport",
    "HomebaseServer",
    "homebase_ingest",
    "FleetStatus",
    "HeartbeatThresholds",
    "create_heartbeat_app",
    "heartbeat_snapshot",
    "Lighthouse",
]
