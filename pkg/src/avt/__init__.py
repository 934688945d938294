"""Desk-scale naturalistic driving data system: simulated vehicle, trip
recorder, clean/filter/sync pipeline, fleet catalog, and encrypted
telemetry services."""

__version__ = "0.1.0"
