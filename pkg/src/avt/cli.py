"""Operator command line tying together simulation, recording, the
pipeline, the catalog, and the telemetry services.

Exit codes: 0 success, 1 operational failure (single machine-parsable
error line on stderr), 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from pathlib import Path

import click

from .canbus import DecodeTable
from .catalog import FleetCatalog
from .errors import AvtError
from .pipeline import FilterPolicy, clean_trip, filter_trip, synchronize_trip
from .pipeline.filters import FilterThresholds, quarantine_trip
from .recorder import run_recorder
from .sim import SimScenario, simulate
from .trip import DacmanConfig, parse_trip_id


def _home() -> Path:
    return Path(os.environ.get("AVT_HOME", Path.cwd() / "avt_home"))


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _emit(payload, fmt: str) -> None:
    if fmt == "json":
        click.echo(json.dumps(payload, indent=2, default=str))
    elif fmt == "csv":
        if isinstance(payload, dict):
            click.echo(",".join(str(k) for k in payload))
            click.echo(",".join(str(v) for v in payload.values()))
        else:
            for row in payload:
                click.echo(",".join(str(v) for v in row))
    else:
        if isinstance(payload, dict):
            width = max(len(str(k)) for k in payload)
            for k, v in payload.items():
                click.echo(f"{k:<{width}}  {v}")
        else:
            for row in payload:
                click.echo("  ".join(str(v) for v in row))


def _trip_dirs(trip_dir: str | None, root: str | None) -> list[Path]:
    if (trip_dir is None) == (root is None):
        raise click.UsageError("give exactly one of TRIP_DIR or --root")
    if trip_dir is not None:
        return [Path(trip_dir)]
    root_path = Path(root)
    if not root_path.is_dir():
        raise click.UsageError(f"--root {root}: not a directory")
    dirs = []
    for p in sorted(root_path.iterdir()):
        if p.is_dir():
            try:
                parse_trip_id(p.name)
            except AvtError:
                continue
            dirs.append(p)
    return dirs


def _batch(dirs: list[Path], worker, jobs: int | None):
    """Run worker over trips in parallel, continuing past failures."""
    results = []
    with ThreadPoolExecutor(max_workers=jobs or os.cpu_count()) as pool:
        futures = {pool.submit(worker, d): d for d in dirs}
        for future, d in futures.items():
            try:
                results.append((d.name, "ok", future.result()))
            except Exception as e:
                results.append((d.name, "failed", str(e)))
    return results


def _load_policy(policy_path: str | None, table: DecodeTable | None) -> FilterPolicy:
    policy = FilterPolicy(decode_table=table)
    if policy_path:
        d = json.loads(Path(policy_path).read_text())
        if "consented_riders" in d:
            policy.consented_riders = set(d["consented_riders"])
        policy.removal_requests = set(d.get("removal_requests", []))
        policy.participation = {
            int(r): (date.fromisoformat(lo), date.fromisoformat(hi))
            for r, (lo, hi) in d.get("participation", {}).items()
        }
        policy.speed_signal = d.get("speed_signal", "speed")
        if "thresholds" in d:
            policy.thresholds = FilterThresholds(**d["thresholds"])
    return policy


@click.group()
def main():
    """Fleet data tooling: simulate, record, process, catalog, monitor."""


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Scenario JSON document.")
@click.option("--decode-table", "table_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_root", default=None, help="Raw trip root (default $AVT_HOME/raw).")
def simulate_cmd(config_path, table_path, out_root):
    """Run a scenario through the recorder into a trip directory."""
    try:
        table = DecodeTable.load(Path(table_path))
        doc = json.loads(Path(config_path).read_text())
        scenario = SimScenario.from_dict(doc["scenario"], table)
        dacman = DacmanConfig.from_dict(doc["dacman"])
        root = Path(out_root) if out_root else _home() / "raw"
        root.mkdir(parents=True, exist_ok=True)
        layout = run_recorder(dacman, simulate(scenario), root)
        click.echo(str(layout.root))
    except (AvtError, ValueError, KeyError, OSError) as e:
        _fail(str(e))


@main.command()
@click.argument("trip_dir", required=False)
@click.option("--root", default=None, help="Process every trip under this directory.")
@click.option("--jobs", default=None, type=int)
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "csv", "json"]))
def clean(trip_dir, root, jobs, fmt):
    """Repair recoverable inconsistencies in trip directories."""
    try:
        dirs = _trip_dirs(trip_dir, root)
        results = _batch(dirs, lambda d: clean_trip(d), jobs)
    except AvtError as e:
        _fail(str(e))
        return
    rows = []
    failed = False
    for name, status, result in results:
        if status == "ok":
            rows.append((name, "ok", f"{len(result.fixes)} fixes",
                         f"{len(result.unrecoverable)} unrecoverable"))
        else:
            failed = True
            rows.append((name, "failed", result, ""))
    _emit(rows, fmt)
    if failed and trip_dir is not None:
        sys.exit(1)


@main.command("filter")
@click.argument("trip_dir", required=False)
@click.option("--root", default=None)
@click.option("--decode-table", "table_path", default=None, type=click.Path(exists=True))
@click.option("--policy", "policy_path", default=None, type=click.Path(exists=True))
@click.option("--quarantine-dir", default=None,
              help="Move removed trips here (default: decide only).")
@click.option("--jobs", default=None, type=int)
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "csv", "json"]))
def filter_cmd(trip_dir, root, table_path, policy_path, quarantine_dir, jobs, fmt):
    """Classify trips against the removal criteria."""
    try:
        table = DecodeTable.load(Path(table_path)) if table_path else None
        policy = _load_policy(policy_path, table)
        dirs = _trip_dirs(trip_dir, root)

        def worker(d):
            decision = filter_trip(d, policy)
            if not decision.keep and quarantine_dir:
                quarantine_trip(d, Path(quarantine_dir))
            return decision

        results = _batch(dirs, worker, jobs)
    except (AvtError, ValueError, OSError) as e:
        _fail(str(e))
        return
    rows = []
    for name, status, result in results:
        if status == "ok":
            rows.append((name, "keep" if result.keep else "remove",
                         "" if result.keep else result.reason.value))
        else:
            rows.append((name, "failed", result))
    _emit(rows, fmt)


@main.command()
@click.argument("trip_dir", required=False)
@click.option("--root", default=None)
@click.option("--decode-table", "table_path", required=True, type=click.Path(exists=True))
@click.option("--processed-dir", default=None, help="Default $AVT_HOME/processed.")
@click.option("--jobs", default=None, type=int)
def sync(trip_dir, root, table_path, processed_dir, jobs):
    """Write synced_video.csv and synced_can.csv for kept trips."""
    try:
        table = DecodeTable.load(Path(table_path))
        processed = Path(processed_dir) if processed_dir else _home() / "processed"
        dirs = _trip_dirs(trip_dir, root)
        results = _batch(dirs, lambda d: synchronize_trip(d, table, processed), jobs)
    except (AvtError, ValueError, OSError) as e:
        _fail(str(e))
        return
    failed = False
    for name, status, result in results:
        if status == "ok":
            click.echo(f"{name}  synced -> {result}")
        else:
            failed = True
            click.echo(f"{name}  failed: {result}")
    if failed:
        sys.exit(1)


@main.command()
@click.argument("trip_dir", required=False)
@click.option("--root", default=None)
@click.option("--catalog", "catalog_path", default=None, help="Default $AVT_HOME/catalog.db.")
@click.option("--processed-dir", default=None)
@click.option("--vehicle-id", default=None, type=int,
              help="Vehicle for every ingested trip (default: rider id).")
@click.option("--decode-table", "table_path", default=None, type=click.Path(exists=True))
def ingest(trip_dir, root, catalog_path, processed_dir, vehicle_id, table_path):
    """Register trips (with per-file aggregates) into the fleet catalog."""
    try:
        catalog = FleetCatalog(catalog_path or _home() / "catalog.db")
        processed = Path(processed_dir) if processed_dir else _home() / "processed"
        dirs = _trip_dirs(trip_dir, root)
        for d in dirs:
            trip_id = parse_trip_id(d.name)
            veh = vehicle_id if vehicle_id is not None else trip_id.rider_id
            catalog.add_rider(trip_id.rider_id)
            catalog.add_vehicle(veh)
            proc = processed / d.name
            catalog.ingest_trip(d, proc if proc.is_dir() else None,
                                rider_id=trip_id.rider_id, vehicle_id=veh)
            click.echo(f"{d.name}  ingested")
    except (AvtError, ValueError, OSError) as e:
        _fail(str(e))


@main.command()
@click.option("--catalog", "catalog_path", default=None)
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "csv", "json"]))
def stats(catalog_path, fmt):
    """Fleet-wide dataset statistics."""
    try:
        catalog = FleetCatalog(catalog_path or _home() / "catalog.db")
        _emit(catalog.fleet_stats().to_dict(), fmt)
    except (AvtError, OSError) as e:
        _fail(str(e))


@main.command("export-gps")
@click.option("--catalog", "catalog_path", default=None)
@click.option("--out", "out_path", default=None, help="GeoJSON output (default stdout).")
def export_gps(catalog_path, out_path):
    """Export every trip's GPS trace as a GeoJSON FeatureCollection."""
    try:
        catalog = FleetCatalog(catalog_path or _home() / "catalog.db")
        doc = json.dumps(catalog.export_geojson(), indent=2)
        if out_path:
            Path(out_path).write_text(doc + "\n")
            click.echo(out_path)
        else:
            click.echo(doc)
    except (AvtError, OSError) as e:
        _fail(str(e))


@main.group()
def homebase():
    """Server-side telemetry ingestion."""


@homebase.command("serve")
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=4860, type=int)
def homebase_serve(registry_path, catalog_path, host, port):
    from .telemetry import DeviceRegistry, HomebaseServer

    try:
        registry = DeviceRegistry.load(Path(registry_path))
        catalog = FleetCatalog(catalog_path or _home() / "catalog.db")
        server = HomebaseServer(registry, catalog, host=host, port=port)
        click.echo(f"homebase listening on {server.address[0]}:{server.address[1]}")
        server.serve_forever()
    except (AvtError, OSError, ValueError) as e:
        _fail(str(e))


@main.group()
def lighthouse():
    """Device-side telemetry sender."""


@lighthouse.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="trip_dacman.json-style config.")
@click.option("--device-key", "device_key_path", required=True, type=click.Path(exists=True),
              help="JSON file with hex 'secret' (device) and 'server_public'.")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=4860, type=int)
@click.option("-n", "--reports", default=None, type=int, help="Stop after N reports.")
def lighthouse_run(config_path, device_key_path, host, port, reports):
    from .telemetry import Lighthouse

    try:
        config = DacmanConfig.load(Path(config_path))
        keys = json.loads(Path(device_key_path).read_text())
        client = Lighthouse(
            config=config,
            device_secret=bytes.fromhex(keys["secret"]),
            server_public=bytes.fromhex(keys["server_public"]),
        )
        sent = client.run(host, port, n_reports=reports)
        click.echo(f"sent {sent} reports")
    except (AvtError, OSError, ValueError, KeyError) as e:
        _fail(str(e))


@main.group()
def heartbeat():
    """Fleet-health HTTP service."""


@heartbeat.command("serve")
@click.option("--catalog", "catalog_path", default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=4870, type=int)
def heartbeat_serve(catalog_path, host, port):
    import uvicorn

    from .telemetry import create_heartbeat_app

    try:
        catalog = FleetCatalog(catalog_path or _home() / "catalog.db")
        app = create_heartbeat_app(catalog)
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (AvtError, OSError) as e:
        _fail(str(e))


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--riders", "rider_ids", default="", help="Comma-separated rider ids.")
def keygen(out_dir, rider_ids):
    """Generate a server registry plus per-rider device key files."""
    from .telemetry import DeviceRegistry, generate_keypair

    try:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        server_secret, server_public = generate_keypair()
        registry = DeviceRegistry(server_secret=server_secret, server_public=server_public)
        for token in filter(None, rider_ids.split(",")):
            rider = int(token)
            secret, public = generate_keypair()
            registry.register(rider, public)
            (out / f"device_{rider}.json").write_text(
                json.dumps(
                    {"rider_id": rider, "secret": secret.hex(),
                     "server_public": server_public.hex()},
                    indent=2,
                )
                + "\n"
            )
        registry.save(out / "registry.json")
        click.echo(str(out / "registry.json"))
    except (OSError, ValueError) as e:
        _fail(str(e))


if __name__ == "__main__":
    main()
