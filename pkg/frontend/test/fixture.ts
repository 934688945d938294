/** Scripted heartbeat server fixture implementing the HTTP contract. */

import type { FetchLike } from "../src/api.js";

interface FixtureRider {
  rider_id: number;
  recv_ts: number; // µs
  trip_name: string | null;
  free_disk_bytes: number;
  capacity_bytes: number;
  interval_s: number;
}

interface FixtureMaintenance {
  id: number;
  rider_id: number;
  ts: number;
  action: string;
  note: string;
}

const STALENESS_MULTIPLIER = 3;
const LOW_DISK_FRACTION = 0.1;

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class HeartbeatFixture {
  nowUs = 0;
  down = false;
  pollIntervalS = 60;
  rejectNextMaintenance: string | null = null;
  requestLog: string[] = [];

  private riders: FixtureRider[] = [];
  private maintenance: FixtureMaintenance[] = [];
  private nextId = 1;

  addRider(rider: Partial<FixtureRider> & { rider_id: number }): void {
    this.riders.push({
      recv_ts: 0,
      trip_name: null,
      free_disk_bytes: 500,
      capacity_bytes: 1000,
      interval_s: 60,
      ...rider,
    });
  }

  report(riderId: number, update: Partial<FixtureRider>): void {
    const rider = this.riders.find((r) => r.rider_id === riderId);
    if (!rider) throw new Error(`no fixture rider ${riderId}`);
    Object.assign(rider, update, { recv_ts: this.nowUs });
  }

  private riderStatus(rider: FixtureRider) {
    const ageS = (this.nowUs - rider.recv_ts) / 1e6;
    const stale = ageS > STALENESS_MULTIPLIER * rider.interval_s;
    const lowDisk =
      rider.capacity_bytes > 0 &&
      rider.free_disk_bytes < LOW_DISK_FRACTION * rider.capacity_bytes;
    const lastSwap = Math.max(
      -1,
      ...this.maintenance
        .filter((m) => m.rider_id === rider.rider_id && m.action === "drive_swap")
        .map((m) => m.ts),
    );
    const needsSwap = lowDisk && lastSwap < rider.recv_ts;
    return {
      rider_id: rider.rider_id,
      last_report_ts: rider.recv_ts,
      age_s: ageS,
      stale,
      needs_drive_swap: needsSwap,
      status: stale ? "stale" : needsSwap ? "needs_drive_swap" : "healthy",
      last_trip: rider.trip_name,
      free_disk_bytes: rider.free_disk_bytes,
      capacity_bytes: rider.capacity_bytes,
      interval_s: rider.interval_s,
    };
  }

  /** FetchLike implementation handed to the client under test. */
  fetch: FetchLike = async (url, init) => {
    this.requestLog.push(`${init?.method ?? "GET"} ${url}`);
    if (this.down) throw new TypeError("fetch failed: connection refused");

    const fleet = url.match(/\/fleet$/);
    if (fleet) {
      return jsonResponse(200, {
        generated_ts: this.nowUs,
        riders: this.riders.map((r) => this.riderStatus(r)),
        poll_interval_s: this.pollIntervalS,
      });
    }

    const history = url.match(/\/riders\/(\d+)\/history$/);
    if (history) {
      const riderId = Number(history[1]);
      const rider = this.riders.find((r) => r.rider_id === riderId);
      if (!rider) return jsonResponse(404, { detail: "unknown rider" });
      return jsonResponse(200, {
        rider_id: riderId,
        reports: [
          {
            recv_ts: rider.recv_ts,
            seq: 1,
            trip_name: rider.trip_name,
            free_disk_bytes: rider.free_disk_bytes,
            capacity_bytes: rider.capacity_bytes,
          },
        ],
        maintenance: this.maintenance.filter((m) => m.rider_id === riderId),
      });
    }

    const maint = url.match(/\/riders\/(\d+)\/maintenance$/);
    if (maint && init?.method === "POST") {
      if (this.rejectNextMaintenance) {
        const detail = this.rejectNextMaintenance;
        this.rejectNextMaintenance = null;
        return jsonResponse(500, { detail });
      }
      const riderId = Number(maint[1]);
      const body = JSON.parse(String(init.body)) as { action: string; note?: string };
      if (body.action !== "drive_swap" && body.action !== "repair") {
        return jsonResponse(422, { detail: "action must be drive_swap or repair" });
      }
      if (!this.riders.some((r) => r.rider_id === riderId)) {
        return jsonResponse(404, { detail: "unknown rider" });
      }
      const event = {
        id: this.nextId++,
        rider_id: riderId,
        ts: this.nowUs,
        action: body.action,
        note: body.note ?? "",
      };
      this.maintenance.push(event);
      return jsonResponse(200, event);
    }

    return jsonResponse(404, { detail: `no route for ${url}` });
  };
}
