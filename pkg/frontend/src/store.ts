/** Dashboard state: polling, backoff, and optimistic maintenance.
 *
 * Health flags always come from the server; the only local overlay is a
 * short-lived "pending" mark on a rider whose maintenance POST is in
 * flight, which the next snapshot (or a rejected POST) replaces.
 */

import {
  ApiError,
  FleetSnapshot,
  HeartbeatClient,
  MaintenanceAction,
  RiderStatus,
} from "./api.js";

export const BACKOFF_BASE_MS = 1_000;
export const BACKOFF_CAP_MS = 60_000;

export interface RiderView extends RiderStatus {
  /** a maintenance POST for this rider is awaiting its confirming poll */
  pending: boolean;
  /** 0..1 fill of the disk gauge */
  diskFraction: number;
  /** inline server rejection for the last maintenance attempt, if any */
  error: string | null;
}

export interface DashboardState {
  riders: RiderView[];
  degraded: boolean;
  lastUpdated: number | null;
  nextPollMs: number;
  empty: boolean;
}

export class DashboardStore {
  private snapshot: FleetSnapshot | null = null;
  private degraded = false;
  private failures = 0;
  private pending = new Set<number>();
  private errors = new Map<number, string>();

  constructor(private readonly client: HeartbeatClient) {}

  /** Fetch one snapshot; returns the delay to wait before the next poll. */
  async poll(): Promise<number> {
    try {
      const snapshot = await this.client.fetchFleet();
      this.snapshot = snapshot; // last write wins
      this.degraded = false;
      this.failures = 0;
      // the confirming snapshot arrived: pending overlays are obsolete
      this.pending.clear();
      return snapshot.poll_interval_s * 1_000;
    } catch {
      this.degraded = true;
      this.failures += 1;
      return this.nextBackoffMs();
    }
  }

  nextBackoffMs(): number {
    const raw = BACKOFF_BASE_MS * 2 ** Math.max(0, this.failures - 1);
    return Math.min(BACKOFF_CAP_MS, raw);
  }

  /** Optimistically record maintenance; rolls back if the server rejects. */
  async recordMaintenance(
    riderId: number,
    action: MaintenanceAction,
    note = "",
  ): Promise<boolean> {
    this.errors.delete(riderId);
    this.pending.add(riderId);
    try {
      await this.client.postMaintenance(riderId, action, note);
      return true;
    } catch (err) {
      this.pending.delete(riderId); // rollback the optimistic mark
      const message =
        err instanceof ApiError ? err.message : "heartbeat server unreachable";
      this.errors.set(riderId, message);
      return false;
    }
  }

  state(): DashboardState {
    const riders = (this.snapshot?.riders ?? []).map((rider) => {
      const pending = this.pending.has(rider.rider_id);
      return {
        ...rider,
        // a pending drive swap optimistically clears the flag until the
        // next server snapshot confirms or contradicts it
        needs_drive_swap: pending ? false : rider.needs_drive_swap,
        status: pending && rider.status === "needs_drive_swap" ? "healthy" : rider.status,
        pending,
        diskFraction: rider.capacity_bytes
          ? rider.free_disk_bytes / rider.capacity_bytes
          : 0,
        error: this.errors.get(rider.rider_id) ?? null,
      } as RiderView;
    });
    return {
      riders,
      degraded: this.degraded,
      lastUpdated: this.snapshot?.generated_ts ?? null,
      nextPollMs: this.degraded
        ? this.nextBackoffMs()
        : (this.snapshot?.poll_interval_s ?? 60) * 1_000,
      empty: this.snapshot !== null && this.snapshot.riders.length === 0,
    };
  }

  /** Trips per day for a rider's sparkline, from its report history. */
  async tripsPerDay(riderId: number): Promise<Map<string, number>> {
    const history = await this.client.fetchHistory(riderId);
    const perDay = new Map<string, number>();
    const seen = new Set<string>();
    for (const report of history.reports) {
      const trip = report.trip_name;
      if (!trip || seen.has(trip)) continue;
      seen.add(trip);
      const day = trip.split("_")[1] ?? "unknown";
      perDay.set(day, (perDay.get(day) ?? 0) + 1);
    }
    return perDay;
  }
}

/** Drive the store forever with server-hinted cadence and capped backoff. */
export function startPolling(
  store: DashboardStore,
  onUpdate: (state: DashboardState) => void,
  setTimer: (fn: () => void, ms: number) => void = (fn, ms) => setTimeout(fn, ms),
): void {
  const tick = async () => {
    const delay = await store.poll();
    onUpdate(store.state());
    setTimer(tick, delay);
  };
  void tick();
}
