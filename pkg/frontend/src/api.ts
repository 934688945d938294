/** Typed client for the heartbeat HTTP API. */

export type RiderBadge = "healthy" | "stale" | "needs_drive_swap";

export interface RiderStatus {
  rider_id: number;
  last_report_ts: number;
  age_s: number;
  stale: boolean;
  needs_drive_swap: boolean;
  status: RiderBadge;
  last_trip: string | null;
  free_disk_bytes: number;
  capacity_bytes: number;
  interval_s: number;
}

export interface FleetSnapshot {
  generated_ts: number;
  riders: RiderStatus[];
  poll_interval_s: number;
}

export interface HistoryReport {
  recv_ts: number;
  seq: number;
  trip_name: string | null;
  free_disk_bytes: number;
  capacity_bytes: number;
}

export interface MaintenanceEvent {
  id: number;
  rider_id: number;
  ts: number;
  action: string;
  note: string;
}

export interface RiderHistory {
  rider_id: number;
  reports: HistoryReport[];
  maintenance: MaintenanceEvent[];
}

export type MaintenanceAction = "drive_swap" | "repair";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class HeartbeatClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: unknown };
        if (body.detail !== undefined) detail = String(body.detail);
      } catch {
        // keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  fetchFleet(): Promise<FleetSnapshot> {
    return this.request<FleetSnapshot>("/fleet");
  }

  fetchHistory(riderId: number): Promise<RiderHistory> {
    return this.request<RiderHistory>(`/riders/${riderId}/history`);
  }

  postMaintenance(
    riderId: number,
    action: MaintenanceAction,
    note = "",
  ): Promise<MaintenanceEvent> {
    return this.request<MaintenanceEvent>(`/riders/${riderId}/maintenance`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ action, note }),
    });
  }
}
