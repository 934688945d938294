/** Pure HTML rendering of dashboard state (no DOM dependency). */

import { DashboardState, RiderView } from "./store.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatAge(ageS: number): string {
  if (ageS < 90) return `${Math.round(ageS)}s ago`;
  if (ageS < 5400) return `${Math.round(ageS / 60)}m ago`;
  return `${(ageS / 3600).toFixed(1)}h ago`;
}

function diskGauge(rider: RiderView): string {
  const pct = Math.round(rider.diskFraction * 100);
  const level = rider.diskFraction < 0.1 ? "critical" : pct < 25 ? "low" : "ok";
  return `<div class="disk-gauge ${level}" data-free-pct="${pct}">` +
    `<div class="fill" style="width:${pct}%"></div><span>${pct}% free</span></div>`;
}

export function renderRider(rider: RiderView): string {
  const pending = rider.pending ? " pending" : "";
  const badge =
    `<span class="badge ${rider.status}${pending}">` +
    `${rider.status.replace(/_/g, " ")}</span>`;
  const error = rider.error
    ? `<p class="inline-error">${esc(rider.error)}</p>`
    : "";
  const trip = rider.last_trip
    ? `<span class="last-trip">${esc(rider.last_trip)}</span>`
    : `<span class="last-trip none">no trips yet</span>`;
  return (
    `<article class="rider" data-rider-id="${rider.rider_id}">` +
    `<h2>Rider ${rider.rider_id}</h2>${badge}` +
    `<span class="age">${formatAge(rider.age_s)}</span>` +
    diskGauge(rider) +
    trip +
    `<button class="maintenance" data-action="drive_swap">Record drive swap</button>` +
    error +
    `</article>`
  );
}

export function render(state: DashboardState): string {
  const banner = state.degraded
    ? `<div class="banner degraded">Heartbeat server unreachable — showing ` +
      `last known data</div>`
    : "";
  if (state.lastUpdated === null && state.riders.length === 0) {
    return `${banner}<main class="fleet loading">Waiting for first snapshot…</main>`;
  }
  if (state.empty) {
    return `${banner}<main class="fleet empty">No riders reporting yet.</main>`;
  }
  const grey = state.degraded ? " greyed" : "";
  const cards = state.riders.map(renderRider).join("");
  return `${banner}<main class="fleet${grey}">${cards}</main>`;
}
