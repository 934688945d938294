/** Browser entry point: wire the store to the document. */

import { HeartbeatClient } from "./api.js";
import { render } from "./render.js";
import { DashboardStore, startPolling } from "./store.js";

export function mount(root: HTMLElement, baseUrl = ""): DashboardStore {
  const store = new DashboardStore(new HeartbeatClient(baseUrl));

  const redraw = () => {
    root.innerHTML = render(store.state());
  };

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (!target.matches("button.maintenance")) return;
    const card = target.closest<HTMLElement>("[data-rider-id]");
    if (!card) return;
    const riderId = Number(card.dataset.riderId);
    const action = target.dataset.action === "repair" ? "repair" : "drive_swap";
    void store.recordMaintenance(riderId, action).then(redraw);
    redraw(); // show the optimistic state immediately
  });

  startPolling(store, redraw);
  return store;
}
