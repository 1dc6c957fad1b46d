// One mutable state bag shared by every tab, plus the busy latch that
// keeps the UI to a single in-flight mutating request.

import { ApiClient } from "./api.js";
import type { SessionInfo, SessionRequest } from "./api.js";

export class AppState {
  session: SessionInfo | null = null;
  /** The request that created the session, kept so a panel can re-create it
   * with one knob changed. */
  lastRequest: SessionRequest | null = null;
  selectedGroup: string | null = null;
  busy = false;

  constructor(public client: ApiClient) {}

  /** Run one mutating request with every control disabled. Returns null if
   * another mutation is already in flight. */
  async mutate<T>(work: () => Promise<T>): Promise<T | null> {
    if (this.busy) return null;
    this.busy = true;
    document.body.classList.add("busy");
    try {
      return await work();
    } finally {
      this.busy = false;
      document.body.classList.remove("busy");
    }
  }
}

export function errorBanner(container: HTMLElement, err: unknown): void {
  const div = document.createElement("div");
  div.className = "error-banner";
  div.textContent = err instanceof Error ? err.message : String(err);
  container.replaceChildren(div);
}

export function clearBanner(container: HTMLElement): void {
  container.replaceChildren();
}
