// Inventory polling loop: one request in flight at a time, exponential
// backoff while the service is unreachable, and a request-id guard so a
// late response can never overwrite a newer snapshot.

import { ComponentView, InventoryApi } from './api.js';

export interface PollerOptions {
  intervalMs?: number;
  maxBackoffMs?: number;
}

export interface PollerEvents {
  onUpdate: (components: ComponentView[]) => void;
  onStale: (error: unknown) => void;
}

const DEFAULT_INTERVAL_MS = 2000;

export class InventoryPoller {
  private readonly intervalMs: number;
  private readonly maxBackoffMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private stopped = true;
  private nextRequestId = 1;
  private lastAppliedId = 0;
  private currentDelay: number;

  constructor(
    private readonly api: InventoryApi,
    private readonly events: PollerEvents,
    options: PollerOptions = {},
  ) {
    this.intervalMs = options.intervalMs ?? DEFAULT_INTERVAL_MS;
    this.maxBackoffMs = options.maxBackoffMs ?? 30000;
    this.currentDelay = this.intervalMs;
  }

  start(): void {
    this.stopped = false;
    void this.poll();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** Immediate refresh, e.g. right after an order lands. */
  refreshNow(): Promise<void> {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    return this.poll();
  }

  private async poll(): Promise<void> {
    if (this.stopped || this.inFlight) {
      return;
    }
    this.inFlight = true;
    const requestId = this.nextRequestId++;
    try {
      const components = await this.api.listComponents();
      if (requestId > this.lastAppliedId) {
        this.lastAppliedId = requestId;
        this.events.onUpdate(components);
      }
      this.currentDelay = this.intervalMs;
    } catch (error) {
      this.events.onStale(error);
      this.currentDelay = Math.min(this.currentDelay * 2, this.maxBackoffMs);
    } finally {
      this.inFlight = false;
      if (!this.stopped) {
        this.timer = setTimeout(() => void this.poll(), this.currentDelay);
      }
    }
  }
}
