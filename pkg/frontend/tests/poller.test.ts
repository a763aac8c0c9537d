import { describe, expect, it } from 'vitest';

import { ComponentView, InventoryApi } from '../src/api.js';
import { InventoryPoller } from '../src/poller.js';

function component(category: string, quantity: number): ComponentView {
  return { category, quantity, total_weight_g: 100,
           anticipated_cost: 1, currency_code: 'INR' };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

describe('InventoryPoller', () => {
  it('applies updates in request order', async () => {
    const snapshots: ComponentView[][] = [];
    let call = 0;
    const api = {
      listComponents: async () => {
        call += 1;
        return [component('c', call)];
      },
    } as unknown as InventoryApi;

    const poller = new InventoryPoller(api, {
      onUpdate: (c) => snapshots.push(c),
      onStale: () => undefined,
    }, { intervalMs: 10 });
    poller.start();
    await sleep(100);
    poller.stop();

    const quantities = snapshots.map((s) => s[0].quantity);
    expect(quantities.length).toBeGreaterThan(2);
    expect(quantities).toEqual([...quantities].sort((a, b) => a - b));
  });

  it('keeps a single request in flight', async () => {
    let active = 0;
    let maxActive = 0;
    const api = {
      listComponents: async () => {
        active += 1;
        maxActive = Math.max(maxActive, active);
        await sleep(30);
        active -= 1;
        return [];
      },
    } as unknown as InventoryApi;

    const poller = new InventoryPoller(api, {
      onUpdate: () => undefined,
      onStale: () => undefined,
    }, { intervalMs: 1 });
    poller.start();
    void poller.refreshNow();
    void poller.refreshNow();
    await sleep(120);
    poller.stop();
    expect(maxActive).toBe(1);
  });

  it('backs off on failure and recovers on success', async () => {
    const staleErrors: unknown[] = [];
    const updates: ComponentView[][] = [];
    let failuresLeft = 2;
    const api = {
      listComponents: async () => {
        if (failuresLeft > 0) {
          failuresLeft -= 1;
          throw new Error('connection refused');
        }
        return [component('c', 7)];
      },
    } as unknown as InventoryApi;

    const poller = new InventoryPoller(api, {
      onUpdate: (c) => updates.push(c),
      onStale: (e) => staleErrors.push(e),
    }, { intervalMs: 10, maxBackoffMs: 40 });
    poller.start();
    await sleep(200);
    poller.stop();

    expect(staleErrors.length).toBe(2);
    expect(updates.length).toBeGreaterThan(0);
    expect(updates[0][0].quantity).toBe(7);
  });
});
