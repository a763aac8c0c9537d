import { afterEach, beforeEach, describe, expect, it } from 'vitest';

import { InventoryApi } from '../src/api.js';
import { InventoryApp } from '../src/app.js';
import { FixtureInventoryServer } from './fixture_server.js';

const THREE_CATEGORIES = [
  { category: 'cable', quantity: 2, total_weight_g: 1234,
    anticipated_cost: 49.38, currency_code: 'INR' },
  { category: 'circuit_board', quantity: 4, total_weight_g: 1500,
    anticipated_cost: 99.99, currency_code: 'INR' },
  { category: 'sensor', quantity: 1, total_weight_g: 250,
    anticipated_cost: 75, currency_code: 'INR' },
];

let server: FixtureInventoryServer;
let base: string;
let root: HTMLElement;
let app: InventoryApp | null = null;

beforeEach(async () => {
  server = new FixtureInventoryServer();
  base = await server.start();
  root = document.createElement('div');
  document.body.appendChild(root);
});

afterEach(async () => {
  app?.stop();
  app = null;
  root.remove();
  await server.stop();
});

function startApp(pollIntervalMs = 40): InventoryApp {
  app = new InventoryApp(root, new InventoryApi(base), { pollIntervalMs });
  app.start();
  return app;
}

function rows(): HTMLTableRowElement[] {
  return Array.from(root.querySelectorAll('#inventory-body tr'));
}

function cellText(row: HTMLTableRowElement, kind: string): string {
  return row.querySelector(`td[data-kind="${kind}"]`)?.textContent ?? '';
}

async function until(check: () => boolean, timeoutMs = 3000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!check()) {
    if (Date.now() > deadline) {
      throw new Error('condition never became true');
    }
    await new Promise((resolve) => setTimeout(resolve, 5));
  }
}

describe('inventory table', () => {
  it('renders weight, quantity, and cost for 3 categories exactly as served', async () => {
    server.components = structuredClone(THREE_CATEGORIES);
    startApp();
    await until(() => rows().length === 3);

    const [cable, board, sensor] = rows();
    expect(cellText(cable, 'category')).toBe('cable');
    expect(cellText(cable, 'quantity')).toBe('2');
    expect(cellText(cable, 'weight')).toBe('1.234 kg');  // kg to 3 decimals
    expect(cellText(cable, 'cost')).toBe('49.38 INR');

    // 99.99 is not derivable from any rate times weight: the UI must
    // show the served value, not a recomputed one.
    expect(cellText(board, 'category')).toBe('circuit_board');
    expect(cellText(board, 'quantity')).toBe('4');
    expect(cellText(board, 'weight')).toBe('1.500 kg');
    expect(cellText(board, 'cost')).toBe('99.99 INR');

    // money always carries exactly 2 decimals plus the currency code
    expect(cellText(sensor, 'cost')).toBe('75.00 INR');
  });

  it('shows the empty state when nothing is stocked', async () => {
    server.components = [];
    startApp();
    await until(() => !(root.querySelector('#empty-state') as HTMLElement).hidden
      || rows().length === 0);
    await until(() => server.requests.length >= 1);
    expect((root.querySelector('#empty-state') as HTMLElement).hidden).toBe(false);
    expect(rows()).toHaveLength(0);
  });

  it('marks unpriced categories instead of hiding them', async () => {
    server.components = [{ category: 'mystery', quantity: 1, total_weight_g: 10,
                           anticipated_cost: null, currency_code: null }];
    startApp();
    await until(() => rows().length === 1);
    expect(rows()[0].classList.contains('unpriced')).toBe(true);
    expect(cellText(rows()[0], 'cost')).toBe('—');
  });

  it('keeps the table and raises the staleness badge when the service dies', async () => {
    server.components = structuredClone(THREE_CATEGORIES);
    startApp(30);
    await until(() => rows().length === 3);
    const badge = root.querySelector('#staleness') as HTMLElement;
    expect(badge.hidden).toBe(true);

    await server.stop();
    await until(() => !badge.hidden);
    expect(rows()).toHaveLength(3);  // last good table retained
    expect((root.querySelector('#banner') as HTMLElement).hidden).toBe(false);
  });

  it('recovers from staleness once the service is back', async () => {
    server.components = structuredClone(THREE_CATEGORIES);
    const application = startApp(30);
    await until(() => rows().length === 3);
    await server.stop();
    const badge = root.querySelector('#staleness') as HTMLElement;
    await until(() => !badge.hidden);

    server = new FixtureInventoryServer();
    server.components = structuredClone(THREE_CATEGORIES);
    const paused = application;
    paused.stop();
    base = await server.start();
    // restart against the revived address
    app = new InventoryApp(root, new InventoryApi(base), { pollIntervalMs: 30 });
    app.start();
    await until(() => (root.querySelector('#staleness') as HTMLElement).hidden);
  });
});

describe('order form', () => {
  function select(): HTMLSelectElement {
    return root.querySelector('#order-category') as HTMLSelectElement;
  }

  function quantity(): HTMLInputElement {
    return root.querySelector('#order-quantity') as HTMLInputElement;
  }

  function submit(): HTMLButtonElement {
    return root.querySelector('#order-submit') as HTMLButtonElement;
  }

  function setQuantity(value: string): void {
    quantity().value = value;
    quantity().dispatchEvent(new Event('input', { bubbles: true }));
  }

  function setCategory(value: string): void {
    select().value = value;
    select().dispatchEvent(new Event('change', { bubbles: true }));
  }

  it('places an order, shows the confirmation, and renders the decrement on the next poll', async () => {
    server.components = structuredClone(THREE_CATEGORIES);
    startApp();
    await until(() => rows().length === 3);

    setCategory('circuit_board');
    setQuantity('2');
    expect(submit().disabled).toBe(false);
    submit().click();

    const confirmation = root.querySelector('#order-confirmation') as HTMLElement;
    await until(() => !confirmation.hidden);
    expect(confirmation.textContent).toContain('ord-000001');
    expect(confirmation.textContent).toContain('42.50 INR');  // served amount

    await until(() => {
      const row = rows().find((r) => r.dataset.category === 'circuit_board');
      return !!row && cellText(row, 'quantity') === '2';  // 4 - 2
    });
  });

  it('renders a 409 as an inline error and preserves the form', async () => {
    server.components = structuredClone(THREE_CATEGORIES);
    startApp(5000);  // long interval: no competing refresh mid-test
    await until(() => rows().length === 3);

    setCategory('circuit_board');
    setQuantity('3');
    server.force409 = true;  // race with another buyer
    submit().click();

    const error = root.querySelector('#order-error') as HTMLElement;
    await until(() => !error.hidden);
    expect(error.textContent).toContain('InsufficientStock');
    expect(select().value).toBe('circuit_board');  // form untouched
    expect(quantity().value).toBe('3');
    expect((root.querySelector('#order-confirmation') as HTMLElement).hidden).toBe(true);
  });

  it('disables submit when the quantity exceeds displayed stock', async () => {
    server.components = structuredClone(THREE_CATEGORIES);
    startApp();
    await until(() => rows().length === 3);

    setCategory('sensor');  // stock 1
    setQuantity('2');
    expect(submit().disabled).toBe(true);
    setQuantity('1');
    expect(submit().disabled).toBe(false);
    setQuantity('0');
    expect(submit().disabled).toBe(true);
    setQuantity('banana');
    expect(submit().disabled).toBe(true);
  });

  it('renders a 404 for a category that vanished server-side', async () => {
    server.components = structuredClone(THREE_CATEGORIES);
    startApp(5000);
    await until(() => rows().length === 3);
    setCategory('cable');
    setQuantity('1');
    server.components = server.components.filter((c) => c.category !== 'cable');
    submit().click();
    const error = root.querySelector('#order-error') as HTMLElement;
    await until(() => !error.hidden);
    expect(error.textContent).toContain('UnknownCategory');
  });
});
