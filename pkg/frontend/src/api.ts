// Typed client for the inventory service HTTP API. The UI never computes
// prices or weights itself; everything rendered comes from these payloads.

export interface ComponentView {
  category: string;
  quantity: number;
  total_weight_g: number;
  anticipated_cost: number | null;
  currency_code: string | null;
}

export interface Order {
  order_id: string;
  category: string;
  quantity: number;
  weight_g: number;
  amount: number;
  currency_code: string;
  status: string;
  created_ts: number;
}

/** Error body the service returns for 4xx responses. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly kind: string,
    public readonly detail: string,
  ) {
    super(`${kind}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let kind = `HTTP ${response.status}`;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.error === 'string') {
      kind = body.error;
      detail = body.detail ?? detail;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  return new ApiError(response.status, kind, detail);
}

export class InventoryApi {
  constructor(private readonly baseUrl: string) {}

  async listComponents(): Promise<ComponentView[]> {
    const response = await fetch(`${this.baseUrl}/components`);
    if (!response.ok) {
      throw await parseError(response);
    }
    return response.json();
  }

  async placeOrder(category: string, quantity: number): Promise<Order> {
    const response = await fetch(`${this.baseUrl}/orders`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ category, quantity }),
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return response.json();
  }
}
