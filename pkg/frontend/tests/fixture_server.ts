// Scriptable stand-in for the inventory service: same routes, same JSON
// shapes, same status codes, with knobs for forcing failure modes.

import { createServer, IncomingMessage, Server, ServerResponse } from 'node:http';
import { AddressInfo } from 'node:net';

export interface FixtureComponent {
  category: string;
  quantity: number;
  total_weight_g: number;
  anticipated_cost: number | null;
  currency_code: string | null;
}

export class FixtureInventoryServer {
  private server: Server | null = null;
  private orderSeq = 0;
  components: FixtureComponent[] = [];
  force409 = false;
  requests: string[] = [];

  async start(): Promise<string> {
    this.server = createServer((request, response) => {
      void this.handle(request, response);
    });
    await new Promise<void>((resolve) =>
      this.server!.listen(0, '127.0.0.1', resolve));
    const { address, port } = this.server!.address() as AddressInfo;
    return `http://${address}:${port}`;
  }

  async stop(): Promise<void> {
    if (this.server) {
      this.server.closeAllConnections();
      await new Promise<void>((resolve, reject) =>
        this.server!.close((err) => (err ? reject(err) : resolve())));
      this.server = null;
    }
  }

  private async handle(request: IncomingMessage, response: ServerResponse): Promise<void> {
    this.requests.push(`${request.method} ${request.url}`);
    if (request.method === 'OPTIONS') {
      response.writeHead(204, CORS_HEADERS);
      response.end();
      return;
    }
    if (request.method === 'GET' && request.url === '/components') {
      return reply(response, 200, this.components);
    }
    if (request.method === 'POST' && request.url === '/orders') {
      const body = JSON.parse(await readBody(request));
      return this.placeOrder(body, response);
    }
    reply(response, 404, { error: 'NotFound', detail: `no route for ${request.url}` });
  }

  private placeOrder(body: { category: string; quantity: number },
                     response: ServerResponse): void {
    const item = this.components.find((c) => c.category === body.category);
    if (!item) {
      return reply(response, 404, {
        error: 'UnknownCategory', detail: `no stock for ${body.category}` });
    }
    if (!Number.isInteger(body.quantity) || body.quantity < 1) {
      return reply(response, 400, {
        error: 'InvalidQuantity', detail: `got ${body.quantity}` });
    }
    if (this.force409 || body.quantity > item.quantity) {
      return reply(response, 409, {
        error: 'InsufficientStock',
        detail: `requested ${body.quantity}, only ${item.quantity} in stock` });
    }
    const weight = item.total_weight_g * body.quantity / item.quantity;
    item.quantity -= body.quantity;
    item.total_weight_g = item.quantity === 0 ? 0 : item.total_weight_g - weight;
    this.orderSeq += 1;
    reply(response, 201, {
      order_id: `ord-${String(this.orderSeq).padStart(6, '0')}`,
      category: body.category,
      quantity: body.quantity,
      weight_g: weight,
      amount: 42.5,  // deliberately not derivable client-side
      currency_code: item.currency_code ?? 'INR',
      status: 'placed',
      created_ts: 1700000000000,
    });
  }
}

const CORS_HEADERS = {
  'Access-Control-Allow-Origin': '*',
  'Access-Control-Allow-Methods': 'GET, POST, OPTIONS',
  'Access-Control-Allow-Headers': 'Content-Type',
};

function reply(response: ServerResponse, status: number, body: unknown): void {
  const data = JSON.stringify(body);
  response.writeHead(status, {
    'Content-Type': 'application/json',
    'Content-Length': Buffer.byteLength(data),
    ...CORS_HEADERS,
  });
  response.end(data);
}

function readBody(request: IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    request.on('data', (chunk) => chunks.push(chunk));
    request.on('end', () => resolve(Buffer.concat(chunks).toString('utf-8')));
    request.on('error', reject);
  });
}
