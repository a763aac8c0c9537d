"""Marketplace service: MQTT telemetry feed plus the ordering HTTP API.

Endpoints (JSON bodies, UTF-8):

    GET  /components   -> current pallet stock, sorted by category
    POST /orders       -> 201 Order | 400 InvalidQuantity | 404 UnknownCategory
                          | 409 InsufficientStock
    GET  /orders/<id>  -> Order | 404
    GET  /healthz      -> 200

The MQTT side subscribes to ``ewaste/+/detections`` at QoS 1 and folds
each telemetry payload into the store; the store's (device_id, ts)
dedup makes redeliveries harmless.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import device, inventory
from .mqtt.client import Client

log = logging.getLogger(__name__)

TELEMETRY_FILTER = "ewaste/+/detections"


def pallet_item_to_json(item: inventory.PalletItem) -> dict:
    return {
        "category": item.category,
        "quantity": item.quantity,
        "total_weight_g": item.total_weight_g,
        "anticipated_cost": item.anticipated_cost,
        "currency_code": item.currency_code,
    }


def order_to_json(order: inventory.Order) -> dict:
    return {
        "order_id": order.order_id,
        "category": order.category,
        "quantity": order.quantity,
        "weight_g": order.weight_g,
        "amount": order.amount,
        "currency_code": order.currency_code,
        "status": order.status,
        "created_ts": order.created_ts,
    }


class InventoryHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    store: inventory.InventoryStore  # assigned by make_http_server

    def log_message(self, format, *args):  # route through logging, not stderr
        log.debug("http: " + format, *args)

    def _reply(self, status: int, body: dict | list) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, kind: str, detail: str) -> None:
        self._reply(status, {"error": kind, "detail": detail})

    def do_GET(self):
        if self.path == "/components":
            self._reply(200, [pallet_item_to_json(i) for i in self.store.list_components()])
        elif self.path == "/healthz":
            self._reply(200, {"status": "ok"})
        elif self.path.startswith("/orders/"):
            order_id = self.path[len("/orders/"):]
            order = self.store.get_order(order_id)
            if order is None:
                self._error(404, "UnknownOrder", f"no order {order_id!r}")
            else:
                self._reply(200, order_to_json(order))
        else:
            self._error(404, "NotFound", f"no route for {self.path}")

    def do_POST(self):
        if self.path != "/orders":
            self._error(404, "NotFound", f"no route for {self.path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length) or b"{}")
            category = body["category"]
            quantity = body["quantity"]
        except (ValueError, KeyError, TypeError) as exc:
            self._error(400, "MalformedRequest", f"expected {{category, quantity}}: {exc}")
            return
        try:
            order = self.store.place_order(category, quantity)
        except inventory.InvalidQuantity as exc:
            self._error(400, "InvalidQuantity", str(exc))
        except inventory.UnknownCategory as exc:
            self._error(404, "UnknownCategory", str(exc))
        except inventory.InsufficientStock as exc:
            self._error(409, "InsufficientStock", str(exc))
        else:
            self._reply(201, order_to_json(order))

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()


def make_http_server(store: inventory.InventoryStore,
                     host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the API server; port 0 picks a free port."""
    handler = type("BoundInventoryHandler", (InventoryHandler,), {"store": store})
    return ThreadingHTTPServer((host, port), handler)


class InventoryService:
    """Runs the store's two feeds: MQTT telemetry in, HTTP orders out."""

    def __init__(self, store: inventory.InventoryStore,
                 http_host: str = "127.0.0.1", http_port: int = 0,
                 client_id: str = "inventory-service"):
        self.store = store
        self.httpd = make_http_server(store, http_host, http_port)
        self.http_address = self.httpd.server_address
        self.client = Client(client_id)
        self.telemetry_errors = 0
        self._threads: list[threading.Thread] = []

    def start(self, broker_conn=None, broker_host: str | None = None,
              broker_port: int | None = None) -> None:
        """Connect the MQTT feed (transport or host/port) and serve HTTP."""
        if broker_conn is not None:
            self.client.connect(broker_conn)
        else:
            self.client.connect_tcp(broker_host, broker_port)
        self.client.subscribe(TELEMETRY_FILTER, qos=1)
        for target, name in ((self._feed_loop, "mqtt-feed"),
                             (self.httpd.serve_forever, "http")):
            thread = threading.Thread(target=target, daemon=True,
                                      name=f"inventory-{name}")
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        self.client.disconnect()
        self.client.messages.put(None)  # unblock the feed loop
        self.httpd.shutdown()
        self.httpd.server_close()
        self.store.close()
        for thread in self._threads:
            thread.join(timeout=2)

    def _feed_loop(self) -> None:
        while True:
            message = self.client.messages.get()
            if message is None:  # sentinel used by stop paths
                return
            try:
                msg = device.decode_telemetry(message.payload)
                self.store.apply_telemetry(msg)
            except (device.DeviceError, ValueError) as exc:
                self.telemetry_errors += 1
                log.warning("dropping bad telemetry on %s: %s", message.topic, exc)
