"""Event-sourced pallet inventory and order book.

Telemetry messages accumulate per-category stock (quantity, weight,
anticipated cost); orders draw it down with pro-rata weights so total
weight is conserved. Every state change is appended to a line-delimited
JSON event log, and replaying that log reconstructs the exact state.
All mutations funnel through one lock; reads return snapshots.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

from . import pricing
from .device import TelemetryMessage


class InventoryError(Exception):
    pass


class UnknownCategory(InventoryError):
    pass


class InsufficientStock(InventoryError):
    pass


class InvalidQuantity(InventoryError):
    pass


class InvalidTransition(InventoryError):
    pass


class CorruptRecord(InventoryError):
    """Event log line failed to parse; carries the 1-based line number."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"corrupt event record at line {line_number}: {reason}")
        self.line_number = line_number


@dataclass(frozen=True)
class PalletItem:
    """Aggregated stock of one category."""

    category: str
    quantity: int
    total_weight_g: float
    anticipated_cost: float | None  # None when the category has no price
    currency_code: str | None


ORDER_STATUSES = ("placed", "fulfilled", "cancelled")


@dataclass(frozen=True)
class Order:
    order_id: str
    category: str
    quantity: int
    weight_g: float
    amount: float
    currency_code: str
    status: str
    created_ts: int


def _now_ms() -> int:
    return int(time.time() * 1000)


class InventoryStore:
    """Single-writer inventory state backed by an append-only event log.

    ``log_path=None`` keeps the store in memory (tests). Use
    :meth:`open` to replay an existing log file and continue appending
    to it. ``clock`` supplies order timestamps in ms (injectable so
    scripted runs are reproducible).
    """

    def __init__(self, price_table: pricing.PriceTable,
                 log_path: str | Path | None = None,
                 clock=None):
        self._prices = price_table
        self._lock = threading.Lock()
        self._clock = clock or _now_ms
        self._stock: dict[str, dict] = {}  # category -> {quantity, weight_g}
        self._orders: dict[str, Order] = {}
        self._order_seq = 0
        self._seen: set[tuple[str, int]] = set()  # (device_id, ts) dedup keys
        self.unpriced_warnings = 0
        self._log_path = Path(log_path) if log_path is not None else None
        self._log_file = (self._log_path.open("a", encoding="utf-8")
                          if self._log_path is not None else None)

    @classmethod
    def open(cls, log_path: str | Path, price_table: pricing.PriceTable,
             clock=None) -> "InventoryStore":
        """Replay an existing event log (if any) and keep appending to it."""
        path = Path(log_path)
        events = []
        if path.exists():
            events = read_event_log(path.read_bytes())
        store = cls(price_table, log_path=path, clock=clock)
        for event in events:
            store._apply_event(event)
        return store

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    # -- queries -------------------------------------------------------------

    def list_components(self) -> list[PalletItem]:
        """Snapshot of current stock, sorted by category name."""
        with self._lock:
            return [self._pallet_item(category) for category in sorted(self._stock)]

    def get_order(self, order_id: str) -> Order | None:
        with self._lock:
            return self._orders.get(order_id)

    def list_orders(self) -> list[Order]:
        with self._lock:
            return sorted(self._orders.values(), key=lambda o: o.order_id)

    def _pallet_item(self, category: str) -> PalletItem:
        entry = self._stock[category]
        cost = currency = None
        if category in self._prices:
            q = pricing.quote(category, entry["weight_g"], self._prices)
            cost, currency = q.amount, q.currency_code
        return PalletItem(category, entry["quantity"], entry["weight_g"], cost, currency)

    # -- commands ------------------------------------------------------------

    def apply_telemetry(self, msg: TelemetryMessage) -> PalletItem:
        """Fold one telemetry message into stock.

        Idempotent for redeliveries: exact duplicate (device_id, ts)
        pairs are dropped, which makes QoS-1 at-least-once delivery safe.
        Components missing from the price table are stocked anyway with
        a null cost and counted in ``unpriced_warnings``.
        """
        if not msg.component:
            raise ValueError("telemetry component must be non-empty")
        if msg.weight_g < 0:
            raise ValueError("telemetry weight must be >= 0")
        with self._lock:
            item = self._ingest(msg)
            if item is not None:
                self._record("TelemetryApplied", {
                    "device_id": msg.device_id, "component": msg.component,
                    "confidence": msg.confidence, "weight_g": msg.weight_g,
                    "ts": msg.timestamp,
                })
                return item
            return self._pallet_item(msg.component)

    def _ingest(self, msg: TelemetryMessage) -> PalletItem | None:
        key = (msg.device_id, msg.timestamp)
        if key in self._seen:
            return None
        self._seen.add(key)
        entry = self._stock.setdefault(msg.component, {"quantity": 0, "weight_g": 0.0})
        entry["quantity"] += 1
        entry["weight_g"] += msg.weight_g
        if msg.component not in self._prices:
            self.unpriced_warnings += 1
        return self._pallet_item(msg.component)

    def place_order(self, category: str, quantity: int) -> Order:
        """Reserve ``quantity`` units; weight is the pro-rata stock share.

        All-or-nothing: InsufficientStock leaves state untouched. The
        amount is quoted at placement and never re-priced.
        """
        if not isinstance(quantity, int) or isinstance(quantity, bool) or quantity < 1:
            raise InvalidQuantity(f"quantity must be a positive integer, got {quantity!r}")
        with self._lock:
            entry = self._stock.get(category)
            if entry is None:
                raise UnknownCategory(f"no stock for category {category!r}")
            if category not in self._prices:
                raise UnknownCategory(f"category {category!r} has no price; cannot quote an order")
            if entry["quantity"] < quantity:
                raise InsufficientStock(
                    f"requested {quantity} of {category!r}, only {entry['quantity']} in stock")
            order = self._reserve(category, quantity, self._clock())
            self._record("OrderPlaced", {
                "order_id": order.order_id, "category": order.category,
                "quantity": order.quantity, "weight_g": order.weight_g,
                "amount": order.amount, "currency_code": order.currency_code,
                "created_ts": order.created_ts,
            })
            return order

    def _reserve(self, category: str, quantity: int, created_ts: int) -> Order:
        entry = self._stock[category]
        if quantity == entry["quantity"]:
            weight = entry["weight_g"]  # full stock: avoid a rounding residue
        else:
            weight = entry["weight_g"] * quantity / entry["quantity"]
        q = pricing.quote(category, weight, self._prices)
        entry["quantity"] -= quantity
        entry["weight_g"] = entry["weight_g"] - weight if entry["quantity"] else 0.0
        self._order_seq += 1
        order = Order(order_id=f"ord-{self._order_seq:06d}", category=category,
                      quantity=quantity, weight_g=weight, amount=q.amount,
                      currency_code=q.currency_code, status="placed",
                      created_ts=created_ts)
        self._orders[order.order_id] = order
        return order

    def fulfill_order(self, order_id: str) -> Order:
        return self._transition(order_id, "fulfilled", "OrderFulfilled")

    def cancel_order(self, order_id: str) -> Order:
        """Cancel a placed order, returning its units and weight to stock."""
        return self._transition(order_id, "cancelled", "OrderCancelled")

    def _transition(self, order_id: str, status: str, event_type: str) -> Order:
        with self._lock:
            order = self._orders.get(order_id)
            if order is None:
                raise UnknownCategory(f"no such order {order_id!r}")
            if order.status != "placed":
                raise InvalidTransition(
                    f"order {order_id} is {order.status}; only placed orders can change")
            updated = replace(order, status=status)
            self._orders[order_id] = updated
            if status == "cancelled":
                entry = self._stock.setdefault(order.category,
                                               {"quantity": 0, "weight_g": 0.0})
                entry["quantity"] += order.quantity
                entry["weight_g"] += order.weight_g
            self._record(event_type, {"order_id": order_id, "ts": self._clock()})
            return updated

    # -- event log -------------------------------------------------------------

    def _record(self, event_type: str, payload: dict) -> None:
        if self._log_file is None:
            return
        line = json.dumps({"type": event_type, "payload": payload},
                          sort_keys=True, separators=(",", ":"))
        self._log_file.write(line + "\n")
        self._log_file.flush()

    def _apply_event(self, event: dict) -> None:
        etype = event["type"]
        payload = event["payload"]
        if etype == "TelemetryApplied":
            msg = TelemetryMessage(payload["device_id"], payload["component"],
                                   payload["confidence"], payload["weight_g"],
                                   payload["ts"])
            with self._lock:
                self._ingest(msg)
        elif etype == "OrderPlaced":
            with self._lock:
                order = Order(payload["order_id"], payload["category"],
                              payload["quantity"], payload["weight_g"],
                              payload["amount"], payload["currency_code"],
                              "placed", payload["created_ts"])
                entry = self._stock.setdefault(order.category,
                                               {"quantity": 0, "weight_g": 0.0})
                entry["quantity"] -= order.quantity
                entry["weight_g"] = (entry["weight_g"] - order.weight_g
                                     if entry["quantity"] else 0.0)
                self._orders[order.order_id] = order
                self._order_seq = max(self._order_seq, int(order.order_id.split("-")[1]))
        elif etype == "OrderFulfilled":
            with self._lock:
                order = self._orders[payload["order_id"]]
                self._orders[order.order_id] = replace(order, status="fulfilled")
        elif etype == "OrderCancelled":
            with self._lock:
                order = self._orders[payload["order_id"]]
                self._orders[order.order_id] = replace(order, status="cancelled")
                entry = self._stock.setdefault(order.category,
                                               {"quantity": 0, "weight_g": 0.0})
                entry["quantity"] += order.quantity
                entry["weight_g"] += order.weight_g
        else:
            raise InventoryError(f"unknown event type {etype!r}")


def read_event_log(data: bytes) -> list[dict]:
    """Parse an event log; CorruptRecord names the first bad line."""
    events = []
    for line_number, raw in enumerate(data.split(b"\n"), start=1):
        if not raw:
            continue
        try:
            event = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptRecord(line_number, str(exc)) from exc
        if not isinstance(event, dict) or "type" not in event or "payload" not in event:
            raise CorruptRecord(line_number, "missing 'type' or 'payload'")
        events.append(event)
    return events


def replay(data: bytes, price_table: pricing.PriceTable,
           clock=None) -> InventoryStore:
    """Rebuild an in-memory store from raw event log bytes."""
    store = InventoryStore(price_table, clock=clock)
    for event in read_event_log(data):
        store._apply_event(event)
    return store
