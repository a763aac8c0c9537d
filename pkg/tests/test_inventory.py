import json
import random

import pytest

from ewaste.device import TelemetryMessage
from ewaste.inventory import (CorruptRecord, InsufficientStock, InvalidQuantity,
                              InvalidTransition, InventoryStore, UnknownCategory,
                              read_event_log, replay)
from ewaste.pricing import PriceTable

TABLE = PriceTable({"circuit_board": 120.0, "sensor": 300.0, "cable": 40.0}, "INR")


def msg(component="circuit_board", weight=500.0, ts=1000, device="dev1", conf=0.9):
    return TelemetryMessage(device, component, conf, weight, ts)


def fixed_clock():
    state = [0]

    def clock():
        state[0] += 1
        return state[0] * 1000
    return clock


class TestApplyTelemetry:
    def test_first_insert(self):
        store = InventoryStore(TABLE)
        item = store.apply_telemetry(msg())
        assert (item.quantity, item.total_weight_g) == (1, 500.0)

    def test_duplicate_delivery_is_idempotent(self):
        store = InventoryStore(TABLE)
        store.apply_telemetry(msg())
        before = store.list_components()
        store.apply_telemetry(msg())  # same (device_id, ts)
        assert store.list_components() == before

    def test_three_messages_accumulate(self):
        store = InventoryStore(TABLE)
        for ts in (1, 2, 3):
            store.apply_telemetry(msg(ts=ts))
        item = store.list_components()[0]
        assert (item.quantity, item.total_weight_g) == (3, 1500.0)
        assert item.anticipated_cost == 180.0  # 1.5 kg * 120/kg

    def test_same_ts_different_devices_both_count(self):
        store = InventoryStore(TABLE)
        store.apply_telemetry(msg(device="dev1", ts=5))
        store.apply_telemetry(msg(device="dev2", ts=5))
        assert store.list_components()[0].quantity == 2

    def test_unpriced_component_stocked_with_null_cost(self):
        store = InventoryStore(TABLE)
        item = store.apply_telemetry(msg(component="mystery_gadget"))
        assert item.anticipated_cost is None
        assert store.unpriced_warnings == 1


class TestListComponents:
    def test_empty(self):
        assert InventoryStore(TABLE).list_components() == []

    def test_sorted_by_category(self):
        store = InventoryStore(TABLE)
        store.apply_telemetry(msg(component="sensor", ts=1))
        store.apply_telemetry(msg(component="cable", ts=2))
        assert [i.category for i in store.list_components()] == ["cable", "sensor"]

    def test_snapshot_is_immutable_view(self):
        store = InventoryStore(TABLE)
        store.apply_telemetry(msg(ts=1))
        snapshot = store.list_components()
        store.apply_telemetry(msg(ts=2))
        assert snapshot[0].quantity == 1


class TestPlaceOrder:
    def stocked(self):
        store = InventoryStore(TABLE, clock=fixed_clock())
        for ts in (1, 2, 3, 4):
            store.apply_telemetry(msg(ts=ts))  # 4 units, 2000 g
        return store

    def test_pro_rata_weight(self):
        store = self.stocked()
        order = store.place_order("circuit_board", 2)
        assert order.weight_g == 1000.0
        assert order.amount == 120.0  # 1 kg * 120
        item = store.list_components()[0]
        assert (item.quantity, item.total_weight_g) == (2, 1000.0)

    def test_insufficient_stock_leaves_state_unchanged(self):
        store = self.stocked()
        before = store.list_components()
        with pytest.raises(InsufficientStock):
            store.place_order("circuit_board", 5)
        assert store.list_components() == before

    def test_zero_quantity_rejected(self):
        with pytest.raises(InvalidQuantity):
            self.stocked().place_order("circuit_board", 0)

    def test_non_integer_quantity_rejected(self):
        with pytest.raises(InvalidQuantity):
            self.stocked().place_order("circuit_board", 1.5)

    def test_unknown_category(self):
        with pytest.raises(UnknownCategory):
            self.stocked().place_order("gold_bar", 1)

    def test_full_stock_order_zeroes_weight_exactly(self):
        store = self.stocked()
        order = store.place_order("circuit_board", 4)
        assert order.weight_g == 2000.0
        item = store.list_components()[0]
        assert (item.quantity, item.total_weight_g) == (0, 0.0)

    def test_order_ids_are_sequential(self):
        store = self.stocked()
        first = store.place_order("circuit_board", 1)
        second = store.place_order("circuit_board", 1)
        assert (first.order_id, second.order_id) == ("ord-000001", "ord-000002")

    def test_get_order(self):
        store = self.stocked()
        order = store.place_order("circuit_board", 1)
        assert store.get_order(order.order_id) == order
        assert store.get_order("ord-999999") is None


class TestOrderTransitions:
    def test_fulfill(self):
        store = InventoryStore(TABLE)
        store.apply_telemetry(msg())
        order = store.place_order("circuit_board", 1)
        assert store.fulfill_order(order.order_id).status == "fulfilled"

    def test_cancel_restores_stock(self):
        store = InventoryStore(TABLE)
        store.apply_telemetry(msg())
        order = store.place_order("circuit_board", 1)
        store.cancel_order(order.order_id)
        item = store.list_components()[0]
        assert (item.quantity, item.total_weight_g) == (1, 500.0)

    def test_terminal_states_are_final(self):
        store = InventoryStore(TABLE)
        store.apply_telemetry(msg())
        order = store.place_order("circuit_board", 1)
        store.fulfill_order(order.order_id)
        with pytest.raises(InvalidTransition):
            store.cancel_order(order.order_id)


class TestConservation:
    def test_ingested_equals_stock_plus_orders(self):
        rng = random.Random(42)
        store = InventoryStore(TABLE)
        ingested = 0
        for ts in range(1, 40):
            weight = float(rng.randint(1, 500))
            store.apply_telemetry(msg(weight=weight, ts=ts))
            ingested += weight
        stock0 = store.list_components()[0]
        # partial order (integer-divisible), then order everything left
        order1 = store.place_order("circuit_board", 13)
        order2 = store.place_order("circuit_board",
                                   store.list_components()[0].quantity)
        stock = store.list_components()[0]
        assert stock.total_weight_g + order1.weight_g + order2.weight_g \
            == pytest.approx(ingested, rel=1e-12)
        assert stock.quantity == 0
        assert stock0.quantity == 39

    def test_exact_conservation_with_uniform_weights(self):
        store = InventoryStore(TABLE)
        for ts in range(1, 11):
            store.apply_telemetry(msg(weight=250.0, ts=ts))
        order = store.place_order("circuit_board", 4)
        stock = store.list_components()[0]
        assert order.weight_g == 1000.0
        assert stock.total_weight_g + order.weight_g == 2500.0  # exact


class TestEventLogReplay:
    def test_empty_log(self):
        store = replay(b"", TABLE)
        assert store.list_components() == []

    def test_replay_equals_live(self, tmp_path):
        rng = random.Random(7)
        path = tmp_path / "events.ndjson"
        live = InventoryStore(TABLE, log_path=path, clock=fixed_clock())
        components = ["circuit_board", "sensor", "cable", "mystery"]
        for ts in range(1, 60):
            live.apply_telemetry(msg(component=rng.choice(components),
                                     weight=float(rng.randint(0, 300)), ts=ts,
                                     device=rng.choice(["dev1", "dev2"])))
        order = live.place_order("circuit_board",
                                 max(1, live.list_components()[1].quantity // 2))
        live.cancel_order(order.order_id)
        second = live.place_order("sensor", 1)
        live.fulfill_order(second.order_id)
        live.close()

        restored = replay(path.read_bytes(), TABLE)
        assert restored.list_components() == live.list_components()
        assert restored.list_orders() == live.list_orders()

    def test_open_resumes_and_appends(self, tmp_path):
        path = tmp_path / "events.ndjson"
        first = InventoryStore.open(path, TABLE, clock=fixed_clock())
        first.apply_telemetry(msg(ts=1))
        first.close()
        second = InventoryStore.open(path, TABLE, clock=fixed_clock())
        second.apply_telemetry(msg(ts=2))
        assert second.list_components()[0].quantity == 2
        # order counter resumes from the log
        order = second.place_order("circuit_board", 1)
        assert order.order_id == "ord-000001"
        second.close()

    def test_replayed_duplicates_still_dedup(self, tmp_path):
        path = tmp_path / "events.ndjson"
        live = InventoryStore(TABLE, log_path=path)
        live.apply_telemetry(msg(ts=1))
        live.close()
        restored = InventoryStore.open(path, TABLE)
        restored.apply_telemetry(msg(ts=1))  # same key as the logged event
        assert restored.list_components()[0].quantity == 1
        restored.close()

    def test_truncated_final_line_is_corrupt(self):
        line = json.dumps({"type": "TelemetryApplied", "payload": {
            "device_id": "d", "component": "c", "confidence": 1.0,
            "weight_g": 1.0, "ts": 1}})
        data = (line + "\n" + line[: len(line) // 2]).encode()
        with pytest.raises(CorruptRecord) as err:
            read_event_log(data)
        assert err.value.line_number == 2

    def test_non_object_line_is_corrupt(self):
        with pytest.raises(CorruptRecord):
            read_event_log(b'[1, 2, 3]\n')
