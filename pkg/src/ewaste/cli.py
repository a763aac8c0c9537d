"""Single entry point wiring every subsystem into subcommands.

    ewaste broker serve   --bind 127.0.0.1:1883
    ewaste device run     --id dev1 --scenario FILE --detections FILE --broker HOST:PORT
    ewaste service run    --broker HOST:PORT --http 127.0.0.1:8080 --store FILE --prices FILE
    ewaste client sub     --topic 'ewaste/#'
    ewaste client pub     --topic T --payload P --qos 1
    ewaste dataset split  --coco FILE --fraction 0.8 --seed N --out-train F1 --out-test F2
    ewaste eval map       --ground-truth coco.json --predictions preds.ndjson --iou 0.5
    ewaste stats report   [--format text|json]
    ewaste demo           [--scenario FILE]

Configuration precedence: flags > environment (EWASTE_BROKER,
EWASTE_PRICES, EWASTE_STORE) > defaults. Exit codes: 0 success, 1 usage
error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import threading
import time
import urllib.error
import urllib.request
from pathlib import Path

from . import dataset, detect, device, inventory, pricing, service, stats
from .mqtt.broker import Broker
from .mqtt.client import Client

ENV_BROKER = "EWASTE_BROKER"
ENV_PRICES = "EWASTE_PRICES"
ENV_STORE = "EWASTE_STORE"

DEFAULT_BROKER = "127.0.0.1:1883"
DEFAULT_HTTP = "127.0.0.1:8080"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exceptions (exit code 1)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def parse_host_port(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise UsageError(f"address must be HOST:PORT, got {value!r}")
    try:
        return host, int(port)
    except ValueError:
        raise UsageError(f"port must be an integer, got {port!r}") from None


def _read_file(path: str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {path!r}: {exc}") from exc


def _env_default(args_value, env_name, fallback):
    if args_value is not None:
        return args_value
    return os.environ.get(env_name, fallback)


def _load_prices(path: str | None) -> pricing.PriceTable:
    path = _env_default(path, ENV_PRICES, None)
    if path is None:
        raise UsageError(f"price table required: pass --prices or set {ENV_PRICES}")
    return pricing.load_price_table(_read_file(path, "price table"))


# -- detector wiring ------------------------------------------------------------


def build_mock_detector(doc: dict) -> tuple[detect.MockDetector, dict[int, str]]:
    """Build a scripted detector from {image_id: [{category, score, bbox}]}.

    Category ids are assigned in sorted-name order; returns the detector
    plus the id -> name map stations use to label telemetry.
    """
    names = sorted({d["category"] for dets in doc.values() for d in dets})
    name_to_id = {name: i for i, name in enumerate(names, start=1)}
    scenario = {}
    for image_id, dets in doc.items():
        image_id = int(image_id)
        scenario[image_id] = [
            detect.Detection(image_id, name_to_id[d["category"]],
                             dataset.BoundingBox(*d["bbox"]), d["score"])
            for d in dets
        ]
    return detect.MockDetector(scenario), {i: n for n, i in name_to_id.items()}


def _publisher(client: Client):
    def publish(topic: str, payload: bytes, qos: int) -> None:
        try:
            client.publish(topic, payload, qos=qos)
        except Exception as exc:
            raise device.PublishFailure(str(exc)) from exc
    return publish


# -- subcommands ------------------------------------------------------------------


def cmd_broker_serve(args) -> int:
    host, port = parse_host_port(args.bind)
    broker = Broker()
    host, port = broker.listen(host, port)
    print(f"broker listening on {host}:{port}", file=sys.stderr)
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        return 0
    finally:
        broker.stop()


def cmd_device_run(args) -> int:
    broker = _env_default(args.broker, ENV_BROKER, DEFAULT_BROKER)
    host, port = parse_host_port(broker)
    events = device.load_scenario(_read_file(args.scenario, "scenario"))
    detections_doc = json.loads(_read_file(args.detections, "detections"))
    detector, categories = build_mock_detector(detections_doc)
    cal = device.CalibrationParams(args.tare, args.scale)
    client = Client(args.id)
    client.connect_tcp(host, port)
    try:
        run = device.run_station(args.id, events, cal, _publisher(client),
                                 detector, categories)
        client.flush(timeout=30)
    finally:
        client.disconnect()
    print(f"published {len(run.messages)} messages "
          f"(no_detection={run.no_detection} dropped={run.dropped} "
          f"clamped={run.clamped})")
    return 0


def cmd_service_run(args) -> int:
    broker = _env_default(args.broker, ENV_BROKER, DEFAULT_BROKER)
    bhost, bport = parse_host_port(broker)
    hhost, hport = parse_host_port(args.http)
    table = _load_prices(args.prices)
    store_path = _env_default(args.store, ENV_STORE, None)
    if store_path is None:
        raise UsageError(f"event log required: pass --store or set {ENV_STORE}")
    store = inventory.InventoryStore.open(store_path, table)
    svc = service.InventoryService(store, hhost, hport)
    svc.start(broker_host=bhost, broker_port=bport)
    shost, sport = svc.http_address
    print(f"inventory API on http://{shost}:{sport}, feeding from {broker}",
          file=sys.stderr)
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        return 0
    finally:
        svc.stop()


def cmd_client_sub(args) -> int:
    broker = _env_default(args.broker, ENV_BROKER, DEFAULT_BROKER)
    host, port = parse_host_port(broker)
    client = Client(args.id)
    client.connect_tcp(host, port)
    client.subscribe(args.topic, qos=args.qos)
    print(f"subscribed to {args.topic!r}", file=sys.stderr)
    try:
        while True:
            msg = client.messages.get()
            print(f"{msg.topic} {msg.payload.decode('utf-8', 'replace')}", flush=True)
    except KeyboardInterrupt:
        return 0
    finally:
        client.disconnect()


def cmd_client_pub(args) -> int:
    broker = _env_default(args.broker, ENV_BROKER, DEFAULT_BROKER)
    host, port = parse_host_port(broker)
    client = Client(args.id)
    client.connect_tcp(host, port)
    try:
        client.publish(args.topic, args.payload.encode(), qos=args.qos)
    finally:
        client.disconnect()
    return 0


def cmd_dataset_split(args) -> int:
    ds = dataset.parse_coco(_read_file(args.coco, "COCO annotation"))
    config = dataset.SplitConfig(train_fraction=args.fraction, seed=args.seed)
    train, test = dataset.stratified_split(ds, config)
    Path(args.out_train).write_bytes(dataset.emit_coco(train))
    Path(args.out_test).write_bytes(dataset.emit_coco(test))
    print(f"train: {len(train.images)} images, {len(train.annotations)} annotations")
    print(f"test:  {len(test.images)} images, {len(test.annotations)} annotations")
    return 0


def load_predictions(data: bytes) -> list[detect.Detection]:
    """Parse line-delimited JSON predictions, one Detection per line."""
    detections = []
    for line_number, raw in enumerate(data.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
            detections.append(detect.Detection(
                doc["image_id"], doc["category_id"],
                dataset.BoundingBox(*doc["bbox"]), doc["score"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad prediction on line {line_number}: {exc}") from exc
    return detections


def cmd_eval_map(args) -> int:
    ds = dataset.parse_coco(_read_file(args.ground_truth, "ground truth"))
    predictions = load_predictions(_read_file(args.predictions, "predictions"))
    report = detect.evaluate_detections(predictions, list(ds.annotations), args.iou)
    names = {c.id: c.name for c in ds.categories}
    if args.format == "json":
        doc = {
            "iou_threshold": args.iou,
            "per_class": {names.get(cid, f"category-{cid}"): {
                "ap": curve.ap, "num_ground_truths": curve.num_ground_truths}
                for cid, curve in report.per_class.items()},
            "map": report.map,
        }
        print(json.dumps(doc, sort_keys=True, indent=2))
        return 0
    for cid in sorted(report.per_class):
        curve = report.per_class[cid]
        label = names.get(cid, f"category-{cid}")
        suffix = "" if curve.num_ground_truths else " (no ground truth; excluded from mAP)"
        print(f"AP[{label}] {curve.ap:.4f}{suffix}")
    print(f"mAP {report.map:.4f}")
    return 0


def cmd_stats_report(args) -> int:
    if args.format == "json":
        sys.stdout.write(stats.render_json())
    else:
        sys.stdout.write(stats.render_text())
    return 0


# -- demo ------------------------------------------------------------------------

DEFAULT_DEMO_SCENARIO = {
    "prices": {
        "currency_code": "INR",
        "prices": {"circuit_board": 120.0, "sensor": 300.0, "cable": 40.0},
    },
    "devices": [
        {
            "device_id": "dev1",
            "tare": 1000.0,
            "scale": 0.25,
            "events": [
                {"image_id": 1, "raw": 3000.0, "ts": 1000},
                {"image_id": 2, "raw": 2200.0, "ts": 2000},
                {"image_id": 3, "raw": 1800.0, "ts": 3000},
                {"image_id": 1, "raw": 2600.0, "ts": 4000},
                {"image_id": 2, "raw": 1400.0, "ts": 5000},
            ],
            "detections": {
                "1": [{"category": "circuit_board", "score": 0.9, "bbox": [0, 0, 10, 10]}],
                "2": [{"category": "sensor", "score": 0.8, "bbox": [5, 5, 20, 10]}],
                "3": [{"category": "cable", "score": 0.7, "bbox": [2, 2, 30, 4]}],
            },
        },
        {
            "device_id": "dev2",
            "tare": 500.0,
            "scale": 0.5,
            "events": [
                {"image_id": 1, "raw": 1500.0, "ts": 1500},
                {"image_id": 2, "raw": 2500.0, "ts": 2500},
                {"image_id": 3, "raw": 900.0, "ts": 3500},
                {"image_id": 3, "raw": 1300.0, "ts": 4500},
                {"image_id": 1, "raw": 700.0, "ts": 5500},
            ],
            "detections": {
                "1": [{"category": "circuit_board", "score": 0.95, "bbox": [0, 0, 8, 8]}],
                "2": [{"category": "cable", "score": 0.6, "bbox": [1, 1, 12, 3]}],
                "3": [{"category": "sensor", "score": 0.85, "bbox": [4, 4, 6, 6]}],
            },
        },
    ],
    "orders": [{"category": "circuit_board", "quantity": 2}],
    "over_order": {"category": "circuit_board", "quantity": 9999},
}


def _http_json(method: str, url: str, body: dict | None = None) -> tuple[int, dict | list]:
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(url, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read() or b"{}")
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read() or b"{}")


def _run_demo_device(dev: dict, host: str, port: int) -> device.StationRun:
    detector, categories = build_mock_detector(dev["detections"])
    cal = device.CalibrationParams(dev["tare"], dev["scale"])
    events = [device.ScenarioEvent(e["image_id"], e["raw"], e["ts"])
              for e in dev["events"]]
    client = Client(dev["device_id"], retry_interval=1.0)
    client.connect_tcp(host, port)
    try:
        run = device.run_station(dev["device_id"], events, cal,
                                 _publisher(client), detector, categories)
        client.flush(timeout=30)
        return run
    finally:
        client.disconnect()


def cmd_demo(args) -> int:
    """Run broker + devices + inventory service end to end in one process."""
    if args.scenario:
        scenario = json.loads(_read_file(args.scenario, "demo scenario"))
    else:
        scenario = DEFAULT_DEMO_SCENARIO
    table = pricing.load_price_table(
        (json.dumps(scenario["prices"])).encode())

    expected_messages = sum(
        1 for dev in scenario["devices"] for event in dev["events"]
        if dev["detections"].get(str(event["image_id"])))

    # Orders get timestamps from a logical clock so two runs match exactly.
    base_ts = max((e["ts"] for dev in scenario["devices"] for e in dev["events"]),
                  default=0)
    tick = threading.Lock()
    counter = [0]

    def logical_clock() -> int:
        with tick:
            counter[0] += 1
            return base_ts + counter[0] * 1000

    broker = Broker(retry_interval=1.0)
    host, port = broker.listen("127.0.0.1", 0)
    with tempfile.TemporaryDirectory() as tmp:
        store = inventory.InventoryStore.open(Path(tmp) / "events.ndjson", table,
                                              clock=logical_clock)
        svc = service.InventoryService(store)
        svc.start(broker_host=host, broker_port=port)
        shost, sport = svc.http_address
        api = f"http://{shost}:{sport}"
        try:
            threads = [threading.Thread(target=_run_demo_device, args=(dev, host, port))
                       for dev in scenario["devices"]]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join(timeout=60)

            deadline = time.monotonic() + 30
            while time.monotonic() < deadline:
                total = sum(i.quantity for i in store.list_components())
                if total >= expected_messages:
                    break
                time.sleep(0.02)
            else:
                print("demo: timed out waiting for telemetry to drain", file=sys.stderr)
                return 2

            for order_request in scenario.get("orders", []):
                status, body = _http_json("POST", api + "/orders", order_request)
                if status != 201:
                    print(f"demo: order {order_request} failed with {status}: {body}",
                          file=sys.stderr)
                    return 2
            over = scenario.get("over_order")
            if over:
                status, body = _http_json("POST", api + "/orders", over)
                if status != 409:
                    print(f"demo: over-order expected 409, got {status}: {body}",
                          file=sys.stderr)
                    return 2

            status, components = _http_json("GET", api + "/components")
            final = {
                "components": components,
                "orders": [service.order_to_json(o) for o in store.list_orders()],
            }
            print(json.dumps(final, sort_keys=True, indent=2))
            return 0
        finally:
            svc.stop()
            broker.stop()


# -- dispatch -----------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="ewaste", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p_broker = sub.add_parser("broker", help="run the MQTT broker")
    broker_sub = p_broker.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    p = broker_sub.add_parser("serve", help="listen for MQTT connections")
    p.add_argument("--bind", default=DEFAULT_BROKER, metavar="HOST:PORT")
    p.set_defaults(func=cmd_broker_serve)

    p_device = sub.add_parser("device", help="run a simulated edge station")
    device_sub = p_device.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    p = device_sub.add_parser("run", help="replay a scenario and publish telemetry")
    p.add_argument("--id", required=True, help="device id (also the topic segment)")
    p.add_argument("--scenario", required=True, metavar="FILE",
                   help="JSON list of {image_id, raw, ts} events")
    p.add_argument("--detections", required=True, metavar="FILE",
                   help="JSON map image_id -> scripted detections")
    p.add_argument("--broker", metavar="HOST:PORT")
    p.add_argument("--tare", type=float, required=True, help="raw counts at zero load")
    p.add_argument("--scale", type=float, required=True, help="grams per raw count")
    p.set_defaults(func=cmd_device_run)

    p_service = sub.add_parser("service", help="run the inventory/order service")
    service_sub = p_service.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    p = service_sub.add_parser("run", help="subscribe to telemetry and serve the API")
    p.add_argument("--broker", metavar="HOST:PORT")
    p.add_argument("--http", default=DEFAULT_HTTP, metavar="HOST:PORT")
    p.add_argument("--store", metavar="FILE", help="append-only event log path")
    p.add_argument("--prices", metavar="FILE", help="price table JSON")
    p.set_defaults(func=cmd_service_run)

    p_client = sub.add_parser("client", help="ad-hoc MQTT client")
    client_sub = p_client.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    p = client_sub.add_parser("sub", help="subscribe and print messages")
    p.add_argument("--topic", required=True)
    p.add_argument("--qos", type=int, default=1, choices=(0, 1))
    p.add_argument("--broker", metavar="HOST:PORT")
    p.add_argument("--id", default="ewaste-sub")
    p.set_defaults(func=cmd_client_sub)
    p = client_sub.add_parser("pub", help="publish one message")
    p.add_argument("--topic", required=True)
    p.add_argument("--payload", required=True)
    p.add_argument("--qos", type=int, default=0, choices=(0, 1))
    p.add_argument("--broker", metavar="HOST:PORT")
    p.add_argument("--id", default="ewaste-pub")
    p.set_defaults(func=cmd_client_pub)

    p_dataset = sub.add_parser("dataset", help="annotation tools")
    dataset_sub = p_dataset.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    p = dataset_sub.add_parser("split", help="stratified train/test split")
    p.add_argument("--coco", required=True, metavar="FILE")
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True, metavar="FILE")
    p.add_argument("--out-test", required=True, metavar="FILE")
    p.set_defaults(func=cmd_dataset_split)

    p_eval = sub.add_parser("eval", help="detection evaluation")
    eval_sub = p_eval.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    p = eval_sub.add_parser("map", help="per-class AP and mAP")
    p.add_argument("--ground-truth", required=True, metavar="FILE")
    p.add_argument("--predictions", required=True, metavar="FILE")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_eval_map)

    p_stats = sub.add_parser("stats", help="e-waste statistics")
    stats_sub = p_stats.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    p = stats_sub.add_parser("report", help="growth rates, CAGR, category shares")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_stats_report)

    p = sub.add_parser("demo", help="broker + 2 devices + service, end to end")
    p.add_argument("--scenario", metavar="FILE", help="demo scenario JSON")
    p.set_defaults(func=cmd_demo)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # runtime failure, not usage
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
