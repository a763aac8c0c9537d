"""Simulated edge station: load-cell calibration, weighing, and telemetry.

Raw readings are treated as already-digitized ADC counts (real hardware
would put an amplifier/ADC stage in front of the analogue cell). A
two-point calibration maps counts to grams; the station loop pairs each
scripted frame's best detection with the converted weight and publishes
one telemetry message per detected frame.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .detect import Detection


class DeviceError(Exception):
    pass


class DegenerateCalibration(DeviceError):
    """Known-mass reading equals the zero reading; scale is undefined."""


class NegativeScale(DeviceError):
    """Known-mass reading is below the zero reading."""


class PublishFailure(DeviceError):
    """Raised by a publisher when the transport rejects a message."""


@dataclass(frozen=True)
class CalibrationParams:
    tare_offset: float  # raw counts at zero load
    scale: float        # grams per count

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError(f"scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class LoadCellReading:
    raw: float
    timestamp: int  # ms since epoch

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


@dataclass(frozen=True)
class WeightMeasurement:
    grams: float
    timestamp: int
    clamped: bool = False  # raw fell below tare; reading clamped to 0


@dataclass(frozen=True)
class TelemetryMessage:
    """Wire payload published for each detected component."""

    device_id: str
    component: str
    confidence: float
    weight_g: float
    timestamp: int

    def __post_init__(self):
        if not self.component:
            raise ValueError("component must be non-empty")
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")
        if self.weight_g < 0:
            raise ValueError(f"weight must be >= 0, got {self.weight_g}")


def calibrate_two_point(raw_zero: float, raw_known: float,
                        known_mass_g: float) -> CalibrationParams:
    """Derive tare and scale from a zero-load and a known-mass reading."""
    if known_mass_g <= 0:
        raise ValueError(f"known mass must be > 0, got {known_mass_g}")
    if raw_known == raw_zero:
        raise DegenerateCalibration("known-mass reading equals zero reading")
    if raw_known < raw_zero:
        raise NegativeScale("known-mass reading below zero reading; check wiring")
    return CalibrationParams(tare_offset=raw_zero,
                             scale=known_mass_g / (raw_known - raw_zero))


def adc_to_weight(reading: LoadCellReading, cal: CalibrationParams) -> WeightMeasurement:
    """Convert a raw reading to grams: max(0, (raw - tare) * scale)."""
    grams = (reading.raw - cal.tare_offset) * cal.scale
    if grams < 0:
        return WeightMeasurement(0.0, reading.timestamp, clamped=True)
    return WeightMeasurement(grams, reading.timestamp)


def synthesize_raw(mass_g: float, cal: CalibrationParams,
                   noise_sigma: float = 0.0,
                   rng: random.Random | None = None) -> float:
    """Raw counts a noiseless (or Gaussian-noised) cell would report."""
    raw = cal.tare_offset + mass_g / cal.scale
    if noise_sigma > 0:
        raw += (rng or random).gauss(0.0, noise_sigma)
    return raw


def telemetry_topic(device_id: str) -> str:
    return f"ewaste/{device_id}/detections"


def encode_telemetry(msg: TelemetryMessage) -> bytes:
    doc = {
        "device_id": msg.device_id,
        "component": msg.component,
        "confidence": msg.confidence,
        "weight_g": msg.weight_g,
        "ts": msg.timestamp,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def decode_telemetry(data: bytes) -> TelemetryMessage:
    """Parse a telemetry payload; unknown fields are ignored."""
    try:
        doc = json.loads(data)
        return TelemetryMessage(
            device_id=doc["device_id"],
            component=doc["component"],
            confidence=doc["confidence"],
            weight_g=doc["weight_g"],
            timestamp=doc["ts"],
        )
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DeviceError(f"bad telemetry payload: {exc}") from exc


@dataclass(frozen=True)
class ScenarioEvent:
    """One scripted station tick: a frame to detect plus a raw reading."""

    image_id: int
    raw: float
    ts: int


def load_scenario(data: bytes) -> list[ScenarioEvent]:
    """Parse a scenario file: a JSON list of {image_id, raw, ts} events."""
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DeviceError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise DeviceError("scenario must be a JSON list of events")
    try:
        return [ScenarioEvent(e["image_id"], e["raw"], e["ts"]) for e in doc]
    except (KeyError, TypeError) as exc:
        raise DeviceError(f"bad scenario event: {exc}") from exc


class Detector(Protocol):
    def detect(self, image_id: int, frame=None) -> list[Detection]: ...


Publisher = Callable[[str, bytes, int], None]


@dataclass
class StationRun:
    """What one station published, plus drop/skip counters."""

    messages: list[TelemetryMessage] = field(default_factory=list)
    no_detection: int = 0
    dropped: int = 0
    clamped: int = 0


def run_station(device_id: str,
                events: Sequence[ScenarioEvent],
                cal: CalibrationParams,
                publisher: Publisher,
                detector: Detector,
                categories: dict[int, str] | None = None,
                qos: int = 1) -> StationRun:
    """Drive one station through its scenario, publishing telemetry.

    Per event: run the detector, take the highest-scored detection (ties
    to the earliest), convert the raw reading to grams, and publish one
    message to ``ewaste/<device_id>/detections``. Events with no
    detections publish nothing. A failed publish is retried once, then
    the message is dropped and counted.
    """
    run = StationRun()
    topic = telemetry_topic(device_id)
    for event in events:
        detections = detector.detect(event.image_id)
        if not detections:
            run.no_detection += 1
            continue
        best = max(enumerate(detections), key=lambda pair: (pair[1].score, -pair[0]))[1]
        weight = adc_to_weight(LoadCellReading(event.raw, event.ts), cal)
        if weight.clamped:
            run.clamped += 1
        component = (categories or {}).get(best.category_id, str(best.category_id))
        msg = TelemetryMessage(device_id, component, best.score, weight.grams, event.ts)
        payload = encode_telemetry(msg)
        try:
            publisher(topic, payload, qos)
        except PublishFailure:
            try:
                publisher(topic, payload, qos)
            except PublishFailure:
                run.dropped += 1
                continue
        run.messages.append(msg)
    return run
