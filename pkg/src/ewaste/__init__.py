"""Desk-scale e-waste segregation pipeline.

Simulated edge stations detect and weigh e-waste components, publish
telemetry over a minimal self-built MQTT stack, and feed a pricing and
pallet-inventory service with an HTTP ordering API. A companion toolkit
covers annotation ingest, stratified splitting, augmentation geometry,
and IoU/mAP evaluation.
"""

__version__ = "0.1.0"
