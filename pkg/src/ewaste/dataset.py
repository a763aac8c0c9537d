"""Annotation ingest, train/test splitting, and geometry-preserving transforms.

Supports two ground-truth formats: COCO-style JSON (images/annotations/
categories, bbox as [x, y, w, h]) and VIA project exports (rect regions
with a ``class`` region attribute). Pixel data is never touched; every
operation works on box coordinates and image metadata only.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from enum import Enum


class DatasetError(Exception):
    """Base class for annotation-ingest failures."""


class MalformedDocument(DatasetError):
    """Input is not valid JSON or is missing required structure."""


class DanglingReference(DatasetError):
    """An annotation references an image or category that does not exist."""


class DegenerateBox(DatasetError):
    """Bounding box with non-positive extent or negative origin."""


class UnsupportedShape(DatasetError):
    """VIA region whose shape is not an axis-aligned rect."""


class MissingClassAttribute(DatasetError):
    """VIA region without a class label in its region_attributes."""


class EmptyStratum(DatasetError):
    """A category has zero images (raised only in strict split mode)."""


class ZeroDimension(DatasetError):
    """Resize target or image side is not positive."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates: top-left corner plus extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise DegenerateBox(f"box extent must be positive, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise DegenerateBox(f"box origin must be non-negative, got x={self.x} y={self.y}")

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class CategoryLabel:
    id: int
    name: str


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class Annotation:
    annotation_id: int
    image_id: int
    category_id: int
    bbox: BoundingBox


@dataclass(frozen=True)
class Dataset:
    """Images, annotations, and categories with referential integrity."""

    images: tuple[ImageRecord, ...]
    annotations: tuple[Annotation, ...]
    categories: tuple[CategoryLabel, ...]

    def counts(self) -> tuple[int, int, int]:
        return (len(self.images), len(self.annotations), len(self.categories))

    def annotations_for_image(self, image_id: int) -> list[Annotation]:
        return [a for a in self.annotations if a.image_id == image_id]


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")


class Transform(str, Enum):
    HORIZONTAL_FLIP = "horizontal_flip"
    VERTICAL_FLIP = "vertical_flip"
    ROTATE_90 = "rotate_90"
    ROTATE_180 = "rotate_180"
    ROTATE_270 = "rotate_270"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise MalformedDocument(message)


def parse_coco(data: bytes) -> Dataset:
    """Parse a COCO annotation document into a validated :class:`Dataset`.

    Raises MalformedDocument for structural problems, DanglingReference
    when an annotation points at an unknown image or category, and
    DegenerateBox for boxes with non-positive extent.
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        _require(key in doc, f"missing top-level key {key!r}")
        _require(isinstance(doc[key], list), f"{key!r} must be a list")

    images = []
    image_ids = set()
    for entry in doc["images"]:
        _require(isinstance(entry, dict), "image entry must be an object")
        for f in ("id", "file_name", "width", "height"):
            _require(f in entry, f"image entry missing field {f!r}")
        _require(entry["id"] not in image_ids, f"duplicate image id {entry['id']}")
        _require(entry["width"] > 0 and entry["height"] > 0,
                 f"image {entry['id']} has non-positive dimensions")
        image_ids.add(entry["id"])
        images.append(ImageRecord(entry["id"], entry["file_name"],
                                  entry["width"], entry["height"]))

    categories = []
    category_ids = set()
    category_names = set()
    for entry in doc["categories"]:
        _require(isinstance(entry, dict), "category entry must be an object")
        for f in ("id", "name"):
            _require(f in entry, f"category entry missing field {f!r}")
        _require(entry["id"] not in category_ids, f"duplicate category id {entry['id']}")
        _require(entry["name"] not in category_names and entry["name"] != "",
                 f"category names must be unique and non-empty, got {entry['name']!r}")
        category_ids.add(entry["id"])
        category_names.add(entry["name"])
        categories.append(CategoryLabel(entry["id"], entry["name"]))

    annotations = []
    annotation_ids = set()
    for entry in doc["annotations"]:
        _require(isinstance(entry, dict), "annotation entry must be an object")
        for f in ("id", "image_id", "category_id", "bbox"):
            _require(f in entry, f"annotation entry missing field {f!r}")
        _require(entry["id"] not in annotation_ids, f"duplicate annotation id {entry['id']}")
        annotation_ids.add(entry["id"])
        if entry["image_id"] not in image_ids:
            raise DanglingReference(
                f"annotation {entry['id']} references unknown image {entry['image_id']}")
        if entry["category_id"] not in category_ids:
            raise DanglingReference(
                f"annotation {entry['id']} references unknown category {entry['category_id']}")
        bbox = entry["bbox"]
        _require(isinstance(bbox, list) and len(bbox) == 4,
                 f"annotation {entry['id']} bbox must be a 4-element array")
        annotations.append(Annotation(entry["id"], entry["image_id"],
                                      entry["category_id"], BoundingBox(*bbox)))

    # Normalized id order makes parse -> emit -> parse a fixed point.
    return Dataset(tuple(sorted(images, key=lambda im: im.image_id)),
                   tuple(sorted(annotations, key=lambda a: a.annotation_id)),
                   tuple(sorted(categories, key=lambda c: c.id)))


def emit_coco(dataset: Dataset) -> bytes:
    """Serialize a dataset to canonical COCO JSON.

    Canonical form: entries sorted by id, object keys sorted, compact
    separators, trailing newline. parse_coco(emit_coco(d)) == d.
    """
    doc = {
        "images": [
            {"id": im.image_id, "file_name": im.file_name,
             "width": im.width, "height": im.height}
            for im in sorted(dataset.images, key=lambda im: im.image_id)
        ],
        "annotations": [
            {"id": a.annotation_id, "image_id": a.image_id, "category_id": a.category_id,
             "bbox": [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h]}
            for a in sorted(dataset.annotations, key=lambda a: a.annotation_id)
        ],
        "categories": [
            {"id": c.id, "name": c.name}
            for c in sorted(dataset.categories, key=lambda c: c.id)
        ],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()


def parse_via(data: bytes) -> Dataset:
    """Parse a VIA project export (rect regions only) into a Dataset.

    Category ids are assigned in sorted class-name order starting at 1.
    Image ids follow sorted file-name order. VIA exports carry no image
    dimensions, so width/height come from file_attributes when present
    and otherwise from the tight bounds of the file's regions.
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top level must be a JSON object")
    if "_via_img_metadata" in doc:
        doc = doc["_via_img_metadata"]
        _require(isinstance(doc, dict), "_via_img_metadata must be an object")

    files = []  # (file_name, [(bbox, class_name), ...], declared dims)
    class_names = set()
    for key, entry in doc.items():
        _require(isinstance(entry, dict), f"file entry {key!r} must be an object")
        file_name = entry.get("filename", key)
        regions = entry.get("regions", [])
        if isinstance(regions, dict):  # VIA 1.x exports regions as a dict
            regions = [regions[k] for k in sorted(regions)]
        boxes = []
        for region in regions:
            shape = region.get("shape_attributes", {})
            if shape.get("name") != "rect":
                raise UnsupportedShape(
                    f"region in {file_name!r} has shape {shape.get('name')!r}, only rect supported")
            cls = region.get("region_attributes", {}).get("class")
            if not cls:
                raise MissingClassAttribute(f"region in {file_name!r} has no class attribute")
            bbox = BoundingBox(shape["x"], shape["y"], shape["width"], shape["height"])
            boxes.append((bbox, cls))
            class_names.add(cls)
        attrs = entry.get("file_attributes", {})
        declared = (attrs.get("width"), attrs.get("height"))
        files.append((file_name, boxes, declared))

    categories = tuple(CategoryLabel(i, name)
                       for i, name in enumerate(sorted(class_names), start=1))
    cat_id = {c.name: c.id for c in categories}

    images = []
    annotations = []
    next_ann = 1
    for image_id, (file_name, boxes, declared) in enumerate(
            sorted(files, key=lambda f: f[0]), start=1):
        width, height = declared
        if not width or not height:
            width = max((int(math.ceil(b.x + b.w)) for b, _ in boxes), default=1)
            height = max((int(math.ceil(b.y + b.h)) for b, _ in boxes), default=1)
        images.append(ImageRecord(image_id, file_name, width, height))
        for bbox, cls in boxes:
            annotations.append(Annotation(next_ann, image_id, cat_id[cls], bbox))
            next_ann += 1

    return Dataset(tuple(images), tuple(annotations), tuple(categories))


def _stratum_of(dataset: Dataset) -> dict[int, int]:
    """Map image_id -> category of its lowest-id annotation."""
    strata: dict[int, Annotation] = {}
    for ann in dataset.annotations:
        cur = strata.get(ann.image_id)
        if cur is None or ann.annotation_id < cur.annotation_id:
            strata[ann.image_id] = ann
    return {image_id: ann.category_id for image_id, ann in strata.items()}


def _subset(dataset: Dataset, image_ids: set[int]) -> Dataset:
    return Dataset(
        images=tuple(im for im in sorted(dataset.images, key=lambda im: im.image_id)
                     if im.image_id in image_ids),
        annotations=tuple(a for a in sorted(dataset.annotations, key=lambda a: a.annotation_id)
                          if a.image_id in image_ids),
        categories=dataset.categories,
    )


def stratified_split(dataset: Dataset, config: SplitConfig,
                     strict: bool = False) -> tuple[Dataset, Dataset]:
    """Partition images into train/test preserving per-class proportions.

    An image's stratum is the category of its lowest-id annotation. Per
    stratum the train count is round-half-up(train_fraction * size); the
    remainder goes to test. Deterministic for a fixed (dataset, seed):
    strata are visited in ascending category id and shuffled by a single
    seeded RNG. With strict=True, a category that owns no images raises
    EmptyStratum.
    """
    strata = _stratum_of(dataset)
    for im in dataset.images:
        if im.image_id not in strata:
            raise ValueError(f"image {im.image_id} has no annotations; cannot assign a stratum")

    by_category: dict[int, list[int]] = {c.id: [] for c in dataset.categories}
    for image_id, category_id in strata.items():
        by_category[category_id].append(image_id)

    if strict:
        for cid, members in by_category.items():
            if not members:
                raise EmptyStratum(f"category {cid} has no images")

    rng = random.Random(config.seed)
    train_ids: set[int] = set()
    test_ids: set[int] = set()
    for cid in sorted(by_category):
        members = sorted(by_category[cid])
        rng.shuffle(members)
        k = math.floor(config.train_fraction * len(members) + 0.5)
        train_ids.update(members[:k])
        test_ids.update(members[k:])

    return _subset(dataset, train_ids), _subset(dataset, test_ids)


@dataclass(frozen=True)
class AugmentResult:
    """Transformed annotations plus the (possibly swapped) image dimensions."""

    annotations: tuple[Annotation, ...]
    image_w: float
    image_h: float


def _transform_box(box: BoundingBox, w: float, h: float, transform: Transform) -> BoundingBox:
    if transform is Transform.HORIZONTAL_FLIP:
        return BoundingBox(w - box.x - box.w, box.y, box.w, box.h)
    if transform is Transform.VERTICAL_FLIP:
        return BoundingBox(box.x, h - box.y - box.h, box.w, box.h)
    if transform is Transform.ROTATE_90:
        return BoundingBox(h - box.y - box.h, box.x, box.h, box.w)
    if transform is Transform.ROTATE_180:
        return BoundingBox(w - box.x - box.w, h - box.y - box.h, box.w, box.h)
    if transform is Transform.ROTATE_270:
        return BoundingBox(box.y, w - box.x - box.w, box.h, box.w)
    raise ValueError(f"unknown transform {transform!r}")


def _clamp_box(box: BoundingBox, w: float, h: float) -> BoundingBox:
    x = min(max(box.x, 0), w)
    y = min(max(box.y, 0), h)
    return BoundingBox(x, y, min(box.w, w - x), min(box.h, h - y))


def augment(annotations: list[Annotation] | tuple[Annotation, ...],
            image_w: float, image_h: float,
            transform: Transform | str) -> AugmentResult:
    """Map one image's boxes through an exact flip or 90-degree rotation.

    Box coordinates are transformed with the closed-form rules (e.g.
    horizontal flip: x' = image_w - x - w; clockwise 90: (x', y') =
    (image_h - y - h, x) with extents swapped). Image dimensions swap for
    90/270. Results are clamped into the transformed image bounds.
    """
    transform = Transform(transform)
    if transform in (Transform.ROTATE_90, Transform.ROTATE_270):
        new_w, new_h = image_h, image_w
    else:
        new_w, new_h = image_w, image_h
    out = tuple(
        replace(ann, bbox=_clamp_box(_transform_box(ann.bbox, image_w, image_h, transform),
                                     new_w, new_h))
        for ann in annotations
    )
    return AugmentResult(out, new_w, new_h)


@dataclass(frozen=True)
class ResizePlan:
    """Scale factors and rescaled boxes for a square resize target.

    ``pixel_range`` records the intensity-normalization contract only;
    no pixel data is read or written here.
    """

    scale_x: float
    scale_y: float
    annotations: tuple[Annotation, ...]
    target_side: int
    pixel_range: tuple[float, float] = (0.0, 1.0)


def resize_plan(annotations: list[Annotation] | tuple[Annotation, ...],
                image_w: float, image_h: float, target_side: int) -> ResizePlan:
    """Plan a resize to ``target_side`` x ``target_side`` pixels."""
    if target_side <= 0:
        raise ZeroDimension(f"target_side must be positive, got {target_side}")
    if image_w <= 0 or image_h <= 0:
        raise ZeroDimension(f"image dimensions must be positive, got {image_w}x{image_h}")
    sx = target_side / image_w
    sy = target_side / image_h
    scaled = tuple(
        replace(ann, bbox=BoundingBox(ann.bbox.x * sx, ann.bbox.y * sy,
                                      ann.bbox.w * sx, ann.bbox.h * sy))
        for ann in annotations
    )
    return ResizePlan(sx, sy, scaled, target_side)
