"""Detection post-processing and evaluation: IoU, NMS, matching, AP/mAP.

The evaluation follows the classic per-class protocol: detections are
greedily matched to same-class ground truth at an IoU threshold, the
precision/recall curve is accumulated in score order, and AP is the
11-point interpolated mean. A scripted mock detector stands in for the
real camera model so pipelines stay deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .dataset import Annotation, BoundingBox

DEFAULT_IOU_THRESHOLD = 0.5

RECALL_ANCHORS = tuple(i / 10 for i in range(11))


class DetectError(Exception):
    """Base class for evaluation failures."""


class MixedImages(DetectError):
    """NMS input contained detections from more than one image."""


class NoEvaluableClass(DetectError):
    """mAP requested but no class has any ground truth."""


class UnknownImage(DetectError):
    """Mock detector asked about an image outside its script."""


@dataclass(frozen=True)
class Detection:
    """A predicted box with class and confidence."""

    image_id: int
    category_id: int
    bbox: BoundingBox
    score: float

    def __post_init__(self):
        if not 0 <= self.score <= 1:
            raise ValueError(f"score must be in [0,1], got {self.score}")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one detection against the ground truth."""

    detection: Detection
    is_true_positive: bool
    matched_annotation_id: int | None
    iou: float


@dataclass(frozen=True)
class PrecisionRecallCurve:
    """Cumulative (recall, precision) points plus the interpolated AP."""

    points: tuple[tuple[float, float], ...]
    ap: float
    num_ground_truths: int


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def nms(detections: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Classwise greedy non-maximum suppression over one image.

    Keeps the highest-scored detection per class, suppressing others with
    IoU strictly above the threshold against any kept box. Score ties are
    broken by input order. Output is sorted by descending score.
    """
    if not 0 <= iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in [0,1], got {iou_threshold}")
    image_ids = {d.image_id for d in detections}
    if len(image_ids) > 1:
        raise MixedImages(f"nms input spans images {sorted(image_ids)}")

    indexed = list(enumerate(detections))
    kept: list[tuple[int, Detection]] = []
    by_class: dict[int, list[tuple[int, Detection]]] = {}
    for idx, det in indexed:
        by_class.setdefault(det.category_id, []).append((idx, det))
    for group in by_class.values():
        group.sort(key=lambda pair: (-pair[1].score, pair[0]))
        survivors: list[tuple[int, Detection]] = []
        for idx, det in group:
            if any(iou(det.bbox, keep.bbox) > iou_threshold for _, keep in survivors):
                continue
            survivors.append((idx, det))
        kept.extend(survivors)

    kept.sort(key=lambda pair: (-pair[1].score, pair[0]))
    return [det for _, det in kept]


def match_detections(detections: Sequence[Detection],
                     ground_truths: Sequence[Annotation],
                     iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> list[MatchResult]:
    """Greedily match score-sorted detections to same-class ground truth.

    Each detection claims the unmatched ground truth of its class and
    image with the highest IoU >= threshold; everything else is a false
    positive. Each ground truth is used at most once.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    matched: set[int] = set()
    results: list[MatchResult] = []
    for i in order:
        det = detections[i]
        best_iou = 0.0
        best_gt: Annotation | None = None
        for gt in ground_truths:
            if gt.annotation_id in matched:
                continue
            if gt.image_id != det.image_id or gt.category_id != det.category_id:
                continue
            overlap = iou(det.bbox, gt.bbox)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_gt = gt
        if best_gt is not None:
            matched.add(best_gt.annotation_id)
            results.append(MatchResult(det, True, best_gt.annotation_id, best_iou))
        else:
            results.append(MatchResult(det, False, None, 0.0))
    return results


def average_precision(match_results: Sequence[MatchResult],
                      num_ground_truths: int) -> PrecisionRecallCurve:
    """Build the PR curve and 11-point interpolated AP for one class.

    AP is the mean over recall anchors {0.0, 0.1, ..., 1.0} of the
    maximum precision at recall >= anchor. With no ground truth: AP is 0
    if any detection exists, 1 vacuously when both sides are empty.
    """
    if num_ground_truths < 0:
        raise ValueError("num_ground_truths must be >= 0")
    if num_ground_truths == 0:
        ap = 1.0 if not match_results else 0.0
        points = tuple((0.0, 0.0) for _ in match_results)
        return PrecisionRecallCurve(points, ap, 0)

    ordered = sorted(match_results, key=lambda m: -m.detection.score)
    points = []
    tp = 0
    for rank, result in enumerate(ordered, start=1):
        if result.is_true_positive:
            tp += 1
        points.append((tp / num_ground_truths, tp / rank))

    ap = 0.0
    for anchor in RECALL_ANCHORS:
        best = max((p for r, p in points if r >= anchor), default=0.0)
        ap += best
    ap /= len(RECALL_ANCHORS)
    return PrecisionRecallCurve(tuple(points), ap, num_ground_truths)


def mean_average_precision(per_class_curves: Mapping[int, PrecisionRecallCurve]) -> float:
    """Unweighted mean AP over classes that have at least one ground truth."""
    evaluable = [curve.ap for curve in per_class_curves.values()
                 if curve.num_ground_truths > 0]
    if not evaluable:
        raise NoEvaluableClass("no class has any ground truth")
    return sum(evaluable) / len(evaluable)


@dataclass(frozen=True)
class EvaluationReport:
    per_class: dict[int, PrecisionRecallCurve]
    map: float


def evaluate_detections(detections: Sequence[Detection],
                        ground_truths: Sequence[Annotation],
                        iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> EvaluationReport:
    """Per-class AP plus mAP for a full prediction set."""
    class_ids = ({d.category_id for d in detections}
                 | {g.category_id for g in ground_truths})
    per_class = {}
    for cid in sorted(class_ids):
        dets = [d for d in detections if d.category_id == cid]
        gts = [g for g in ground_truths if g.category_id == cid]
        matches = match_detections(dets, gts, iou_threshold)
        per_class[cid] = average_precision(matches, len(gts))
    return EvaluationReport(per_class, mean_average_precision(per_class))


class MockDetector:
    """Deterministic detector driven by a scripted image_id -> detections map.

    Stands in for the on-device camera model: same contract (frame in,
    detections out), replayable, immutable after construction.
    """

    def __init__(self, scenario: Mapping[int, Sequence[Detection]]):
        self._scenario = {image_id: tuple(dets) for image_id, dets in scenario.items()}
        for image_id, dets in self._scenario.items():
            for det in dets:
                if det.image_id != image_id:
                    raise ValueError(
                        f"scripted detection for image {image_id} carries image_id {det.image_id}")

    def detect(self, image_id: int, frame=None) -> list[Detection]:
        if image_id not in self._scenario:
            raise UnknownImage(f"no scripted detections for image {image_id}")
        return list(self._scenario[image_id])
