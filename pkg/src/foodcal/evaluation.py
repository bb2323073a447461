"""Estimation-error metrics, detection AP, and report emission.

Per-food errors are means of per-record signed relative errors (mean of
ratios). Average precision follows the usual greedy protocol: predictions in
descending score order claim at most one ground-truth box each at the IoU
threshold, and the precision-recall curve is integrated with all-points
interpolation (11-point available for comparison).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calorimetry import EstimationRecord
from .dataset import BoundingBox
from .errors import MissingDataError

log = logging.getLogger(__name__)

REPORT_HEADER = [
    "food", "n_images", "mean_volume", "mean_est_volume", "volume_error_pct",
    "mean_mass", "mean_est_mass", "mass_error_pct",
]


@dataclass(frozen=True)
class EvaluationSummary:
    food: str
    n_estimations: int
    mean_ref_volume: float
    mean_est_volume: float
    mean_volume_error: float  # signed fraction
    mean_ref_mass: float
    mean_est_mass: float
    mean_mass_error: float  # signed fraction


@dataclass(frozen=True)
class BoxPrediction:
    image_id: str
    box: BoundingBox
    score: float


@dataclass(frozen=True)
class BoxTruth:
    image_id: str
    box: BoundingBox


@dataclass(frozen=True)
class DetectionMatch:
    prediction: BoxPrediction
    truth: BoxTruth | None
    iou: float


def _single_food(records: list[EstimationRecord]) -> str:
    foods = {r.food for r in records}
    if len(foods) != 1:
        raise ValueError(f"records mix food types: {sorted(foods)}")
    return foods.pop()


def mean_volume_error(records: list[EstimationRecord]) -> float:
    """Mean of (estimated - reference) / reference volume for one food."""
    if not records:
        raise ValueError("need at least one record")
    _single_food(records)
    if any(r.ref_volume is None for r in records):
        raise MissingDataError("record without reference volume")
    return sum((r.est_volume - r.ref_volume) / r.ref_volume for r in records) / len(records)


def mean_mass_error(records: list[EstimationRecord]) -> float:
    """Mean of (estimated - reference) / reference mass for one food."""
    if not records:
        raise ValueError("need at least one record")
    _single_food(records)
    if any(r.ref_mass is None or r.est_mass is None for r in records):
        raise MissingDataError("record without estimated or reference mass")
    return sum((r.est_mass - r.ref_mass) / r.ref_mass for r in records) / len(records)


def summarize(records: list[EstimationRecord]) -> EvaluationSummary:
    """Full per-food summary (volume and mass columns of the report)."""
    food = _single_food(records)
    n = len(records)
    return EvaluationSummary(
        food=food,
        n_estimations=n,
        mean_ref_volume=sum(r.ref_volume for r in records) / n,
        mean_est_volume=sum(r.est_volume for r in records) / n,
        mean_volume_error=mean_volume_error(records),
        mean_ref_mass=sum(r.ref_mass for r in records) / n,
        mean_est_mass=sum(r.est_mass for r in records) / n,
        mean_mass_error=mean_mass_error(records),
    )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def match_detections(
    predictions: list[BoxPrediction],
    ground_truths: list[BoxTruth],
    iou_threshold: float = 0.5,
) -> list[DetectionMatch]:
    """Greedy score-descending matching; each truth box claimed at most once."""
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    by_image: dict[str, list[int]] = {}
    for j, gt in enumerate(ground_truths):
        by_image.setdefault(gt.image_id, []).append(j)
    claimed = [False] * len(ground_truths)
    matches: list[DetectionMatch] = []
    for i in order:
        pred = predictions[i]
        best_j, best_iou = None, 0.0
        for j in by_image.get(pred.image_id, []):
            if claimed[j]:
                continue
            overlap = iou(pred.box, ground_truths[j].box)
            if overlap > best_iou:
                best_j, best_iou = j, overlap
        if best_j is not None and best_iou >= iou_threshold:
            claimed[best_j] = True
            matches.append(DetectionMatch(prediction=pred, truth=ground_truths[best_j], iou=best_iou))
        else:
            matches.append(DetectionMatch(prediction=pred, truth=None, iou=best_iou))
    return matches


def average_precision(
    predictions: list[BoxPrediction],
    ground_truths: list[BoxTruth],
    iou_threshold: float = 0.5,
    interpolation: str = "all",
) -> float:
    """Area under the interpolated precision-recall curve for one class."""
    if not ground_truths:
        if predictions:
            log.warning("predictions against empty ground truth: AP is 0")
        return 0.0
    if not predictions:
        return 0.0

    matches = match_detections(predictions, ground_truths, iou_threshold)
    tp = np.cumsum([m.truth is not None for m in matches])
    fp = np.cumsum([m.truth is None for m in matches])
    recall = tp / len(ground_truths)
    precision = tp / (tp + fp)

    if interpolation == "11point":
        ap = 0.0
        for level in np.linspace(0.0, 1.0, 11):
            hit = precision[recall >= level]
            ap += (hit.max() if hit.size else 0.0) / 11.0
        return float(ap)
    if interpolation != "all":
        raise ValueError(f"unknown interpolation {interpolation!r}")

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def emit_report(summaries: list[EvaluationSummary], path: str | Path) -> list[list[str]]:
    """Write the per-food report CSV; one row per food, image counts doubled.

    Each estimation consumes a top and a side image, so ``n_images`` is twice
    the number of estimations.
    """
    if not summaries:
        raise ValueError("nothing to report")
    rows = [REPORT_HEADER]
    for s in sorted(summaries, key=lambda s: s.food):
        rows.append([
            s.food,
            str(2 * s.n_estimations),
            f"{s.mean_ref_volume:.2f}",
            f"{s.mean_est_volume:.2f}",
            f"{100.0 * s.mean_volume_error:.2f}",
            f"{s.mean_ref_mass:.2f}",
            f"{s.mean_est_mass:.2f}",
            f"{100.0 * s.mean_mass_error:.2f}",
        ])
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return rows
