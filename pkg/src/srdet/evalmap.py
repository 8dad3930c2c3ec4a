"""COCO-protocol mAP evaluation with area buckets and comparison reports.

Evaluates per-image detection sets against ground truth with greedy
score-order matching, 101-point interpolated average precision, and the
standard area buckets (small < 32² px², medium 32²–96² px², plus "all").
Produces the five headline columns (mAP@[.50:.95] and friends) and
side-by-side base-vs-enhanced comparison tables.

Conventions not derivable from the metric's name, chosen once and shared
with the brute-force reference evaluator in the test suite:

* predictions are ranked per image by (-score, x1, y1, x2, y2, class_id)
  and capped at 100 per (image, class), then ranked globally by
  (-score, image order, per-image rank);
* matching pairs each prediction with the unmatched ground-truth box of
  highest IoU >= threshold, earliest annotation winning exact ties;
* area buckets are half-open intervals over annotation box area;
* a prediction matched to ground truth outside the bucket is ignored for
  that bucket; an unmatched prediction is a false positive in every bucket;
* a (class, bucket) pair with no ground truth anywhere is absent — it
  never drags the class mean, and a fully-absent column reports None;
* columns average over classes first, then over IoU thresholds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from srdet.dedup import iou
from srdet.detector import Detection, DetectionSet, ranking_key

__all__ = [
    "EvalError",
    "GtImage",
    "GtAnnotation",
    "GroundTruth",
    "EvalSpec",
    "EvalReport",
    "match_detections",
    "average_precision",
    "evaluate",
    "compare_reports",
    "load_ground_truth",
    "save_ground_truth",
    "load_predictions",
    "save_predictions",
]

MAX_DETS_PER_CLASS = 100

DEFAULT_THRESHOLDS = tuple(t / 100 for t in range(50, 100, 5))
DEFAULT_BUCKETS = {
    "all": (0.0, math.inf),
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
}

_RECALL_POINTS = np.arange(101) / 100.0


class EvalError(Exception):
    """Malformed ground truth, predictions, or report mismatch."""


@dataclass(frozen=True)
class GtImage:
    """One evaluated image: id plus pixel dimensions."""

    id: int
    width: int
    height: int
    file_name: str = ""


@dataclass(frozen=True)
class GtAnnotation:
    """One ground-truth object: ``bbox`` is [x, y, w, h] top-left + size."""

    id: int
    image_id: int
    bbox: tuple[float, float, float, float]
    category_id: int

    @property
    def area(self) -> float:
        return self.bbox[2] * self.bbox[3]

    @property
    def corners(self) -> tuple[float, float, float, float]:
        x, y, w, h = self.bbox
        return (x, y, x + w, y + h)


@dataclass
class GroundTruth:
    """Validated ground truth: images plus their annotations."""

    images: list[GtImage] = field(default_factory=list)
    annotations: list[GtAnnotation] = field(default_factory=list)

    def __post_init__(self):
        by_id = {}
        for img in self.images:
            if img.id in by_id:
                raise EvalError(f"duplicate image id {img.id}")
            if img.width < 1 or img.height < 1:
                raise EvalError(f"image {img.id} has empty dimensions")
            by_id[img.id] = img
        seen_ann = set()
        for ann in self.annotations:
            if ann.id in seen_ann:
                raise EvalError(f"duplicate annotation id {ann.id}")
            seen_ann.add(ann.id)
            img = by_id.get(ann.image_id)
            if img is None:
                raise EvalError(
                    f"annotation {ann.id} references unknown image {ann.image_id}"
                )
            x, y, w, h = ann.bbox
            if w <= 0 or h <= 0:
                raise EvalError(f"annotation {ann.id} has empty box")
            if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
                raise EvalError(
                    f"annotation {ann.id} box {ann.bbox} exceeds image {img.id}"
                )

    def to_dict(self) -> dict:
        return {
            "images": [
                {
                    "id": i.id,
                    "width": i.width,
                    "height": i.height,
                    "file_name": i.file_name,
                }
                for i in self.images
            ],
            "annotations": [
                {
                    "id": a.id,
                    "image_id": a.image_id,
                    "bbox": list(a.bbox),
                    "category_id": a.category_id,
                }
                for a in self.annotations
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GroundTruth":
        try:
            images = [
                GtImage(
                    id=int(i["id"]),
                    width=int(i["width"]),
                    height=int(i["height"]),
                    file_name=str(i.get("file_name", "")),
                )
                for i in payload["images"]
            ]
            annotations = [
                GtAnnotation(
                    id=int(a["id"]),
                    image_id=int(a["image_id"]),
                    bbox=tuple(float(v) for v in a["bbox"]),
                    category_id=int(a["category_id"]),
                )
                for a in payload["annotations"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise EvalError(f"malformed ground truth: {exc}") from exc
        return cls(images=images, annotations=annotations)


@dataclass(frozen=True)
class EvalSpec:
    """IoU thresholds, area buckets, and the category subset to score."""

    iou_thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    area_buckets: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_BUCKETS)
    )
    class_filter: tuple[int, ...] | None = None

    def __post_init__(self):
        ts = self.iou_thresholds
        if not ts:
            raise ValueError("iou_thresholds must be nonempty")
        if any(not (0.0 < t <= 1.0) for t in ts):
            raise ValueError(f"iou thresholds must lie in (0, 1], got {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"iou thresholds must be strictly increasing, got {ts}")
        for name, (lo, hi) in self.area_buckets.items():
            if lo < 0 or hi <= lo:
                raise ValueError(f"bucket {name!r} has bad range ({lo}, {hi})")


@dataclass
class EvalReport:
    """The five headline mAP columns plus per-frame prediction counts."""

    map_all_5095: float | None
    map_all_50: float | None
    map_all_75: float | None
    map_small_5095: float | None
    map_medium_50: float | None
    per_frame_counts: list[tuple[int, int]]
    spec: EvalSpec

    def columns(self) -> dict[str, float | None]:
        return {
            "map_all_5095": self.map_all_5095,
            "map_all_50": self.map_all_50,
            "map_all_75": self.map_all_75,
            "map_small_5095": self.map_small_5095,
            "map_medium_50": self.map_medium_50,
        }


def _greedy_match(matrix: list[list[Fraction]], n_gt: int, iou_t: Fraction):
    """Row-by-row greedy assignment: matched GT index per row, or None."""
    taken = [False] * n_gt
    out = []
    for row in matrix:
        best_j = None
        best_v = None
        for j in range(n_gt):
            if taken[j]:
                continue
            v = row[j]
            if v >= iou_t and (best_v is None or v > best_v):
                best_j, best_v = j, v
        if best_j is not None:
            taken[best_j] = True
        out.append(best_j)
    return out


def _iou_matrix(dets, anns) -> list[list[Fraction]]:
    corners = [a.corners for a in anns]
    return [
        [iou((d.x1, d.y1, d.x2, d.y2), c) for c in corners] for d in dets
    ]


def match_detections(gt_annotations, preds, iou_t: float):
    """Greedily match predictions (already sorted by descending score).

    Each prediction takes the still-unmatched ground-truth annotation with
    the highest IoU >= ``iou_t``; returns (prediction, annotation-or-None)
    pairs in the given prediction order.
    """
    dets = list(preds)
    anns = list(gt_annotations)
    assignment = _greedy_match(_iou_matrix(dets, anns), len(anns), Fraction(iou_t))
    return [
        (d, anns[j] if j is not None else None) for d, j in zip(dets, assignment)
    ]


def average_precision(flags, n_gt: int) -> float | None:
    """101-point interpolated AP from ranked true/false-positive flags.

    Precision is made monotonically non-increasing from the right, then
    sampled at recalls {0, 0.01, ..., 1.00}.  No ground truth means the
    quantity is undefined (None), not zero.
    """
    if n_gt < 0:
        raise ValueError(f"n_gt must be >= 0, got {n_gt}")
    if n_gt == 0:
        return None
    mask = np.asarray(flags, dtype=bool)
    if mask.size == 0:
        return 0.0
    tp = np.cumsum(mask)
    fp = np.cumsum(~mask)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_POINTS, side="left")
    samples = np.where(idx < mask.size, envelope[np.minimum(idx, mask.size - 1)], 0.0)
    return math.fsum(samples.tolist()) / 101


def _ranked_class_rows(gt: GroundTruth, preds_by_image, class_id: int, thresholds):
    """Per-class match results in global rank order.

    Returns (rows, n_gt_fn) where each row is (detection, {threshold:
    matched annotation or None}) sorted by descending score with image
    order breaking ties, and annotations are matched per image against
    every ground-truth box of the class (bucket filtering happens later).
    """
    anns_by_image: dict[int, list[GtAnnotation]] = {}
    for ann in gt.annotations:
        if ann.category_id == class_id:
            anns_by_image.setdefault(ann.image_id, []).append(ann)

    rows = []
    for img_idx, image in enumerate(gt.images):
        anns = anns_by_image.get(image.id, [])
        source = preds_by_image.get(image.id)
        dets = [d for d in (source or ()) if d.class_id == class_id]
        dets.sort(key=ranking_key)
        dets = dets[:MAX_DETS_PER_CLASS]
        matrix = _iou_matrix(dets, anns)
        per_threshold = {
            t: _greedy_match(matrix, len(anns), Fraction(t)) for t in thresholds
        }
        for order, det in enumerate(dets):
            matches = {
                t: (anns[assignment[order]] if assignment[order] is not None else None)
                for t, assignment in per_threshold.items()
            }
            rows.append((det, img_idx, order, matches))
    rows.sort(key=lambda r: (-r[0].score, r[1], r[2]))
    return [(det, matches) for det, _, _, matches in rows]


def evaluate(gt: GroundTruth, preds_by_image, spec: EvalSpec = EvalSpec()) -> EvalReport:
    """Score per-image detection sets against ground truth.

    ``preds_by_image`` maps image id to a DetectionSet (or detection
    list).  Every key must be a known image id; images without an entry
    count as zero predictions.
    """
    known = {img.id for img in gt.images}
    unknown = sorted(set(preds_by_image) - known)
    if unknown:
        raise EvalError(f"predictions reference unknown image ids: {unknown}")

    if spec.class_filter is not None:
        classes = sorted(spec.class_filter)
    else:
        classes = sorted({a.category_id for a in gt.annotations})

    # ap[class][threshold][bucket] -> value or None (absent)
    ap: dict[int, dict[float, dict[str, float | None]]] = {}
    for cls in classes:
        cls_anns = [a for a in gt.annotations if a.category_id == cls]
        rows = _ranked_class_rows(gt, preds_by_image, cls, spec.iou_thresholds)
        ap[cls] = {}
        for t in spec.iou_thresholds:
            ap[cls][t] = {}
            for bucket, (lo, hi) in spec.area_buckets.items():
                n_gt = sum(1 for a in cls_anns if lo <= a.area < hi)
                flags = []
                for det, matches in rows:
                    ann = matches[t]
                    if ann is None:
                        flags.append(False)
                    elif lo <= ann.area < hi:
                        flags.append(True)
                    # else: matched out-of-bucket GT -> ignored in this bucket
                ap[cls][t][bucket] = average_precision(flags, n_gt)

    def column(bucket: str, thresholds) -> float | None:
        if bucket not in spec.area_buckets or thresholds is None:
            return None
        per_threshold = []
        for t in thresholds:
            values = [
                ap[c][t][bucket] for c in classes if ap[c][t][bucket] is not None
            ]
            if not values:
                return None
            per_threshold.append(math.fsum(values) / len(values))
        return math.fsum(per_threshold) / len(per_threshold)

    t50 = (0.50,) if 0.50 in spec.iou_thresholds else None
    t75 = (0.75,) if 0.75 in spec.iou_thresholds else None
    counts = [
        (image.id, len(list(preds_by_image.get(image.id) or ())))
        for image in gt.images
    ]
    return EvalReport(
        map_all_5095=column("all", spec.iou_thresholds),
        map_all_50=column("all", t50),
        map_all_75=column("all", t75),
        map_small_5095=column("small", spec.iou_thresholds),
        map_medium_50=column("medium", t50),
        per_frame_counts=counts,
        spec=spec,
    )


def _format_cell(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def compare_reports(base: EvalReport, enhanced: EvalReport):
    """Side-by-side comparison of two reports built with the same spec.

    Returns ``(table_csv, series_csv)``: the metric table with the
    enhanced cell wrapped in ``**`` when strictly greater, and the
    per-frame detection count series for plotting.
    """
    if base.spec != enhanced.spec:
        raise EvalError("reports were built with different evaluation specs")
    base_cols = base.columns()
    enh_cols = enhanced.columns()
    lines = ["metric,base,enhanced"]
    for name in base_cols:
        b, e = base_cols[name], enh_cols[name]
        cell = _format_cell(e)
        if b is not None and e is not None and e > b:
            cell = f"**{cell}**"
        lines.append(f"{name},{_format_cell(b)},{cell}")
    table_csv = "\n".join(lines) + "\n"

    base_ids = [fid for fid, _ in base.per_frame_counts]
    enh_ids = [fid for fid, _ in enhanced.per_frame_counts]
    if base_ids != enh_ids:
        raise EvalError("reports cover different frame sets")
    series = ["frame_id,n_base,n_enhanced"]
    for (fid, nb), (_, ne) in zip(base.per_frame_counts, enhanced.per_frame_counts):
        series.append(f"{fid},{nb},{ne}")
    series_csv = "\n".join(series) + "\n"
    return table_csv, series_csv


def load_ground_truth(path) -> GroundTruth:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EvalError(f"ground truth {path} is not valid JSON: {exc}") from exc
    return GroundTruth.from_dict(payload)


def save_ground_truth(gt: GroundTruth, path) -> None:
    Path(path).write_text(
        json.dumps(gt.to_dict(), indent=2) + "\n", encoding="utf-8"
    )


def load_predictions(path) -> dict[int, DetectionSet]:
    """Read a flat prediction list (annotation schema plus a score field)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        out: dict[int, DetectionSet] = {}
        for entry in payload:
            x, y, w, h = (float(v) for v in entry["bbox"])
            det = Detection(
                x1=x,
                y1=y,
                x2=x + w,
                y2=y + h,
                class_id=int(entry["category_id"]),
                score=float(entry["score"]),
            )
            image_id = int(entry["image_id"])
            out.setdefault(image_id, DetectionSet(frame_id=image_id)).items.append(det)
        return out
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise EvalError(f"malformed predictions file {path}: {exc}") from exc


def save_predictions(preds_by_image, path) -> None:
    entries = []
    for image_id in sorted(preds_by_image):
        for det in preds_by_image[image_id]:
            entries.append(
                {
                    "image_id": image_id,
                    "bbox": [det.x1, det.y1, det.x2 - det.x1, det.y2 - det.y1],
                    "category_id": det.class_id,
                    "score": det.score,
                }
            )
    Path(path).write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
