"""IoU computation and duplicate suppression when merging detection sets.

Two detections are judged the same object when their intersection-over-
union exceeds a threshold theta (strictly — a pair exactly at theta is
kept).  Merging pools base detections with all back-translated window
detections, walks them best-score-first, and accepts a candidate only if
it duplicates no already-accepted detection; so the highest-scoring
representative of every object survives.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from srdet.detector import Detection, DetectionSet, ranking_key

__all__ = ["MergePolicy", "iou", "merge", "match_counts"]


@dataclass(frozen=True)
class MergePolicy:
    """How window detections are reconciled with existing ones.

    ``theta`` is the IoU duplicate threshold; ``class_aware`` restricts
    matching to same-class pairs; ``keep`` names the survivor rule (only
    ``"higher_score"`` exists — the greedy order implements it).
    """

    theta: float = 0.1
    class_aware: bool = True
    keep: str = "higher_score"

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if self.keep != "higher_score":
            raise ValueError(f"unsupported keep rule {self.keep!r}")


def _corners(box) -> tuple:
    if hasattr(box, "x1"):
        return (box.x1, box.y1, box.x2, box.y2)
    x1, y1, x2, y2 = box
    return (x1, y1, x2, y2)


def iou(dj, dk) -> Fraction:
    """Intersection-over-union of two corner boxes, as an exact rational.

    Accepts Detection-like objects or plain ``(x1, y1, x2, y2)`` sequences.
    Inputs are binary floats, hence exactly representable as rationals;
    the result is exact, so threshold comparisons have no rounding cases.
    Zero-area boxes are legal and contribute zero area; when the union is
    empty the ratio is defined as 0.
    """
    jx1, jy1, jx2, jy2 = (Fraction(v) for v in _corners(dj))
    kx1, ky1, kx2, ky2 = (Fraction(v) for v in _corners(dk))
    iw = min(jx2, kx2) - max(jx1, kx1)
    ih = min(jy2, ky2) - max(jy1, ky1)
    if iw <= 0 or ih <= 0:
        return Fraction(0)
    inter = iw * ih
    union = (jx2 - jx1) * (jy2 - jy1) + (kx2 - kx1) * (ky2 - ky1) - inter
    if union <= 0:
        return Fraction(0)
    return inter / union


def _duplicates(cand: Detection, kept: Detection, policy: MergePolicy) -> bool:
    if policy.class_aware and cand.class_id != kept.class_id:
        return False
    # cheap reject: no overlap at all
    if (
        cand.x2 <= kept.x1
        or kept.x2 <= cand.x1
        or cand.y2 <= kept.y1
        or kept.y2 <= cand.y1
    ):
        return False
    return iou(cand, kept) > policy.theta


def merge(
    base: DetectionSet,
    windows: list[DetectionSet],
    policy: MergePolicy,
) -> DetectionSet:
    """Greedy global duplicate filtering over base plus window detections.

    All inputs must already be in LR frame coordinates.  Candidates are
    visited by descending score (corner-lexicographic tie-break, so the
    result does not depend on window order) and accepted iff their IoU
    with every accepted detection of a comparable class is <= theta.
    The output is sorted by descending score.
    """
    pool = list(base.items)
    for window_set in windows:
        pool.extend(window_set.items)
    pool.sort(key=ranking_key)
    accepted: list[Detection] = []
    for cand in pool:
        if not any(_duplicates(cand, kept, policy) for kept in accepted):
            accepted.append(cand)
    return DetectionSet(items=accepted, frame_id=base.frame_id)


def match_counts(base: DetectionSet, merged: DetectionSet) -> tuple[int, int]:
    """Cardinalities (n_base, n_merged) for detection-count plots."""
    return (len(base), len(merged))
