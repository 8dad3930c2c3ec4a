"""
Scoring detections with size-bucketed mAP
=========================================

The evaluator reports COCO-style mean average precision over IoU
thresholds 0.50:0.05:0.95, split by object size.  This script builds a
tiny ground truth by hand, scores two prediction sets against it, and
renders the comparison table the benchmark uses.
"""

from srdet import Detection, DetectionSet, GroundTruth, GtAnnotation, GtImage
from srdet import compare_reports, evaluate

# Two frames; each annotation is (x, y, w, h) in pixels.  Areas under
# 1024 px^2 count as "small", so every object here lands in the small
# bucket as well as the catch-all bucket.
gt = GroundTruth(
    images=[
        GtImage(id=1, width=128, height=96, file_name="frame_001.png"),
        GtImage(id=2, width=128, height=96, file_name="frame_002.png"),
    ],
    annotations=[
        GtAnnotation(id=1, image_id=1, bbox=(10.0, 10.0, 20.0, 12.0), category_id=3),
        GtAnnotation(id=2, image_id=1, bbox=(60.0, 40.0, 8.0, 6.0), category_id=3),
        GtAnnotation(id=3, image_id=2, bbox=(30.0, 20.0, 14.0, 10.0), category_id=3),
    ],
)


def det(x, y, w, h, score):
    return Detection(x1=x, y1=y, x2=x + w, y2=y + h, class_id=3, score=score)


# A "weak detector" that misses the 8x6 object, and a "strong" one that
# finds all three.  Both localize perfectly where they do fire, so the
# difference below is pure recall.
weak = {
    1: DetectionSet(items=[det(10, 10, 20, 12, 0.9)]),
    2: DetectionSet(items=[det(30, 20, 14, 10, 0.8)]),
}
strong = {
    1: DetectionSet(items=[det(10, 10, 20, 12, 0.9), det(60, 40, 8, 6, 0.6)]),
    2: DetectionSet(items=[det(30, 20, 14, 10, 0.8)]),
}

report_weak = evaluate(gt, weak)
report_strong = evaluate(gt, strong)

print("columns:", list(report_weak.columns().keys()))
print("weak  :", {k: v for k, v in report_weak.columns().items()})
print("strong:", {k: v for k, v in report_strong.columns().items()})

# compare_reports emits the benchmark's comparison.csv: one row per
# metric, the better "enhanced" cell flagged with ** markers.  Medium
# columns are empty here because no object reaches 1024 px^2.  It also
# returns a per-frame detection count series for plotting.
table_csv, series_csv = compare_reports(report_weak, report_strong)
print("\n" + table_csv)
print(series_csv)
