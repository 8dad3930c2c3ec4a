"""Super-resolution-guided re-detection of small objects in camera frames.

The package improves recall on small objects by re-running a pluggable
detector on upscaled, denoised windows centered on each first-pass
detection, then merging the window detections back into frame coordinates
with IoU-based duplicate suppression.  A COCO-style mAP harness measures
the improvement.
"""

from srdet.dedup import MergePolicy, iou, merge
from srdet.denoise import NlmParams, estimate_noise_sigma, nlm_denoise
from srdet.detector import (
    Detection,
    DetectionSet,
    DetectorConfig,
    DetectorError,
    WireDetectorBackend,
)
from srdet.evalmap import (
    EvalReport,
    EvalSpec,
    GroundTruth,
    GtAnnotation,
    GtImage,
    compare_reports,
    evaluate,
    load_ground_truth,
    load_predictions,
    save_ground_truth,
    save_predictions,
)
from srdet.geometry import CoordinateFrame, Point, Rect, WindowPlacement
from srdet.imagebuf import ImageBuffer, load_png, save_png
from srdet.pipeline import (
    FrameError,
    FrameResult,
    PipelineConfig,
    StageTimings,
    enhance_frame,
    enhance_sequence,
)
from srdet.superres import UpscaleError, UpscaleMethod, upscale
from srdet.synthdet import (
    OracleBackend,
    Scene,
    SceneParams,
    generate_scene,
    scene_to_ground_truth,
)

__all__ = [
    "CoordinateFrame",
    "Detection",
    "DetectionSet",
    "DetectorConfig",
    "DetectorError",
    "EvalReport",
    "EvalSpec",
    "FrameError",
    "FrameResult",
    "GroundTruth",
    "GtAnnotation",
    "GtImage",
    "ImageBuffer",
    "MergePolicy",
    "NlmParams",
    "OracleBackend",
    "PipelineConfig",
    "Point",
    "Rect",
    "Scene",
    "SceneParams",
    "StageTimings",
    "UpscaleError",
    "UpscaleMethod",
    "WindowPlacement",
    "WireDetectorBackend",
    "compare_reports",
    "enhance_frame",
    "enhance_sequence",
    "estimate_noise_sigma",
    "evaluate",
    "generate_scene",
    "iou",
    "load_ground_truth",
    "load_png",
    "load_predictions",
    "merge",
    "nlm_denoise",
    "save_ground_truth",
    "save_png",
    "save_predictions",
    "scene_to_ground_truth",
    "upscale",
]

__version__ = "0.1.0"
