"""Synthetic scenes and an oracle detector with area-dependent recall.

The generator packs colored rectangles into a frame without overlap; the
oracle "detects" a scene object in a presented window iff the object's
apparent pixel area there — scene area, times the window's zoom squared,
times the fraction of the object visible — reaches ``min_area``.  That
reproduces, at desk scale, a real detector's blindness to small objects
and its recovery when shown an upscaled window, with exactly computable
thresholds.  The oracle reads scene metadata plus the window's coordinate
frame, never pixels; the rendered image still flows through the real
pipeline stages.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from srdet.detector import Detection, DetectionSet, DetectorConfig
from srdet.geometry import CoordinateFrame, Point
from srdet.imagebuf import ImageBuffer

__all__ = [
    "SceneObject",
    "Scene",
    "SceneParams",
    "RecallModel",
    "GenerationError",
    "generate_scene",
    "render_scene",
    "oracle_detect",
    "OracleBackend",
    "area_ramp_score",
    "scene_to_ground_truth",
    "save_scene",
    "load_scene",
]


@dataclass(frozen=True)
class SceneObject:
    """One placed rectangle: true corner box, class, and fill color."""

    x1: float
    y1: float
    x2: float
    y2: float
    class_id: int
    color: tuple[int, int, int]

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Scene:
    """Synthetic ground truth for one frame."""

    objects: tuple[SceneObject, ...]
    frame_w: int
    frame_h: int
    background: tuple[int, int, int]
    rng_seed: int


@dataclass(frozen=True)
class SceneParams:
    """Knobs for scene generation.

    Object areas are drawn uniformly from ``area_range`` and realized as
    integer-sided rectangles with aspect ratio from ``aspect_range``;
    placements keep at least ``min_gap`` pixels between objects so every
    object is its own island (no accidental IoU between true boxes).
    """

    n_objects: tuple[int, int] = (5, 15)
    area_range: tuple[float, float] = (16.0, 256.0)
    aspect_range: tuple[float, float] = (0.5, 2.0)
    classes: tuple[int, ...] = (3,)
    frame_w: int = 96
    frame_h: int = 72
    background: tuple[int, int, int] = (24, 26, 30)
    min_gap: int = 1
    max_attempts: int = 200

    def __post_init__(self):
        if self.frame_w < 32 or self.frame_h < 32:
            raise ValueError("frame dimensions must be >= 32")
        if self.n_objects[0] < 0 or self.n_objects[0] > self.n_objects[1]:
            raise ValueError(f"bad object count range {self.n_objects}")
        if self.area_range[0] <= 0 or self.area_range[0] > self.area_range[1]:
            raise ValueError(f"bad area range {self.area_range}")
        if not self.classes:
            raise ValueError("classes must be nonempty")


class GenerationError(Exception):
    """Scene packing failed within the retry budget."""


def area_ramp_score(min_area: float) -> Callable[[float], float]:
    """Monotone score model saturating at 0.99.

    Scores start at 0.3 for a barely-detectable object and grow linearly
    with apparent area, so re-detecting an object in a zoomed window
    always raises (or at worst ties at the cap) its confidence.
    """

    def score_fn(apparent_area: float) -> float:
        return min(0.99, 0.3 + 0.69 * apparent_area / (8.0 * min_area))

    return score_fn


@dataclass(frozen=True)
class RecallModel:
    """What the oracle can see: area threshold, score curve, jitter."""

    min_area: float
    score_fn: Callable[[float], float] = field(default=None)  # type: ignore[assignment]
    jitter: float = 0.0

    def __post_init__(self):
        if not self.min_area > 0:
            raise ValueError(f"min_area must be > 0, got {self.min_area}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")
        if self.score_fn is None:
            object.__setattr__(self, "score_fn", area_ramp_score(self.min_area))


def generate_scene(seed: int, params: SceneParams = SceneParams()):
    """Deterministically generate a scene and its rendered image."""
    rng = np.random.Generator(np.random.PCG64(seed))
    count = int(rng.integers(params.n_objects[0], params.n_objects[1] + 1))
    placed: list[SceneObject] = []
    for index in range(count):
        placed.append(_place_object(rng, params, placed, index))
    scene = Scene(
        objects=tuple(placed),
        frame_w=params.frame_w,
        frame_h=params.frame_h,
        background=params.background,
        rng_seed=seed,
    )
    return scene, render_scene(scene)


def _place_object(rng, params: SceneParams, placed, index: int) -> SceneObject:
    for _ in range(params.max_attempts):
        area = float(rng.uniform(*params.area_range))
        aspect = float(rng.uniform(*params.aspect_range))
        w = max(1, round(float(np.sqrt(area * aspect))))
        h = max(1, round(float(np.sqrt(area / aspect))))
        if w > params.frame_w or h > params.frame_h:
            continue
        x1 = int(rng.integers(0, params.frame_w - w + 1))
        y1 = int(rng.integers(0, params.frame_h - h + 1))
        gap = params.min_gap
        if any(
            x1 - gap < other.x2
            and other.x1 < x1 + w + gap
            and y1 - gap < other.y2
            and other.y1 < y1 + h + gap
            for other in placed
        ):
            continue
        color = _pick_color(rng, params.background)
        class_id = int(params.classes[rng.integers(0, len(params.classes))])
        return SceneObject(
            x1=float(x1),
            y1=float(y1),
            x2=float(x1 + w),
            y2=float(y1 + h),
            class_id=class_id,
            color=color,
        )
    raise GenerationError(
        f"could not place object {index} after {params.max_attempts} attempts "
        f"(frame {params.frame_w}x{params.frame_h}, {len(placed)} placed)"
    )


def _pick_color(rng, background) -> tuple[int, int, int]:
    for _ in range(20):
        color = tuple(int(v) for v in rng.integers(0, 256, size=3))
        if max(abs(c - b) for c, b in zip(color, background)) >= 40:
            return color
    return (255, 255, 255)


def render_scene(scene: Scene) -> ImageBuffer:
    """Rasterize the scene: background plus filled object rectangles."""
    arr = np.empty((scene.frame_h, scene.frame_w, 3), dtype=np.uint8)
    arr[:, :] = scene.background
    for obj in scene.objects:
        arr[int(obj.y1) : int(obj.y2), int(obj.x1) : int(obj.x2)] = obj.color
    return ImageBuffer(arr)


def _jitter_offsets(scene: Scene, index: int, frame: CoordinateFrame, jitter: float):
    """Four deterministic corner perturbations in [-jitter, +jitter]."""
    key = (
        f"{scene.rng_seed}:{index}:{frame.offset.x}:{frame.offset.y}:"
        f"{frame.scale}:{jitter}"
    )
    digest = hashlib.sha256(key.encode("ascii")).digest()
    sub_rng = np.random.Generator(
        np.random.PCG64(int.from_bytes(digest[:8], "little"))
    )
    return sub_rng.uniform(-jitter, jitter, size=4)


def oracle_detect(
    img: ImageBuffer,
    frame: CoordinateFrame | None,
    scene: Scene,
    model: RecallModel,
) -> DetectionSet:
    """Detect scene objects visible in the presented window.

    ``frame`` maps the window's pixels into scene coordinates (None for
    the identity — the window is the whole frame).  An object is detected
    iff its apparent area — scene area x scale^2 x visible fraction — is
    at least ``model.min_area``.  Returned boxes are the full true object
    boxes in window-local coordinates (clamped to the scene frame when
    jittered), so recall, not localization, is what varies with scale.
    """
    if frame is None:
        frame = CoordinateFrame(offset=Point(0.0, 0.0), scale=1.0)
    scale = frame.scale
    win_x1, win_y1 = frame.offset
    win_x2 = win_x1 + img.width / scale
    win_y2 = win_y1 + img.height / scale
    items = []
    for index, obj in enumerate(scene.objects):
        inter_w = min(obj.x2, win_x2) - max(obj.x1, win_x1)
        inter_h = min(obj.y2, win_y2) - max(obj.y1, win_y1)
        if inter_w <= 0 or inter_h <= 0:
            continue
        scene_area = obj.area
        visible = (inter_w * inter_h) / scene_area
        apparent = scene_area * scale * scale * visible
        if apparent < model.min_area:
            continue
        score = min(1.0, max(0.0, float(model.score_fn(apparent))))
        x1, y1, x2, y2 = obj.x1, obj.y1, obj.x2, obj.y2
        if model.jitter > 0:
            jx1, jy1, jx2, jy2 = _jitter_offsets(scene, index, frame, model.jitter)
            x1 = min(max(x1 + jx1, 0.0), scene.frame_w)
            y1 = min(max(y1 + jy1, 0.0), scene.frame_h)
            x2 = min(max(x2 + jx2, x1), scene.frame_w)
            y2 = min(max(y2 + jy2, y1), scene.frame_h)
        items.append(
            Detection(
                x1=(x1 - win_x1) * scale,
                y1=(y1 - win_y1) * scale,
                x2=(x2 - win_x1) * scale,
                y2=(y2 - win_y1) * scale,
                class_id=obj.class_id,
                score=score,
            )
        )
    return DetectionSet(items=items)


class OracleBackend:
    """Adapter exposing the oracle through the detector backend protocol."""

    def __init__(self, scene: Scene, model: RecallModel):
        self.scene = scene
        self.model = model

    def run_detect(
        self, img: ImageBuffer, cfg: DetectorConfig, frame: CoordinateFrame | None
    ) -> list[Detection]:
        return oracle_detect(img, frame, self.scene, self.model).items


def scene_to_ground_truth(
    scene: Scene, image_id: int = 1, file_name: str = "", ann_id_start: int = 1
) -> dict:
    """Express the scene in the evaluator's ground-truth schema.

    ``ann_id_start`` lets callers keep annotation ids unique when merging
    several scenes into one multi-image ground-truth file.
    """
    annotations = []
    for index, obj in enumerate(scene.objects):
        annotations.append(
            {
                "id": ann_id_start + index,
                "image_id": image_id,
                "bbox": [obj.x1, obj.y1, obj.x2 - obj.x1, obj.y2 - obj.y1],
                "category_id": obj.class_id,
            }
        )
    return {
        "images": [
            {
                "id": image_id,
                "width": scene.frame_w,
                "height": scene.frame_h,
                "file_name": file_name,
            }
        ],
        "annotations": annotations,
    }


def save_scene(scene: Scene, path) -> None:
    payload = {
        "frame_w": scene.frame_w,
        "frame_h": scene.frame_h,
        "background": list(scene.background),
        "rng_seed": scene.rng_seed,
        "objects": [
            {
                "box": [obj.x1, obj.y1, obj.x2, obj.y2],
                "class_id": obj.class_id,
                "color": list(obj.color),
            }
            for obj in scene.objects
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_scene(path) -> Scene:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    objects = tuple(
        SceneObject(
            x1=float(entry["box"][0]),
            y1=float(entry["box"][1]),
            x2=float(entry["box"][2]),
            y2=float(entry["box"][3]),
            class_id=int(entry["class_id"]),
            color=tuple(int(v) for v in entry["color"]),
        )
        for entry in payload["objects"]
    )
    return Scene(
        objects=objects,
        frame_w=int(payload["frame_w"]),
        frame_h=int(payload["frame_h"]),
        background=tuple(int(v) for v in payload["background"]),
        rng_seed=int(payload["rng_seed"]),
    )
