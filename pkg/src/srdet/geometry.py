"""Coordinate conventions and transforms between frame, HR image and windows.

Detection math is naturally expressed with the origin at the image center,
but every file format and wire message in this package uses top-left-origin
pixel coordinates.  All conversions between the two conventions live here,
as do low-resolution to high-resolution point scaling, detection-centered
window placement (with border clamping), and the affine back-map that
returns window-local points to frame coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

__all__ = [
    "Point",
    "CoordinateFrame",
    "Rect",
    "WindowPlacement",
    "detection_center",
    "lr_to_hr",
    "center_to_topleft",
    "topleft_to_center",
    "place_window",
    "window_to_frame",
    "box_window_to_frame",
]


class Point(NamedTuple):
    x: float
    y: float


class Rect(NamedTuple):
    """Integer rectangle: top-left corner plus size."""

    left: int
    top: int
    w: int
    h: int


@dataclass(frozen=True)
class CoordinateFrame:
    """Affine mapping from a window's local pixels to frame coordinates.

    ``offset`` is the window's top-left corner expressed in frame
    (low-resolution, top-left-origin) coordinates; ``scale`` is the zoom
    factor of the window's pixels relative to the frame.  A point ``p`` in
    window-local coordinates sits at ``offset + p / scale`` in the frame.
    ``scale == 1`` denotes the identity frame (the window *is* the frame).
    """

    offset: Point
    scale: float

    def __post_init__(self):
        if not (
            math.isfinite(self.offset[0]) and math.isfinite(self.offset[1])
        ):
            raise ValueError(f"offset must be finite, got {self.offset}")
        if not (math.isfinite(self.scale) and self.scale >= 1):
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        object.__setattr__(self, "offset", Point(*self.offset))


@dataclass(frozen=True)
class WindowPlacement:
    """A window rectangle inside the HR image plus its frame mapping."""

    hr_rect: Rect
    frame: CoordinateFrame


def detection_center(det) -> Point:
    """Midpoint of a detection's corners, in the input's own convention."""
    return Point((det.x1 + det.x2) / 2.0, (det.y1 + det.y2) / 2.0)


def lr_to_hr(p: Point, zoom: float) -> Point:
    """Scale a center-origin point from LR to HR coordinates (``Z * p``)."""
    return Point(p[0] * zoom, p[1] * zoom)


def center_to_topleft(p: Point, w: int, h: int) -> Point:
    """Convert a center-origin point to top-left-origin for a w x h image."""
    return Point(p[0] + w / 2.0, p[1] + h / 2.0)


def topleft_to_center(p: Point, w: int, h: int) -> Point:
    """Inverse of :func:`center_to_topleft`."""
    return Point(p[0] - w / 2.0, p[1] - h / 2.0)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def place_window(
    center_hr: Point,
    lr_w: int,
    lr_h: int,
    hr_w: int,
    hr_h: int,
    zoom: int,
) -> WindowPlacement:
    """Place an ``lr_w x lr_h`` window inside the HR image around a point.

    ``center_hr`` is the desired window center in HR top-left-origin
    coordinates.  The rectangle is rounded to integer pixels (half-up, so
    the realized center stays as close as possible to the request) and,
    when the ideal rectangle would cross an HR border, shifted — never
    shrunk — back inside.  The returned frame maps window-local points to
    frame coordinates exactly, including for shifted windows.
    """
    if zoom != int(zoom) or zoom < 1:
        raise ValueError(f"zoom must be a positive integer, got {zoom}")
    zoom = int(zoom)
    if hr_w != zoom * lr_w or hr_h != zoom * lr_h:
        raise ValueError(
            f"HR size {hr_w}x{hr_h} is not {zoom}x the LR size {lr_w}x{lr_h}"
        )
    if lr_w > hr_w or lr_h > hr_h:
        raise ValueError(
            f"window {lr_w}x{lr_h} does not fit in HR image {hr_w}x{hr_h}"
        )
    left = _round_half_up(center_hr[0] - lr_w / 2.0)
    top = _round_half_up(center_hr[1] - lr_h / 2.0)
    left = min(max(left, 0), hr_w - lr_w)
    top = min(max(top, 0), hr_h - lr_h)
    frame = CoordinateFrame(offset=Point(left / zoom, top / zoom), scale=zoom)
    return WindowPlacement(hr_rect=Rect(left, top, lr_w, lr_h), frame=frame)


def window_to_frame(p_window: Point, frame: CoordinateFrame) -> Point:
    """Map a window-local point into frame coordinates: offset + p / scale.

    For an unshifted, exactly centered window this reduces to the usual
    center-plus-scaled-displacement formula; expressing it through the
    window's own top-left keeps it exact when the window was shifted off
    a border.
    """
    return Point(
        frame.offset.x + p_window[0] / frame.scale,
        frame.offset.y + p_window[1] / frame.scale,
    )


def box_window_to_frame(
    box: tuple[float, float, float, float], frame: CoordinateFrame
) -> tuple[float, float, float, float]:
    """Map a window-local corner box to frame coordinates corner by corner."""
    x1, y1 = window_to_frame(Point(box[0], box[1]), frame)
    x2, y2 = window_to_frame(Point(box[2], box[3]), frame)
    return (x1, y1, x2, y2)
