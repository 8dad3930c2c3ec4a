"""Detection types, result post-filtering, and the external-detector client.

A detector backend is anything with a ``run_detect(img, cfg, frame)``
method returning raw :class:`Detection` objects in the image's own
top-left-origin pixel coordinates.  ``frame`` tells context-aware
backends (the synthetic oracle) where the image sits in the source frame;
pixel-based backends ignore it.  :func:`detect` invokes a backend once
and applies the standard post-filter: drop results under the score
threshold, keep the highest-scoring ``max_detections``, sort by
descending score.  :class:`WireDetectorBackend` adapts any server speaking
the line protocol (see :mod:`srdet.wire`) to this interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from srdet import wire
from srdet.imagebuf import ImageBuffer
from srdet.wire import ConnectionPool, WireError

__all__ = [
    "Detection",
    "DetectionSet",
    "DetectorConfig",
    "DetectorError",
    "detect",
    "post_filter",
    "ranking_key",
    "encode_request",
    "decode_response",
    "WireDetectorBackend",
]


@dataclass(frozen=True)
class Detection:
    """One detected object: corner box, class label, confidence score.

    Coordinates are top-left-origin pixels of whatever image the detector
    ran on (full frame or window); ``(x1, y1)`` is the top-left corner and
    ``(x2, y2)`` the bottom-right.  ``class_id`` uses COCO category
    numbering (1-based; 3 is "car").
    """

    x1: float
    y1: float
    x2: float
    y2: float
    class_id: int
    score: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"corner {name} must be finite, got {v!r}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(
                f"inverted box ({self.x1},{self.y1},{self.x2},{self.y2})"
            )
        if not isinstance(self.class_id, int) or self.class_id < 1:
            raise ValueError(f"class_id must be an integer >= 1, got {self.class_id!r}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass
class DetectionSet:
    """Ordered detections from one image, tagged with its frame id."""

    items: list[Detection] = field(default_factory=list)
    frame_id: object = None

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


@dataclass(frozen=True)
class DetectorConfig:
    """Post-filtering knobs applied to every detector pass."""

    max_detections: int = 100
    min_score: float = 0.3

    def __post_init__(self):
        if self.max_detections < 1:
            raise ValueError(f"max_detections must be >= 1, got {self.max_detections}")
        if not (0.0 <= self.min_score <= 1.0):
            raise ValueError(f"min_score must be in [0, 1], got {self.min_score}")


class DetectorError(Exception):
    """A backend failed to produce detections (transport or protocol)."""


def ranking_key(det: Detection):
    """Canonical total order: score descending, then corners ascending.

    Used everywhere detections are ranked (post-filter cap, merge order)
    so ties never depend on input order.
    """
    return (-det.score, det.x1, det.y1, det.x2, det.y2, det.class_id)


def post_filter(items, cfg: DetectorConfig) -> list[Detection]:
    """Apply score threshold, ranking, and the max-detections cap.

    Idempotent: filtering an already filtered list returns it unchanged.
    """
    kept = [d for d in items if d.score >= cfg.min_score]
    kept.sort(key=ranking_key)
    return kept[: cfg.max_detections]


def detect(backend, img: ImageBuffer, cfg: DetectorConfig, frame=None) -> DetectionSet:
    """Run one detector pass over ``img`` and post-filter the results.

    ``frame`` is the image's coordinate frame within the source frame
    (None means the image *is* the frame); only context-aware backends
    look at it.
    """
    try:
        raw = backend.run_detect(img, cfg, frame)
    except (wire.WireError, wire.BackendError, OSError) as exc:
        raise DetectorError(f"detector backend failed: {exc}") from exc
    return DetectionSet(items=post_filter(list(raw), cfg))


def encode_request(
    img: ImageBuffer, cfg: DetectorConfig, request_id: int | None = None
) -> dict:
    """Build a detect request message; ids auto-increment when not given."""
    if request_id is None:
        request_id = wire.next_request_id()
    return wire.detect_request(
        img, cfg.max_detections, cfg.min_score, request_id=request_id
    )


def decode_response(msg: dict, expected_request_id: int | None = None) -> DetectionSet:
    """Parse a detections response message into a :class:`DetectionSet`.

    Every listed detection is validated (finite non-inverted box, score in
    [0, 1], positive integer class id); any violation raises
    :class:`~srdet.wire.WireError` naming the offending entry.
    """
    if msg.get("type") != "detections":
        raise WireError(f"expected 'detections' message, got {msg.get('type')!r}")
    if expected_request_id is not None and msg.get("request_id") != expected_request_id:
        raise WireError(
            f"request_id mismatch: expected {expected_request_id}, "
            f"got {msg.get('request_id')!r}"
        )
    raw = msg.get("detections")
    if not isinstance(raw, list):
        raise WireError("'detections' field must be a list")
    items = []
    for i, entry in enumerate(raw):
        items.append(_parse_detection(entry, i))
    return DetectionSet(items=items)


def _parse_detection(entry, index: int) -> Detection:
    if not isinstance(entry, dict):
        raise WireError(f"detection {index}: must be an object")
    box = entry.get("box")
    if (
        not isinstance(box, list)
        or len(box) != 4
        or not all(isinstance(v, (int, float)) for v in box)
    ):
        raise WireError(f"detection {index}: 'box' must be four numbers")
    class_id = entry.get("class_id")
    score = entry.get("score")
    if not isinstance(class_id, int) or isinstance(class_id, bool):
        raise WireError(f"detection {index}: 'class_id' must be an integer")
    if not isinstance(score, (int, float)):
        raise WireError(f"detection {index}: 'score' must be a number")
    try:
        return Detection(
            x1=float(box[0]),
            y1=float(box[1]),
            x2=float(box[2]),
            y2=float(box[3]),
            class_id=class_id,
            score=float(score),
        )
    except ValueError as exc:
        raise WireError(f"detection {index}: {exc}") from exc


class WireDetectorBackend:
    """Detector backend that forwards requests to a line-protocol server.

    Holds a connection pool so concurrent window workers each get their
    own connection; a single request is in flight per connection.
    """

    def __init__(self, uri: str, pool_size: int = 1, timeout: float = 30.0):
        self._pool = ConnectionPool(uri, size=pool_size, timeout=timeout)

    def run_detect(
        self, img: ImageBuffer, cfg: DetectorConfig, frame=None
    ) -> list[Detection]:
        request = encode_request(img, cfg)
        reply = self._pool.request(request, "detections")
        return decode_response(reply, expected_request_id=request["request_id"]).items

    def close(self) -> None:
        self._pool.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
