"""Shared definitions behind the golden wire-protocol fixtures.

The fixture image and canned detections here are the single source for
the byte-frozen files in tests/golden/.  The server package's test suite
reads the same files, so both implementations are held to identical
bytes.  Regenerate with `python3 tests/make_golden.py` only when the
protocol itself changes, and review the diff.
"""

import numpy as np

from srdet.detector import Detection
from srdet.imagebuf import ImageBuffer

GOLDEN_DIR_NAME = "golden"


def fixture_image() -> ImageBuffer:
    """Fixed 4x4 test card: pixel (x, y) = (60x, 60y, 30(x+y))."""
    arr = np.zeros((4, 4, 3), dtype=np.uint8)
    for y in range(4):
        for x in range(4):
            arr[y, x] = (60 * x, 60 * y, 30 * (x + y))
    return ImageBuffer(arr)


def fixture_image_x2() -> ImageBuffer:
    """The fixture image upscaled 2x with nearest-neighbor interpolation."""
    arr = fixture_image().pixels
    return ImageBuffer(np.repeat(np.repeat(arr, 2, axis=0), 2, axis=1))


def fixture_detections() -> list[Detection]:
    return [
        Detection(x1=10, y1=20, x2=30, y2=40, class_id=3, score=0.8),
        Detection(x1=2.5, y1=3.5, x2=7.25, y2=9.75, class_id=1, score=0.55),
    ]


FIXTURE_ERROR_TEXT = "unsupported request type 'bogus'"
