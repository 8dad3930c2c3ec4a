"""8-bit RGB image buffers, PNG codec and basic raster operations.

Every stage of the pipeline exchanges images through :class:`ImageBuffer`,
an immutable wrapper around a ``(height, width, 3)`` uint8 array.  PNG
decoding goes through Pillow (so grayscale / palette / alpha inputs are
normalized to RGB); encoding uses a small built-in writer so the bytes
produced for a given buffer are stable, which the wire-protocol golden
fixtures rely on.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont, UnidentifiedImageError

__all__ = [
    "ImageBuffer",
    "ImageDecodeError",
    "load_png",
    "save_png",
    "encode_png",
    "decode_png",
    "crop",
    "draw_box",
]

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageDecodeError(Exception):
    """Raised when a byte stream cannot be decoded as a PNG image."""


class ImageBuffer:
    """Immutable raster of 8-bit RGB pixels.

    The backing array has shape ``(height, width, 3)`` and is marked
    read-only, so buffers can be shared freely across worker threads.
    """

    __slots__ = ("_data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image dimensions must be >= 1, got {arr.shape[:2]}")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def filled(cls, width: int, height: int, color=(0, 0, 0)) -> "ImageBuffer":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = color
        return cls(arr)

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def pixels(self) -> np.ndarray:
        """Read-only ``(h, w, 3)`` uint8 view of the pixel data."""
        return self._data

    def to_array(self) -> np.ndarray:
        """Writable copy of the pixel data."""
        return self._data.copy()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self._data.shape == other._data.shape and np.array_equal(
            self._data, other._data
        )

    def __hash__(self):
        return hash((self._data.shape, self._data.tobytes()))

    def __repr__(self) -> str:
        return f"ImageBuffer({self.width}x{self.height})"


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def encode_png(img: ImageBuffer) -> bytes:
    """Encode a buffer as an 8-bit RGB PNG.

    Deterministic: filter type 0 on every scanline and a fixed zlib level,
    so identical buffers always produce identical bytes.
    """
    raw = img.pixels
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, 2, 0, 0, 0)
    scanlines = bytearray()
    for row in raw:
        scanlines.append(0)
        scanlines.extend(row.tobytes())
    idat = zlib.compress(bytes(scanlines), 6)
    return (
        _PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", idat)
        + _png_chunk(b"IEND", b"")
    )


def decode_png(data: bytes, name: str = "<bytes>") -> ImageBuffer:
    """Decode PNG bytes; non-RGB color modes are converted to RGB."""
    import io

    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"{name}: cannot decode PNG ({exc})") from exc
    return ImageBuffer(arr)


def load_png(path) -> ImageBuffer:
    path = Path(path)
    data = path.read_bytes()
    return decode_png(data, name=str(path))


def save_png(img: ImageBuffer, path) -> None:
    Path(path).write_bytes(encode_png(img))


def crop(img: ImageBuffer, left: int, top: int, w: int, h: int) -> ImageBuffer:
    """Extract the ``w x h`` sub-image with top-left corner ``(left, top)``.

    The rectangle must lie fully inside the image; callers that may run
    past the border are expected to clamp first (see geometry.place_window).
    """
    if w < 1 or h < 1:
        raise ValueError(f"crop size must be >= 1, got {w}x{h}")
    if left < 0 or top < 0 or left + w > img.width or top + h > img.height:
        raise ValueError(
            f"crop rectangle ({left},{top},{w},{h}) outside "
            f"{img.width}x{img.height} image"
        )
    return ImageBuffer(img.pixels[top : top + h, left : left + w])


def _box_to_pixel_rect(box, width: int, height: int):
    """Continuous corner box -> inclusive pixel rect, clipped to the image."""
    x1, y1, x2, y2 = box
    px1 = max(0, int(np.floor(x1)))
    py1 = max(0, int(np.floor(y1)))
    px2 = min(width - 1, int(np.ceil(x2)) - 1)
    py2 = min(height - 1, int(np.ceil(y2)) - 1)
    return px1, py1, px2, py2


def draw_box(img: ImageBuffer, det, color, label: str = "") -> ImageBuffer:
    """Return a copy of ``img`` with a 1-px rectangle outline for ``det``.

    ``det`` is anything with ``x1, y1, x2, y2`` attributes (a Detection) or
    a 4-sequence of corner coordinates.  A non-empty ``label`` adds a small
    filled strip with the text above the box (below when there is no room).
    The input buffer is never modified; boxes are clipped to image bounds.
    """
    if hasattr(det, "x1"):
        box = (det.x1, det.y1, det.x2, det.y2)
    else:
        box = tuple(det)
    out = img.to_array()
    px1, py1, px2, py2 = _box_to_pixel_rect(box, img.width, img.height)
    if px2 >= px1 and py2 >= py1:
        out[py1, px1 : px2 + 1] = color
        out[py2, px1 : px2 + 1] = color
        out[py1 : py2 + 1, px1] = color
        out[py1 : py2 + 1, px2] = color
    if label:
        out = _draw_label(out, label, px1, py1, py2, color)
    return ImageBuffer(out)


def _draw_label(arr: np.ndarray, label: str, x: int, y_top: int, y_bot: int, color):
    font = ImageFont.load_default()
    left, top, right, bottom = font.getbbox(label)
    tw, th = right - left, bottom - top
    strip_h = th + 2
    strip_w = tw + 4
    h, w = arr.shape[:2]
    sy = y_top - strip_h
    if sy < 0:
        sy = min(y_bot + 1, h - strip_h)
    sy = max(0, sy)
    sx = max(0, min(x, w - strip_w)) if strip_w <= w else 0
    im = Image.fromarray(arr)
    drawer = ImageDraw.Draw(im)
    drawer.rectangle(
        [sx, sy, min(sx + strip_w - 1, w - 1), min(sy + strip_h - 1, h - 1)],
        fill=tuple(color),
    )
    # black or white text depending on strip luminance
    lum = 0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2]
    fill = (0, 0, 0) if lum > 128 else (255, 255, 255)
    drawer.text((sx + 2 - left, sy + 1 - top), label, fill=fill, font=font)
    return np.asarray(im, dtype=np.uint8).copy()
