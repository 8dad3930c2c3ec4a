"""Upscaling of the input frame to X_HR: built-in interpolation or external SR.

Built-in methods are nearest-neighbor block replication and separable
Catmull-Rom bicubic interpolation; the ``external`` method round-trips the
image through a super-resolution server speaking the line protocol, so any
model (FSRCNN and friends) can be plugged in without this package knowing
its framework.  Whatever the method, the output is exactly ``Z`` times the
input in both dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from srdet import wire
from srdet.imagebuf import ImageBuffer

__all__ = [
    "UpscaleMethod",
    "UpscaleError",
    "upscale",
    "upscale_nearest",
    "upscale_bicubic",
    "encode_sr_request",
    "decode_sr_response",
]


@dataclass(frozen=True)
class UpscaleMethod:
    """Selects how X_HR is produced: {nearest, bicubic, external}."""

    kind: str = "bicubic"
    backend_uri: str | None = None

    def __post_init__(self):
        if self.kind not in ("nearest", "bicubic", "external"):
            raise ValueError(f"unknown upscale method {self.kind!r}")
        if self.kind == "external" and not self.backend_uri:
            raise ValueError("external upscaling requires a backend_uri")


class UpscaleError(Exception):
    """The upscaling step failed (backend trouble or contract violation)."""


def _check_zoom(zoom) -> int:
    if zoom != int(zoom) or int(zoom) < 2:
        raise ValueError(f"zoom must be an integer >= 2, got {zoom!r}")
    return int(zoom)


def upscale_nearest(img: ImageBuffer, zoom: int) -> ImageBuffer:
    """Replicate every pixel into a zoom x zoom block."""
    zoom = _check_zoom(zoom)
    arr = np.repeat(np.repeat(img.pixels, zoom, axis=0), zoom, axis=1)
    return ImageBuffer(arr)


def _catmull_rom_weights(f: np.ndarray) -> np.ndarray:
    """Weights for taps at offsets (-1, 0, 1, 2) around the sample point.

    ``f`` is the fractional distance from the floor sample.  Kernel is the
    a = -0.5 cubic; the four weights sum to exactly 1 for every f.
    """

    def kernel(t):
        t = np.abs(t)
        near = (1.5 * t - 2.5) * t * t + 1.0
        far = ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
        return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))

    offsets = np.array([-1.0, 0.0, 1.0, 2.0])
    return kernel(offsets[None, :] - f[:, None])


def _axis_taps(n_in: int, zoom: int):
    """Clamped tap indices and weights for one separable bicubic pass."""
    out = np.arange(n_in * zoom, dtype=np.float64)
    src = (out + 0.5) / zoom - 0.5
    base = np.floor(src)
    frac = src - base
    weights = _catmull_rom_weights(frac)
    idx = base[:, None].astype(np.int64) + np.array([-1, 0, 1, 2])
    np.clip(idx, 0, n_in - 1, out=idx)
    return idx, weights


def upscale_bicubic(img: ImageBuffer, zoom: int) -> ImageBuffer:
    """Separable Catmull-Rom interpolation with edge-clamped sampling."""
    zoom = _check_zoom(zoom)
    arr = img.pixels.astype(np.float64)
    for axis in (0, 1):
        moved = np.moveaxis(arr, axis, 0)
        idx, weights = _axis_taps(moved.shape[0], zoom)
        gathered = moved[idx]  # (out_len, 4, ...)
        expand = (slice(None), slice(None)) + (None,) * (gathered.ndim - 2)
        moved = (gathered * weights[expand]).sum(axis=1)
        arr = np.moveaxis(moved, 0, axis)
    quantized = np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)
    return ImageBuffer(quantized)


def encode_sr_request(
    img: ImageBuffer, zoom: int, request_id: int | None = None
) -> dict:
    if request_id is None:
        request_id = wire.next_request_id()
    return wire.upscale_request(img, _check_zoom(zoom), request_id=request_id)


def decode_sr_response(
    msg: dict,
    zoom: int,
    in_w: int,
    in_h: int,
    expected_request_id: int | None = None,
) -> ImageBuffer:
    """Parse an SR reply and enforce the exact-Z dimensional contract."""
    if msg.get("type") != "image":
        raise wire.WireError(f"expected 'image' message, got {msg.get('type')!r}")
    if expected_request_id is not None and msg.get("request_id") != expected_request_id:
        raise wire.WireError(
            f"request_id mismatch: expected {expected_request_id}, "
            f"got {msg.get('request_id')!r}"
        )
    if not isinstance(msg.get("image"), str):
        raise wire.WireError("'image' field must be a base64 string")
    out = wire.image_from_field(msg["image"], context="sr response image")
    if out.width != zoom * in_w or out.height != zoom * in_h:
        raise wire.WireError(
            f"sr backend returned {out.width}x{out.height}, "
            f"expected {zoom * in_w}x{zoom * in_h}"
        )
    return out


def _upscale_external(img: ImageBuffer, zoom: int, method: UpscaleMethod) -> ImageBuffer:
    request = encode_sr_request(img, zoom)
    try:
        with wire.open_connection(method.backend_uri) as conn:
            reply = conn.request(request, "image")
        return decode_sr_response(
            reply,
            zoom,
            img.width,
            img.height,
            expected_request_id=request["request_id"],
        )
    except (wire.WireError, wire.BackendError, OSError) as exc:
        raise UpscaleError(f"external sr backend failed: {exc}") from exc


def upscale(img: ImageBuffer, zoom: int, method: UpscaleMethod) -> ImageBuffer:
    """Produce the high-resolution image for this frame."""
    zoom = _check_zoom(zoom)
    if method.kind == "nearest":
        return upscale_nearest(img, zoom)
    if method.kind == "bicubic":
        return upscale_bicubic(img, zoom)
    return _upscale_external(img, zoom, method)
