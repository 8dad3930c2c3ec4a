"""Non-local means denoising of the super-resolved image.

Each output pixel is a similarity-weighted average over a search window:
``w = exp(-max(d^2 - 2*sigma^2, 0) / h^2)`` where ``d^2`` is the mean
squared difference between the 7x7 (by default) RGB patches around the
pixel and its candidate neighbor.  Borders are handled by mirroring the
image for patch sampling; only neighbors whose centers lie inside the
image are averaged.

The patch distances are computed with per-offset integral images over
integer squared differences.  Because those sums are exact int64
arithmetic, any partition of the output rows produces the same integers,
which is what makes row-parallel execution bit-identical to sequential.
Contributions of mirrored column offsets (-dx, +dx) are added pairwise,
so horizontally mirroring the input mirrors the output exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from srdet.imagebuf import ImageBuffer

__all__ = ["NlmParams", "nlm_denoise", "estimate_noise_sigma"]


@dataclass(frozen=True)
class NlmParams:
    """Filter strength and window geometry for non-local means.

    ``h`` is the decay of the similarity weights (channel units);
    ``patch_radius`` 3 means 7x7 comparison patches; ``search_radius`` 10
    means a 21x21 candidate window.
    """

    h: float = 10.0
    patch_radius: int = 3
    search_radius: int = 10

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be > 0, got {self.h}")
        if self.patch_radius < 1:
            raise ValueError(f"patch_radius must be >= 1, got {self.patch_radius}")
        if self.search_radius < self.patch_radius:
            raise ValueError(
                f"search_radius ({self.search_radius}) must be >= "
                f"patch_radius ({self.patch_radius})"
            )


def _patch_sums(dist: np.ndarray, k: int) -> np.ndarray:
    """Exact k x k box sums of an integer image via an integral image."""
    m, n = dist.shape
    integral = np.zeros((m + 1, n + 1), dtype=np.int64)
    np.cumsum(dist, axis=0, dtype=np.int64, out=integral[1:, 1:])
    np.cumsum(integral[1:, 1:], axis=1, out=integral[1:, 1:])
    return (
        integral[k:, k:]
        - integral[:-k, k:]
        - integral[k:, :-k]
        + integral[:-k, :-k]
    )


class _Denoiser:
    """Shared read-only state for denoising any band of output rows."""

    def __init__(self, pixels: np.ndarray, params: NlmParams, sigma: float):
        self.h2 = float(params.h) ** 2
        self.pr = params.patch_radius
        self.sr = params.search_radius
        self.threshold = 2.0 * float(sigma) ** 2
        self.height, self.width = pixels.shape[:2]
        self.values = pixels.astype(np.float64)
        pad = ((self.pr, self.pr), (self.pr, self.pr), (0, 0))
        self.padded = np.pad(pixels, pad, mode="symmetric").astype(np.int32)
        self.n_patch = 3 * (2 * self.pr + 1) ** 2

    def _contribution(self, band, dy: int, dx: int):
        """Weights and weighted neighbor values for one offset, or None.

        Returns full band-sized arrays with zeros where the neighbor
        center falls outside the image.
        """
        y_band0, y_band1 = band
        y0 = max(y_band0, -dy)
        y1 = min(y_band1, self.height - max(0, dy))
        x0 = max(0, -dx)
        x1 = self.width - max(0, dx)
        rows = y_band1 - y_band0
        if y1 <= y0 or x1 <= x0:
            return None
        pr, k = self.pr, 2 * self.pr + 1
        # squared patch differences for every needed padded-grid position
        a = self.padded[y0 : y1 + 2 * pr, x0 : x1 + 2 * pr]
        b = self.padded[y0 + dy : y1 + dy + 2 * pr, x0 + dx : x1 + dx + 2 * pr]
        diff = a - b
        dist = (diff * diff).sum(axis=2, dtype=np.int32)
        sums = _patch_sums(dist, k)
        d2 = sums / self.n_patch
        weights = np.exp(-np.maximum(d2 - self.threshold, 0.0) / self.h2)
        neighbors = self.values[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
        w_full = np.zeros((rows, self.width), dtype=np.float64)
        c_full = np.zeros((rows, self.width, 3), dtype=np.float64)
        w_full[y0 - y_band0 : y1 - y_band0, x0:x1] = weights
        c_full[y0 - y_band0 : y1 - y_band0, x0:x1] = weights[:, :, None] * neighbors
        return w_full, c_full

    def run_band(self, y_band0: int, y_band1: int) -> np.ndarray:
        band = (y_band0, y_band1)
        rows = y_band1 - y_band0
        den = np.zeros((rows, self.width), dtype=np.float64)
        num = np.zeros((rows, self.width, 3), dtype=np.float64)
        for dy in range(-self.sr, self.sr + 1):
            center = self._contribution(band, dy, 0)
            if center is not None:
                den += center[0]
                num += center[1]
            for adx in range(1, self.sr + 1):
                # -dx and +dx are valid together or not at all (the valid
                # column span has width W - adx for both)
                left = self._contribution(band, dy, -adx)
                right = self._contribution(band, dy, adx)
                if left is None:
                    continue
                # pairing +-dx keeps accumulation commutative, so a
                # mirrored input yields an exactly mirrored output
                den += left[0] + right[0]
                num += left[1] + right[1]
        out = num / den[:, :, None]
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def nlm_denoise(
    img: ImageBuffer,
    params: NlmParams = NlmParams(),
    sigma: float = 0.0,
    workers: int = 1,
) -> ImageBuffer:
    """Denoise an image; ``sigma`` is an optional noise level estimate.

    ``workers`` > 1 splits output rows into contiguous bands computed on a
    thread pool; the result is bit-identical to the sequential one.
    """
    diameter = 2 * params.patch_radius + 1
    if img.width < diameter or img.height < diameter:
        raise ValueError(
            f"image {img.width}x{img.height} smaller than patch "
            f"diameter {diameter}"
        )
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    engine = _Denoiser(img.pixels, params, sigma)
    if workers == 1 or img.height == 1:
        return ImageBuffer(engine.run_band(0, img.height))
    workers = min(workers, img.height)
    bounds = np.linspace(0, img.height, workers + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        bands = list(
            pool.map(lambda se: engine.run_band(se[0], se[1]), zip(bounds, bounds[1:]))
        )
    return ImageBuffer(np.concatenate(bands, axis=0))


_LUMA = np.array([0.299, 0.587, 0.114])
# channel-independent noise of sigma per channel shows up in the luminance
# mix attenuated by ||luma weights||_2
_LUMA_NOISE_GAIN = float(np.sqrt((_LUMA**2).sum()))


def estimate_noise_sigma(img: ImageBuffer) -> float:
    """Per-channel noise estimate from the median absolute Laplacian.

    The 4-neighbor Laplacian of i.i.d. Gaussian noise has variance
    20*sigma^2, and the median absolute value of a centered Gaussian is
    0.6745 of its standard deviation; inverting both, plus the luminance
    attenuation of channel-independent noise, gives the per-channel
    estimate.  Structure contributes outliers, which the median
    suppresses.
    """
    if img.width < 3 or img.height < 3:
        raise ValueError(f"image must be at least 3x3, got {img.width}x{img.height}")
    luma = img.pixels.astype(np.float64) @ _LUMA
    lap = (
        luma[:-2, 1:-1]
        + luma[2:, 1:-1]
        + luma[1:-1, :-2]
        + luma[1:-1, 2:]
        - 4.0 * luma[1:-1, 1:-1]
    )
    mad = float(np.median(np.abs(lap)))
    return mad / (0.6745 * np.sqrt(20.0) * _LUMA_NOISE_GAIN)
