"""Pixel-domain primitives: image container, distortions, PSNR and its
mapping onto the 1..5 quality scale.

All operations work on 8-bit images, grayscale ``(h, w)`` or RGB
``(h, w, 3)``, and are deterministic given their seed argument.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import median_filter

from .errors import ParameterError, ShapeError

PEAK = 255.0

JPEG = "jpeg"
GAUSSIAN_NOISE = "gaussian_noise"
MEDIAN_FILTER = "median_filter"
DISTORTION_KINDS = (JPEG, GAUSSIAN_NOISE, MEDIAN_FILTER)

# integer BT.601 luma weights, scaled by 256
_LUMA_R, _LUMA_G, _LUMA_B = 77, 150, 29


@dataclass(frozen=True)
class RasterImage:
    """Immutable 8-bit image. ``pixels`` is (h, w) or (h, w, 3) uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ParameterError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise ShapeError(f"expected (h, w) or (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeError("image must have at least one row and column")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @classmethod
    def load_png(cls, path) -> "RasterImage":
        with Image.open(path) as im:
            mode = "L" if im.mode in ("1", "L", "I", "I;16") else "RGB"
            arr = np.asarray(im.convert(mode), dtype=np.uint8)
        return cls(arr)

    def save_png(self, path) -> None:
        Image.fromarray(self.pixels).save(path, format="PNG")

    def luma(self) -> np.ndarray:
        """Integer BT.601 luma as uint8; grayscale images pass through."""
        if self.channels == 1:
            return self.pixels.copy()
        px = self.pixels.astype(np.int64)
        y = (_LUMA_R * px[:, :, 0] + _LUMA_G * px[:, :, 1]
             + _LUMA_B * px[:, :, 2] + 128) >> 8
        return y.astype(np.uint8)

    def with_luma(self, y: np.ndarray) -> "RasterImage":
        """Return a copy whose luma channel is replaced by ``y``.

        Chroma is carried over from the original image, so RGB content
        away from the gamut boundary survives a luma round trip up to
        rounding.
        """
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.height, self.width):
            raise ShapeError(f"luma shape {y.shape} does not match image")
        if self.channels == 1:
            return RasterImage(_to_u8(y))
        px = self.pixels.astype(np.float64)
        y_old = (_LUMA_R * px[:, :, 0] + _LUMA_G * px[:, :, 1]
                 + _LUMA_B * px[:, :, 2] + 128.0) / 256.0
        # shift red and blue with the luma, solve green so the BT.601
        # combination lands exactly on the requested luma
        r = y + (px[:, :, 0] - y_old)
        b = y + (px[:, :, 2] - y_old)
        g = (256.0 * y - 128.0 - _LUMA_R * r - _LUMA_B * b) / _LUMA_G
        return RasterImage(_to_u8(np.stack([r, g, b], axis=-1)))


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class DistortionSpec:
    """One distortion channel. Only the parameter matching ``kind`` is used."""

    kind: str
    jpeg_quality: int = 75
    noise_sigma: float = 0.05
    kernel_size: int = 3

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ParameterError(f"unknown distortion kind {self.kind!r}")
        if self.kind == JPEG and not 1 <= int(self.jpeg_quality) <= 100:
            raise ParameterError("jpeg_quality must be in 1..100")
        if self.kind == GAUSSIAN_NOISE and not self.noise_sigma > 0:
            raise ParameterError("noise_sigma must be positive")
        if self.kind == MEDIAN_FILTER:
            k = int(self.kernel_size)
            if k < 3 or k % 2 == 0:
                raise ParameterError("kernel_size must be an odd integer >= 3")


def apply_distortion(img: RasterImage, spec: DistortionSpec,
                     seed: int = 0) -> RasterImage:
    """Distorted copy of ``img``. Shape and dtype are preserved.

    Only the Gaussian channel consumes the seed; JPEG and median
    filtering are deterministic on their own.
    """
    if spec.kind == JPEG:
        buf = io.BytesIO()
        Image.fromarray(img.pixels).save(buf, format="JPEG",
                                         quality=int(spec.jpeg_quality))
        buf.seek(0)
        with Image.open(buf) as im:
            mode = "L" if img.channels == 1 else "RGB"
            out = np.asarray(im.convert(mode), dtype=np.uint8)
        return RasterImage(out)
    if spec.kind == GAUSSIAN_NOISE:
        rng = np.random.default_rng(seed)
        x = img.pixels.astype(np.float64) / PEAK
        x = x + rng.normal(0.0, spec.noise_sigma, size=x.shape)
        return RasterImage(_to_u8(np.clip(x, 0.0, 1.0) * PEAK))
    # median filter, edge rows and columns replicated
    k = int(spec.kernel_size)
    if img.channels == 1:
        out = median_filter(img.pixels, size=(k, k), mode="nearest")
    else:
        out = np.stack([median_filter(img.pixels[:, :, c], size=(k, k),
                                      mode="nearest") for c in range(3)],
                       axis=-1)
    return RasterImage(out)


def psnr(a: RasterImage, b: RasterImage) -> float:
    """Peak signal-to-noise ratio in dB against a 255 peak.

    Returns ``math.inf`` for identical images.
    """
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels):
        raise ShapeError("images must share height, width and channel count")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


@dataclass(frozen=True)
class PsnrNormalization:
    """Affine clamp taking PSNR in dB onto the 1..5 quality scale."""

    low_db: float = 20.0
    high_db: float = 45.0

    def __post_init__(self):
        if not self.low_db < self.high_db:
            raise ParameterError("low_db must be strictly below high_db")


def normalize_psnr(value_db: float,
                   norm: PsnrNormalization = PsnrNormalization()) -> float:
    """Map PSNR to [1, 5]: 1 at or below low_db, 5 at or above high_db."""
    if math.isinf(value_db) and value_db > 0:
        return 5.0
    t = (value_db - norm.low_db) / (norm.high_db - norm.low_db)
    return 1.0 + 4.0 * min(1.0, max(0.0, t))
