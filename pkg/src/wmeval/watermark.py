"""Reference blind watermark used to exercise the robustness labeler.

Pipeline: one orthonormal Haar level on the luma channel, 8x8 block DCT
of the approximation band, then odd/even quantization of one
mid-frequency coefficient per block. One bit per block, raster order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .errors import CapacityError, ParameterError, ShapeError
from .imageops import RasterImage

_BLOCK = 8


def _zigzag_positions() -> list[tuple[int, int]]:
    cells = [(r, c) for r in range(_BLOCK) for c in range(_BLOCK)]
    return sorted(cells, key=lambda rc: (rc[0] + rc[1],
                                         rc[0] if (rc[0] + rc[1]) % 2 else -rc[0]))


_ZIGZAG = _zigzag_positions()


@dataclass(frozen=True)
class WatermarkMessage:
    """Bit string payload, most significant bit first in hex form."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ParameterError("message must contain at least one bit")
        if any(b not in (0, 1) for b in self.bits):
            raise ParameterError("message bits must be 0 or 1")
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))

    def __len__(self) -> int:
        return len(self.bits)

    def to_hex(self) -> str:
        padded = list(self.bits) + [0] * (-len(self.bits) % 4)
        digits = []
        for i in range(0, len(padded), 4):
            nib = padded[i] * 8 + padded[i + 1] * 4 + padded[i + 2] * 2 + padded[i + 3]
            digits.append(format(nib, "x"))
        return "".join(digits)

    @classmethod
    def from_hex(cls, text: str, n_bits: int) -> "WatermarkMessage":
        if n_bits < 1:
            raise ParameterError("n_bits must be positive")
        try:
            value = int(text, 16)
        except ValueError:
            raise ParameterError(f"not a hex string: {text!r}") from None
        width = 4 * len(text)
        if n_bits > width:
            raise ParameterError(f"{text!r} holds only {width} bits")
        all_bits = [(value >> (width - 1 - i)) & 1 for i in range(width)]
        if any(all_bits[n_bits:]):
            raise ParameterError("padding bits beyond n_bits must be zero")
        return cls(tuple(all_bits[:n_bits]))

    @classmethod
    def random(cls, n_bits: int, seed: int = 0) -> "WatermarkMessage":
        if n_bits < 1:
            raise ParameterError("n_bits must be positive")
        rng = np.random.default_rng(seed)
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=n_bits)))


@dataclass(frozen=True)
class EmbedConfig:
    """Quantization step and which zig-zag coefficient carries the bit."""

    strength: float = 36.0
    coeff_index: int = 14

    def __post_init__(self):
        if not self.strength > 0:
            raise ParameterError("strength must be positive")
        if not 1 <= int(self.coeff_index) <= _BLOCK * _BLOCK - 1:
            raise ParameterError("coeff_index must be in 1..63")


def capacity(img: RasterImage) -> int:
    """Number of bits the image can carry: count of 8x8 blocks in the
    half-resolution approximation band."""
    return (img.height // 2 // _BLOCK) * (img.width // 2 // _BLOCK)


def _haar_forward(y: np.ndarray):
    a = y[0::2, 0::2]
    b = y[0::2, 1::2]
    c = y[1::2, 0::2]
    d = y[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, lh, hl, hh


def _haar_inverse(ll, lh, hl, hh) -> np.ndarray:
    h2, w2 = ll.shape
    y = np.empty((2 * h2, 2 * w2), dtype=np.float64)
    y[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    y[0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    y[1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    y[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return y


def _nearest_with_parity(value: float, step: float, bit: int) -> float:
    # closest multiple m*step whose m has the requested parity
    base = int(np.floor(value / step))
    best = None
    for m in (base - 1, base, base + 1, base + 2):
        if m % 2 != bit:
            continue
        if best is None or abs(value - m * step) < abs(value - best * step):
            best = m
    return best * step


def embed(img: RasterImage, msg: WatermarkMessage,
          cfg: EmbedConfig = EmbedConfig()) -> RasterImage:
    """Return a watermarked copy of ``img`` carrying ``msg``."""
    cap = capacity(img)
    if len(msg) > cap:
        raise CapacityError(f"message of {len(msg)} bits exceeds capacity {cap}")
    y = img.luma().astype(np.float64)
    h2, w2 = img.height // 2 * 2, img.width // 2 * 2
    ll, lh, hl, hh = _haar_forward(y[:h2, :w2])
    nbx = ll.shape[1] // _BLOCK
    pos = _ZIGZAG[int(cfg.coeff_index)]
    for i, bit in enumerate(msg.bits):
        r, c = (i // nbx) * _BLOCK, (i % nbx) * _BLOCK
        block = ll[r:r + _BLOCK, c:c + _BLOCK]
        coeffs = dctn(block, norm="ortho")
        coeffs[pos] = _nearest_with_parity(coeffs[pos], cfg.strength, bit)
        ll[r:r + _BLOCK, c:c + _BLOCK] = idctn(coeffs, norm="ortho")
    y_new = y.copy()
    y_new[:h2, :w2] = _haar_inverse(ll, lh, hl, hh)
    return img.with_luma(y_new)


def extract(img: RasterImage, n_bits: int,
            cfg: EmbedConfig = EmbedConfig()) -> WatermarkMessage:
    """Blind-extract ``n_bits`` from ``img``. Always returns a message;
    on unmarked input the bits are whatever the quantizer sees."""
    if n_bits < 1:
        raise ParameterError("n_bits must be positive")
    cap = capacity(img)
    if n_bits > cap:
        raise CapacityError(f"cannot read {n_bits} bits, capacity is {cap}")
    y = img.luma().astype(np.float64)
    h2, w2 = img.height // 2 * 2, img.width // 2 * 2
    ll, _, _, _ = _haar_forward(y[:h2, :w2])
    nbx = ll.shape[1] // _BLOCK
    pos = _ZIGZAG[int(cfg.coeff_index)]
    bits = []
    for i in range(n_bits):
        r, c = (i // nbx) * _BLOCK, (i % nbx) * _BLOCK
        block = ll[r:r + _BLOCK, c:c + _BLOCK]
        coeffs = dctn(block, norm="ortho")
        bits.append(int(np.rint(coeffs[pos] / cfg.strength)) % 2)
    return WatermarkMessage(tuple(bits))


def bit_accuracy(sent: WatermarkMessage, received: WatermarkMessage) -> float:
    """Fraction of matching bits; both messages must have equal length."""
    if len(sent) != len(received):
        raise ShapeError("messages differ in length")
    matches = sum(a == b for a, b in zip(sent.bits, received.bits))
    return matches / len(sent)
