"""JPEG degradation simulator.

Mirrors baseline JPEG: full-range YCbCr, optional 4:2:0 chroma subsampling,
8x8 DCT, quantization with quality-scaled Annex K tables, then the inverse
path. In ``soft`` mode rounding is replaced by a truncated Fourier series so
the whole chain is differentiable; ``hard`` mode rounds half away from zero
and is used to compare against a real codec.

Samples are in [0, 1]; DCT coefficients are computed on the 0..255 scale
after the usual -128 level shift, so table entries keep their standard
meaning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dct import BLOCK, block_dct, block_idct, pad_to_multiple
from .validation import check_image, check_quality

LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)

# ITU-T T.871 full range, chroma centered on 0: Cb = (B - Y) / 1.772, Cr = (R - Y) / 1.402
RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.299 / 1.772, -0.587 / 1.772, 0.5],
        [0.5, -0.587 / 1.402, -0.114 / 1.402],
    ]
)
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)

DEFAULT_FOURIER_TERMS = 10


@dataclass(frozen=True)
class JpegSimConfig:
    quality: int = 50
    fourier_terms: int = DEFAULT_FOURIER_TERMS
    rounding: str = "soft"
    subsampling: str = "s420"
    luma_table: np.ndarray = field(default_factory=lambda: LUMA_TABLE.copy(), compare=False)
    chroma_table: np.ndarray = field(default_factory=lambda: CHROMA_TABLE.copy(), compare=False)

    def __post_init__(self):
        check_quality(self.quality)
        if int(self.fourier_terms) < 1:
            raise ValueError(f"fourier_terms must be >= 1, got {self.fourier_terms}")
        if self.rounding not in ("soft", "hard"):
            raise ValueError(f"rounding must be 'soft' or 'hard', got {self.rounding!r}")
        if self.subsampling not in ("s420", "none"):
            raise ValueError(f"subsampling must be 's420' or 'none', got {self.subsampling!r}")
        for name in ("luma_table", "chroma_table"):
            t = np.asarray(getattr(self, name), dtype=np.float64)
            if t.shape != (BLOCK, BLOCK) or t.min() < 1 or t.max() > 255:
                raise ValueError(f"{name} must be 8x8 with entries in [1, 255]")


def quality_factor(quality: int) -> float:
    """Table scale factor for JPEG quality ``quality``."""
    q = check_quality(quality)
    if q < 50:
        return 50.0 / q
    return (200.0 - 2.0 * q) / 100.0


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """Quality-scaled table, rounded and clamped to integer steps in [1, 255]."""
    return np.clip(round_half_away(base * quality_factor(quality)), 1.0, 255.0)


def soft_round(z, n_terms: int = DEFAULT_FOURIER_TERMS):
    """Differentiable approximation of ``round(z)``; exact at integers."""
    z = np.asarray(z, dtype=np.float64)
    acc = np.zeros_like(z)
    for n in range(1, int(n_terms) + 1):
        acc += ((-1) ** (n + 1) / n) * np.sin(2 * np.pi * n * z)
    return z - acc / np.pi


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    return img @ RGB_TO_YCBCR.T


def ycbcr_to_rgb(img: np.ndarray) -> np.ndarray:
    return img @ YCBCR_TO_RGB.T


def subsample_420(plane: np.ndarray) -> np.ndarray:
    """2x2 box average over the first two axes (even sizes required)."""
    h, w = plane.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"4:2:0 subsampling needs even dimensions, got {h}x{w}")
    p = plane.reshape((h // 2, 2, w // 2, 2) + plane.shape[2:])
    return p.mean(axis=(1, 3))


def _centered_weights(n: int):
    # output i sits at input coordinate (i + 0.5) / 2 - 0.5, clamped at the edges
    pos = np.clip((np.arange(2 * n) + 0.5) / 2.0 - 0.5, 0.0, n - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, pos - i0


def upsample_420(plane: np.ndarray) -> np.ndarray:
    """Double both axes with bilinear interpolation on co-sited centers."""
    h, w = plane.shape[:2]
    extra = (None,) * (plane.ndim - 2)
    x0, x1, fx = _centered_weights(w)
    fx = fx[(None, slice(None)) + extra]
    rows = plane[:, x0] * (1 - fx) + plane[:, x1] * fx
    y0, y1, fy = _centered_weights(h)
    fy = fy[(slice(None), None) + extra]
    return rows[y0] * (1 - fy) + rows[y1] * fy


def _code_plane(plane: np.ndarray, table: np.ndarray, cfg: JpegSimConfig) -> np.ndarray:
    coeffs = block_dct(plane)
    t = table.reshape((1, BLOCK, 1, BLOCK) + (1,) * (plane.ndim - 2))
    z = coeffs / t
    if cfg.rounding == "hard":
        z = round_half_away(z)
    else:
        z = soft_round(z, cfg.fourier_terms)
    return block_idct(z * t)


def simulate_jpeg(img, cfg: JpegSimConfig | None = None) -> np.ndarray:
    """Compress and decompress ``img`` through the simulated codec."""
    cfg = cfg or JpegSimConfig()
    x = check_image(img, clip=True)
    h, w = x.shape[:2]
    sub = cfg.subsampling == "s420"
    ycc = pad_to_multiple(rgb_to_ycbcr(x), 2 * BLOCK if sub else BLOCK)

    luma = ycc[..., 0] * 255.0 - 128.0
    chroma = ycc[..., 1:] * 255.0
    if sub:
        chroma = subsample_420(chroma)

    luma = _code_plane(luma, scaled_table(cfg.luma_table, cfg.quality), cfg)
    chroma = _code_plane(chroma, scaled_table(cfg.chroma_table, cfg.quality), cfg)
    if sub:
        chroma = upsample_420(chroma)

    ycc = np.concatenate([(luma[..., None] + 128.0), chroma], axis=-1) / 255.0
    return np.clip(ycbcr_to_rgb(ycc)[:h, :w], 0.0, 1.0)


def quantize8(img, rounding: str = "hard", n_terms: int = DEFAULT_FOURIER_TERMS) -> np.ndarray:
    """Plain 8-bit quantization in RGB (the codec-free ablation)."""
    x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0
    if rounding == "hard":
        return round_half_away(x) / 255.0
    if rounding == "soft":
        return soft_round(x, n_terms) / 255.0
    raise ValueError(f"rounding must be 'soft' or 'hard', got {rounding!r}")
