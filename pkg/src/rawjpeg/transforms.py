"""Invertible pre-encode operators and their exact inverses.

Encode order: optional color transform, per-channel LUT, optional blockwise
DCT scaling, clamp to [0, 1], pixel-wise gamma. Decode runs the inverses in
reverse order. The clamp after DCT scaling is the only lossy step; it is
inactive unless the scaling overshoots the unit range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dct import BLOCK, block_dct, block_idct, pad_to_multiple
from .image import resize_bilinear
from .validation import check_image

LUT_SIZE = 128
GAMMA_GRID = (100, 100)
GAMMA_LOG_BOUND = 2.0
DCT_LOG_BOUND = 0.7
GAMMA_MIN, GAMMA_MAX = np.exp(-GAMMA_LOG_BOUND), np.exp(GAMMA_LOG_BOUND)
DCT_MIN, DCT_MAX = np.exp(-DCT_LOG_BOUND), np.exp(DCT_LOG_BOUND)

# stored parameters pass through float32; allow for its rounding
_BOUND_RTOL = 1e-6


@dataclass(eq=False)
class ColorTransform:
    """White-balance gains, a 3x3 color matrix and a display gamma."""

    gains: np.ndarray
    ccm: np.ndarray
    gamma: float = 2.2

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.float64).reshape(3)
        self.ccm = np.asarray(self.ccm, dtype=np.float64).reshape(3, 3)
        self.gamma = float(self.gamma)
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains <= 0):
            raise ValueError(f"white-balance gains must be positive, got {self.gains}")
        if not np.all(np.isfinite(self.ccm)) or abs(np.linalg.det(self.ccm)) < 1e-12:
            raise ValueError("color correction matrix is singular")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def __eq__(self, other):
        return (
            isinstance(other, ColorTransform)
            and np.array_equal(self.gains, other.gains)
            and np.array_equal(self.ccm, other.ccm)
            and self.gamma == other.gamma
        )


@dataclass(eq=False)
class AdapterParams:
    """All coefficients of the invertible pipeline.

    Attributes:
        luts: ``(3, 128)`` strictly increasing tone curves, 0 at the first
            entry and 1 at the last.
        gamma: ``(100, 100)`` exponent grid, each value in [e^-2, e^2].
        dct_scale: optional ``(8, 8)`` DCT multipliers in [e^-0.7, e^0.7].
        color: optional :class:`ColorTransform` wrapping the whole pipeline.
    """

    luts: np.ndarray
    gamma: np.ndarray
    dct_scale: np.ndarray | None = None
    color: ColorTransform | None = field(default=None)

    def __post_init__(self):
        self.luts = np.asarray(self.luts, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if self.dct_scale is not None:
            self.dct_scale = np.asarray(self.dct_scale, dtype=np.float64)

    @classmethod
    def identity(cls, use_dct: bool = False) -> "AdapterParams":
        return cls(
            luts=np.tile(np.arange(LUT_SIZE) / (LUT_SIZE - 1), (3, 1)),
            gamma=np.ones(GAMMA_GRID),
            dct_scale=np.ones((BLOCK, BLOCK)) if use_dct else None,
        )

    @property
    def has_dct(self) -> bool:
        return self.dct_scale is not None

    @property
    def has_color(self) -> bool:
        return self.color is not None

    def validate(self) -> "AdapterParams":
        """Check every invariant; raise ValueError on the first violation."""
        if self.luts.shape != (3, LUT_SIZE):
            raise ValueError(f"luts must have shape (3, {LUT_SIZE}), got {self.luts.shape}")
        if not np.all(np.isfinite(self.luts)):
            raise ValueError("luts contain non-finite values")
        if np.any(self.luts[:, 0] != 0.0) or np.any(self.luts[:, -1] != 1.0):
            raise ValueError("luts must start at 0 and end at 1")
        if np.any(np.diff(self.luts, axis=1) <= 0):
            raise ValueError("luts must be strictly increasing")
        _check_range("gamma", self.gamma, GAMMA_GRID, GAMMA_MIN, GAMMA_MAX)
        if self.dct_scale is not None:
            _check_range("dct_scale", self.dct_scale, (BLOCK, BLOCK), DCT_MIN, DCT_MAX)
        if self.color is not None and not isinstance(self.color, ColorTransform):
            raise ValueError("color must be a ColorTransform")
        return self

    def __eq__(self, other):
        if not isinstance(other, AdapterParams):
            return NotImplemented
        same_dct = (self.dct_scale is None and other.dct_scale is None) or (
            self.dct_scale is not None
            and other.dct_scale is not None
            and np.array_equal(self.dct_scale, other.dct_scale)
        )
        return (
            np.array_equal(self.luts, other.luts)
            and np.array_equal(self.gamma, other.gamma)
            and same_dct
            and self.color == other.color
        )


def _check_range(name, arr, shape, lo, hi):
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < lo * (1 - _BOUND_RTOL) or arr.max() > hi * (1 + _BOUND_RTOL):
        raise ValueError(f"{name} outside [{lo:.4g}, {hi:.4g}]: [{arr.min():.6g}, {arr.max():.6g}]")


def apply_lut(img: np.ndarray, luts: np.ndarray) -> np.ndarray:
    """Per-channel piecewise-linear tone curve; inputs are clamped to [0, 1]."""
    x = np.clip(img, 0.0, 1.0)
    n = luts.shape[1]
    pos = x * (n - 1)
    k = np.minimum(pos.astype(np.intp), n - 2)
    frac = pos - k
    out = np.empty_like(x)
    for c in range(3):
        lo = luts[c][k[..., c]]
        hi = luts[c][k[..., c] + 1]
        out[..., c] = lo + (hi - lo) * frac[..., c]
    return out


def invert_lut(img: np.ndarray, luts: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`apply_lut` for strictly increasing tables."""
    y = np.clip(img, 0.0, 1.0)
    grid = np.arange(luts.shape[1]) / (luts.shape[1] - 1)
    out = np.empty_like(y)
    for c in range(3):
        out[..., c] = np.interp(y[..., c], luts[c], grid)
    return out


def upsample_gamma(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    return resize_bilinear(grid, width, height)


def _power(x: np.ndarray, exponent: np.ndarray) -> np.ndarray:
    # 0 ** g := 0 for every exponent
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, safe ** exponent, 0.0)


def apply_gamma(img: np.ndarray, grid: np.ndarray) -> np.ndarray:
    g = upsample_gamma(grid, img.shape[0], img.shape[1])[..., None]
    return _power(np.clip(img, 0.0, 1.0), g)


def invert_gamma(img: np.ndarray, grid: np.ndarray) -> np.ndarray:
    g = upsample_gamma(grid, img.shape[0], img.shape[1])[..., None]
    return _power(np.clip(img, 0.0, 1.0), 1.0 / g)


def _dct_rescale(img: np.ndarray, factor: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    coeffs = block_dct(pad_to_multiple(img, BLOCK))
    coeffs = coeffs * factor[None, :, None, :, None]
    return block_idct(coeffs)[:h, :w]


def scale_dct(img: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Multiply every 8x8 block's DCT coefficients by ``scale``.

    Partial blocks at the right/bottom edges are edge-replicated to 8x8
    before the transform and cropped afterwards.
    """
    return _dct_rescale(img, np.asarray(scale, dtype=np.float64))


def _partial_block_matrix(rows: int, cols: int, scale: np.ndarray) -> np.ndarray:
    """Linear map that :func:`scale_dct` applies to one ``rows x cols`` edge block."""
    n = rows * cols
    basis = np.eye(n).reshape(n, rows, cols).transpose(1, 2, 0)
    return _dct_rescale(basis, scale).reshape(n, n)


def _solve_blocks(strip: np.ndarray, rows: int, cols: int, scale: np.ndarray) -> np.ndarray:
    # strip is (rows, k * cols, C): k partial blocks side by side
    k = strip.shape[1] // cols
    m = _partial_block_matrix(rows, cols, scale)
    vec = strip.reshape(rows, k, cols, -1).transpose(0, 2, 1, 3).reshape(rows * cols, -1)
    out = np.linalg.solve(m, vec)
    return out.reshape(rows, cols, k, -1).transpose(0, 2, 1, 3).reshape(strip.shape)


def unscale_edges(img: np.ndarray, scale: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Invert the partial edge blocks of :func:`scale_dct` into ``out``.

    Edge padding makes each partial block a different linear map of its
    valid pixels, so dividing by ``scale`` after re-padding is not an
    inverse; a small exact solve per block shape is.
    """
    h, w = img.shape[:2]
    fh, fw = h - h % BLOCK, w - w % BLOCK
    r, c = h - fh, w - fw
    if r and fw:
        out[fh:, :fw] = _solve_blocks(img[fh:, :fw], r, BLOCK, scale)
    if c and fh:
        # right strip: blocks stacked vertically, transpose to reuse the row solver
        strip = np.swapaxes(img[:fh, fw:], 0, 1)
        out[:fh, fw:] = np.swapaxes(_solve_blocks(strip, c, BLOCK, scale.T), 0, 1)
    if r and c:
        out[fh:, fw:] = _solve_blocks(img[fh:, fw:], r, c, scale)
    return out


def unscale_dct(img: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`scale_dct`, edge blocks included."""
    scale = np.asarray(scale, dtype=np.float64)
    h, w = img.shape[:2]
    fh, fw = h - h % BLOCK, w - w % BLOCK
    out = np.empty_like(img, dtype=np.float64)
    if fh and fw:
        out[:fh, :fw] = _dct_rescale(img[:fh, :fw], 1.0 / scale)
    return unscale_edges(img, scale, out)


def apply_color(img: np.ndarray, ct: ColorTransform) -> np.ndarray:
    rgb = (img * ct.gains) @ ct.ccm.T
    return np.clip(np.clip(rgb, 0.0, None) ** (1.0 / ct.gamma), 0.0, 1.0)


def invert_color(img: np.ndarray, ct: ColorTransform) -> np.ndarray:
    lin = np.clip(img, 0.0, None) ** ct.gamma
    return (lin @ np.linalg.inv(ct.ccm).T) / ct.gains


def pre_encode(img, params: AdapterParams) -> np.ndarray:
    """Map a raw image into the JPEG-friendly domain; output is in [0, 1]."""
    x = check_image(img, clip=True)
    if params.color is not None:
        x = apply_color(x, params.color)
    x = apply_lut(x, params.luts)
    if params.dct_scale is not None:
        x = scale_dct(x, params.dct_scale)
    x = np.clip(x, 0.0, 1.0)
    return apply_gamma(x, params.gamma)


def post_decode(img, params: AdapterParams) -> np.ndarray:
    """Invert :func:`pre_encode` on a decoded image."""
    x = check_image(img)
    x = invert_gamma(x, params.gamma)
    if params.dct_scale is not None:
        x = unscale_dct(x, params.dct_scale)
    x = invert_lut(x, params.luts)
    if params.color is not None:
        x = invert_color(x, params.color)
    return np.clip(x, 0.0, 1.0)
