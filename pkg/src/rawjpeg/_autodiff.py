"""Torch mirror of the encode -> simulated JPEG -> decode chain.

Everything runs in float64 so reverse-mode gradients can be checked against
finite differences of the numpy implementation. Images are channel-first
``(3, H, W)`` tensors here (the numpy side is ``(H, W, 3)``); sides must be
multiples of 16 so neither the DCT nor 4:2:0 subsampling needs padding.

Blockwise DCTs are two small matmuls, one per axis, leaving coefficients in
image order: coefficient ``(k, l)`` of block ``(a, b)`` sits at pixel
``(8a + k, 8b + l)``. Per-frequency factors are therefore plain tiled maps.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F

from .dct import BLOCK, dct_basis
from .jpegsim import CHROMA_TABLE, LUMA_TABLE, RGB_TO_YCBCR, YCBCR_TO_RGB, scaled_table
from .transforms import DCT_LOG_BOUND, GAMMA_GRID, GAMMA_LOG_BOUND

DTYPE = torch.float64


def _t(a, dtype=DTYPE) -> torch.Tensor:
    return torch.as_tensor(np.asarray(a, dtype=np.float64)).to(dtype)


def to_chw(img: np.ndarray, dtype=DTYPE) -> torch.Tensor:
    return _t(img, dtype).permute(2, 0, 1).contiguous()


def to_hwc(t: torch.Tensor) -> np.ndarray:
    return t.detach().permute(1, 2, 0).numpy().copy()


def constrain(g: torch.Tensor, h: torch.Tensor, s: torch.Tensor | None):
    gamma = torch.exp(GAMMA_LOG_BOUND * torch.tanh(g))
    steps = torch.cumsum(F.softplus(h), dim=1)
    luts = (steps - steps[:, :1]) / (steps[:, -1:] - steps[:, :1])
    scale = None if s is None else torch.exp(DCT_LOG_BOUND * torch.tanh(s))
    return gamma, luts, scale


class SoftRound(torch.autograd.Function):
    """``z - (1/pi) sum_n (-1)^(n+1) sin(2 pi n z) / n`` and its derivative.

    sin(n t) and cos(n t) come from the Chebyshev recurrence, so only one
    sin/cos pair is evaluated per element regardless of the term count.
    """

    @staticmethod
    def forward(ctx, z, n_terms):
        theta = 2 * math.pi * z
        s_cur, c_cur = torch.sin(theta), torch.cos(theta)
        two_c = 2 * c_cur
        s_prev, c_prev = torch.zeros_like(z), torch.ones_like(z)
        acc_s = torch.zeros_like(z)
        acc_c = torch.zeros_like(z)
        for n in range(1, n_terms + 1):
            sign = 1.0 if n % 2 else -1.0
            acc_s += (sign / n) * s_cur
            acc_c += sign * c_cur
            s_prev, s_cur = s_cur, two_c * s_cur - s_prev
            c_prev, c_cur = c_cur, two_c * c_cur - c_prev
        ctx.save_for_backward(1.0 - 2.0 * acc_c)
        return z - acc_s / math.pi

    @staticmethod
    def backward(ctx, grad):
        (deriv,) = ctx.saved_tensors
        return grad * deriv, None


def _align_corners(n_src: int, n_dst: int, dtype=DTYPE):
    pos = np.zeros(n_dst) if n_dst == 1 else np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))
    i0 = np.minimum(np.floor(pos).astype(np.int64), max(n_src - 2, 0))
    i1 = np.minimum(i0 + 1, n_src - 1)
    return torch.as_tensor(i0), torch.as_tensor(i1), _t(pos - i0, dtype)


def _centered(n: int, dtype=DTYPE):
    pos = np.clip((np.arange(2 * n) + 0.5) / 2.0 - 0.5, 0.0, n - 1)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    return torch.as_tensor(i0), torch.as_tensor(i1), _t(pos - i0, dtype)


def _interp2(arr, axis_h, axis_w):
    """Separable linear interpolation over the last two axes."""
    y0, y1, fy = axis_h
    x0, x1, fx = axis_w
    rows = arr[..., x0] * (1 - fx) + arr[..., x1] * fx
    fy = fy[:, None]
    return rows[..., y0, :] * (1 - fy) + rows[..., y1, :] * fy


def _power(x, e):
    # 0 ** e := 0 with a zero gradient
    pos = x > 0
    safe = torch.where(pos, x, torch.ones_like(x))
    return torch.where(pos, safe ** e, torch.zeros_like(x))


class Graph:
    """Precomputed constants for one image size and JPEG quality."""

    def __init__(self, height: int, width: int, quality: int, fourier_terms: int = 10, dtype=DTYPE):
        if height % 16 or width % 16:
            raise ValueError(f"sides must be multiples of 16, got {height}x{width}")
        self.height, self.width = height, width
        self.dtype = dtype
        self.fourier_terms = int(fourier_terms)
        self.D = _t(dct_basis(BLOCK), dtype)
        self.hb, self.wb = height // BLOCK, width // BLOCK
        self.luma_q = _t(np.tile(scaled_table(LUMA_TABLE, quality), (self.hb, self.wb)), dtype)
        self.chroma_q = _t(np.tile(scaled_table(CHROMA_TABLE, quality), (self.hb // 2, self.wb // 2)), dtype)
        self.to_ycc = _t(RGB_TO_YCBCR, dtype)
        self.to_rgb = _t(YCBCR_TO_RGB, dtype)
        self._gamma_axes = (_align_corners(GAMMA_GRID[0], height, dtype), _align_corners(GAMMA_GRID[1], width, dtype))
        self._chroma_axes = (_centered(height // 2, dtype), _centered(width // 2, dtype))

    # -- building blocks ---------------------------------------------------

    def upsample_gamma(self, grid):
        return _interp2(grid, *self._gamma_axes)

    def _along_rows(self, x, m):
        c, h, w = x.shape
        return (m @ x.reshape(c, h // BLOCK, BLOCK, w)).reshape(c, h, w)

    def _along_cols(self, x, m):
        c, h, w = x.shape
        return (x.reshape(c, h, w // BLOCK, BLOCK) @ m.T).reshape(c, h, w)

    def block_dct(self, x):
        return self._along_cols(self._along_rows(x, self.D), self.D)

    def block_idct(self, y):
        return self._along_cols(self._along_rows(y, self.D.T), self.D.T)

    def _dct_rescale(self, x, factor):
        tiled = factor.repeat(x.shape[1] // BLOCK, x.shape[2] // BLOCK)
        return self.block_idct(self.block_dct(x) * tiled)

    @staticmethod
    def apply_lut(x, luts):
        n = luts.shape[1]
        x = x.clamp(0.0, 1.0)
        pos = x * (n - 1)
        k = torch.clamp(pos.detach().floor().long(), max=n - 2)
        frac = pos - k
        flat = k.reshape(3, -1)
        lo = torch.gather(luts, 1, flat).reshape(x.shape)
        hi = torch.gather(luts, 1, flat + 1).reshape(x.shape)
        return lo + (hi - lo) * frac

    @staticmethod
    def invert_lut(y, luts):
        n = luts.shape[1]
        y = y.clamp(0.0, 1.0)
        flat = y.reshape(3, -1)
        k = torch.searchsorted(luts.detach().contiguous(), flat.detach().contiguous(), right=True) - 1
        k = k.clamp(0, n - 2)
        lo = torch.gather(luts, 1, k)
        hi = torch.gather(luts, 1, k + 1)
        return ((k + (flat - lo) / (hi - lo)) / (n - 1)).reshape(y.shape)

    def _code_plane(self, plane, table):
        coeffs = self.block_dct(plane) / table
        return self.block_idct(SoftRound.apply(coeffs, self.fourier_terms) * table)

    # -- pipeline ----------------------------------------------------------

    def pre_encode(self, x, gamma, luts, scale):
        x = self.apply_lut(x, luts)
        if scale is not None:
            x = self._dct_rescale(x, scale)
        x = x.clamp(0.0, 1.0)
        return _power(x, self.upsample_gamma(gamma))

    def simulate(self, x):
        ycc = torch.einsum("ij,jhw->ihw", self.to_ycc, x.clamp(0.0, 1.0)) * 255.0
        luma = self._code_plane(ycc[:1] - 128.0, self.luma_q) + 128.0
        c, h, w = ycc[1:].shape
        chroma = ycc[1:].reshape(c, h // 2, 2, w // 2, 2).mean(dim=(2, 4))
        chroma = self._code_plane(chroma, self.chroma_q)
        chroma = _interp2(chroma, *self._chroma_axes)
        ycc = torch.cat([luma, chroma]) / 255.0
        return torch.einsum("ij,jhw->ihw", self.to_rgb, ycc).clamp(0.0, 1.0)

    def post_decode(self, y, gamma, luts, scale):
        x = _power(y.clamp(0.0, 1.0), 1.0 / self.upsample_gamma(gamma))
        if scale is not None:
            x = self._dct_rescale(x, 1.0 / scale)
        return self.invert_lut(x, luts).clamp(0.0, 1.0)

    def reconstruct(self, x, gamma, luts, scale, codec: bool = True):
        y = self.pre_encode(x, gamma, luts, scale)
        if codec:
            y = self.simulate(y)
        return self.post_decode(y, gamma, luts, scale)


def gaussian_window(size: int = 11, sigma: float = 1.5, dtype=DTYPE) -> torch.Tensor:
    ax = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(ax ** 2) / (2 * sigma ** 2))
    return (g / g.sum()).to(dtype)


_BANDS: dict = {}


def _band(n: int, win: torch.Tensor) -> torch.Tensor:
    """``(n - k + 1, n)`` matrix applying ``win`` at every valid offset."""
    key = (n, win.numel(), win.dtype)
    if key not in _BANDS:
        k = win.numel()
        m = torch.zeros(n - k + 1, n, dtype=win.dtype)
        for i in range(n - k + 1):
            m[i, i:i + k] = win
        _BANDS[key] = m
    return _BANDS[key]


def _valid_blur(x, win):
    h, w = x.shape[-2:]
    return _band(h, win) @ (x @ _band(w, win).T)


def ssim(a, b, c1: float = 0.01 ** 2, c2: float = 0.03 ** 2):
    """Mean single-scale SSIM over channels, valid-region Gaussian windows."""
    win = gaussian_window(dtype=a.dtype)
    if min(a.shape[-2:]) < win.numel():
        raise ValueError(f"SSIM needs images of at least {win.numel()}x{win.numel()}")
    mu_a, mu_b, e_aa, e_bb, e_ab = _valid_blur(torch.stack([a, b, a * a, b * b, a * b]), win)
    var_a = e_aa - mu_a ** 2
    var_b = e_bb - mu_b ** 2
    cov = e_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return (num / den).mean()


def loss(recon, target, weights):
    """Weighted L1 + (1 - SSIM) + L1 on real/imag parts of the 2D FFT."""
    w_l1, w_ssim, w_fft = weights
    total = recon.new_zeros(())
    if w_l1:
        total = total + w_l1 * (recon - target).abs().mean()
    if w_ssim:
        total = total + w_ssim * (1.0 - ssim(recon, target))
    if w_fft:
        diff = torch.fft.fft2(recon - target)
        total = total + w_fft * (diff.real.abs().mean() + diff.imag.abs().mean())
    return total
