"""Fidelity and storage metrics: PSNR, SSIM, MS-SSIM, BPP, wBPP, CR."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.ndimage import correlate1d

from .validation import check_image, check_same_shape

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    if a.size == 0:
        raise ValueError("empty images")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; ``inf`` for identical inputs."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _blur_valid(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    # full-size correlation, then drop the border rows/cols that touched padding
    r = len(win) // 2
    out = correlate1d(correlate1d(x, win, axis=0, mode="nearest"), win, axis=1, mode="nearest")
    return out[r:x.shape[0] - r, r:x.shape[1] - r]


def _ssim_terms(a, b, data_range: float = 1.0):
    """Mean luminance term and mean contrast-structure term, per channel."""
    win = gaussian_window()
    if min(a.shape[:2]) < len(win):
        raise ValueError(f"SSIM needs images of at least {len(win)}x{len(win)}, got {a.shape[:2]}")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _blur_valid(a, win), _blur_valid(b, win)
    var_a = _blur_valid(a * a, win) - mu_a ** 2
    var_b = _blur_valid(b * b, win) - mu_b ** 2
    cov = _blur_valid(a * b, win) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    axes = (0, 1)
    return (lum * cs).mean(axis=axes), cs.mean(axis=axes)


def _channels(a, b):
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, C) images, got shape {a.shape}")
    return a, b


def ssim(a, b) -> float:
    """Single-scale SSIM (11x11 Gaussian, sigma 1.5, valid region), channel mean."""
    a, b = _channels(a, b)
    full, _ = _ssim_terms(a, b)
    return float(full.mean())


def _halve(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b, weights=MS_SSIM_WEIGHTS) -> float:
    """Multi-scale SSIM with 2x2 average-pool downsampling between scales.

    Negative per-scale terms are clamped to 0 so the weighted product stays
    real; the result is the mean over channels.
    """
    a, b = _channels(a, b)
    levels = len(weights)
    need = SSIM_WINDOW * 2 ** (levels - 1)
    if min(a.shape[:2]) < need:
        raise ValueError(f"{levels}-scale MS-SSIM needs images of at least {need}x{need}, got {a.shape[:2]}")
    w = np.asarray(weights, dtype=np.float64)
    result = np.ones(a.shape[2])
    for level in range(levels):
        full, cs = _ssim_terms(a, b)
        term = full if level == levels - 1 else cs
        result *= np.maximum(term, 0.0) ** w[level]
        if level < levels - 1:
            a, b = _halve(a), _halve(b)
    return float(result.mean())


def bpp(file_bytes: int, width: int, height: int) -> float:
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")
    if file_bytes < 0:
        raise ValueError(f"file size must be nonnegative, got {file_bytes}")
    return 8.0 * file_bytes / (width * height)


def cr(reference_bytes: int, file_bytes: int) -> float:
    if reference_bytes <= 0 or file_bytes <= 0:
        raise ValueError("sizes must be positive")
    return reference_bytes / file_bytes


def unique_triples(img) -> int:
    """Distinct RGB triples after quantizing to the 16-bit lattice."""
    q = np.floor(check_image(img, clip=True) * 65535.0 + 0.5).astype(np.uint64)
    packed = (q[..., 0] << np.uint64(32)) | (q[..., 1] << np.uint64(16)) | q[..., 2]
    return int(np.unique(packed).size)


def wbpp(bpp_value: float, img) -> float:
    """``bpp / log2(1 + N_unique)``; equals ``bpp`` for a single-color image."""
    return bpp_value / math.log2(1 + unique_triples(img))


@dataclass
class MetricsReport:
    psnr: float
    ssim: float
    ms_ssim: float
    bpp: float
    wbpp: float
    cr: float
    unique_triples: int
    file_bytes: int

    @classmethod
    def compute(cls, reference, recon, file_bytes: int, reference_bytes: int | None = None):
        """Full report; ``reference_bytes`` defaults to the 16-bit PNG size of ``reference``."""
        reference = check_image(reference)
        recon = check_image(recon)
        check_same_shape(reference, recon)
        h, w = reference.shape[:2]
        if reference_bytes is None:
            reference_bytes = png16_size(reference)
        rate = bpp(file_bytes, w, h)
        ms = ms_ssim(reference, recon) if min(h, w) >= SSIM_WINDOW * 16 else math.nan
        return cls(
            psnr=psnr(reference, recon),
            ssim=ssim(reference, recon),
            ms_ssim=ms,
            bpp=rate,
            wbpp=wbpp(rate, recon),
            cr=cr(reference_bytes, file_bytes),
            unique_triples=unique_triples(recon),
            file_bytes=int(file_bytes),
        )


def png16_size(img) -> int:
    """Byte size of ``img`` written as a 16-bit RGB PNG (the CR reference)."""
    import cv2

    u16 = np.floor(check_image(img, clip=True) * 65535.0 + 0.5).astype(np.uint16)
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(u16[..., ::-1]))
    if not ok:
        raise RuntimeError("PNG encoding failed")
    return int(buf.size)


CSV_COLUMNS = ("label", "quality") + tuple(f.name for f in fields(MetricsReport))


def csv_header() -> str:
    return ",".join(CSV_COLUMNS)


def csv_row(report: MetricsReport, label: str = "", quality: int | str = "") -> str:
    buf = io.StringIO()
    row = {"label": label, "quality": quality, **asdict(report)}
    csv.DictWriter(buf, CSV_COLUMNS, lineterminator="").writerow(row)
    return buf.getvalue()


def format_table(rows, columns) -> str:
    """Right-aligned text table; floats use 4 significant decimals."""
    def cell(v):
        if isinstance(v, float):
            return "inf" if math.isinf(v) else f"{v:.4f}"
        return str(v)

    text = [[cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(t[i]) for t in text]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(t, widths)) for t in text]
    return "\n".join(lines)
