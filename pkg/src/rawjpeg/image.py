"""Raw image I/O, normalization, resizing and synthetic raw generation.

A raw image is a float64 ``(H, W, 3)`` array of linear-light samples with
nominal range [0, 1]. Two exchange formats are supported: 16-bit RGB PNG
and little-endian 3-channel PFM.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .exceptions import ImageFormatError
from .validation import check_image

FORMATS = ("png16", "pfm")


def infer_format(path) -> str:
    ext = Path(path).suffix.lower()
    if ext == ".png":
        return "png16"
    if ext == ".pfm":
        return "pfm"
    raise ImageFormatError(f"cannot infer raw format from extension {ext!r}; use png16 or pfm")


def load_raw(path, format: str | None = None) -> np.ndarray:
    """Read a raw image from a 16-bit PNG or a PFM file.

    PNG samples are mapped ``v / 65535``; PFM values are taken verbatim
    and clamped to [0, 1].
    """
    fmt = format or infer_format(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    if fmt == "png16":
        return _read_png16(path)
    if fmt == "pfm":
        return _read_pfm(path)
    raise ValueError(f"unknown raw format {fmt!r}")


def save_raw(img, path, format: str | None = None) -> None:
    fmt = format or infer_format(path)
    img = check_image(img, clip=True)
    if fmt == "png16":
        _write_png16(img, path)
    elif fmt == "pfm":
        _write_pfm(img, path)
    else:
        raise ValueError(f"unknown raw format {fmt!r}")


def _read_png16(path) -> np.ndarray:
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise ImageFormatError(f"unreadable PNG: {path}")
    if data.dtype != np.uint16:
        raise ImageFormatError(f"{path}: expected 16 bits per channel, got {data.dtype}")
    if data.ndim != 3 or data.shape[2] != 3:
        raise ImageFormatError(f"{path}: expected 3 channels, got shape {data.shape}")
    return data[..., ::-1].astype(np.float64) / 65535.0


def _write_png16(img: np.ndarray, path) -> None:
    u16 = np.floor(img * 65535.0 + 0.5).astype(np.uint16)
    if not cv2.imwrite(str(path), np.ascontiguousarray(u16[..., ::-1])):
        raise OSError(f"could not write {path}")


def _read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"PF":
            if header == b"Pf":
                raise ImageFormatError(f"{path}: grayscale PFM, expected 3 channels")
            raise ImageFormatError(f"{path}: not a PFM file")
        try:
            dims = fh.readline().split()
            width, height = int(dims[0]), int(dims[1])
            scale = float(fh.readline().strip())
        except (ValueError, IndexError) as exc:
            raise ImageFormatError(f"{path}: malformed PFM header") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.fromfile(fh, dtype=dtype)
    if data.size != width * height * 3:
        raise ImageFormatError(f"{path}: expected {width * height * 3} samples, found {data.size}")
    # PFM rows run bottom to top
    img = data.reshape(height, width, 3)[::-1].astype(np.float64)
    if not np.all(np.isfinite(img)):
        raise ImageFormatError(f"{path}: non-finite samples")
    return np.clip(img, 0.0, 1.0)


def _write_pfm(img: np.ndarray, path) -> None:
    write_pfm_f32(img.astype("<f4"), path)


def write_pfm_f32(img: np.ndarray, path) -> None:
    """Write an already float32 ``(H, W, 3)`` array as little-endian PFM."""
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(b"PF\n%d %d\n-1.0\n" % (w, h))
        # rows go bottom to top; writing them one by one avoids a flipped copy
        rows = np.asarray(img, dtype="<f4")
        for i in range(h - 1, -1, -1):
            fh.write(np.ascontiguousarray(rows[i]).data)


@dataclass(frozen=True)
class NormalizationSpec:
    black_level: float
    white_level: float

    def __post_init__(self):
        if not (self.black_level >= 0 and self.white_level > self.black_level):
            raise ValueError(
                f"need white_level > black_level >= 0, got black={self.black_level}, white={self.white_level}"
            )


def normalize(counts, spec: NormalizationSpec) -> np.ndarray:
    """Black/white-level normalization of sensor counts into [0, 1]."""
    counts = np.asarray(counts, dtype=np.float64)
    out = (counts - spec.black_level) / (spec.white_level - spec.black_level)
    return np.clip(out, 0.0, 1.0)


def _axis_weights(n_src: int, n_dst: int):
    # align-corners: dst i samples src at i * (n_src - 1) / (n_dst - 1)
    if n_dst == 1 or n_src == 1:
        pos = np.zeros(n_dst)
    else:
        pos = np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))
    i0 = np.minimum(np.floor(pos).astype(np.intp), max(n_src - 2, 0))
    frac = pos - i0
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, frac


def resize_bilinear(img, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with the align-corners sample grid.

    Works on ``(H, W)`` and ``(H, W, C)`` arrays. Edge samples map to edge
    samples, so constants are preserved and no value leaves the input range.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be >= 1, got {out_w}x{out_h}")
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape[:2]
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    extra = (None,) * (arr.ndim - 2)
    fx = fx[(None, slice(None)) + extra]
    rows = arr[:, x0] * (1.0 - fx) + arr[:, x1] * fx
    fy = fy[(slice(None), None) + extra]
    return rows[y0] * (1.0 - fy) + rows[y1] * fy


def luma(img: np.ndarray) -> np.ndarray:
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


SYNTH_PROFILES = {
    # read noise sigma, shot noise gain
    "default": (0.002, 0.0004),
    "noisy": (0.006, 0.0015),
    "clean": (0.0, 0.0),
}


def synth_raw(seed: int, width: int = 512, height: int = 512, profile: str = "default") -> np.ndarray:
    """Generate a deterministic raw-like test image.

    The scene mixes a smooth low-frequency field, a linear gradient, flat
    shapes and a little texture; it is then pushed into the dark end of the
    range (linear sensor response), tinted with a green-dominant cast and
    given Poisson-Gaussian-like noise.
    """
    if profile not in SYNTH_PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(SYNTH_PROFILES)}")
    read_sigma, shot_gain = SYNTH_PROFILES[profile]
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / max(height - 1, 1)
    xx = xx / max(width - 1, 1)

    smooth = resize_bilinear(rng.random((5, 5)), width, height)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    scene = 0.55 * smooth + 0.45 * ramp

    # per-region reflectance with mild chroma
    refl = np.ones((height, width, 3)) * scene[..., None]
    for _ in range(rng.integers(4, 9)):
        cy, cx = rng.random(2)
        ry, rx = rng.uniform(0.05, 0.25, 2)
        level = rng.uniform(0.05, 1.0)
        tint = 1.0 + rng.normal(0.0, 0.15, 3)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        refl[mask] = level * tint
    freq = rng.uniform(8, 40)
    refl *= 1.0 + 0.05 * np.sin(2 * np.pi * freq * (xx + 0.3 * yy))[..., None]
    refl = np.clip(refl, 0.0, None)

    exposure = rng.uniform(0.35, 0.7)
    linear = exposure * refl ** rng.uniform(2.0, 2.6)
    gains = np.array([rng.uniform(0.4, 0.85), 1.0, rng.uniform(0.35, 0.8)])
    raw = linear * gains

    if read_sigma or shot_gain:
        sigma = np.sqrt(read_sigma ** 2 + shot_gain * np.clip(raw, 0.0, None))
        raw = raw + rng.normal(0.0, 1.0, raw.shape) * sigma
    return np.clip(raw, 0.0, 1.0)
