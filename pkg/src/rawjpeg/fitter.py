"""Per-image parameter fitting.

The raw parameter vector (``g``, ``h``, optional ``s``) is mapped to valid
adapter coefficients by :func:`constrain`; gradients of the reconstruction
loss through the simulated codec come from the torch mirror in
``_autodiff``, and an Adam update written out below moves the raw vector.
"""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace

import numpy as np
import torch

from . import _autodiff as ad
from .dct import BLOCK
from .exceptions import FitError
from .image import resize_bilinear
from .jpegsim import DEFAULT_FOURIER_TERMS, JpegSimConfig, simulate_jpeg
from .metrics import ssim as ssim_np
from .payload import quantize
from .transforms import (
    DCT_LOG_BOUND,
    GAMMA_GRID,
    GAMMA_LOG_BOUND,
    GAMMA_MAX,
    GAMMA_MIN,
    LUT_SIZE,
    AdapterParams,
    ColorTransform,
    post_decode,
    pre_encode,
)
from .validation import check_image, check_quality

log = logging.getLogger(__name__)

DEFAULT_LOSS_WEIGHTS = (1.0, 0.1, 0.1)


@dataclass
class RawParams:
    """Unconstrained parameters: gamma logits, LUT increments, DCT logits."""

    gamma: np.ndarray
    luts: np.ndarray
    dct: np.ndarray | None = None

    @classmethod
    def zeros(cls, use_dct: bool = True) -> "RawParams":
        return cls(np.zeros(GAMMA_GRID), np.zeros((3, LUT_SIZE)), np.zeros((BLOCK, BLOCK)) if use_dct else None)

    def arrays(self) -> list[np.ndarray]:
        return [a for a in (self.gamma, self.luts, self.dct) if a is not None]

    def copy(self) -> "RawParams":
        return RawParams(self.gamma.copy(), self.luts.copy(), None if self.dct is None else self.dct.copy())


def _strictly_increasing(lut: np.ndarray) -> np.ndarray:
    # extreme increments can collapse neighbours onto one float; nudge them apart
    out = lut.copy()
    for i in range(1, out.shape[-1]):
        out[..., i] = np.maximum(out[..., i], np.nextafter(out[..., i - 1], np.inf))
    out[..., -1] = 1.0
    for i in range(out.shape[-1] - 2, -1, -1):
        out[..., i] = np.minimum(out[..., i], np.nextafter(out[..., i + 1], -np.inf))
    out[..., 0] = 0.0
    return out


def constrain(raw: RawParams) -> AdapterParams:
    """Map raw values onto valid coefficients.

    ``gamma = exp(2 tanh g)``, ``S = exp(0.7 tanh s)`` and each LUT is the
    min-max normalized cumulative sum of ``softplus(h)``.
    """
    for a in raw.arrays():
        if not np.all(np.isfinite(a)):
            raise ValueError("raw parameters must be finite")
    gamma = np.exp(GAMMA_LOG_BOUND * np.tanh(raw.gamma))
    steps = np.cumsum(np.logaddexp(0.0, raw.luts), axis=1)
    span = steps[:, -1:] - steps[:, :1]
    luts = _strictly_increasing((steps - steps[:, :1]) / span)
    scale = None if raw.dct is None else np.exp(DCT_LOG_BOUND * np.tanh(raw.dct))
    return AdapterParams(luts=luts, gamma=gamma, dct_scale=scale).validate()


def loss_np(recon, target, weights=DEFAULT_LOSS_WEIGHTS) -> float:
    """Weighted L1 + (1 - SSIM) + L1 of real and imaginary FFT parts (numpy)."""
    w_l1, w_ssim, w_fft = weights
    diff = np.asarray(recon, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    total = 0.0
    if w_l1:
        total += w_l1 * np.abs(diff).mean()
    if w_ssim:
        total += w_ssim * (1.0 - ssim_np(recon, target))
    if w_fft:
        spec = np.fft.fft2(diff, axes=(0, 1))
        total += w_fft * (np.abs(spec.real).mean() + np.abs(spec.imag).mean())
    return float(total)


def objective_np(raw: RawParams, thumb, quality: int, weights=DEFAULT_LOSS_WEIGHTS,
                 fourier_terms: int = DEFAULT_FOURIER_TERMS) -> float:
    """Fit objective evaluated entirely with the numpy pipeline."""
    params = constrain(raw)
    cfg = JpegSimConfig(quality=quality, fourier_terms=fourier_terms, rounding="soft")
    recon = post_decode(simulate_jpeg(pre_encode(thumb, params), cfg), params)
    return loss_np(recon, thumb, weights)


@dataclass
class FitConfig:
    """Settings of :func:`fit`.

    ``step_size`` is the Adam learning rate; ``precision`` selects the
    arithmetic of the differentiable graph (float32 is about twice as fast
    and is what the CLI uses; float64 is used for gradient checks).
    """

    quality: int = 50
    iterations: int = 200
    step_size: float = 0.03
    moment_decays: tuple[float, float] = (0.9, 0.999)
    thumbnail: int = 256
    loss_weights: tuple[float, float, float] = DEFAULT_LOSS_WEIGHTS
    use_dct: bool = True
    rng_seed: int = 0
    fourier_terms: int = DEFAULT_FOURIER_TERMS
    precision: str = "float32"
    eps: float = 1e-8

    def __post_init__(self):
        check_quality(self.quality)
        self.moment_decays = tuple(float(b) for b in self.moment_decays)
        self.loss_weights = tuple(float(w) for w in self.loss_weights)
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ValueError(f"iterations must be a nonnegative integer, got {self.iterations}")
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if len(self.moment_decays) != 2 or not all(0 <= b < 1 for b in self.moment_decays):
            raise ValueError(f"moment_decays must be two values in [0, 1), got {self.moment_decays}")
        t = int(self.thumbnail)
        if t != self.thumbnail or t < 16 or t & (t - 1):
            raise ValueError(f"thumbnail must be a power of two >= 16, got {self.thumbnail}")
        if len(self.loss_weights) != 3 or any(w < 0 or not math.isfinite(w) for w in self.loss_weights):
            raise ValueError(f"loss_weights must be three nonnegative numbers, got {self.loss_weights}")
        if int(self.fourier_terms) < 1:
            raise ValueError(f"fourier_terms must be >= 1, got {self.fourier_terms}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")

    @property
    def dtype(self):
        return torch.float32 if self.precision == "float32" else torch.float64

    @classmethod
    def from_file(cls, path, **overrides) -> "FitConfig":
        """Read ``key = value`` lines; ``#`` starts a comment.

        Tuple fields take comma-separated values, booleans accept
        true/false/yes/no/1/0.
        """
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in kinds:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _parse_value(kinds[key], val, f"{path}:{lineno}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _parse_value(kind: str, text: str, where: str):
    try:
        if kind.startswith("tuple"):
            return tuple(float(v) for v in text.split(","))
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return low in ("true", "yes", "1")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError as exc:
        raise ValueError(f"{where}: bad value {text!r} for a {kind}") from exc


@dataclass
class FitResult:
    params: AdapterParams
    losses: list[float] = field(default_factory=list)
    raw: RawParams | None = None

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else math.nan

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else math.nan


@contextmanager
def _single_thread():
    prev = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(prev)


def make_thumbnail(img, side: int) -> np.ndarray:
    return resize_bilinear(check_image(img, clip=True), side, side)


class _Problem:
    """Loss and gradient of the fit objective for one thumbnail."""

    def __init__(self, thumb: np.ndarray, cfg: FitConfig):
        h, w = thumb.shape[:2]
        self.cfg = cfg
        self.graph = ad.Graph(h, w, cfg.quality, cfg.fourier_terms, dtype=cfg.dtype)
        self.target = ad.to_chw(thumb, cfg.dtype)

    def tensors(self, raw: RawParams) -> list[torch.Tensor]:
        return [torch.tensor(a, dtype=self.cfg.dtype, requires_grad=True) for a in raw.arrays()]

    def evaluate(self, ts: list[torch.Tensor]) -> torch.Tensor:
        gamma, luts, scale = ad.constrain(ts[0], ts[1], ts[2] if len(ts) > 2 else None)
        recon = self.graph.reconstruct(self.target, gamma, luts, scale)
        return ad.loss(recon, self.target, self.cfg.loss_weights)


def gradient(raw: RawParams, img_thumb, cfg: FitConfig) -> tuple[float, RawParams]:
    """Loss and exact reverse-mode gradient with respect to every raw entry."""
    thumb = check_image(img_thumb, clip=True)
    prob = _Problem(thumb, cfg)
    ts = prob.tensors(raw)
    value = prob.evaluate(ts)
    grads = torch.autograd.grad(value, ts, allow_unused=True)
    out = [np.zeros(t.shape) if g is None else g.detach().double().numpy() for t, g in zip(ts, grads)]
    return float(value.detach()), RawParams(out[0], out[1], out[2] if len(out) > 2 else None)


def fit_trace(img, cfg: FitConfig | None = None, callback=None) -> FitResult:
    """Fit adapter parameters to ``img`` and keep the loss history.

    Starts from ``raw = 0`` (identity coefficients) and runs
    ``cfg.iterations`` Adam steps on the ``cfg.thumbnail`` square
    thumbnail. The returned params have been through a serialization round
    trip, so they are exactly what a decoder will read.
    """
    cfg = cfg or FitConfig()
    raw = RawParams.zeros(cfg.use_dct)
    if cfg.iterations == 0:
        return FitResult(quantize(constrain(raw)), [], raw)

    torch.manual_seed(cfg.rng_seed)
    thumb = make_thumbnail(img, cfg.thumbnail)
    prob = _Problem(thumb, cfg)
    b1, b2 = cfg.moment_decays
    losses = []
    with _single_thread():
        ts = prob.tensors(raw)
        m = [torch.zeros_like(t) for t in ts]
        v = [torch.zeros_like(t) for t in ts]
        for it in range(1, cfg.iterations + 1):
            value = prob.evaluate(ts)
            if not torch.isfinite(value):
                raise FitError(f"loss became non-finite at iteration {it} (last finite: "
                               f"{losses[-1] if losses else 'none'}); try a smaller step_size")
            grads = torch.autograd.grad(value, ts)
            losses.append(float(value.detach()))
            with torch.no_grad():
                for t, g, mt, vt in zip(ts, grads, m, v):
                    mt.mul_(b1).add_(g, alpha=1 - b1)
                    vt.mul_(b2).addcmul_(g, g, value=1 - b2)
                    m_hat = mt / (1 - b1 ** it)
                    v_hat = vt / (1 - b2 ** it)
                    t.sub_(cfg.step_size * m_hat / (v_hat.sqrt() + cfg.eps))
            if callback is not None:
                callback(it, losses[-1])
        with torch.no_grad():
            final = float(prob.evaluate(ts))
        if not math.isfinite(final):
            raise FitError("loss became non-finite after the last update")
        losses.append(final)
    arrays = [t.detach().double().numpy() for t in ts]
    raw = RawParams(arrays[0], arrays[1], arrays[2] if len(arrays) > 2 else None)
    log.debug("fit Q=%d: loss %.5f -> %.5f", cfg.quality, losses[0], losses[-1])
    return FitResult(quantize(constrain(raw)), losses, raw)


def fit(img, cfg: FitConfig | None = None) -> AdapterParams:
    return fit_trace(img, cfg).params


PRESETS = ("identity", "fixed_gamma", "srgb_baseline")


def preset(kind: str, gamma: float = 2.2, color: ColorTransform | None = None,
           use_dct: bool = False) -> AdapterParams:
    """Non-fitted baselines.

    ``fixed_gamma`` stores a constant grid of ``1/gamma`` so encoding
    raises samples to ``1/gamma``; ``srgb_baseline`` wraps neutral params
    in a color transform.
    """
    base = AdapterParams.identity(use_dct)
    if kind == "identity":
        return quantize(base)
    if kind == "fixed_gamma":
        if not (gamma > 0 and math.isfinite(gamma)):
            raise ValueError(f"gamma must be positive, got {gamma}")
        g = 1.0 / gamma
        if not GAMMA_MIN <= g <= GAMMA_MAX:
            raise ValueError(f"1/gamma = {g:.4g} is outside the representable range "
                             f"[{GAMMA_MIN:.4g}, {GAMMA_MAX:.4g}]")
        return quantize(replace(base, gamma=np.full(GAMMA_GRID, g)))
    if kind == "srgb_baseline":
        if color is None:
            raise ValueError("srgb_baseline needs a ColorTransform")
        return quantize(replace(base, color=color))
    raise ValueError(f"unknown preset {kind!r}; choose from {PRESETS}")
