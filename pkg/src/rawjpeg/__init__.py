"""Invertible pre-processing that lets raw images be stored as ordinary JPEGs.

Typical use::

    from rawjpeg import RawJpegAdapter, synth_raw

    raw = synth_raw(0)
    adapter = RawJpegAdapter(quality=50).fit(raw)
    data = adapter.encode(raw)
    restored = RawJpegAdapter.decode(data)
"""

from .codec import decode, decode_fast, encode
from .estimator import RawJpegAdapter
from .exceptions import ContainerError, FitError, ImageFormatError, PayloadError, RawJpegError
from .fitter import FitConfig, RawParams, constrain, fit, fit_trace, gradient, preset
from .image import load_raw, save_raw, synth_raw
from .jpegsim import JpegSimConfig, simulate_jpeg
from .metrics import MetricsReport, ms_ssim, psnr, ssim
from .payload import deserialize, quantize, serialize
from .transforms import AdapterParams, ColorTransform, post_decode, pre_encode

__version__ = "0.1.0"

__all__ = [
    "AdapterParams", "ColorTransform", "ContainerError", "FitConfig", "FitError", "ImageFormatError",
    "JpegSimConfig", "MetricsReport", "PayloadError", "RawJpegAdapter", "RawJpegError", "RawParams",
    "constrain", "decode", "decode_fast", "deserialize", "encode", "fit", "fit_trace", "gradient",
    "load_raw", "ms_ssim", "post_decode", "pre_encode", "preset", "psnr", "quantize", "save_raw",
    "serialize", "simulate_jpeg", "ssim", "synth_raw",
]
