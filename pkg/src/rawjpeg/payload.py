"""Binary serialization of :class:`AdapterParams` for the JPEG COM segment.

Body layout, version 1, little-endian::

    offset  size    field
    0       4       magic b"RJA1"
    4       1       version (1)
    5       1       flags: bit0 DCT scale present, bit1 color transform present
    6       4       f32 log-gamma minimum
    10      4       f32 log-gamma maximum
    14      20000   u16[100*100] log-gamma codes, row-major
    20014   768     u16[3*128] LUT codes, channel-major
    20782   256     f32[8*8] DCT scale (only if bit0)
    ...     52      f32[3] gains, f32[9] ccm row-major, f32 gamma (only if bit1)

The body is zlib-compressed, Base64-encoded (standard alphabet, padded) and
prefixed with ``RJA:``. Decoding yields exactly the parameters the encoder
used, because the encoder always runs on ``quantize(params)``.
"""

from __future__ import annotations

import base64
import binascii
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .exceptions import PayloadError
from .transforms import (
    DCT_LOG_BOUND,
    GAMMA_GRID,
    GAMMA_LOG_BOUND,
    LUT_SIZE,
    AdapterParams,
    ColorTransform,
)

MAGIC = b"RJA1"
VERSION = 1
PREFIX = "RJA:"
FLAG_DCT = 0x01
FLAG_COLOR = 0x02
_KNOWN_FLAGS = FLAG_DCT | FLAG_COLOR
MAX_BODY = 65533
LEVELS = 65535

_HEADER = struct.Struct("<4sBBff")
_N_GAMMA = GAMMA_GRID[0] * GAMMA_GRID[1]


def _gamma_endpoints(log_gamma: np.ndarray) -> tuple[np.float32, np.float32]:
    lo = np.float32(np.clip(log_gamma.min(), -GAMMA_LOG_BOUND, GAMMA_LOG_BOUND))
    hi = np.float32(np.clip(log_gamma.max(), -GAMMA_LOG_BOUND, GAMMA_LOG_BOUND))
    return lo, hi


def _gamma_codes(log_gamma: np.ndarray, lo: np.float32, hi: np.float32) -> np.ndarray:
    span = float(hi) - float(lo)
    if span <= 0:
        return np.zeros(log_gamma.shape, dtype=np.uint16)
    t = (log_gamma - float(lo)) / span * LEVELS
    return np.clip(np.floor(t + 0.5), 0, LEVELS).astype(np.uint16)


def _gamma_values(codes: np.ndarray, lo: np.float32, hi: np.float32) -> np.ndarray:
    span = float(hi) - float(lo)
    return np.exp(float(lo) + codes.astype(np.float64) * (span / LEVELS))


def repair_lut_codes(codes: np.ndarray) -> np.ndarray:
    """Force strictly increasing u16 codes with endpoints 0 and 65535.

    A forward cumulative max (+1 per step) removes ties; a backward pass
    pulls the top back under 65535. 128 entries always fit in 65536 levels.
    """
    q = np.asarray(codes, dtype=np.int64).copy()
    q[..., 0] = 0
    q[..., -1] = LEVELS
    n = q.shape[-1]
    for i in range(1, n):
        q[..., i] = np.maximum(q[..., i], q[..., i - 1] + 1)
    q[..., -1] = LEVELS
    for i in range(n - 2, -1, -1):
        q[..., i] = np.minimum(q[..., i], q[..., i + 1] - 1)
    return q.astype(np.uint16)


def _lut_codes(luts: np.ndarray) -> np.ndarray:
    return repair_lut_codes(np.floor(np.clip(luts, 0.0, 1.0) * LEVELS + 0.5))


def _pack(params: AdapterParams) -> bytes:
    log_gamma = np.log(params.gamma)
    lo, hi = _gamma_endpoints(log_gamma)
    flags = (FLAG_DCT if params.has_dct else 0) | (FLAG_COLOR if params.has_color else 0)
    parts = [
        _HEADER.pack(MAGIC, VERSION, flags, lo, hi),
        _gamma_codes(log_gamma, lo, hi).astype("<u2").tobytes(),
        _lut_codes(params.luts).astype("<u2").tobytes(),
    ]
    if params.has_dct:
        parts.append(params.dct_scale.astype("<f4").tobytes())
    if params.has_color:
        ct = params.color
        parts.append(np.concatenate([ct.gains, ct.ccm.ravel(), [ct.gamma]]).astype("<f4").tobytes())
    return b"".join(parts)


def serialize(params: AdapterParams) -> str:
    """Encode ``params`` as COM text: ``"RJA:" + base64(zlib(body))``."""
    params.validate()
    body = zlib.compress(_pack(params), 9)
    text = PREFIX + base64.b64encode(body).decode("ascii")
    assert len(text) <= MAX_BODY, "payload layout exceeds the COM segment limit"
    return text


def _unpack(raw: bytes) -> AdapterParams:
    if len(raw) < _HEADER.size:
        raise PayloadError("truncated payload header")
    magic, version, flags, lo, hi = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise PayloadError(f"bad magic {magic!r}")
    if version != VERSION:
        raise PayloadError(f"unsupported payload version {version}")
    if flags & ~_KNOWN_FLAGS:
        raise PayloadError(f"unknown flag bits 0x{flags:02X}")
    lo, hi = np.float32(lo), np.float32(hi)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
        raise PayloadError("invalid log-gamma range")

    expected = _HEADER.size + 2 * _N_GAMMA + 2 * 3 * LUT_SIZE
    expected += 4 * 64 if flags & FLAG_DCT else 0
    expected += 4 * 13 if flags & FLAG_COLOR else 0
    if len(raw) != expected:
        raise PayloadError(f"payload body is {len(raw)} bytes, expected {expected}")

    pos = _HEADER.size
    gamma_codes = np.frombuffer(raw, "<u2", _N_GAMMA, pos).reshape(GAMMA_GRID)
    pos += 2 * _N_GAMMA
    lut_codes = np.frombuffer(raw, "<u2", 3 * LUT_SIZE, pos).reshape(3, LUT_SIZE)
    pos += 2 * 3 * LUT_SIZE
    dct_scale = color = None
    if flags & FLAG_DCT:
        dct_scale = np.frombuffer(raw, "<f4", 64, pos).reshape(8, 8).astype(np.float64)
        pos += 4 * 64
    if flags & FLAG_COLOR:
        vals = np.frombuffer(raw, "<f4", 13, pos).astype(np.float64)
        try:
            color = ColorTransform(gains=vals[:3], ccm=vals[3:12], gamma=vals[12])
        except ValueError as exc:
            raise PayloadError(f"invalid color transform: {exc}") from exc

    if np.any(np.diff(lut_codes.astype(np.int64), axis=1) <= 0) or np.any(lut_codes[:, 0] != 0) \
            or np.any(lut_codes[:, -1] != LEVELS):
        raise PayloadError("LUT codes are not strictly increasing from 0 to 65535")
    params = AdapterParams(
        luts=lut_codes.astype(np.float64) / LEVELS,
        gamma=_gamma_values(gamma_codes, lo, hi),
        dct_scale=dct_scale,
        color=color,
    )
    try:
        return params.validate()
    except ValueError as exc:
        raise PayloadError(f"decoded parameters are invalid: {exc}") from exc


def deserialize(text) -> AdapterParams:
    """Parse COM text produced by :func:`serialize`."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("ascii")
        except UnicodeDecodeError as exc:
            raise PayloadError("payload is not ASCII") from exc
    if not text.startswith(PREFIX):
        raise PayloadError(f"payload does not start with {PREFIX!r}")
    try:
        compressed = base64.b64decode(text[len(PREFIX):], validate=True)
    except (binascii.Error, ValueError) as exc:
        raise PayloadError(f"invalid Base64: {exc}") from exc
    try:
        raw = zlib.decompress(compressed)
    except zlib.error as exc:
        raise PayloadError(f"DEFLATE stream is corrupt: {exc}") from exc
    return _unpack(raw)


def quantize(params: AdapterParams) -> AdapterParams:
    """The parameters a decoder will see after a serialization round trip."""
    return deserialize(serialize(params))


def header_info(text: str) -> dict:
    """Header fields of a payload, for ``inspect``; does not validate the body."""
    compressed = base64.b64decode(text[len(PREFIX):], validate=True)
    raw = zlib.decompress(compressed)
    magic, version, flags, lo, hi = _HEADER.unpack_from(raw)
    return {
        "magic": magic.decode("ascii", "replace"),
        "version": version,
        "flags": flags,
        "dct": bool(flags & FLAG_DCT),
        "color": bool(flags & FLAG_COLOR),
        "log_gamma_range": (float(lo), float(hi)),
        "body_bytes": len(raw),
        "compressed_bytes": len(compressed),
        "text_bytes": len(text),
    }


@dataclass
class QuantizationReport:
    """Per-field round-trip errors of :func:`quantize`.

    ``gamma_log_err`` is measured against the float32 endpoints actually
    stored, so it isolates the u16 lattice; ``gamma_endpoint_err`` is the
    float32 rounding of those endpoints.
    """

    gamma_abs_err: float
    gamma_log_err: float
    gamma_log_bound: float
    gamma_endpoint_err: float
    lut_err: float
    lut_err_before_repair: float
    lut_bound: float
    dct_err: float
    color_err: float

    @property
    def within_bounds(self) -> bool:
        tol = 1e-12
        return (self.gamma_log_err <= self.gamma_log_bound + tol
                and self.lut_err_before_repair <= self.lut_bound + tol)


def quantization_roundtrip_bound(params: AdapterParams) -> QuantizationReport:
    params.validate()
    q = quantize(params)
    log_gamma = np.log(params.gamma)
    lo, hi = _gamma_endpoints(log_gamma)
    clipped = np.clip(log_gamma, float(lo), float(hi))
    span = float(hi) - float(lo)
    rounded = np.floor(np.clip(params.luts, 0, 1) * LEVELS + 0.5) / LEVELS
    dct_err = 0.0
    if params.has_dct:
        dct_err = float(np.abs(params.dct_scale - q.dct_scale).max())
    color_err = 0.0
    if params.has_color:
        a, b = params.color, q.color
        color_err = float(max(np.abs(a.gains - b.gains).max(), np.abs(a.ccm - b.ccm).max(), abs(a.gamma - b.gamma)))
    return QuantizationReport(
        gamma_abs_err=float(np.abs(params.gamma - q.gamma).max()),
        gamma_log_err=float(np.abs(clipped - np.log(q.gamma)).max()),
        gamma_log_bound=span / LEVELS,
        gamma_endpoint_err=float(max(abs(float(lo) - log_gamma.min()), abs(float(hi) - log_gamma.max()))),
        lut_err=float(np.abs(params.luts - q.luts).max()),
        lut_err_before_repair=float(np.abs(params.luts - rounded).max()),
        lut_bound=1.0 / LEVELS,
        dct_err=dct_err,
        color_err=color_err,
    )
