"""JPEG marker-level manipulation and the bridge to a real baseline codec.

Only the header segments (everything before SOS) are parsed; entropy-coded
data is never touched, so inserting a COM segment cannot change decoded
pixels.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .exceptions import ContainerError
from .validation import check_image, check_quality

SOI, EOI, SOS, COM = 0xD8, 0xD9, 0xDA, 0xFE
APP0, APP15 = 0xE0, 0xEF
# markers that carry no length field
_STANDALONE = {0x01, SOI, EOI} | set(range(0xD0, 0xD8))
MAX_COM_BODY = 65533
RJA_PREFIX = b"RJA:"

MARKER_NAMES = {
    SOI: "SOI", EOI: "EOI", SOS: "SOS", COM: "COM",
    0xC0: "SOF0", 0xC1: "SOF1", 0xC2: "SOF2", 0xC4: "DHT", 0xDB: "DQT", 0xDD: "DRI",
}


def marker_name(code: int) -> str:
    if APP0 <= code <= APP15:
        return f"APP{code - APP0}"
    return MARKER_NAMES.get(code, f"0x{code:02X}")


@dataclass(frozen=True)
class MarkerSegment:
    """One marker segment.

    ``offset`` is the position of the 0xFF that starts the marker and
    ``length`` counts payload bytes only (the big-endian length field minus
    its own two bytes). Standalone markers have ``length == 0``.
    """

    marker: int
    offset: int
    length: int
    payload: bytes = field(default=b"", repr=False)

    @property
    def name(self) -> str:
        return marker_name(self.marker)

    @property
    def end(self) -> int:
        return self.offset + 2 + (self.length + 2 if self.marker not in _STANDALONE else 0)


def scan_markers(data: bytes) -> list[MarkerSegment]:
    """List header segments from SOI up to and including SOS (or EOI)."""
    data = bytes(data)
    if len(data) < 2 or data[0] != 0xFF or data[1] != SOI:
        raise ContainerError("missing SOI marker")
    segments = [MarkerSegment(SOI, 0, 0)]
    pos = 2
    while True:
        if pos >= len(data):
            raise ContainerError(f"truncated stream: no SOS/EOI before offset {pos}")
        if data[pos] != 0xFF:
            raise ContainerError(f"expected marker at offset {pos}, found 0x{data[pos]:02X}")
        # fill bytes; the segment starts at the last 0xFF
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos >= len(data):
            raise ContainerError("truncated stream inside marker fill bytes")
        code = data[pos]
        pos += 1
        start = pos - 2
        if code in _STANDALONE:
            segments.append(MarkerSegment(code, start, 0))
            if code == EOI:
                return segments
            continue
        if pos + 2 > len(data):
            raise ContainerError(f"truncated length field for {marker_name(code)} at offset {start}")
        (seglen,) = struct.unpack(">H", data[pos:pos + 2])
        if seglen < 2:
            raise ContainerError(f"malformed length {seglen} for {marker_name(code)} at offset {start}")
        if pos + seglen > len(data):
            raise ContainerError(f"{marker_name(code)} at offset {start} runs past end of stream")
        payload = data[pos + 2:pos + seglen]
        segments.append(MarkerSegment(code, start, seglen - 2, payload))
        pos += seglen
        if code == SOS:
            return segments


def com_segment(body: bytes) -> bytes:
    if len(body) > MAX_COM_BODY:
        raise ValueError(f"COM payload of {len(body)} bytes exceeds {MAX_COM_BODY}")
    return b"\xff\xfe" + struct.pack(">H", len(body) + 2) + body


def insert_com(data: bytes, payload) -> bytes:
    """Insert one COM segment after the last APPn segment (or right after SOI)."""
    body = payload.encode("ascii") if isinstance(payload, str) else bytes(payload)
    segment = com_segment(body)
    segments = scan_markers(data)
    at = 2
    for seg in segments:
        if APP0 <= seg.marker <= APP15:
            at = seg.end
    data = bytes(data)
    return data[:at] + segment + data[at:]


def find_adapter_coms(data: bytes) -> list[MarkerSegment]:
    return [s for s in scan_markers(data) if s.marker == COM and s.payload.startswith(RJA_PREFIX)]


def extract_com(data: bytes) -> str | None:
    """Text of the first COM segment carrying an adapter payload, else None."""
    found = find_adapter_coms(data)
    if not found:
        return None
    try:
        return found[0].payload.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ContainerError("adapter COM payload is not ASCII") from exc


def to_uint8(img: np.ndarray) -> np.ndarray:
    """``round_half_away(255 x)`` for x in [0, 1]."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_jpeg(img, quality: int) -> bytes:
    """Baseline sequential JPEG, 4:2:0, standard tables scaled by ``quality``."""
    q = check_quality(quality)
    u8 = to_uint8(check_image(img))
    buf = io.BytesIO()
    try:
        Image.fromarray(u8, "RGB").save(buf, "JPEG", quality=q, subsampling=2, optimize=False, progressive=False)
    except OSError as exc:
        raise ContainerError(f"JPEG encoding failed: {exc}") from exc
    return buf.getvalue()


def decode_jpeg_u8(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format != "JPEG":
                raise ContainerError(f"not a JPEG stream ({im.format})")
            return np.asarray(im.convert("RGB"))
    except (OSError, SyntaxError) as exc:
        raise ContainerError(f"JPEG decoding failed: {exc}") from exc


def decode_jpeg(data: bytes) -> np.ndarray:
    """Decode to float64 samples ``k / 255``."""
    return decode_jpeg_u8(data).astype(np.float64) / 255.0
