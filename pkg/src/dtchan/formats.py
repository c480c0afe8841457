"""Binary and text artifact formats.

All multi-byte integers and floats are little-endian. Magic tags:

    DTCC  CSI matrix: u32 n_t, u32 n_k, then row-major interleaved
          (re, im) float32 pairs.
    DTCM  real grid map: u32 rows, u32 cols, row-major float32; NaN is the
          invalid-cell sentinel (canonicalized on write).
    DTCB  pilot mask: u32 rows, u32 cols, then each row bit-packed
          LSB-first into ceil(cols / 8) bytes.
    DTCP  point cloud: u32 count, then (x, y, z) float32 triples.
    DTCS  sample container: u16 version, u32 section count, sections as
          u32 length + bytes, trailing CRC32 over everything before it.

CSV exports mirror grids row by row. Heatmaps are binary PPM (P6) under a
fixed five-anchor color ramp; invalid cells render gray.
"""

import struct
import zlib
from typing import Optional

import numpy as np

from .errors import FormatError

MAGIC_CSI = b"DTCC"
MAGIC_MAP = b"DTCM"
MAGIC_MASK = b"DTCB"
MAGIC_CLOUD = b"DTCP"
MAGIC_SAMPLE = b"DTCS"
SAMPLE_VERSION = 1

# value-ramp anchors (position in [0, 1], rgb); linear interpolation between
HEAT_RAMP = (
    (0.00, (0, 0, 128)),
    (0.25, (0, 128, 255)),
    (0.50, (0, 255, 128)),
    (0.75, (255, 255, 0)),
    (1.00, (255, 0, 0)),
)
HEAT_INVALID_RGB = (128, 128, 128)


def _require(buf: bytes, offset: int, size: int) -> bytes:
    if offset + size > len(buf):
        raise FormatError(f"truncated: need {size} bytes", offset=offset)
    return buf[offset : offset + size]


def _check_magic(buf: bytes, magic: bytes):
    if _require(buf, 0, 4) != magic:
        raise FormatError(f"bad magic, expected {magic!r}", offset=0)


# ---------------------------------------------------------------------------
# CSI matrices (DTCC)
# ---------------------------------------------------------------------------

def encode_csi(h: np.ndarray) -> bytes:
    h = np.asarray(h, dtype=np.complex64)
    header = MAGIC_CSI + struct.pack("<II", h.shape[0], h.shape[1])
    return header + np.ascontiguousarray(h).astype("<c8").tobytes()


def decode_csi(buf: bytes) -> np.ndarray:
    _check_magic(buf, MAGIC_CSI)
    n_t, n_k = struct.unpack("<II", _require(buf, 4, 8))
    data = _require(buf, 12, n_t * n_k * 8)
    if len(buf) != 12 + n_t * n_k * 8:
        raise FormatError("trailing bytes after CSI payload", offset=12 + n_t * n_k * 8)
    return np.frombuffer(data, dtype="<c8").reshape(n_t, n_k).astype(complex)


# ---------------------------------------------------------------------------
# Real grid maps (DTCM)
# ---------------------------------------------------------------------------

def encode_map(values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise ValueError("grid maps must be 2D")
    out = values.copy()
    out[np.isnan(out)] = np.float32(np.nan)  # canonical NaN bit pattern
    header = MAGIC_MAP + struct.pack("<II", out.shape[0], out.shape[1])
    return header + out.astype("<f4").tobytes()


def decode_map(buf: bytes) -> np.ndarray:
    _check_magic(buf, MAGIC_MAP)
    rows, cols = struct.unpack("<II", _require(buf, 4, 8))
    data = _require(buf, 12, rows * cols * 4)
    if len(buf) != 12 + rows * cols * 4:
        raise FormatError("trailing bytes after map payload", offset=12 + rows * cols * 4)
    return np.frombuffer(data, dtype="<f4").reshape(rows, cols).astype(float)


# ---------------------------------------------------------------------------
# Pilot masks (DTCB)
# ---------------------------------------------------------------------------

def encode_mask(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask, dtype=np.uint8)
    if mask.ndim != 2:
        raise ValueError("masks must be 2D")
    header = MAGIC_MASK + struct.pack("<II", mask.shape[0], mask.shape[1])
    packed = np.packbits(mask, axis=1, bitorder="little")
    return header + packed.tobytes()


def decode_mask(buf: bytes) -> np.ndarray:
    _check_magic(buf, MAGIC_MASK)
    rows, cols = struct.unpack("<II", _require(buf, 4, 8))
    row_bytes = (cols + 7) // 8
    data = _require(buf, 12, rows * row_bytes)
    if len(buf) != 12 + rows * row_bytes:
        raise FormatError("trailing bytes after mask payload", offset=12 + rows * row_bytes)
    packed = np.frombuffer(data, dtype=np.uint8).reshape(rows, row_bytes)
    return np.unpackbits(packed, axis=1, bitorder="little")[:, :cols]


# ---------------------------------------------------------------------------
# Point clouds (DTCP + XYZ text)
# ---------------------------------------------------------------------------

def encode_cloud(points: np.ndarray) -> bytes:
    pts = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    return MAGIC_CLOUD + struct.pack("<I", pts.shape[0]) + pts.astype("<f4").tobytes()


def decode_cloud(buf: bytes) -> np.ndarray:
    _check_magic(buf, MAGIC_CLOUD)
    (count,) = struct.unpack("<I", _require(buf, 4, 4))
    data = _require(buf, 8, count * 12)
    if len(buf) != 8 + count * 12:
        raise FormatError("trailing bytes after cloud payload", offset=8 + count * 12)
    return np.frombuffer(data, dtype="<f4").reshape(count, 3).astype(float)


def cloud_to_xyz(points: np.ndarray) -> str:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return "".join(f"{float(x)!r} {float(y)!r} {float(z)!r}\n" for x, y, z in pts)


def cloud_from_xyz(text: str) -> np.ndarray:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"bad XYZ line: {line!r}")
        rows.append([float(p) for p in parts])
    return np.asarray(rows, dtype=float).reshape(-1, 3)


# ---------------------------------------------------------------------------
# Sample containers (DTCS)
# ---------------------------------------------------------------------------

def encode_sections(sections) -> bytes:
    body = MAGIC_SAMPLE + struct.pack("<HI", SAMPLE_VERSION, len(sections))
    for sec in sections:
        body += struct.pack("<I", len(sec)) + sec
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_sections(buf: bytes) -> list:
    _check_magic(buf, MAGIC_SAMPLE)
    if len(buf) < 14:
        raise FormatError("truncated container header", offset=len(buf))
    stored_crc = struct.unpack("<I", buf[-4:])[0]
    actual_crc = zlib.crc32(buf[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}",
            offset=len(buf) - 4,
        )
    version, count = struct.unpack("<HI", buf[4:10])
    if version != SAMPLE_VERSION:
        raise FormatError(f"unsupported container version {version}", offset=4)
    sections = []
    offset = 10
    for _ in range(count):
        (length,) = struct.unpack("<I", _require(buf, offset, 4))
        offset += 4
        sections.append(bytes(_require(buf, offset, length)))
        offset += length
    if offset != len(buf) - 4:
        raise FormatError("section lengths disagree with container size", offset=offset)
    return sections


# ---------------------------------------------------------------------------
# CSV and PPM exports
# ---------------------------------------------------------------------------

def grid_to_csv(values: np.ndarray) -> str:
    values = np.asarray(values)
    lines = []
    for row in values:
        lines.append(",".join("nan" if np.isnan(v) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def ramp_rgb(v: float) -> tuple:
    """RGB for a normalized value in [0, 1] under the fixed heat ramp."""
    v = min(max(v, 0.0), 1.0)
    for (p0, c0), (p1, c1) in zip(HEAT_RAMP, HEAT_RAMP[1:]):
        if v <= p1:
            w = 0.0 if p1 == p0 else (v - p0) / (p1 - p0)
            return tuple(int(round(a + w * (b - a))) for a, b in zip(c0, c1))
    return HEAT_RAMP[-1][1]


def grid_to_ppm(values: np.ndarray, vmin: Optional[float] = None, vmax: Optional[float] = None) -> bytes:
    """Binary PPM (P6) heatmap; NaN cells render gray."""
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    lo = float(finite.min()) if vmin is None and finite.size else (vmin or 0.0)
    hi = float(finite.max()) if vmax is None and finite.size else (vmax if vmax is not None else 1.0)
    span = hi - lo if hi > lo else 1.0
    rows, cols = values.shape
    lut = np.array([ramp_rgb(i / 255.0) for i in range(256)], dtype=np.uint8)
    norm = np.clip((values - lo) / span, 0.0, 1.0)
    idx = np.where(np.isfinite(values), np.round(norm * 255.0), 0).astype(np.uint8)
    rgb = lut[idx]
    rgb[~np.isfinite(values)] = HEAT_INVALID_RGB
    return f"P6\n{cols} {rows}\n255\n".encode() + rgb.tobytes()
