"""Strict parser and writer for the IDX binary container used by MNIST.

Layout (all header fields big-endian unsigned 32-bit):

    images: magic 2051 | count | rows | cols | count*rows*cols pixel bytes
    labels: magic 2049 | count | count label bytes

Parsing is strict: trailing bytes are rejected, so parse -> serialize
round-trips byte-identically.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

_GZIP_PREFIX = b"\x1f\x8b"


class IdxError(Exception):
    """Base class for IDX container failures."""


class BadMagic(IdxError):
    """File is not the expected IDX kind (wrong magic number)."""


class Truncated(IdxError):
    """Byte length disagrees with the header (short or trailing data)."""


class LabelOutOfRange(IdxError):
    """A label byte falls outside the MNIST digit range [0, 9]."""


def parse_idx_images(data: bytes) -> tuple[int, int, int, np.ndarray]:
    """Parse an IDX image file into (count, rows, cols, pixels).

    Pixels come back as a (count, rows*cols) uint8 array in row-major
    order, exactly as stored.

    Raises:
        BadMagic: magic is not 2051.
        Truncated: length is not exactly 16 + count*rows*cols.
    """
    if len(data) < 4:
        raise Truncated(f"image header needs 4 bytes, got {len(data)}")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != IMAGE_MAGIC:
        raise BadMagic(f"expected image magic {IMAGE_MAGIC}, got {magic}")
    if len(data) < 16:
        raise Truncated(f"image header needs 16 bytes, got {len(data)}")
    count, rows, cols = struct.unpack(">III", data[4:16])
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise Truncated(
            f"image payload for {count}x{rows}x{cols} needs {expected} bytes, "
            f"got {len(data)}"
        )
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    return count, rows, cols, pixels


def parse_idx_labels(data: bytes) -> tuple[int, np.ndarray]:
    """Parse an IDX label file into (count, labels) with labels in [0, 9].

    Raises:
        BadMagic: magic is not 2049.
        Truncated: length is not exactly 8 + count.
        LabelOutOfRange: any label byte exceeds 9.
    """
    if len(data) < 4:
        raise Truncated(f"label header needs 4 bytes, got {len(data)}")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != LABEL_MAGIC:
        raise BadMagic(f"expected label magic {LABEL_MAGIC}, got {magic}")
    if len(data) < 8:
        raise Truncated(f"label header needs 8 bytes, got {len(data)}")
    (count,) = struct.unpack(">I", data[4:8])
    if len(data) != 8 + count:
        raise Truncated(f"label payload for {count} items needs {8 + count} bytes, got {len(data)}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        bad = int(labels.max())
        raise LabelOutOfRange(f"label {bad} outside [0, 9]")
    return count, labels


def serialize_idx_images(rows: int, cols: int, pixels: np.ndarray) -> bytes:
    """Inverse of parse_idx_images; accepts a (count, rows*cols) uint8 array."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    count = pixels.shape[0]
    if pixels.size != count * rows * cols:
        raise ValueError(f"pixel array has {pixels.size} bytes, expected {count * rows * cols}")
    return struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + pixels.tobytes()


def serialize_idx_labels(labels: np.ndarray) -> bytes:
    """Inverse of parse_idx_labels."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABEL_MAGIC, labels.size) + labels.tobytes()


def read_idx_bytes(path: str | Path) -> bytes:
    """Read a raw or gzip-compressed IDX file into its raw byte sequence."""
    raw = Path(path).read_bytes()
    if raw[:2] == _GZIP_PREFIX:
        return gzip.decompress(raw)
    return raw
