"""Raster types, Netpbm I/O and the error metric used everywhere else.

Grey values are kept as float64 for the whole pipeline; rounding to bytes
only happens when writing files or containers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    MalformedHeaderError,
    MaxvalError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Grey value image, ``values`` has shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2-D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_flat(cls, width, height, values):
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise ValueError(f"expected {width * height} values, got {values.size}")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"ImageGrid(width={self.width}, height={self.height})"


@dataclass(frozen=True, eq=False)
class Mask:
    """Known-data indicator, ``known`` has shape (height, width)."""

    known: np.ndarray

    def __post_init__(self):
        known = _frozen(self.known, bool)
        if known.ndim != 2 or known.shape[0] < 1 or known.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {known.shape}")
        object.__setattr__(self, "known", known)

    @classmethod
    def from_flat(cls, width, height, known):
        known = np.asarray(known, dtype=bool)
        if known.size != width * height:
            raise ValueError(f"expected {width * height} entries, got {known.size}")
        return cls(known.reshape(height, width))

    @property
    def width(self) -> int:
        return self.known.shape[1]

    @property
    def height(self) -> int:
        return self.known.shape[0]

    @property
    def shape(self):
        return self.known.shape

    @property
    def count(self) -> int:
        return int(self.known.sum())

    @property
    def density(self) -> float:
        return self.count / self.known.size

    def indices(self) -> np.ndarray:
        """Flat row-major indices of the known pixels."""
        return np.flatnonzero(self.known.ravel())

    def check_inpaintable(self):
        n = self.count
        if n == 0 or n == self.known.size:
            raise ValueError("mask needs at least one known and one unknown pixel")

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.known, other.known))

    def __repr__(self):
        return f"Mask(width={self.width}, height={self.height}, known={self.count})"


def round_half_away(values):
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def to_bytes(values) -> np.ndarray:
    """Round half away from zero and clamp to [0, 255]."""
    return np.clip(round_half_away(values), 0, 255).astype(np.uint8)


def _parse_header(data: bytes, magic: bytes, nfields: int):
    """Split a Netpbm header into integer fields; returns (fields, payload offset)."""
    if len(data) < 2 or data[:2] not in (b"P1", b"P2", b"P3", b"P4", b"P5", b"P6", b"P7"):
        raise MalformedHeaderError("not a Netpbm file")
    if data[:2] != magic:
        raise UnsupportedFormatError(f"expected {magic.decode()}, got {data[:2].decode()}")
    pos = 2
    fields = []
    while len(fields) < nfields:
        if pos >= len(data):
            raise MalformedHeaderError("header ends prematurely")
        c = data[pos:pos + 1]
        if c == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise MalformedHeaderError("unterminated comment in header")
            pos = end + 1
        elif c.isspace():
            pos += 1
        else:
            if fields == [] and pos == 2:
                raise MalformedHeaderError("missing whitespace after magic number")
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            if start == pos:
                raise MalformedHeaderError(f"unexpected byte {data[start:start + 1]!r} in header")
            fields.append(int(data[start:pos]))
            if pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                raise MalformedHeaderError("header field not followed by whitespace")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedHeaderError("missing whitespace before raster data")
    return fields, pos + 1


def read_pgm(path) -> ImageGrid:
    data = Path(path).read_bytes()
    (width, height, maxval), offset = _parse_header(data, b"P5", 3)
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if maxval < 1:
        raise MalformedHeaderError(f"invalid maxval {maxval}")
    if maxval > 255:
        raise MaxvalError(f"maxval {maxval} > 255 is not supported")
    payload = data[offset:offset + width * height]
    if len(payload) < width * height:
        raise TruncatedPayloadError(
            f"expected {width * height} payload bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return ImageGrid(pixels.astype(np.float64))


def write_pgm(img: ImageGrid, path):
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes(img.values).tobytes())


def read_pbm(path) -> Mask:
    """Read a raw (P4) bitmap; set bits are known pixels."""
    data = Path(path).read_bytes()
    (width, height), offset = _parse_header(data, b"P4", 2)
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    row_bytes = (width + 7) // 8
    payload = data[offset:offset + row_bytes * height]
    if len(payload) < row_bytes * height:
        raise TruncatedPayloadError(
            f"expected {row_bytes * height} payload bytes, found {len(payload)}")
    rows = np.frombuffer(payload, dtype=np.uint8).reshape(height, row_bytes)
    bits = np.unpackbits(rows, axis=1)[:, :width]
    return Mask(bits.astype(bool))


def write_pbm(mask: Mask, path):
    header = f"P4\n{mask.width} {mask.height}\n".encode("ascii")
    packed = np.packbits(mask.known.astype(np.uint8), axis=1)
    Path(path).write_bytes(header + packed.tobytes())


def mse(a: ImageGrid, b: ImageGrid) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a.values - b.values
    return float(np.mean(diff * diff))
