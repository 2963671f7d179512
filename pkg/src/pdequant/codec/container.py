"""The PQC1 container: mask and quantised grey values in one file.

Layout, little-endian::

    "PQC1" | width u16 | height u16 | k u8 (0 = 256) | kind u8 | k level bytes
    | u32 n | n mask bytes | u32 n | n index bytes | u32 crc32 of all preceding
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import BadMagicError, ChecksumError, ContainerError, TruncatedStreamError, VersionError
from ..imagegrid import Mask
from . import arith
from .quant import CLUSTERED, EQUIDISTANT, QuantTable, quantize

MAGIC = b"PQC"
VERSION = b"1"
_KIND_CODES = {EQUIDISTANT: 0, CLUSTERED: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class EncodedPayload:
    width: int
    height: int
    kind: str
    level_bytes: bytes
    mask_stream: bytes
    index_stream: bytes

    @property
    def k(self) -> int:
        return len(self.level_bytes)

    @property
    def table(self) -> QuantTable:
        return QuantTable(np.frombuffer(self.level_bytes, dtype=np.uint8).astype(np.float64),
                          self.kind)

    def to_bytes(self) -> bytes:
        body = b"".join([
            MAGIC + VERSION,
            struct.pack("<HHBB", self.width, self.height, self.k % 256, _KIND_CODES[self.kind]),
            self.level_bytes,
            struct.pack("<I", len(self.mask_stream)),
            self.mask_stream,
            struct.pack("<I", len(self.index_stream)),
            self.index_stream,
        ])
        return body + struct.pack("<I", zlib.crc32(body))

    @property
    def total_bytes(self) -> int:
        return 4 + 6 + self.k + 4 + len(self.mask_stream) + 4 + len(self.index_stream) + 4


def encode_indices(indices, mask: Mask, table: QuantTable) -> EncodedPayload:
    indices = np.asarray(indices, dtype=np.intp).ravel()
    if indices.size != mask.count:
        raise ValueError(f"expected {mask.count} indices, got {indices.size}")
    if not (1 <= mask.width <= 0xFFFF and 1 <= mask.height <= 0xFFFF):
        raise ValueError("image dimensions do not fit the container")
    stored = table.level_bytes()
    if np.any(np.diff(stored.astype(np.int64)) <= 0):
        raise ValueError("levels are not distinct after byte rounding")
    return EncodedPayload(
        width=mask.width,
        height=mask.height,
        kind=table.kind,
        level_bytes=stored.tobytes(),
        mask_stream=arith.encode_bitmap(mask.known),
        index_stream=arith.encode_symbols(indices, table.k),
    )


def encode(values, mask: Mask, table: QuantTable) -> EncodedPayload:
    """Quantise ``values`` (one per mask pixel, row-major) and code them."""
    return encode_indices(quantize(np.asarray(values, dtype=np.float64).ravel(), table),
                          mask, table)


def _take(data: bytes, pos: int, n: int, what: str):
    if pos + n > len(data):
        raise TruncatedStreamError(f"container truncated inside {what}")
    return data[pos:pos + n], pos + n


def parse(data: bytes) -> EncodedPayload:
    data = bytes(data)
    if len(data) < 4 or data[:3] != MAGIC:
        raise BadMagicError("not a PQC container")
    if data[3:4] != VERSION:
        raise VersionError(f"unsupported container version {data[3:4]!r}")
    head, pos = _take(data, 4, 6, "header")
    width, height, k, kind = struct.unpack("<HHBB", head)
    if kind not in _KIND_NAMES:
        raise ContainerError(f"unknown table kind code {kind}")
    k = k or 256
    levels, pos = _take(data, pos, k, "level table")
    raw, pos = _take(data, pos, 4, "mask length")
    mask_stream, pos = _take(data, pos, struct.unpack("<I", raw)[0], "mask stream")
    raw, pos = _take(data, pos, 4, "index length")
    index_stream, pos = _take(data, pos, struct.unpack("<I", raw)[0], "index stream")
    raw, end = _take(data, pos, 4, "checksum")
    if end != len(data):
        raise ContainerError(f"{len(data) - end} trailing bytes after checksum")
    if struct.unpack("<I", raw)[0] != zlib.crc32(data[:pos]):
        raise ChecksumError("checksum mismatch")
    if width == 0 or height == 0:
        raise ContainerError("zero image dimension")
    return EncodedPayload(width, height, _KIND_NAMES[kind], levels, mask_stream, index_stream)


def decode_indices(payload) -> tuple[Mask, np.ndarray, QuantTable]:
    if not isinstance(payload, EncodedPayload):
        payload = parse(payload)
    table = payload.table
    known = arith.decode_bitmap(payload.mask_stream, payload.height, payload.width)
    mask = Mask(known)
    indices = arith.decode_symbols(payload.index_stream, mask.count, table.k)
    return mask, indices, table


def decode(payload) -> tuple[Mask, np.ndarray]:
    """Mask and grey values (stored byte levels) per mask pixel."""
    mask, indices, table = decode_indices(payload)
    return mask, table.levels[indices]


def compression_ratio(payload: EncodedPayload) -> float:
    return payload.width * payload.height / payload.total_bytes
