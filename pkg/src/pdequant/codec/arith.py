"""Adaptive arithmetic coding.

A 32-bit low/high coder with underflow (E3) handling.  Symbol statistics
come from adaptive frequency tables: every count starts at 1, is bumped by 1
per coded symbol and all counts are halved once the total exceeds 2**16.
"""

from __future__ import annotations

from itertools import accumulate

import numpy as np

STATE_BITS = 32
_FULL = 1 << STATE_BITS
_MASK = _FULL - 1
_HALF = _FULL >> 1
_QUARTER = _HALF >> 1
MAX_TOTAL = 1 << 16


class AdaptiveModel:
    """Frequency table over ``n`` symbols."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("alphabet must hold at least one symbol")
        self.counts = [1] * n
        self.total = n

    def interval(self, symbol: int):
        low = sum(self.counts[:symbol])
        return low, low + self.counts[symbol], self.total

    def find(self, value: int):
        """Symbol whose cumulative interval contains ``value``."""
        for symbol, high in enumerate(accumulate(self.counts)):
            if value < high:
                return symbol, high - self.counts[symbol], high
        raise AssertionError("value outside model range")

    def update(self, symbol: int):
        self.counts[symbol] += 1
        self.total += 1
        if self.total > MAX_TOTAL:
            self.counts = [(c + 1) >> 1 for c in self.counts]
            self.total = sum(self.counts)


class BitWriter:
    def __init__(self):
        self._bits = []

    def write(self, bit: int):
        self._bits.append(bit)

    def getvalue(self) -> bytes:
        return np.packbits(np.array(self._bits, dtype=np.uint8)).tobytes()


class BitReader:
    """MSB-first bit source that yields zeros past the end."""

    def __init__(self, data: bytes):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)).tolist()
        self._pos = 0

    def read(self) -> int:
        pos = self._pos
        self._pos += 1
        return self._bits[pos] if pos < len(self._bits) else 0


class Encoder:
    def __init__(self, out: BitWriter):
        self.out = out
        self.low = 0
        self.high = _MASK
        self.pending = 0

    def encode(self, low: int, high: int, total: int):
        span = self.high - self.low + 1
        self.high = self.low + high * span // total - 1
        self.low = self.low + low * span // total
        while ((self.low ^ self.high) & _HALF) == 0:
            bit = self.low >> (STATE_BITS - 1)
            self.out.write(bit)
            for _ in range(self.pending):
                self.out.write(bit ^ 1)
            self.pending = 0
            self.low = (self.low << 1) & _MASK
            self.high = ((self.high << 1) & _MASK) | 1
        while self.low & ~self.high & _QUARTER:
            self.pending += 1
            self.low = (self.low << 1) ^ _HALF
            self.high = ((self.high ^ _HALF) << 1) | _HALF | 1

    def finish(self):
        # a single 1 bit selects a point inside the final interval because
        # low < HALF <= high always holds here
        self.out.write(1)


class Decoder:
    def __init__(self, src: BitReader):
        self.src = src
        self.low = 0
        self.high = _MASK
        self.code = 0
        for _ in range(STATE_BITS):
            self.code = (self.code << 1) | src.read()

    def target(self, total: int) -> int:
        span = self.high - self.low + 1
        return ((self.code - self.low + 1) * total - 1) // span

    def consume(self, low: int, high: int, total: int):
        span = self.high - self.low + 1
        self.high = self.low + high * span // total - 1
        self.low = self.low + low * span // total
        while ((self.low ^ self.high) & _HALF) == 0:
            self.code = ((self.code << 1) & _MASK) | self.src.read()
            self.low = (self.low << 1) & _MASK
            self.high = ((self.high << 1) & _MASK) | 1
        while self.low & ~self.high & _QUARTER:
            self.code = (self.code & _HALF) | ((self.code << 1) & (_MASK >> 1)) | self.src.read()
            self.low = (self.low << 1) ^ _HALF
            self.high = ((self.high ^ _HALF) << 1) | _HALF | 1


def _context(bits, y, x):
    west = bits[y][x - 1] if x > 0 else 0
    north = bits[y - 1][x] if y > 0 else 0
    return (west << 1) | north


def encode_bitmap(bitmap) -> bytes:
    """Code a 2-D binary array; the context is the (west, north) neighbour pair."""
    bits = np.asarray(bitmap, dtype=np.uint8).tolist()
    models = [AdaptiveModel(2) for _ in range(4)]
    out = BitWriter()
    enc = Encoder(out)
    for y, row in enumerate(bits):
        for x, bit in enumerate(row):
            model = models[_context(bits, y, x)]
            enc.encode(*model.interval(bit))
            model.update(bit)
    enc.finish()
    return out.getvalue()


def decode_bitmap(data: bytes, height: int, width: int) -> np.ndarray:
    bits = [[0] * width for _ in range(height)]
    models = [AdaptiveModel(2) for _ in range(4)]
    dec = Decoder(BitReader(data))
    for y in range(height):
        row = bits[y]
        for x in range(width):
            model = models[_context(bits, y, x)]
            bit, low, high = model.find(dec.target(model.total))
            dec.consume(low, high, model.total)
            model.update(bit)
            row[x] = bit
    return np.array(bits, dtype=bool).reshape(height, width)


def encode_symbols(symbols, alphabet: int) -> bytes:
    """Order-0 adaptive coding; an alphabet of one symbol costs nothing."""
    if alphabet == 1:
        return b""
    model = AdaptiveModel(alphabet)
    out = BitWriter()
    enc = Encoder(out)
    for s in np.asarray(symbols, dtype=np.int64).tolist():
        if not 0 <= s < alphabet:
            raise ValueError(f"symbol {s} outside alphabet of size {alphabet}")
        enc.encode(*model.interval(s))
        model.update(s)
    enc.finish()
    return out.getvalue()


def decode_symbols(data: bytes, count: int, alphabet: int) -> np.ndarray:
    if alphabet == 1:
        return np.zeros(count, dtype=np.intp)
    model = AdaptiveModel(alphabet)
    dec = Decoder(BitReader(data))
    out = np.empty(count, dtype=np.intp)
    for i in range(count):
        s, low, high = model.find(dec.target(model.total))
        dec.consume(low, high, model.total)
        model.update(s)
        out[i] = s
    return out
