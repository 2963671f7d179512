"""Quantisation, entropy coding and the container format."""

from .container import (
    EncodedPayload,
    compression_ratio,
    decode,
    decode_indices,
    encode,
    encode_indices,
    parse,
)
from .quant import CLUSTERED, EQUIDISTANT, QuantTable, make_clustered, make_equidistant, quantize

__all__ = [
    "CLUSTERED",
    "EQUIDISTANT",
    "EncodedPayload",
    "QuantTable",
    "compression_ratio",
    "decode",
    "decode_indices",
    "encode",
    "encode_indices",
    "make_clustered",
    "make_equidistant",
    "parse",
    "quantize",
]
