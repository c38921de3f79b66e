"""Bit-exact storage for integer codes.

Codes are written as a little-endian bitstream: code ``i`` occupies bits
``i*b .. (i+1)*b - 1`` of the stream, least significant bit first inside
each byte, bytes in ascending address order. The final byte is padded
with zero high bits.

5-bit codes can alternatively be split into a 4-bit plane and a 1-bit
plane (``split_odd``/``join_odd``) so each plane stays byte-friendly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FormatError",
    "PackedCodes",
    "OddBitPlanes",
    "pack",
    "unpack",
    "payload_size",
    "split_odd",
    "join_odd",
]


class FormatError(ValueError):
    """Packed payload is inconsistent with its declared count/width."""


def payload_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8


@dataclass(frozen=True)
class PackedCodes:
    bits: int
    count: int
    payload: bytes

    def __post_init__(self):
        if not 1 <= self.bits <= 8:
            raise ValueError(f"bit width must be in [1, 8], got {self.bits}")
        if self.count < 0:
            raise ValueError("count must be non-negative")


@dataclass(frozen=True)
class OddBitPlanes:
    low: PackedCodes
    high: PackedCodes
    count: int

    @property
    def nbytes(self) -> int:
        return len(self.low.payload) + len(self.high.payload)


def pack(codes, bits: int) -> PackedCodes:
    """Pack unsigned ``codes`` (each ``< 2**bits``) into a dense bitstream."""
    if not 1 <= bits <= 8:
        raise ValueError(f"bit width must be in [1, 8], got {bits}")
    c = np.asarray(codes).ravel()
    if c.size == 0:
        return PackedCodes(bits, 0, b"")
    if not np.issubdtype(c.dtype, np.integer):
        raise ValueError("codes must be integers")
    if c.min() < 0 or c.max() >= (1 << bits):
        raise ValueError(f"code out of range for {bits}-bit packing")
    c = c.astype(np.uint8)
    if bits == 8:
        return PackedCodes(8, int(c.size), c.tobytes())
    shifts = np.arange(bits, dtype=np.uint8)
    stream = ((c[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    payload = np.packbits(stream, bitorder="little").tobytes()
    return PackedCodes(bits, int(c.size), payload)


def unpack(p: PackedCodes) -> np.ndarray:
    """Inverse of :func:`pack`; returns ``uint8`` codes of length ``p.count``."""
    expected = payload_size(p.count, p.bits)
    if len(p.payload) != expected:
        raise FormatError(
            f"payload has {len(p.payload)} bytes, expected {expected} for {p.count} x {p.bits}-bit codes"
        )
    if p.count == 0:
        return np.zeros(0, dtype=np.uint8)
    raw = np.frombuffer(p.payload, dtype=np.uint8)
    if p.bits == 8:
        return raw.copy()
    bits = np.unpackbits(raw, bitorder="little")[: p.count * p.bits].reshape(p.count, p.bits)
    weights = (1 << np.arange(p.bits, dtype=np.uint16)).astype(np.uint16)
    return (bits.astype(np.uint16) @ weights).astype(np.uint8)


def split_odd(codes, bits: int = 5) -> OddBitPlanes:
    """Split 5-bit codes into a 4-bit low plane and a 1-bit high plane."""
    if bits != 5:
        raise ValueError("the two-plane layout is defined for 5-bit codes only")
    c = np.asarray(codes).ravel()
    if c.size and (c.min() < 0 or c.max() >= 32):
        raise ValueError("5-bit codes must lie in [0, 31]")
    c = c.astype(np.uint8)
    return OddBitPlanes(pack(c & 0xF, 4), pack(c >> 4, 1), int(c.size))


def join_odd(planes: OddBitPlanes) -> np.ndarray:
    if planes.low.count != planes.count or planes.high.count != planes.count:
        raise FormatError("plane counts disagree")
    return (unpack(planes.low) + (unpack(planes.high) << 4)).astype(np.uint8)
