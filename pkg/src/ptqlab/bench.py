"""Throughput of the code packing kernels."""

from __future__ import annotations

import hashlib
import time
from typing import Dict, List, Sequence, Union

import numpy as np

from .packing import join_odd, pack, split_odd, unpack

BENCH_COLUMNS = ["bits", "layout", "count", "payload_bytes", "pack_s", "unpack_s",
                 "pack_bytes_per_s", "unpack_bytes_per_s", "roundtrip_ok"]


def _timed(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def bench_one(count: int, bits: Union[int, str], repeat: int = 3, seed: int = 0) -> Dict:
    """Time pack/unpack of ``count`` random codes.

    ``bits`` is 2..8 for the continuous stream or ``"5p"`` for the 5-bit
    two-plane layout. Throughput is measured in payload bytes per second.
    """
    planes = bits == "5p"
    width = 5 if planes else int(bits)
    codes = np.random.default_rng(seed).integers(0, 1 << width, size=count, dtype=np.int64).astype(np.uint8)
    if planes:
        packed, tp = _timed(lambda: split_odd(codes), repeat)
        back, tu = _timed(lambda: join_odd(packed), repeat)
        nbytes = packed.nbytes
    else:
        packed, tp = _timed(lambda: pack(codes, width), repeat)
        back, tu = _timed(lambda: unpack(packed), repeat)
        nbytes = len(packed.payload)
    ok = hashlib.sha256(codes.tobytes()).digest() == hashlib.sha256(np.asarray(back, np.uint8).tobytes()).digest()
    return {
        "bits": width,
        "layout": "planes" if planes else "stream",
        "count": count,
        "payload_bytes": nbytes,
        "pack_s": tp,
        "unpack_s": tu,
        "pack_bytes_per_s": nbytes / tp if count and tp > 0 else 0.0,
        "unpack_bytes_per_s": nbytes / tu if count and tu > 0 else 0.0,
        "roundtrip_ok": ok,
    }


def pack_bench(sizes: Sequence[int], bits: Sequence[Union[int, str]], repeat: int = 3, seed: int = 0) -> List[Dict]:
    return [bench_one(n, b, repeat, seed) for b in bits for n in sizes]
