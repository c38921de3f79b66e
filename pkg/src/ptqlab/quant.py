"""Uniform affine quantization grids.

A tensor is split into groups (per-tensor, per-row, per-token or
contiguous blocks of ``k`` elements inside a row). Every group owns one
``(scale, zero)`` pair and its values map to integer codes by

    code = clamp(round_half_even((x - zero) / scale), qmin, qmax)
    x_hat = scale * code + zero

Symmetric grids use ``zero = 0`` and codes in ``[-(2^(b-1)-1), 2^(b-1)-1]``;
asymmetric grids use ``zero = min(x)`` and codes in ``[0, 2^b - 1]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "Mode",
    "Granularity",
    "QuantScheme",
    "QuantParams",
    "QuantizedTensor",
    "IndivisibleBlockError",
    "compute_qparams",
    "quantize_group",
    "dequantize_group",
    "partition_groups",
    "group_layout",
    "quantize",
    "dequantize",
    "fake_quant",
    "effective_bits",
    "reconstruction_error",
]

WEIGHT = "weight"
ACTIVATION = "activation"


class IndivisibleBlockError(ValueError):
    """Block size does not divide the dimension it chunks."""

    def __init__(self, block: int, dim: int):
        self.block = block
        self.dim = dim
        super().__init__(f"block size {block} is not divisible into dimension {dim}")


class Mode(str, Enum):
    SYMMETRIC = "sym"
    ASYMMETRIC = "asym"


class Granularity(str, Enum):
    TENSOR = "tensor"
    ROW = "row"
    BLOCK = "block"
    TOKEN = "token"


_GRAN_RE = re.compile(r"^(?:block[-_]?(\d+)|(\d+)|per[-_]?(row|token|tensor)|(row|token|tensor))$")


@dataclass(frozen=True)
class QuantScheme:
    """Bit width, grid mode and grouping of a quantizer.

    ``param_bits`` is the storage width charged per scale/zero value when
    accounting for model size (16 = FP16).
    """

    bits: int
    mode: Mode = Mode.ASYMMETRIC
    granularity: Granularity = Granularity.ROW
    block: Optional[int] = None
    param_bits: int = 16

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        if not 2 <= int(self.bits) <= 8:
            raise ValueError(f"bits must be in [2, 8], got {self.bits}")
        if self.granularity is Granularity.BLOCK:
            if self.block is None or int(self.block) < 1:
                raise ValueError("block granularity needs a block size >= 1")
        elif self.block is not None:
            raise ValueError("block size given for a non-block granularity")
        if self.param_bits < 1:
            raise ValueError("param_bits must be positive")

    @property
    def symmetric(self) -> bool:
        return self.mode is Mode.SYMMETRIC

    @property
    def qmin(self) -> int:
        return -(2 ** (self.bits - 1) - 1) if self.symmetric else 0

    @property
    def qmax(self) -> int:
        return 2 ** (self.bits - 1) - 1 if self.symmetric else 2**self.bits - 1

    @property
    def params_per_group(self) -> int:
        return 1 if self.symmetric else 2

    @property
    def granularity_label(self) -> str:
        if self.granularity is Granularity.BLOCK:
            return f"block{self.block}"
        return self.granularity.value

    @classmethod
    def parse(cls, bits: int, mode: str = "asym", granularity: str = "row", param_bits: int = 16) -> "QuantScheme":
        """Build a scheme from text such as ``granularity="block32"`` or ``"row"``."""
        m = _GRAN_RE.match(str(granularity).strip().lower())
        if not m:
            raise ValueError(f"unrecognised granularity {granularity!r}")
        block = m.group(1) or m.group(2)
        if block is not None:
            return cls(int(bits), Mode(mode), Granularity.BLOCK, int(block), param_bits)
        return cls(int(bits), Mode(mode), Granularity(m.group(3) or m.group(4)), None, param_bits)

    def label(self) -> str:
        return f"{self.mode.value}{self.bits}/{self.granularity_label}"


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero: float
    qmin: int
    qmax: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.qmin < self.qmax:
            raise ValueError("qmin must be below qmax")


def group_layout(shape: Sequence[int], scheme: QuantScheme, role: str = WEIGHT) -> Tuple[int, int]:
    """Return ``(n_groups, group_len)``; groups are contiguous in row-major order.

    The last axis is the row (input features for weights, hidden size for
    activations); all leading axes are flattened into rows.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        shape = (1,)
    cols = shape[-1]
    rows = int(np.prod(shape[:-1], dtype=np.int64)) if len(shape) > 1 else 1
    g = scheme.granularity
    if role == WEIGHT and g is Granularity.TOKEN:
        raise ValueError("per-token granularity applies to activations only")
    if role not in (WEIGHT, ACTIVATION):
        raise ValueError(f"unknown tensor role {role!r}")
    if g is Granularity.TENSOR:
        return 1, rows * cols
    if g in (Granularity.ROW, Granularity.TOKEN):
        return rows, cols
    k = int(scheme.block)
    if cols % k:
        raise IndivisibleBlockError(k, cols)
    return rows * (cols // k), k


def partition_groups(shape: Sequence[int], scheme: QuantScheme, role: str = WEIGHT) -> List[Tuple[int, int]]:
    """Ordered ``(start, stop)`` element ranges of every group."""
    n, length = group_layout(shape, scheme, role)
    return [(i * length, (i + 1) * length) for i in range(n)]


def _params_from_groups(groups: np.ndarray, scheme: QuantScheme) -> Tuple[np.ndarray, np.ndarray]:
    g = groups.astype(np.float64)
    if scheme.symmetric:
        amax = np.abs(g).max(axis=1)
        scale = np.where(amax > 0, amax / scheme.qmax, 1.0)
        zero = np.zeros_like(scale)
    else:
        lo = g.min(axis=1)
        hi = g.max(axis=1)
        scale = np.where(hi > lo, (hi - lo) / scheme.qmax, 1.0)
        zero = lo
    scale = scale.astype(np.float32)
    # float32 rounding can flush a tiny range to zero
    scale[scale <= 0] = np.float32(1.0)
    return scale, zero.astype(np.float32)


def _quantize_groups(groups: np.ndarray, scale: np.ndarray, zero: np.ndarray, qmin: int, qmax: int) -> np.ndarray:
    t = (groups.astype(np.float64) - zero.astype(np.float64)[:, None]) / scale.astype(np.float64)[:, None]
    return np.clip(np.rint(t), qmin, qmax).astype(np.int32)


def _dequantize_groups(codes: np.ndarray, scale: np.ndarray, zero: np.ndarray) -> np.ndarray:
    return (scale[:, None] * codes.astype(np.float32) + zero[:, None]).astype(np.float32)


def _check_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot compute quantization parameters of an empty group")
    if not np.all(np.isfinite(v)):
        raise ValueError("quantization input contains NaN or Inf")
    return v


def compute_qparams(values, scheme: QuantScheme) -> QuantParams:
    v = _check_values(values)
    scale, zero = _params_from_groups(v.reshape(1, -1), scheme)
    return QuantParams(float(scale[0]), float(zero[0]), scheme.qmin, scheme.qmax)


def quantize_group(values, p: QuantParams) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).reshape(1, -1)
    codes = _quantize_groups(v, np.array([p.scale], np.float32), np.array([p.zero], np.float32), p.qmin, p.qmax)
    return codes.reshape(np.shape(values))


def dequantize_group(codes, p: QuantParams) -> np.ndarray:
    c = np.asarray(codes)
    if c.size and (c.min() < p.qmin or c.max() > p.qmax):
        raise ValueError(f"codes outside [{p.qmin}, {p.qmax}]")
    out = _dequantize_groups(c.reshape(1, -1), np.array([p.scale], np.float32), np.array([p.zero], np.float32))
    return out.reshape(c.shape)


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    """Integer codes plus one ``(scale, zero)`` pair per group."""

    shape: Tuple[int, ...]
    scheme: QuantScheme
    codes: np.ndarray
    scales: np.ndarray
    zeros: np.ndarray
    role: str = WEIGHT
    _layout: Tuple[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        layout = group_layout(self.shape, self.scheme, self.role)
        object.__setattr__(self, "_layout", layout)
        codes = np.asarray(self.codes, dtype=np.int32).reshape(self.shape)
        codes.flags.writeable = False
        scales = np.asarray(self.scales, dtype=np.float32).ravel()
        zeros = np.asarray(self.zeros, dtype=np.float32).ravel()
        if scales.shape != (layout[0],) or zeros.shape != (layout[0],):
            raise ValueError(f"expected {layout[0]} group params, got {scales.shape} / {zeros.shape}")
        if codes.size and (codes.min() < self.scheme.qmin or codes.max() > self.scheme.qmax):
            raise ValueError("codes fall outside the scheme's integer range")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "zeros", zeros)

    @property
    def n_groups(self) -> int:
        return self._layout[0]

    @property
    def group_len(self) -> int:
        return self._layout[1]

    @property
    def groups(self) -> List[Tuple[Tuple[int, int], QuantParams]]:
        s = self.scheme
        return [
            (rng, QuantParams(float(sc), float(z), s.qmin, s.qmax))
            for rng, sc, z in zip(partition_groups(self.shape, s, self.role), self.scales, self.zeros)
        ]

    def dequantize(self) -> np.ndarray:
        c = self.codes.reshape(self._layout)
        return _dequantize_groups(c, self.scales, self.zeros).reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, QuantizedTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.scheme == other.scheme
            and self.role == other.role
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.zeros, other.zeros)
        )


def group_params(x: np.ndarray, scheme: QuantScheme, role: str = WEIGHT) -> Tuple[np.ndarray, np.ndarray]:
    """Per-group ``(scales, zeros)`` computed from ``x``."""
    n, length = group_layout(x.shape, scheme, role)
    return _params_from_groups(np.asarray(x).reshape(n, length), scheme)


def quantize_with(x: np.ndarray, scheme: QuantScheme, scales: np.ndarray, zeros: np.ndarray, role: str = WEIGHT) -> QuantizedTensor:
    """Quantize ``x`` against precomputed group params."""
    x = np.asarray(x)
    n, length = group_layout(x.shape, scheme, role)
    codes = _quantize_groups(x.reshape(n, length), scales, zeros, scheme.qmin, scheme.qmax)
    return QuantizedTensor(x.shape, scheme, codes.reshape(x.shape), scales, zeros, role)


def quantize(x, scheme: QuantScheme, role: str = WEIGHT) -> QuantizedTensor:
    """Round-to-nearest quantization with params computed from ``x`` itself."""
    x = np.asarray(x, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise ValueError("quantization input contains NaN or Inf")
    scales, zeros = group_params(x, scheme, role)
    return quantize_with(x, scheme, scales, zeros, role)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    return q.dequantize()


def fake_quant(x, scheme: Optional[QuantScheme], role: str = WEIGHT) -> np.ndarray:
    """Quantize then dequantize; ``scheme=None`` is a passthrough."""
    if scheme is None:
        return x
    x = np.asarray(x, dtype=np.float32)
    n, length = group_layout(x.shape, scheme, role)
    g = x.reshape(n, length)
    scales, zeros = _params_from_groups(g, scheme)
    codes = _quantize_groups(g, scales, zeros, scheme.qmin, scheme.qmax)
    return _dequantize_groups(codes, scales, zeros).reshape(x.shape)


def effective_bits(scheme: QuantScheme, group_len: int) -> float:
    """Code bits plus amortized scale/zero storage per element."""
    if group_len < 1:
        raise ValueError("group_len must be >= 1")
    return scheme.bits + scheme.param_bits * scheme.params_per_group / group_len


def reconstruction_error(w, q: QuantizedTensor) -> float:
    """Mean squared difference between ``w`` and the dequantized tensor."""
    w = np.asarray(w, dtype=np.float32)
    if w.shape != q.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {q.shape}")
    d = w.astype(np.float64) - q.dequantize().astype(np.float64)
    return float(np.mean(d * d))
