"""Hessian-compensated column-by-column weight quantization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..quant import QuantizedTensor, QuantScheme, group_layout, group_params
from ..tensor import DecompositionError, cholesky, inverse_spd


class GptqNumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GptqOptions:
    damp_ratio: float = 0.01

    def __post_init__(self):
        if not self.damp_ratio > 0:
            raise ValueError("damp_ratio must be positive")


def hessian(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return 2.0 * (x @ x.T)


def gptq(w, x, scheme: QuantScheme, opts: GptqOptions = GptqOptions()) -> QuantizedTensor:
    """Quantize ``w`` (out x in) column by column, pushing each column's
    rounding error onto the not-yet-quantized columns through the upper
    Cholesky factor of the damped inverse Hessian ``(2 X X^T)^-1``.

    Group params are fixed from the original weights before the sweep.
    """
    w = np.asarray(w, dtype=np.float32)
    x = np.asarray(x)
    rows, cols = w.shape
    if x.ndim != 2 or x.shape[0] != cols or x.shape[1] < 1:
        raise ValueError(f"calibration matrix shape {x.shape} incompatible with weight {w.shape}")
    n_groups, glen = group_layout(w.shape, scheme)
    scales, zeros = group_params(w, scheme)

    H = hessian(x)
    H[np.diag_indices(cols)] += opts.damp_ratio * float(np.mean(np.diag(H)))
    try:
        U = cholesky(inverse_spd(H)).T
    except DecompositionError as exc:
        raise GptqNumericalError(
            f"Hessian factorization failed after damping ({exc}); try a larger damp_ratio"
        ) from exc

    # column j of row r uses group (r * cols + j) // glen
    gidx = (np.arange(rows)[:, None] * cols + np.arange(cols)[None, :]) // glen
    col_scale = scales[gidx].astype(np.float64)
    col_zero = zeros[gidx].astype(np.float64)
    zs32 = zeros[gidx]
    sc32 = scales[gidx]

    W = w.astype(np.float64)
    codes = np.empty((rows, cols), dtype=np.int32)
    for j in range(cols):
        col = W[:, j]
        c = np.clip(np.rint((col - col_zero[:, j]) / col_scale[:, j]), scheme.qmin, scheme.qmax)
        codes[:, j] = c
        deq = (sc32[:, j] * c.astype(np.float32) + zs32[:, j]).astype(np.float64)
        err = (col - deq) / U[j, j]
        if j + 1 < cols:
            W[:, j + 1 :] -= np.outer(err, U[j, j + 1 :])
    return QuantizedTensor(w.shape, scheme, codes, scales, zeros)
