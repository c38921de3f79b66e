from __future__ import annotations

import numpy as np

from ..quant import QuantizedTensor, QuantScheme, quantize


def rtn(w, scheme: QuantScheme) -> QuantizedTensor:
    """Round-to-nearest: per-group params from ``w``, then nearest grid point."""
    return quantize(w, scheme)


def layer_objective(w, q, x) -> float:
    """Squared Frobenius norm of ``(W - W_hat) @ X``.

    ``q`` may be a :class:`QuantizedTensor` or an already dequantized matrix;
    ``x`` has one calibration sample per column.
    """
    w = np.asarray(w, dtype=np.float64)
    wq = q.dequantize() if isinstance(q, QuantizedTensor) else np.asarray(q)
    x = np.asarray(x, dtype=np.float64)
    if wq.shape != w.shape:
        raise ValueError(f"weight shape mismatch: {w.shape} vs {wq.shape}")
    if x.ndim != 2 or x.shape[0] != w.shape[1]:
        raise ValueError(f"calibration matrix shape {x.shape} does not match weight columns {w.shape[1]}")
    r = (w - wq.astype(np.float64)) @ x
    return float(np.sum(r * r))
