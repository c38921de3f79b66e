from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..model.transformer import LINEARS, ToyModel, embed, layer_forward


@dataclass(frozen=True)
class CalibrationSet:
    """Captured full-precision inputs of every linear layer.

    ``inputs[name]`` is ``(in_features, samples * seq_len)``; columns are
    grouped by sample, ``seq_len`` consecutive columns per window.
    ``layer_inputs[i]`` is the residual-stream input of transformer layer
    ``i`` with shape ``(samples, seq_len, d_model)``.
    """

    inputs: Dict[str, np.ndarray]
    layer_inputs: List[np.ndarray]
    seed: int
    samples: int
    seq_len: int
    starts: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.inputs)


def capture_calibration(
    model: ToyModel, corpus_tokens, samples: int = 16, seq_len: int = 64, seed: int = 0
) -> CalibrationSet:
    toks = np.asarray(corpus_tokens, dtype=np.int64)
    if samples < 1 or seq_len < 1:
        raise ValueError("samples and seq_len must be positive")
    if seq_len > model.config.max_seq_len:
        raise ValueError(f"seq_len {seq_len} exceeds the model's max_seq_len {model.config.max_seq_len}")
    if len(toks) < seq_len:
        raise ValueError(f"corpus of {len(toks)} tokens is too short for {seq_len}-token windows")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, len(toks) - seq_len + 1, size=samples)
    batch = np.stack([toks[s : s + seq_len] for s in starts])

    inputs: Dict[str, np.ndarray] = {}
    layer_in: List[np.ndarray] = []
    x = embed(model, batch)
    for i in range(model.config.n_layers):
        layer_in.append(x.copy())
        x, cache = layer_forward(model.layer_params(i), x, model.config.n_heads, keep=True)
        for n in LINEARS:
            a = cache["ins"][n]
            inputs[f"layers.{i}.{n}"] = np.ascontiguousarray(a.reshape(-1, a.shape[-1]).T)
    return CalibrationSet(inputs, layer_in, seed, samples, seq_len, starts)
