from __future__ import annotations

import math
from enum import Enum
from typing import Optional

import numpy as np

from ..quant import group_layout
from .plan import QuantizationPlan
from .transformer import ToyModel, forward, log_softmax


class DegradationClass(str, Enum):
    """Perplexity-degradation bands: <=0.1, (0.1, 0.5], >0.5."""

    CLASS1 = "Class1"
    CLASS2 = "Class2"
    CLASS3 = "Class3"


def classify_delta(delta_ppl: float) -> DegradationClass:
    if delta_ppl is None or math.isnan(delta_ppl):
        raise ValueError("cannot classify a NaN perplexity delta")
    if delta_ppl <= 0.1:
        return DegradationClass.CLASS1
    if delta_ppl <= 0.5:
        return DegradationClass.CLASS2
    return DegradationClass.CLASS3


def nll_sum(model: ToyModel, corpus_tokens, plan: Optional[QuantizationPlan] = None, batch: int = 32):
    """Summed next-token NLL and number of predicted tokens.

    The corpus is cut into consecutive windows of ``max_seq_len`` inputs;
    each window predicts the token following every input position, so
    every token after the first is scored exactly once.
    """
    toks = np.asarray(corpus_tokens, dtype=np.int64)
    if toks.size < 2:
        raise ValueError("perplexity needs at least two tokens")
    L = model.config.max_seq_len
    n_pred = toks.size - 1
    n_full = n_pred // L
    total = 0.0
    starts = np.arange(n_full) * L
    for b in range(0, n_full, batch):
        s = starts[b : b + batch]
        x = np.stack([toks[i : i + L] for i in s])
        y = np.stack([toks[i + 1 : i + L + 1] for i in s])
        lp = log_softmax(forward(model, x, plan))
        total -= float(np.take_along_axis(lp, y[..., None], -1).sum())
    rest = n_pred - n_full * L
    if rest:
        i = n_full * L
        lp = log_softmax(forward(model, toks[i : i + rest], plan))
        total -= float(np.take_along_axis(lp, toks[i + 1 : i + rest + 1, None], -1).sum())
    return total, n_pred


def perplexity(model: ToyModel, corpus_tokens, plan: Optional[QuantizationPlan] = None) -> float:
    total, n = nll_sum(model, corpus_tokens, plan)
    return float(np.exp(total / n))


def tensor_bits(model: ToyModel, name: str, plan: Optional[QuantizationPlan], fp_bits: int = 32) -> int:
    """Stored size in bits of one parameter tensor under ``plan``."""
    arr = model.params[name]
    if plan is not None and name.endswith(".w"):
        lq = plan.weights.get(name[:-2])
        if lq is not None and lq.scheme is not None:
            s = lq.scheme
            n_groups, _ = group_layout(arr.shape, s)
            return arr.size * s.bits + n_groups * s.params_per_group * s.param_bits
    return arr.size * fp_bits


def model_bytes(model: ToyModel, plan: Optional[QuantizationPlan] = None, fp_bits: int = 32) -> int:
    """Total storage in bytes; full-precision tensors are charged ``fp_bits`` per element."""
    return sum(math.ceil(tensor_bits(model, n, plan, fp_bits) / 8) for n in model.params)
