from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from ..quant import QuantizedTensor, QuantScheme, fake_quant

METHODS = ("rtn", "gptq", "zq-local", "zq-global")


@dataclass(frozen=True)
class LinearQuant:
    """Weight scheme and PTQ method for one linear layer; ``scheme=None`` keeps it full precision."""

    scheme: Optional[QuantScheme]
    method: str = "rtn"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown PTQ method {self.method!r}; expected one of {METHODS}")


@dataclass
class QuantizationPlan:
    """Per-linear weight quantization plus an optional dynamic activation scheme.

    ``quantized`` holds materialized weights produced by a PTQ method. Linears
    that have a scheme but no materialized tensor are round-to-nearest
    quantized on the fly, which is only meaningful for the ``rtn`` method.
    Token embeddings and the output head are never quantized.
    """

    weights: Dict[str, LinearQuant] = field(default_factory=dict)
    activation: Optional[QuantScheme] = None
    quantized: Dict[str, QuantizedTensor] = field(default_factory=dict)

    @classmethod
    def uniform(
        cls,
        linear_names: Iterable[str],
        scheme: Optional[QuantScheme],
        method: str = "rtn",
        activation: Optional[QuantScheme] = None,
    ) -> "QuantizationPlan":
        return cls({name: LinearQuant(scheme, method) for name in linear_names}, activation)

    @property
    def is_passthrough(self) -> bool:
        return self.activation is None and all(lq.scheme is None for lq in self.weights.values())

    def weight_for(self, name: str, w: np.ndarray) -> np.ndarray:
        if name in self.quantized:
            return self.quantized[name].dequantize()
        lq = self.weights.get(name)
        if lq is None or lq.scheme is None:
            return w
        if lq.method != "rtn":
            raise ValueError(f"plan entry {name!r} uses {lq.method} but has not been materialized")
        return fake_quant(w, lq.scheme)
