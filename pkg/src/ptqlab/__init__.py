"""Post-training quantization engine and benchmark harness for a toy decoder-only LM."""

from .quant import QuantizedTensor, QuantParams, QuantScheme, effective_bits, fake_quant, quantize

__version__ = "0.1.0"

__all__ = ["QuantizedTensor", "QuantParams", "QuantScheme", "effective_bits", "fake_quant", "quantize"]
