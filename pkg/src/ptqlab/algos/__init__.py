from .calibration import CalibrationSet, capture_calibration
from .gptq import GptqNumericalError, GptqOptions, gptq
from .pipeline import PlanError, QuantizeResult, quantize_model, validate_plan
from .rtn import layer_objective, rtn
from .zq import LayerQuantResult, OptimizerOptions, zq_global, zq_local

__all__ = [
    "CalibrationSet",
    "capture_calibration",
    "GptqNumericalError",
    "GptqOptions",
    "gptq",
    "PlanError",
    "QuantizeResult",
    "validate_plan",
    "quantize_model",
    "layer_objective",
    "rtn",
    "LayerQuantResult",
    "OptimizerOptions",
    "zq_global",
    "zq_local",
]
