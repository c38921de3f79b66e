from .metrics import DegradationClass, classify_delta, model_bytes, perplexity
from .plan import METHODS, LinearQuant, QuantizationPlan
from .train import TrainingError, train_toy
from .transformer import LINEARS, ToyModel, ToyModelConfig, forward, linear_names

__all__ = [
    "DegradationClass",
    "classify_delta",
    "model_bytes",
    "perplexity",
    "METHODS",
    "LinearQuant",
    "QuantizationPlan",
    "TrainingError",
    "train_toy",
    "LINEARS",
    "ToyModel",
    "ToyModelConfig",
    "forward",
    "linear_names",
]
