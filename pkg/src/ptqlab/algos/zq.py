"""First-order PTQ: latent weights trained through fake quantization.

ZQ-Local fits each linear layer to its full-precision output on the
calibration inputs. ZQ-Global distils a whole transformer layer against a
frozen full-precision copy of itself. Both use Adam with a straight-through
gradient, sweep a list of learning rates, and keep the best iterate seen
(starting from the round-to-nearest solution), so the result is never
worse than RTN on the selection set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..model.transformer import LINEARS, layer_backward, layer_forward
from ..optim import Adam, linear_decay
from ..quant import QuantizedTensor, QuantScheme, fake_quant, group_layout, group_params, quantize
from .rtn import layer_objective

DEFAULT_LRS = (1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class OptimizerOptions:
    learning_rates: Tuple[float, ...] = DEFAULT_LRS
    iterations: int = 100
    schedule: str = "linear"
    batch_size: int = 1
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "learning_rates", tuple(float(v) for v in self.learning_rates))
        if not self.learning_rates or any(lr <= 0 for lr in self.learning_rates):
            raise ValueError("learning_rates must be a non-empty list of positive values")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.schedule not in ("linear", "constant"):
            raise ValueError("schedule must be 'linear' or 'constant'")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def lr_at(self, lr: float, step: int) -> float:
        return linear_decay(lr, step, self.iterations) if self.schedule == "linear" else lr


def ste_mask(v: np.ndarray, scheme: QuantScheme) -> np.ndarray:
    """Straight-through gradient mask: 1 where ``v`` is not clamped.

    ``(v - zero) / scale`` counts as inside when it rounds into
    ``[qmin, qmax]``, i.e. lies within half a step of the grid's ends.
    """
    n, length = group_layout(v.shape, scheme)
    scales, zeros = group_params(v, scheme)
    t = (v.reshape(n, length).astype(np.float64) - zeros[:, None]) / scales[:, None]
    inside = (t >= scheme.qmin - 0.5) & (t <= scheme.qmax + 0.5)
    return inside.reshape(v.shape).astype(v.dtype)


def _batch_columns(rng, n_samples: int, seq_len: int, batch_size: int) -> np.ndarray:
    pick = rng.choice(n_samples, size=min(batch_size, n_samples), replace=False)
    return (pick[:, None] * seq_len + np.arange(seq_len)[None, :]).ravel()


def zq_local(
    w, x, scheme: QuantScheme, opts: OptimizerOptions = OptimizerOptions(), seq_len: int = 1
) -> QuantizedTensor:
    """Minimize ``||Q(V) X - W X||^2`` over latent ``V`` initialized at ``W``.

    A batch is ``opts.batch_size`` calibration samples, each spanning
    ``seq_len`` consecutive columns of ``x``. Selection uses the full ``x``.
    """
    w = np.asarray(w, dtype=np.float32)
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] != w.shape[1]:
        raise ValueError(f"calibration matrix shape {x.shape} incompatible with weight {w.shape}")
    if x.shape[1] % seq_len:
        raise ValueError("calibration columns are not a whole number of samples")
    best = quantize(w, scheme)
    if opts.iterations == 0:
        return best
    best_obj = layer_objective(w, best, x)
    n_samples = x.shape[1] // seq_len
    for lr in opts.learning_rates:
        rng = np.random.default_rng(opts.seed)
        v = w.copy()
        adam = Adam({"v": v}, opts.adam_betas, opts.adam_eps)
        for step in range(opts.iterations):
            xb = x[:, _batch_columns(rng, n_samples, seq_len, opts.batch_size)]
            resid = (fake_quant(v, scheme) - w) @ xb
            grad = 2.0 * (resid @ xb.T) * ste_mask(v, scheme)
            adam.step({"v": grad}, opts.lr_at(lr, step))
            q = quantize(v, scheme)
            obj = layer_objective(w, q, x)
            if obj < best_obj:
                best, best_obj = q, obj
    return best


@dataclass
class LayerQuantResult:
    """Output of :func:`zq_global` for one transformer layer.

    ``quantized`` maps short linear names to their quantized weights;
    ``params`` is the full updated layer dict (weights dequantized).
    """

    quantized: Dict[str, QuantizedTensor]
    params: Dict[str, np.ndarray]
    objective: float
    init_objective: float
    history: Dict[float, float] = field(default_factory=dict)


def _stack_inputs(inputs) -> np.ndarray:
    if isinstance(inputs, np.ndarray):
        return inputs if inputs.ndim == 3 else inputs[None]
    return np.concatenate([np.asarray(a) if np.ndim(a) == 3 else np.asarray(a)[None] for a in inputs], axis=0)


def _layer_mse(lp, x, weights, n_heads, target) -> float:
    y, _ = layer_forward(lp, x, n_heads, weights)
    d = y.astype(np.float64) - target
    return float(np.mean(d * d))


def zq_global(
    layer: Mapping[str, np.ndarray],
    layer_inputs: Union[np.ndarray, Sequence[np.ndarray]],
    scheme: Union[Optional[QuantScheme], Mapping[str, Optional[QuantScheme]]],
    opts: OptimizerOptions = OptimizerOptions(),
    n_heads: int = 4,
    freeze_float: bool = False,
    eval_inputs: Optional[Union[np.ndarray, Sequence[np.ndarray]]] = None,
    fixed: Optional[Mapping[str, np.ndarray]] = None,
) -> LayerQuantResult:
    """Distil a quantized copy of ``layer`` from the frozen original.

    ``scheme`` is one scheme for every linear or a mapping of short linear
    names (``"q"``, ``"fc1"``...) to schemes; linears absent from the mapping
    stay fixed at their current weights, ``None`` keeps one trainable in
    full precision. Layer norms and biases train in full precision unless
    ``freeze_float``. ``fixed`` optionally replaces the weights of the
    non-trained linears in the student (e.g. already quantized by another
    method). ``layer_inputs`` has shape ``(samples, T, d)``.
    """
    teacher = {k: v.copy() for k, v in layer.items()}
    if isinstance(scheme, Mapping):
        schemes = dict(scheme)
    else:
        schemes = {n: scheme for n in LINEARS}
    fixed_w = {n: np.asarray(v, dtype=np.float32) for n, v in (fixed or {}).items() if n not in schemes}
    xs = _stack_inputs(layer_inputs).astype(np.float32)
    xe = xs if eval_inputs is None else _stack_inputs(eval_inputs).astype(np.float32)
    target_e, _ = layer_forward(teacher, xe, n_heads)
    target_e = target_e.astype(np.float64)

    float_keys = [k for k in teacher if not k.endswith(".w")] if not freeze_float else []

    def snapshot(fp, latents):
        qs = {n: quantize(v, schemes[n]) for n, v in latents.items() if schemes[n] is not None}
        weights = {n: (qs[n].dequantize() if n in qs else latents[n].copy()) for n in latents}
        weights.update(fixed_w)
        return qs, weights, {k: fp[k].copy() for k in float_keys}

    init_latents = {n: teacher[n + ".w"] for n in schemes}
    best_q, best_w, best_f = snapshot(teacher, init_latents)
    best_obj = init_obj = _layer_mse(teacher, xe, best_w, n_heads, target_e)
    history: Dict[float, float] = {}

    if opts.iterations > 0 and best_obj > 0.0:
        n_samples = xs.shape[0]
        for lr in opts.learning_rates:
            rng = np.random.default_rng(opts.seed)
            fp = {k: v.copy() for k, v in teacher.items()}
            latents = {n: teacher[n + ".w"].copy() for n in schemes}
            trainable = {f"{n}.latent": v for n, v in latents.items()}
            trainable.update({k: fp[k] for k in float_keys})
            adam = Adam(trainable, opts.adam_betas, opts.adam_eps)
            lr_best = np.inf
            for step in range(opts.iterations):
                pick = rng.choice(n_samples, size=min(opts.batch_size, n_samples), replace=False)
                xb = xs[pick]
                tb, _ = layer_forward(teacher, xb, n_heads)
                weights = {n: fake_quant(v, schemes[n]) for n, v in latents.items()}
                weights.update(fixed_w)
                y, cache = layer_forward(fp, xb, n_heads, weights, keep=True)
                dy = (2.0 / y.size) * (y - tb)
                _, grads = layer_backward(fp, cache, dy.astype(np.float32))
                upd = {k: grads[k] for k in float_keys}
                for n, v in latents.items():
                    g = grads[n + ".w"]
                    upd[f"{n}.latent"] = g * ste_mask(v, schemes[n]) if schemes[n] is not None else g
                adam.step(upd, opts.lr_at(lr, step))
                qs, w_now, f_now = snapshot(fp, latents)
                obj = _layer_mse(fp, xe, w_now, n_heads, target_e)
                lr_best = min(lr_best, obj)
                if obj < best_obj:
                    best_q, best_w, best_f, best_obj = qs, w_now, f_now, obj
            history[lr] = lr_best

    params = {k: v.copy() for k, v in teacher.items()}
    params.update(best_f)
    for n, wv in best_w.items():
        if n in fixed_w:
            continue
        params[n + ".w"] = np.asarray(wv, dtype=np.float32).copy()
    return LayerQuantResult(best_q, params, best_obj, init_obj, history)
