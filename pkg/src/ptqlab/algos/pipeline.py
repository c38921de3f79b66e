"""Apply a :class:`QuantizationPlan` to a whole toy model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..model.metrics import tensor_bits
from ..model.plan import QuantizationPlan
from ..model.transformer import LINEARS, ToyModel
from ..quant import IndivisibleBlockError, QuantizedTensor, effective_bits, group_layout, reconstruction_error
from .calibration import CalibrationSet
from .gptq import GptqOptions, gptq
from .rtn import layer_objective, rtn
from .zq import OptimizerOptions, zq_global, zq_local


class PlanError(ValueError):
    pass


def validate_plan(model: ToyModel, plan: QuantizationPlan) -> None:
    """Raise :class:`PlanError` naming the first linear whose shape the plan cannot group."""
    for name, lq in plan.weights.items():
        if name + ".w" not in model.params:
            raise PlanError(f"plan names unknown layer {name!r}")
        if lq.scheme is None:
            continue
        shape = model.params[name + ".w"].shape
        try:
            group_layout(shape, lq.scheme)
        except IndivisibleBlockError as exc:
            raise PlanError(
                f"layer {name}: block size {exc.block} does not divide input dimension {exc.dim}"
            ) from exc
    if plan.activation is not None:
        for name in plan.weights:
            dim = model.params[name + ".w"].shape[1]
            try:
                group_layout((1, dim), plan.activation, "activation")
            except IndivisibleBlockError as exc:
                raise PlanError(
                    f"layer {name}: activation block size {exc.block} does not divide hidden dimension {exc.dim}"
                ) from exc


@dataclass
class QuantizeResult:
    model: ToyModel
    plan: QuantizationPlan
    report: List[Dict] = field(default_factory=list)

    @property
    def total_objective(self) -> float:
        return sum(r["objective"] for r in self.report if r["objective"] is not None)


def quantize_model(
    model: ToyModel,
    plan: QuantizationPlan,
    calib: Optional[CalibrationSet] = None,
    gptq_opts: GptqOptions = GptqOptions(),
    zq_opts: OptimizerOptions = OptimizerOptions(),
    freeze_float: bool = False,
) -> QuantizeResult:
    """Materialize every planned linear with its PTQ method.

    Returns a copy of the model (layer norms and biases possibly updated by
    ZQ-Global) together with a plan whose ``quantized`` dict is filled, and
    a per-linear report of objectives, errors and sizes.
    """
    validate_plan(model, plan)
    needs_calib = any(lq.scheme is not None and lq.method != "rtn" for lq in plan.weights.values())
    if needs_calib and calib is None:
        raise ValueError("plan uses calibration-based methods but no calibration set was given")
    out = model.copy()
    done = QuantizationPlan(dict(plan.weights), plan.activation)
    cfg = model.config

    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        global_schemes = {}
        for n in LINEARS:
            name = pre + n
            lq = plan.weights.get(name)
            if lq is None or lq.scheme is None:
                continue
            w = model.params[name + ".w"]
            if lq.method == "rtn":
                q = rtn(w, lq.scheme)
            elif lq.method == "gptq":
                q = gptq(w, calib.inputs[name], lq.scheme, gptq_opts)
            elif lq.method == "zq-local":
                q = zq_local(w, calib.inputs[name], lq.scheme, zq_opts, seq_len=calib.seq_len)
            else:
                global_schemes[n] = lq.scheme
                continue
            done.quantized[name] = q
        if global_schemes:
            fixed = {n: done.quantized[pre + n].dequantize() for n in LINEARS if pre + n in done.quantized}
            res = zq_global(
                model.layer_params(i), calib.layer_inputs[i], global_schemes, zq_opts,
                n_heads=cfg.n_heads, freeze_float=freeze_float, fixed=fixed,
            )
            for n, q in res.quantized.items():
                done.quantized[pre + n] = q
            for k, v in res.params.items():
                if not k.endswith(".w"):
                    out.params[pre + k] = v

    report = []
    for name, lq in plan.weights.items():
        if lq.scheme is None:
            continue
        q: QuantizedTensor = done.quantized[name]
        w = model.params[name + ".w"]
        x = calib.inputs.get(name) if calib is not None else None
        obj_rtn = obj = None
        if x is not None:
            obj_rtn = layer_objective(w, rtn(w, lq.scheme), x)
            obj = layer_objective(w, q, x)
        report.append(
            {
                "layer": name,
                "method": lq.method,
                "scheme": lq.scheme.label(),
                "objective_rtn": obj_rtn,
                "objective": obj,
                "reconstruction_error": reconstruction_error(w, q),
                "effective_bits": effective_bits(lq.scheme, q.group_len),
                "bytes": math.ceil(tensor_bits(model, name + ".w", plan) / 8),
            }
        )
    return QuantizeResult(out, done, report)
