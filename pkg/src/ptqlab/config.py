"""INI-style configuration files for the command-line harness.

Files are flat ``[section]`` blocks of ``key = value`` lines. Values are
typed by the reader (int, float, comma-separated lists). Any key can be
overridden from the command line with ``--set section.key=value``.

Recognised sections::

    [model]        vocab_size, d_model, n_heads, n_layers, d_ff, max_seq_len, seed
    [train]        steps, lr, batch_size, seed
    [weights]      bits, mode, granularity, method      (bits = 16 -> full precision)
    [activation]   bits, mode, granularity              (optional; dynamic per-token/block)
    [layers.I.NAME] per-linear override of [weights], e.g. [layers.0.fc2]
    [calibration]  samples, seq_len, seed
    [gptq]         damp_ratio
    [zq]           learning_rates, iterations, schedule, batch_size, seed, freeze_float
    [sweep]        see :mod:`ptqlab.sweep`
"""

from __future__ import annotations

import configparser
import re
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from .algos.gptq import GptqOptions
from .algos.zq import DEFAULT_LRS, OptimizerOptions
from .model.plan import LinearQuant, QuantizationPlan
from .model.transformer import ToyModelConfig
from .quant import QuantScheme

PASSTHROUGH_BITS = 16


class ConfigError(ValueError):
    pass


def read_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp.read_string(p.read_text(), source=str(p))
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().rpartition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())
    return cp


def parse_list(value: str) -> List[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def scheme_from(section, default_bits: int = PASSTHROUGH_BITS, default_granularity: str = "row") -> Optional[QuantScheme]:
    bits = int(section.get("bits", default_bits))
    if bits >= PASSTHROUGH_BITS:
        return None
    return QuantScheme.parse(
        bits,
        section.get("mode", "asym"),
        section.get("granularity", default_granularity),
        int(section.get("param_bits", 16)),
    )


def parse_scheme_token(token: str, role_default: str = "row") -> Optional[QuantScheme]:
    """``"asym4/block32"``, ``"sym8/token"``, ``"none"`` -> scheme or None."""
    t = token.strip().lower()
    if t in ("", "none", "fp", "fp32", "16"):
        return None
    head, _, gran = t.partition("/")
    m = re.match(r"^(a?sym)?(\d+)$", head)
    if not m:
        raise ConfigError(f"cannot parse scheme {token!r}; expected e.g. asym4/block32")
    mode, bits = m.group(1) or "asym", int(m.group(2))
    if bits >= PASSTHROUGH_BITS:
        return None
    return QuantScheme.parse(bits, mode, gran or role_default)


def model_config_from(cp) -> ToyModelConfig:
    s = _section(cp, "model")
    kw = {}
    for k in ("vocab_size", "d_model", "n_heads", "n_layers", "d_ff", "max_seq_len", "seed"):
        if k in s:
            kw[k] = int(s[k])
    return ToyModelConfig(**kw)


def train_options_from(cp) -> dict:
    s = _section(cp, "train")
    return {
        "steps": int(s.get("steps", 600)),
        "lr": float(s.get("lr", 3e-3)),
        "batch_size": int(s.get("batch_size", 16)),
        "seed": int(s.get("seed", 0)),
    }


def calibration_from(cp) -> dict:
    s = _section(cp, "calibration")
    return {
        "samples": int(s.get("samples", 16)),
        "seq_len": int(s.get("seq_len", 64)),
        "seed": int(s.get("seed", 0)),
    }


def gptq_options_from(cp) -> GptqOptions:
    return GptqOptions(float(_section(cp, "gptq").get("damp_ratio", 0.01)))


def zq_options_from(cp, seed: Optional[int] = None) -> OptimizerOptions:
    s = _section(cp, "zq")
    lrs = [float(v) for v in parse_list(s["learning_rates"])] if "learning_rates" in s else list(DEFAULT_LRS)
    return OptimizerOptions(
        learning_rates=tuple(lrs),
        iterations=int(s.get("iterations", 100)),
        schedule=s.get("schedule", "linear"),
        batch_size=int(s.get("batch_size", 1)),
        seed=int(s.get("seed", 0)) if seed is None else seed,
    )


def freeze_float_from(cp) -> bool:
    s = _section(cp, "zq")
    return str(s.get("freeze_float", "false")).lower() in ("1", "true", "yes", "on")


def plan_from(cp, linear_names: Iterable[str]) -> QuantizationPlan:
    base = _section(cp, "weights")
    method = base.get("method", "rtn")
    weights = {}
    for name in linear_names:
        sec = dict(base)
        if cp.has_section(name):
            sec.update(cp[name])
        weights[name] = LinearQuant(scheme_from(sec), sec.get("method", method))
    act = scheme_from(_section(cp, "activation"), default_granularity="token") if cp.has_section("activation") else None
    return QuantizationPlan(weights, act)
