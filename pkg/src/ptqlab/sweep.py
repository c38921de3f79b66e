"""Method x scheme sweeps over a toy model, with degradation classes,
best-method summaries and a size/perplexity Pareto frontier.

``[sweep]`` keys::

    checkpoint     path of a trained checkpoint (omit to train from [model]/[train])
    corpus         text file (default: bundled corpus); train/validation split 90/10
    methods        rtn, gptq, zq-local, zq-global
    bits           e.g. 3, 4, 8
    granularities  row, 1024, 512, 256, 128, 64, 32
    modes          asym, sym
    activations    none, asym8/token, sym8/block32 ...
    seeds          0, 1, 2          (calibration sampling and ZQ batch order)
    eval_tokens    validation tokens scored for perplexity (default 20000)
    output         output directory

Outputs (``output``): ``results.csv``, ``results.json``, ``best.csv``,
``pareto.csv``. CSV columns are listed in :data:`CSV_COLUMNS`; numeric
fields of skipped rows (block size not dividing a layer) read ``N/A``.
``wall_time`` appears only in JSON so CSV bytes are reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .algos.calibration import capture_calibration
from .algos.gptq import GptqOptions
from .algos.pipeline import PlanError, quantize_model, validate_plan
from .algos.zq import OptimizerOptions
from .config import (
    calibration_from,
    freeze_float_from,
    gptq_options_from,
    model_config_from,
    parse_list,
    parse_scheme_token,
    train_options_from,
    zq_options_from,
)
from .corpus import load_tokens, split
from .io import load_checkpoint
from .model.metrics import classify_delta, model_bytes, perplexity, tensor_bits
from .model.plan import METHODS, QuantizationPlan
from .model.train import train_toy
from .model.transformer import ToyModel
from .quant import QuantScheme

CSV_COLUMNS = [
    "index", "method", "bits", "mode", "granularity", "activation", "seed", "status",
    "ppl", "delta_ppl", "class", "effective_bits", "model_bytes", "model_bytes_fp16",
    "reconstruction_error", "objective", "error",
]
NA = "N/A"


@dataclass(frozen=True)
class GridPoint:
    method: str
    bits: int
    mode: str
    granularity: str
    activation: Optional[QuantScheme] = None

    @property
    def activation_label(self) -> str:
        return self.activation.label() if self.activation else "none"

    @property
    def setting(self):
        return (self.bits, self.mode, self.granularity, self.activation_label)

    def label(self) -> str:
        return f"{self.method}:{self.mode}{self.bits}/{self.granularity}:a={self.activation_label}"


@dataclass
class SweepConfig:
    methods: List[str]
    bits: List[int]
    granularities: List[str]
    modes: List[str] = field(default_factory=lambda: ["asym"])
    activations: List[Optional[QuantScheme]] = field(default_factory=lambda: [None])
    seeds: List[int] = field(default_factory=lambda: [0])
    output: Optional[Path] = None
    checkpoint: Optional[str] = None
    corpus: Optional[str] = None
    eval_tokens: int = 20000
    calibration: Dict = field(default_factory=lambda: {"samples": 16, "seq_len": 64})
    gptq: GptqOptions = GptqOptions()
    zq: OptimizerOptions = OptimizerOptions()
    freeze_float: bool = False
    model_config: Optional[object] = None
    train: Dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("methods", "bits", "granularities", "modes", "activations", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"sweep grid axis {name!r} is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if any(not 2 <= b <= 8 for b in self.bits):
            raise ValueError("sweep bits must lie in [2, 8]")

    @classmethod
    def from_config(cls, cp) -> "SweepConfig":
        s = cp["sweep"] if cp.has_section("sweep") else {}
        acts = [parse_scheme_token(t, "token") for t in parse_list(s.get("activations", "none"))]
        calib = calibration_from(cp)
        calib.pop("seed", None)
        return cls(
            methods=parse_list(s.get("methods", "rtn")),
            bits=[int(v) for v in parse_list(s.get("bits", "4"))],
            granularities=[g.lower() for g in parse_list(s.get("granularities", "row"))],
            modes=parse_list(s.get("modes", "asym")),
            activations=acts,
            seeds=[int(v) for v in parse_list(s.get("seeds", "0"))],
            output=Path(s["output"]) if "output" in s else None,
            checkpoint=s.get("checkpoint"),
            corpus=s.get("corpus"),
            eval_tokens=int(s.get("eval_tokens", 20000)),
            calibration=calib,
            gptq=gptq_options_from(cp),
            zq=zq_options_from(cp),
            freeze_float=freeze_float_from(cp),
            model_config=model_config_from(cp),
            train=train_options_from(cp),
        )

    def grid(self) -> List[GridPoint]:
        return [
            GridPoint(m, b, mode, g, a)
            for b in self.bits
            for mode in self.modes
            for g in self.granularities
            for a in self.activations
            for m in self.methods
        ]


@dataclass
class SweepResult:
    rows: List[Dict]
    best: List[Dict]
    pareto: List[Dict]
    baseline_ppl: float
    baseline_bytes: int


def _scheme(p: GridPoint) -> QuantScheme:
    return QuantScheme.parse(p.bits, p.mode, p.granularity)


def _na_row(i, p, seed, status, err=""):
    row = {c: NA for c in CSV_COLUMNS}
    row.update(index=i, method=p.method, bits=p.bits, mode=p.mode, granularity=p.granularity,
               activation=p.activation_label, seed=seed, status=status, error=err)
    return row


def _run_point(i, p: GridPoint, seed: int, model: ToyModel, calib, eval_toks, base_ppl, cfg: SweepConfig):
    t0 = time.perf_counter()
    try:
        plan = QuantizationPlan.uniform(model.linear_names(), _scheme(p), p.method, p.activation)
        validate_plan(model, plan)
        res = quantize_model(model, plan, calib, cfg.gptq, replace(cfg.zq, seed=seed), cfg.freeze_float)
        ppl = perplexity(res.model, eval_toks, res.plan)
        delta = ppl - base_ppl
        n_el = sum(model.params[n + ".w"].size for n in plan.weights)
        n_bits = sum(tensor_bits(model, n + ".w", plan) for n in plan.weights)
        objs = [r["objective"] for r in res.report]
        errs = [r["reconstruction_error"] for r in res.report]
        row = _na_row(i, p, seed, "ok")
        row.update(
            ppl=ppl,
            delta_ppl=delta,
            **{"class": classify_delta(delta).value},
            effective_bits=n_bits / n_el,
            model_bytes=model_bytes(model, plan),
            model_bytes_fp16=model_bytes(model, plan, fp_bits=16),
            reconstruction_error=float(np.mean(errs)),
            objective=float(np.sum(objs)),
            error="",
        )
    except PlanError as exc:
        row = _na_row(i, p, seed, "skipped", str(exc))
    except Exception as exc:  # row-level failure, sweep continues
        row = _na_row(i, p, seed, "error", f"{type(exc).__name__}: {exc}")
    row["wall_time"] = time.perf_counter() - t0
    return row


def load_model_for(cfg: SweepConfig, train_tokens) -> ToyModel:
    if cfg.checkpoint:
        return load_checkpoint(cfg.checkpoint)[0]
    t = dict(cfg.train)
    return train_toy(cfg.model_config, train_tokens, steps=t.get("steps", 600), lr=t.get("lr", 3e-3),
                     seed=t.get("seed", 0), batch_size=t.get("batch_size", 16))[0]


def run_sweep(cfg: SweepConfig, threads: int = 1, model: Optional[ToyModel] = None) -> SweepResult:
    """Evaluate every grid point for every seed.

    Grid points run on ``threads`` workers; rows are ordered by grid index.
    BLAS is pinned to one thread so results do not depend on ``threads``.
    """
    tokens = load_tokens(cfg.corpus)
    train_toks, valid_toks = split(tokens)
    eval_toks = valid_toks[: cfg.eval_tokens]
    with threadpool_limits(limits=1):
        if model is None:
            model = load_model_for(cfg, train_toks)
        base_ppl = perplexity(model, eval_toks)
        calib = {
            s: capture_calibration(model, train_toks, cfg.calibration.get("samples", 16),
                                   min(cfg.calibration.get("seq_len", 64), model.config.max_seq_len), seed=s)
            for s in cfg.seeds
        }
        jobs = [(p, s) for p in cfg.grid() for s in cfg.seeds]
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            futures = [
                pool.submit(_run_point, i, p, s, model, calib[s], eval_toks, base_ppl, cfg)
                for i, (p, s) in enumerate(jobs)
            ]
            rows = [f.result() for f in futures]
    grid = cfg.grid()
    fp_bytes = model_bytes(model)
    pareto = pareto_from_rows(rows, grid, len(cfg.seeds), base_ppl, fp_bytes)
    return SweepResult(rows, best_methods(rows), pareto, base_ppl, fp_bytes)


# ---------------------------------------------------------------- summaries


def _ok(rows):
    return [r for r in rows if r["status"] == "ok"]


def best_methods(rows: Sequence[Dict]) -> List[Dict]:
    """Per setting (bits, mode, granularity, activation): method with the lowest mean ppl over seeds."""
    by_setting: Dict[tuple, Dict[str, List[float]]] = {}
    for r in _ok(rows):
        key = (r["bits"], r["mode"], r["granularity"], r["activation"])
        by_setting.setdefault(key, {}).setdefault(r["method"], []).append(r["ppl"])
    out = []
    for key, methods in by_setting.items():
        means = {m: float(np.mean(v)) for m, v in methods.items()}
        best = min(means, key=lambda m: means[m])
        out.append({"bits": key[0], "mode": key[1], "granularity": key[2], "activation": key[3],
                    "best_method": best, "ppl": means[best]})
    return out


def pareto_front(points: Sequence[Dict]) -> List[Dict]:
    """Points not dominated in (model_bytes, ppl); lower is better in both.

    Sort by bytes then ppl and sweep once, keeping a point when its ppl is
    below every ppl seen at strictly smaller size.
    """
    order = sorted(points, key=lambda p: (p["model_bytes"], p["ppl"], p["label"]))
    front = []
    best_ppl = np.inf  # best ppl among strictly smaller sizes
    i = 0
    while i < len(order):
        j = i
        size = order[i]["model_bytes"]
        while j < len(order) and order[j]["model_bytes"] == size:
            j += 1
        same = order[i:j]
        lo = same[0]["ppl"]
        if lo < best_ppl:
            front.extend(p for p in same if p["ppl"] == lo)
        best_ppl = min(best_ppl, lo)
        i = j
    return front


def pareto_from_rows(rows, grid, n_seeds, base_ppl, fp_bytes) -> List[Dict]:
    """Frontier over grid points (ppl averaged over seeds) plus the full-precision model."""
    pts: Dict[int, Dict] = {}
    for r in _ok(rows):
        g = r["index"] // n_seeds
        pts.setdefault(g, {"label": grid[g].label(), "model_bytes": r["model_bytes"], "ppls": []})["ppls"].append(r["ppl"])
    points = [{"label": v["label"], "model_bytes": v["model_bytes"], "ppl": float(np.mean(v["ppls"]))}
              for _, v in sorted(pts.items())]
    points.append({"label": "fp32", "model_bytes": fp_bytes, "ppl": base_ppl})
    return pareto_front(points)


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def rows_to_csv(rows: Sequence[Dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_outputs(result: SweepResult, outdir) -> Dict[str, Path]:
    d = Path(outdir)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "results.csv": rows_to_csv(result.rows, CSV_COLUMNS),
        "best.csv": rows_to_csv(result.best, ["bits", "mode", "granularity", "activation", "best_method", "ppl"]),
        "pareto.csv": rows_to_csv(result.pareto, ["label", "model_bytes", "ppl"]),
    }
    out = {}
    for name, text in paths.items():
        (d / name).write_text(text)
        out[name] = d / name
    doc = {
        "baseline_ppl": result.baseline_ppl,
        "baseline_bytes": result.baseline_bytes,
        "columns": CSV_COLUMNS + ["wall_time"],
        "rows": result.rows,
        "best": result.best,
        "pareto": result.pareto,
    }
    (d / "results.json").write_text(json.dumps(doc, indent=2) + "\n")
    out["results.json"] = d / "results.json"
    return out
