"""Command-line harness: ``ptqlab {train,quantize,eval,sweep,pack-bench}``.

Global options ``--seed`` and ``--threads`` go before the subcommand.
``--threads`` defaults to ``$PTQLAB_THREADS`` (or 1). Exit code is 0 on
success and 1 on any error, with the message on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .algos import capture_calibration, quantize_model
from .bench import BENCH_COLUMNS, pack_bench
from .config import (
    calibration_from,
    freeze_float_from,
    gptq_options_from,
    model_config_from,
    parse_list,
    plan_from,
    read_config,
    train_options_from,
    zq_options_from,
)
from .corpus import load_tokens, split
from .io import load_checkpoint, plan_to_dict, save_checkpoint
from .model import model_bytes, perplexity, train_toy
from .sweep import SweepConfig, rows_to_csv, run_sweep, write_outputs

log = logging.getLogger("ptqlab")
THREADS_ENV = "PTQLAB_THREADS"


def _tokens(path):
    if path is not None and not Path(path).is_file():
        raise FileNotFoundError(f"corpus not found: {path}")
    return load_tokens(path)


def cmd_train(args) -> int:
    cp = read_config(args.config, args.set)
    if args.seed is not None:
        cp.read_dict({"model": {"seed": str(args.seed)}, "train": {"seed": str(args.seed)}})
    cfg = model_config_from(cp)
    t = train_options_from(cp)
    if args.steps is not None:
        t["steps"] = args.steps
    train_toks, _ = split(_tokens(args.corpus))
    model, loss = train_toy(cfg, train_toks, steps=t["steps"], lr=t["lr"], seed=t["seed"], batch_size=t["batch_size"])
    out = save_checkpoint(model, args.out)
    (out / "train.json").write_text(json.dumps({"final_loss": loss, **t}, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"checkpoint": str(out), "final_loss": loss}))
    return 0


def cmd_quantize(args) -> int:
    cp = read_config(args.plan, args.set)
    model, _ = load_checkpoint(args.checkpoint)
    plan = plan_from(cp, model.linear_names())
    calib_opts = calibration_from(cp)
    if args.seed is not None:
        calib_opts["seed"] = args.seed
    calib_opts["seq_len"] = min(calib_opts["seq_len"], model.config.max_seq_len)
    train_toks, _ = split(_tokens(args.corpus))
    calib = capture_calibration(model, train_toks, **calib_opts)
    res = quantize_model(
        model, plan, calib, gptq_options_from(cp), zq_options_from(cp, args.seed), freeze_float_from(cp)
    )
    out = save_checkpoint(res.model, args.out, res.plan)
    report = {
        "plan": plan_to_dict(plan),
        "calibration": calib_opts,
        "layers": res.report,
        "total_objective": res.total_objective,
        "total_objective_rtn": sum(r["objective_rtn"] for r in res.report),
        "model_bytes": model_bytes(model, plan),
        "model_bytes_fp32": model_bytes(model),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps({"checkpoint": str(out), "total_objective": report["total_objective"],
                      "model_bytes": report["model_bytes"]}))
    return 0


def _eval_tokens(toks, max_tokens):
    if max_tokens:
        toks = toks[:max_tokens]
    if len(toks) < 2:
        raise ValueError("evaluation corpus needs at least two tokens")
    return toks


def cmd_eval(args) -> int:
    model, plan = load_checkpoint(args.checkpoint)
    if not args.corpus:
        toks = _eval_tokens(split(load_tokens())[1], args.max_tokens)
        doc = {"ppl": perplexity(model, toks, plan), "tokens": int(len(toks))}
    else:
        # several corpora: report each and their unweighted mean
        per = {}
        n = 0
        for path in args.corpus:
            toks = _eval_tokens(_tokens(path), args.max_tokens)
            per[str(path)] = perplexity(model, toks, plan)
            n += len(toks)
        doc = {"ppl": sum(per.values()) / len(per), "tokens": n}
        if len(per) > 1:
            doc["per_corpus"] = per
    print(json.dumps({"checkpoint": str(args.checkpoint), **doc}, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    cp = read_config(args.config, args.set)
    cfg = SweepConfig.from_config(cp)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg.output = Path(args.out)
    if cfg.output is None:
        raise ValueError("no output directory: set [sweep] output or pass --out")
    result = run_sweep(cfg, threads=args.threads)
    paths = write_outputs(result, cfg.output)
    n_ok = sum(r["status"] == "ok" for r in result.rows)
    print(json.dumps({"rows": len(result.rows), "ok": n_ok, "baseline_ppl": result.baseline_ppl,
                      "outputs": {k: str(v) for k, v in paths.items()}}))
    return 0


def cmd_pack_bench(args) -> int:
    sizes = [int(v) for v in parse_list(args.sizes)]
    bits = [b if b == "5p" else int(b) for b in parse_list(args.bits)]
    rows = pack_bench(sizes, bits, repeat=args.repeat, seed=args.seed or 0)
    text = rows_to_csv(rows, BENCH_COLUMNS)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0 if all(r["roundtrip_ok"] for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptqlab", description="Post-training quantization harness for a toy LM.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    ap.add_argument("--threads", type=int, default=int(os.environ.get(THREADS_ENV, "1")),
                    help=f"worker threads for sweeps (default ${THREADS_ENV} or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_set(p):
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        return p

    p = with_set(sub.add_parser("train", help="train the toy model and write a checkpoint"))
    p.add_argument("--config", default=None)
    p.add_argument("--corpus", default=None, help="text file (default: bundled corpus)")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = with_set(sub.add_parser("quantize", help="apply a quantization plan to a checkpoint"))
    p.add_argument("checkpoint")
    p.add_argument("--plan", default=None, help="plan config file")
    p.add_argument("--corpus", default=None, help="calibration text (default: bundled corpus)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="perplexity of a checkpoint as one JSON line")
    p.add_argument("checkpoint")
    p.add_argument("--corpus", action="append", default=[],
                   help="text file (repeatable; default: bundled validation split)")
    p.add_argument("--max-tokens", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = with_set(sub.add_parser("sweep", help="run a method x scheme sweep"))
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pack-bench", help="pack/unpack throughput")
    p.add_argument("--sizes", default="0,1000,100000")
    p.add_argument("--bits", default="2,3,4,5,5p,6,7,8")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pack_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        if args.verbose:
            log.exception("command failed")
        print(f"ptqlab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
