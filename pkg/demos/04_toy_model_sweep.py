# Post-training quantization of a small language model
#
# We train a byte-level decoder for a few hundred steps, quantize it with
# several methods and grids, and read off perplexity, degradation class and
# model size. Training takes under a minute on one CPU core.

from ptqlab.algos import capture_calibration, quantize_model
from ptqlab.corpus import load_tokens, split
from ptqlab.model import QuantizationPlan, ToyModelConfig, classify_delta, model_bytes, perplexity, train_toy
from ptqlab.quant import QuantScheme
from ptqlab.sweep import pareto_front

train, valid = split(load_tokens())
valid = valid[:20000]

model, loss = train_toy(ToyModelConfig(), train, steps=400)
base = perplexity(model, valid)
print(f"trained: loss {loss:.3f}, validation perplexity {base:.4f}, {model_bytes(model)} bytes")

# Calibration captures the inputs of every linear layer on a few random
# windows of training text. GPTQ and ZQ need it; RTN does not.

calib = capture_calibration(model, train, samples=16, seq_len=64)

points = [{"label": "fp32", "model_bytes": model_bytes(model), "ppl": base}]
for bits, gran in ((8, "row"), (4, "row"), (4, "block32"), (3, "block32")):
    scheme = QuantScheme.parse(bits, "asym", gran)
    for method in ("rtn", "gptq"):
        plan = QuantizationPlan.uniform(model.linear_names(), scheme, method)
        res = quantize_model(model, plan, calib)
        ppl = perplexity(res.model, valid, res.plan)
        size = model_bytes(model, plan)
        label = f"{method}:{scheme.label()}"
        points.append({"label": label, "model_bytes": size, "ppl": ppl})
        print(f"{label:>20}  ppl {ppl:.4f}  delta {ppl - base:+.4f}  {classify_delta(ppl - base).value}  {size} bytes")

# The Pareto frontier keeps the settings that no other setting beats on both
# size and perplexity.

print("frontier:")
for p in pareto_front(points):
    print(f"  {p['label']:>20}  {p['model_bytes']:>8} bytes  ppl {p['ppl']:.4f}")
