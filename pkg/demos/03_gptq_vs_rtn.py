# Error compensation versus plain rounding
#
# Round-to-nearest treats every weight on its own. GPTQ quantizes one column
# at a time and pushes the rounding error onto the columns it has not visited
# yet, using second-order information from the calibration inputs. We compare
# both on the layer output error ||(W - W_hat) X||^2 and try ZQ-Local too.

import numpy as np

from ptqlab.algos import OptimizerOptions, gptq, layer_objective, rtn, zq_local
from ptqlab.quant import Granularity, QuantScheme

rng = np.random.default_rng(0)

# Correlated inputs make the difference clearer. The input features share a
# few latent directions, just as hidden states inside a real model do.

w = rng.standard_normal((64, 64)).astype(np.float32)
mix = rng.standard_normal((64, 8))
x = (mix @ rng.standard_normal((8, 256)) + 0.1 * rng.standard_normal((64, 256))).astype(np.float32)

for bits in (4, 3):
    for s in (QuantScheme(bits), QuantScheme(bits, granularity=Granularity.BLOCK, block=16)):
        r = layer_objective(w, rtn(w, s), x)
        g = layer_objective(w, gptq(w, x, s), x)
        print(f"{s.label():>14}  rtn {r:10.2f}  gptq {g:10.2f}  ratio {g / r:.3f}")

# ZQ-Local trains latent weights through the quantizer with Adam. It starts
# from the RTN solution and keeps the best iterate, so it can only improve.

s = QuantScheme(3)
opts = OptimizerOptions(learning_rates=(1e-2, 1e-3), iterations=100, batch_size=4)
q = zq_local(w, x, s, opts, seq_len=16)
print(f"zq-local {layer_objective(w, q, x):.2f} vs rtn {layer_objective(w, rtn(w, s), x):.2f}")
