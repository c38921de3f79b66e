# Uniform affine quantization grids
#
# A quantizer maps every float in a group to an integer code and back. The
# group shares one scale (and, for asymmetric grids, one zero point). This
# walk-through compares symmetric and asymmetric grids and shows how much
# smaller groups help.

import numpy as np

from ptqlab.quant import Granularity, Mode, QuantScheme, effective_bits, fake_quant, quantize, reconstruction_error

rng = np.random.default_rng(0)

# Start with a single row of values and a 3-bit asymmetric grid. The codes run
# from 0 to 7 and the zero point sits at the row minimum.

x = np.array([[-0.9, -0.2, 0.0, 0.35, 1.4, 2.1]], np.float32)
q = quantize(x, QuantScheme(3, Mode.ASYMMETRIC))
print("codes      ", q.codes.tolist())
print("scale, zero", q.scales[0], q.zeros[0])
print("restored   ", [round(float(v), 3) for v in q.dequantize()[0]])

# A symmetric grid keeps zero exactly representable but spends half its codes
# on negative values, which is wasteful when the data is skewed.

skewed = rng.exponential(1.0, (64, 256)).astype(np.float32)
for mode in Mode:
    s = QuantScheme(4, mode)
    print(f"{s.label():>12}  mse {reconstruction_error(skewed, quantize(skewed, s)):.5f}")

# Granularity decides how many values share a scale. One scale for the whole
# tensor is cheapest to store; one per block of 32 values tracks local ranges
# much better. The extra cost shows up as effective bits per weight.

w = (rng.standard_normal((256, 256)) * rng.uniform(0.2, 3.0, (256, 1))).astype(np.float32)
for s in (
    QuantScheme(4, granularity=Granularity.TENSOR),
    QuantScheme(4, granularity=Granularity.ROW),
    QuantScheme(4, granularity=Granularity.BLOCK, block=128),
    QuantScheme(4, granularity=Granularity.BLOCK, block=32),
):
    q = quantize(w, s)
    print(f"{s.label():>16}  mse {reconstruction_error(w, q):.5f}  bits/weight {effective_bits(s, q.group_len):.4f}")

# fake_quant is the quantize-then-restore round trip used inside the model's
# forward pass. Passing no scheme leaves the tensor untouched.

print("passthrough is identity:", fake_quant(w, None) is w)
