# Packing codes and writing tensor files
#
# Quantized weights only save space once the codes are stored densely. Here we
# pack 3-bit codes into a bitstream, try the split layout for 5-bit codes, and
# write a quantized tensor to disk.

import tempfile
from pathlib import Path

import numpy as np

from ptqlab.io import read_tensor, write_tensor
from ptqlab.packing import join_odd, pack, split_odd, unpack
from ptqlab.quant import Granularity, QuantScheme, quantize

# Codes go into the stream least significant bit first. Four 4-bit codes fit
# in two bytes.

p = pack(np.array([1, 2, 3, 4]), 4)
print("4-bit stream:", p.payload.hex())

# Any width from 1 to 8 packs to ceil(n * bits / 8) bytes and unpacks exactly.

codes = np.random.default_rng(0).integers(0, 8, size=1000)
p = pack(codes, 3)
print("1000 x 3-bit codes ->", len(p.payload), "bytes; roundtrip ok:", np.array_equal(unpack(p), codes))

# 5-bit codes can be split into a 4-bit plane and a 1-bit plane so that each
# plane stays aligned with nibbles or bits.

planes = split_odd(np.array([22, 5, 31]))
print("low plane", unpack(planes.low).tolist(), "high plane", unpack(planes.high).tolist())
print("joined   ", join_odd(planes).tolist())

# A tensor file holds a small JSON header followed by the packed codes and one
# float32 (scale, zero) pair per group.

w = np.random.default_rng(1).standard_normal((64, 128)).astype(np.float32)
q = quantize(w, QuantScheme(4, granularity=Granularity.BLOCK, block=32))
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "w.ptqt"
    write_tensor(path, q, "w")
    back = read_tensor(path)
    print(f"file {path.stat().st_size} bytes vs {w.nbytes} bytes of float32; identical: {back == q}")
