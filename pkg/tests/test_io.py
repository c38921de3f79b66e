import json
import shutil
import struct

import numpy as np
import pytest

from ptqlab.algos import capture_calibration, quantize_model
from ptqlab.io import (
    BadMagicError,
    HeaderError,
    LengthError,
    ManifestError,
    VersionError,
    checkpoint_size,
    decode_tensor,
    encode_tensor,
    load_calibration,
    load_checkpoint,
    plan_from_dict,
    plan_to_dict,
    quantized_file_size,
    read_tensor,
    save_calibration,
    save_checkpoint,
    write_tensor,
)
from ptqlab.model import QuantizationPlan, forward
from ptqlab.packing import FormatError
from ptqlab.quant import Granularity, Mode, QuantScheme, effective_bits, quantize


def test_real32_roundtrip(tmp_path, rng):
    a = rng.standard_normal((3, 5)).astype(np.float32)
    write_tensor(tmp_path / "a.ptqt", a, "a", "param")
    b = read_tensor(tmp_path / "a.ptqt")
    assert b.dtype == np.float32 and b.tobytes() == a.tobytes()


def test_prelude_layout(rng):
    data = encode_tensor(np.zeros(2, np.float32), "z")
    magic, version, hlen = struct.unpack_from("<4sII", data)
    assert (magic, version) == (b"PTQT", 1)
    header = json.loads(data[12 : 12 + hlen])
    assert header["dtype"] == "real32" and header["shape"] == [2]
    assert len(data) == 12 + hlen + 8


def test_quantized_roundtrip(rng):
    w = rng.standard_normal((8, 64)).astype(np.float32)
    q = quantize(w, QuantScheme(4, Mode.ASYMMETRIC, Granularity.BLOCK, 32))
    data = encode_tensor(q, "w")
    back, header = decode_tensor(data)
    assert back == q
    assert header["layout"] == "stream"
    hlen = struct.unpack_from("<I", data, 8)[0]
    assert len(data) - 12 - hlen == quantized_file_size(q) == 8 * 64 // 2 + 16 * 8


def test_symmetric_roundtrip(rng):
    q = quantize(rng.standard_normal((4, 6)), QuantScheme(3, Mode.SYMMETRIC))
    assert decode_tensor(encode_tensor(q))[0] == q


def test_planes5_roundtrip(rng):
    q = quantize(rng.standard_normal((5, 7)), QuantScheme(5, Mode.ASYMMETRIC, Granularity.TENSOR))
    back, header = decode_tensor(encode_tensor(q, planes=True))
    assert back == q and header["layout"] == "planes5"
    with pytest.raises(ValueError):
        encode_tensor(quantize(rng.standard_normal((2, 2)), QuantScheme(4)), planes=True)


def test_bad_magic():
    data = bytearray(encode_tensor(np.zeros(2, np.float32)))
    data[:4] = b"NOPE"
    with pytest.raises(BadMagicError):
        decode_tensor(bytes(data))


def test_bad_version():
    data = bytearray(encode_tensor(np.zeros(2, np.float32)))
    struct.pack_into("<I", data, 4, 2)
    with pytest.raises(VersionError):
        decode_tensor(bytes(data))


@pytest.mark.parametrize("cut", [5, 20, -1])
def test_truncated(cut, rng):
    data = encode_tensor(quantize(rng.standard_normal((4, 8)), QuantScheme(4)))
    with pytest.raises(LengthError):
        decode_tensor(data[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(LengthError):
        decode_tensor(encode_tensor(np.zeros(2, np.float32)) + b"\x00")


def test_malformed_header():
    hb = b"{not json"
    data = struct.pack("<4sII", b"PTQT", 1, len(hb)) + hb
    with pytest.raises(HeaderError):
        decode_tensor(data)


def test_errors_share_format_base():
    for cls in (BadMagicError, VersionError, LengthError, HeaderError, ManifestError):
        assert issubclass(cls, FormatError)


def test_plan_dict_roundtrip():
    s = QuantScheme(4, Mode.SYMMETRIC, Granularity.BLOCK, 32)
    plan = QuantizationPlan.uniform(["a", "b"], s, "gptq", QuantScheme(8, Mode.SYMMETRIC, Granularity.TOKEN))
    back = plan_from_dict(json.loads(json.dumps(plan_to_dict(plan))))
    assert back.weights == plan.weights and back.activation == plan.activation


def test_checkpoint_roundtrip_is_bit_exact(tiny_model, tmp_path, corpus_splits):
    _, valid = corpus_splits
    save_checkpoint(tiny_model, tmp_path / "c")
    model, plan = load_checkpoint(tmp_path / "c")
    assert plan is None and model.config == tiny_model.config
    assert forward(model, valid[:32]).tobytes() == forward(tiny_model, valid[:32]).tobytes()


def test_quantized_checkpoint_matches_plan(tiny_model, tmp_path, corpus_splits):
    _, valid = corpus_splits
    plan = QuantizationPlan.uniform(tiny_model.linear_names(), QuantScheme(4, granularity=Granularity.BLOCK, block=16))
    res = quantize_model(tiny_model, plan)
    save_checkpoint(res.model, tmp_path / "q", res.plan)
    model, loaded = load_checkpoint(tmp_path / "q")
    assert set(loaded.quantized) == set(res.plan.quantized)
    assert all(loaded.quantized[k] == res.plan.quantized[k] for k in loaded.quantized)
    a = forward(model, valid[:32], loaded)
    b = forward(res.model, valid[:32], res.plan)
    assert a.tobytes() == b.tobytes()
    save_checkpoint(tiny_model, tmp_path / "fp")
    assert checkpoint_size(tmp_path / "q") < checkpoint_size(tmp_path / "fp")


def test_missing_file_named(tiny_checkpoint, tmp_path):
    d = shutil.copytree(tiny_checkpoint, tmp_path / "broken")
    (d / "head.w.ptqt").unlink()
    with pytest.raises(ManifestError, match="head.w.ptqt"):
        load_checkpoint(d)


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestError):
        load_checkpoint(tmp_path)


def test_calibration_roundtrip(tiny_model, corpus_splits, tmp_path):
    calib = capture_calibration(tiny_model, corpus_splits[0], samples=3, seq_len=8, seed=2)
    save_calibration(calib, tmp_path / "cal")
    back = load_calibration(tmp_path / "cal")
    assert (back.seed, back.samples, back.seq_len) == (2, 3, 8)
    assert np.array_equal(back.starts, calib.starts)
    assert set(back.inputs) == set(calib.inputs)
    assert all(back.inputs[k].tobytes() == calib.inputs[k].tobytes() for k in calib.inputs)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(back.layer_inputs, calib.layer_inputs))
    (tmp_path / "cal" / "layer_input.1.ptqt").unlink()
    with pytest.raises(ManifestError, match="layer_input.1.ptqt"):
        load_calibration(tmp_path / "cal")


@pytest.mark.parametrize("granularity, block", [(Granularity.ROW, None), (Granularity.BLOCK, 16), (Granularity.BLOCK, 32)])
def test_quantized_file_size_bound(tmp_path, rng, granularity, block):
    # group params are stored as float32 pairs, so the bound uses 32-bit param accounting
    w = rng.standard_normal((64, 128)).astype(np.float32)
    s = QuantScheme(4, Mode.ASYMMETRIC, granularity, block, param_bits=32)
    q = quantize(w, s)
    write_tensor(tmp_path / "fp.ptqt", w)
    write_tensor(tmp_path / "q.ptqt", q)
    fp_size = (tmp_path / "fp.ptqt").stat().st_size
    q_size = (tmp_path / "q.ptqt").stat().st_size
    header_overhead = 512
    assert q_size <= fp_size * effective_bits(s, q.group_len) / 32 + header_overhead
