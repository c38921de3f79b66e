"""Binary tensor files and model checkpoints.

Tensor file layout (all integers little-endian)::

    b"PTQT"  | u32 format_version | u32 header_len | header (UTF-8 JSON) | payload

``dtype == "real32"``: payload is the row-major float32 data.
``dtype == "codes"``: payload is the packed unsigned codes (``code - qmin``,
see :mod:`ptqlab.packing`) followed by one ``(scale, zero)`` float32 pair
per group. With ``"layout": "planes5"`` the codes are the 4-bit low plane
followed by the 1-bit high plane.

A checkpoint is a directory holding one tensor file per parameter and a
``manifest.json`` naming the config, the files and the quantization plan.
A calibration set is stored the same way under ``calibration.json``.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .algos.calibration import CalibrationSet
from .model.plan import LinearQuant, QuantizationPlan
from .model.transformer import ToyModel, ToyModelConfig
from .packing import FormatError, OddBitPlanes, PackedCodes, join_odd, pack, payload_size, split_odd, unpack
from .quant import QuantizedTensor, QuantScheme, group_layout

MAGIC = b"PTQT"
FORMAT_VERSION = 1
MANIFEST = "manifest.json"
_PRELUDE = struct.Struct("<4sII")


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class LengthError(FormatError):
    pass


class HeaderError(FormatError):
    pass


class ManifestError(FormatError):
    pass


def scheme_to_dict(s: QuantScheme) -> dict:
    return {"bits": s.bits, "mode": s.mode.value, "granularity": s.granularity_label, "param_bits": s.param_bits}


def scheme_from_dict(d: Optional[dict]) -> Optional[QuantScheme]:
    if d is None:
        return None
    return QuantScheme.parse(d["bits"], d["mode"], d["granularity"], d.get("param_bits", 16))


def plan_to_dict(plan: QuantizationPlan) -> dict:
    return {
        "activation": scheme_to_dict(plan.activation) if plan.activation else None,
        "weights": {
            name: {"scheme": scheme_to_dict(lq.scheme) if lq.scheme else None, "method": lq.method}
            for name, lq in plan.weights.items()
        },
    }


def plan_from_dict(d: dict) -> QuantizationPlan:
    weights = {
        name: LinearQuant(scheme_from_dict(e.get("scheme")), e.get("method", "rtn"))
        for name, e in d.get("weights", {}).items()
    }
    return QuantizationPlan(weights, scheme_from_dict(d.get("activation")))


# ---------------------------------------------------------------- tensors


def encode_tensor(obj: Union[np.ndarray, QuantizedTensor], name: str = "", role: str = "", planes: bool = False) -> bytes:
    """Serialize a float array or a :class:`QuantizedTensor` to tensor-file bytes."""
    if isinstance(obj, QuantizedTensor):
        s = obj.scheme
        offsets = (obj.codes.ravel().astype(np.int64) - s.qmin).astype(np.uint8)
        if planes:
            if s.bits != 5:
                raise ValueError("two-plane layout is only defined for 5-bit codes")
            p = split_odd(offsets)
            code_bytes = p.low.payload + p.high.payload
        else:
            code_bytes = pack(offsets, s.bits).payload
        params = np.empty((obj.n_groups, 2), dtype="<f4")
        params[:, 0] = obj.scales
        params[:, 1] = obj.zeros
        header = {
            "name": name,
            "role": role,
            "dtype": "codes",
            "shape": list(obj.shape),
            "scheme": scheme_to_dict(s),
            "tensor_role": obj.role,
            "layout": "planes5" if planes else "stream",
        }
        payload = code_bytes + params.tobytes()
    else:
        arr = np.asarray(obj)
        header = {"name": name, "role": role, "dtype": "real32", "shape": list(arr.shape)}
        payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PRELUDE.pack(MAGIC, FORMAT_VERSION, len(hb)) + hb + payload


def decode_tensor(data: bytes) -> Tuple[Union[np.ndarray, QuantizedTensor], dict]:
    """Parse tensor-file bytes; returns ``(tensor, header)``."""
    if len(data) < _PRELUDE.size:
        raise LengthError("file shorter than the fixed prelude")
    magic, version, hlen = _PRELUDE.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}")
    end = _PRELUDE.size + hlen
    if len(data) < end:
        raise LengthError("file truncated inside the header")
    try:
        header = json.loads(data[_PRELUDE.size : end].decode("utf-8"))
        shape = tuple(int(s) for s in header["shape"])
        dtype = header["dtype"]
    except (ValueError, KeyError, TypeError) as exc:
        raise HeaderError(f"malformed header: {exc}") from exc
    payload = data[end:]
    numel = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if dtype == "real32":
        if len(payload) != 4 * numel:
            raise LengthError(f"payload has {len(payload)} bytes, expected {4 * numel}")
        return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape), header
    if dtype != "codes":
        raise HeaderError(f"unknown dtype {dtype!r}")
    try:
        scheme = scheme_from_dict(header["scheme"])
        tensor_role = header.get("tensor_role", "weight")
        layout = header.get("layout", "stream")
    except (ValueError, KeyError, TypeError) as exc:
        raise HeaderError(f"malformed scheme: {exc}") from exc
    n_groups, _ = group_layout(shape, scheme, tensor_role)
    if layout == "planes5":
        lo_n, hi_n = payload_size(numel, 4), payload_size(numel, 1)
        code_n = lo_n + hi_n
    elif layout == "stream":
        code_n = payload_size(numel, scheme.bits)
    else:
        raise HeaderError(f"unknown code layout {layout!r}")
    if len(payload) != code_n + 8 * n_groups:
        raise LengthError(f"payload has {len(payload)} bytes, expected {code_n + 8 * n_groups}")
    if layout == "planes5":
        planes = OddBitPlanes(
            PackedCodes(4, numel, payload[:lo_n]), PackedCodes(1, numel, payload[lo_n:code_n]), numel
        )
        offsets = join_odd(planes)
    else:
        offsets = unpack(PackedCodes(scheme.bits, numel, payload[:code_n]))
    params = np.frombuffer(payload[code_n:], dtype="<f4").reshape(n_groups, 2)
    codes = offsets.astype(np.int32) + scheme.qmin
    q = QuantizedTensor(shape, scheme, codes.reshape(shape), params[:, 0], params[:, 1], tensor_role)
    return q, header


def write_tensor(path, obj, name: str = "", role: str = "", planes: bool = False) -> None:
    Path(path).write_bytes(encode_tensor(obj, name, role, planes))


def read_tensor(path):
    return decode_tensor(Path(path).read_bytes())[0]


# ---------------------------------------------------------------- checkpoints


def _file_name(name: str) -> str:
    return name.replace("/", "_") + ".ptqt"


def save_checkpoint(model: ToyModel, directory, plan: Optional[QuantizationPlan] = None) -> Path:
    """Write ``model`` (and ``plan``'s materialized weights, if any) to ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    quantized = plan.quantized if plan is not None else {}
    for name in sorted(model.params):
        base = name[:-2] if name.endswith(".w") else None
        fname = _file_name(name)
        if base is not None and base in quantized:
            write_tensor(d / fname, quantized[base], name, "quantized_weight")
            entries.append({"name": name, "file": fname, "role": "quantized_weight"})
        else:
            write_tensor(d / fname, model.params[name], name, "param")
            entries.append({"name": name, "file": fname, "role": "param"})
    manifest = {
        "format": "ptqlab-checkpoint",
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "tensors": entries,
        "plan": plan_to_dict(plan) if plan is not None else None,
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_checkpoint(directory) -> Tuple[ToyModel, Optional[QuantizationPlan]]:
    """Inverse of :func:`save_checkpoint`.

    Quantized weights are dequantized into the returned model and also
    attached to the returned plan's ``quantized`` dict.
    """
    d = Path(directory)
    mpath = d / MANIFEST
    if not mpath.exists():
        raise ManifestError(f"no {MANIFEST} in {d}")
    try:
        manifest = json.loads(mpath.read_text())
        config = ToyModelConfig(**manifest["config"])
        entries = manifest["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"malformed manifest: {exc}") from exc
    plan = plan_from_dict(manifest["plan"]) if manifest.get("plan") else None
    params: Dict[str, np.ndarray] = {}
    for e in entries:
        path = d / e["file"]
        if not path.exists():
            raise ManifestError(f"tensor file listed in manifest is missing: {e['file']}")
        obj = read_tensor(path)
        if isinstance(obj, QuantizedTensor):
            if plan is None:
                raise ManifestError(f"{e['file']} holds quantized codes but the manifest has no plan")
            plan.quantized[e["name"][:-2]] = obj
            params[e["name"]] = obj.dequantize()
        else:
            params[e["name"]] = obj
    return ToyModel(config, params), plan


def checkpoint_size(directory) -> int:
    return sum(p.stat().st_size for p in Path(directory).iterdir() if p.is_file())


def quantized_file_size(q: QuantizedTensor) -> int:
    """Payload bytes of a stream-layout quantized tensor file (header excluded)."""
    return payload_size(math.prod(q.shape), q.scheme.bits) + 8 * q.n_groups


# ---------------------------------------------------------------- calibration

CALIBRATION = "calibration.json"


def save_calibration(calib: CalibrationSet, directory) -> Path:
    """Write a calibration set as tensor files plus ``calibration.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    inputs = {}
    for name in sorted(calib.inputs):
        fname = "input." + _file_name(name)
        write_tensor(d / fname, calib.inputs[name], name, "calibration_input")
        inputs[name] = fname
    layers = []
    for i, x in enumerate(calib.layer_inputs):
        fname = f"layer_input.{i}.ptqt"
        write_tensor(d / fname, x, f"layers.{i}", "calibration_layer_input")
        layers.append(fname)
    doc = {
        "format": "ptqlab-calibration",
        "version": FORMAT_VERSION,
        "seed": calib.seed,
        "samples": calib.samples,
        "seq_len": calib.seq_len,
        "starts": [int(s) for s in calib.starts] if calib.starts is not None else None,
        "inputs": inputs,
        "layer_inputs": layers,
    }
    (d / CALIBRATION).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return d


def load_calibration(directory) -> CalibrationSet:
    d = Path(directory)
    path = d / CALIBRATION
    if not path.exists():
        raise ManifestError(f"no {CALIBRATION} in {d}")
    try:
        doc = json.loads(path.read_text())
        files = list(doc["inputs"].values()) + list(doc["layer_inputs"])
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ManifestError(f"malformed calibration manifest: {exc}") from exc
    for f in files:
        if not (d / f).exists():
            raise ManifestError(f"tensor file listed in manifest is missing: {f}")
    starts = doc.get("starts")
    return CalibrationSet(
        inputs={name: read_tensor(d / f) for name, f in doc["inputs"].items()},
        layer_inputs=[read_tensor(d / f) for f in doc["layer_inputs"]],
        seed=int(doc["seed"]),
        samples=int(doc["samples"]),
        seq_len=int(doc["seq_len"]),
        starts=np.asarray(starts, dtype=np.int64) if starts is not None else None,
    )
