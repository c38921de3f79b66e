"""A small pre-layernorm decoder-only transformer in numpy.

The forward pass optionally swaps every linear weight for its quantized
form and fake-quantizes each linear's input on the fly. Backward passes
are written out by hand; they are needed by the trainer and by the
layer-wise distillation in :mod:`ptqlab.algos.zq`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..quant import ACTIVATION, QuantScheme, fake_quant
from .plan import QuantizationPlan

LINEARS = ("q", "k", "v", "o", "fc1", "fc2")
LN_EPS = 1e-5
_GELU_C = np.float32(np.sqrt(2.0 / np.pi))


@dataclass(frozen=True)
class ToyModelConfig:
    vocab_size: int = 256
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 2
    d_ff: Optional[int] = None
    max_seq_len: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        for name in ("vocab_size", "d_model", "n_heads", "n_layers", "d_ff", "max_seq_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")

    def to_dict(self) -> dict:
        return asdict(self)


def linear_names(config: ToyModelConfig) -> List[str]:
    return [f"layers.{i}.{n}" for i in range(config.n_layers) for n in LINEARS]


class ToyModel:
    """Parameters live in one flat ``name -> float32 array`` dict."""

    def __init__(self, config: ToyModelConfig, params: Dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ToyModelConfig) -> "ToyModel":
        rng = np.random.default_rng(config.seed)
        d, f, V = config.d_model, config.d_ff, config.vocab_size

        def normal(*shape, std=0.02):
            return (rng.standard_normal(shape) * std).astype(np.float32)

        p: Dict[str, np.ndarray] = {
            "tok_emb": normal(V, d),
            "pos_emb": normal(config.max_seq_len, d, std=0.01),
        }
        resid_std = 0.02 / np.sqrt(2 * config.n_layers)
        for i in range(config.n_layers):
            pre = f"layers.{i}."
            p[pre + "ln1.g"] = np.ones(d, np.float32)
            p[pre + "ln1.b"] = np.zeros(d, np.float32)
            for n in ("q", "k", "v"):
                p[pre + n + ".w"] = normal(d, d)
                p[pre + n + ".b"] = np.zeros(d, np.float32)
            p[pre + "o.w"] = normal(d, d, std=resid_std)
            p[pre + "o.b"] = np.zeros(d, np.float32)
            p[pre + "ln2.g"] = np.ones(d, np.float32)
            p[pre + "ln2.b"] = np.zeros(d, np.float32)
            p[pre + "fc1.w"] = normal(f, d)
            p[pre + "fc1.b"] = np.zeros(f, np.float32)
            p[pre + "fc2.w"] = normal(d, f, std=resid_std)
            p[pre + "fc2.b"] = np.zeros(d, np.float32)
        p["ln_f.g"] = np.ones(d, np.float32)
        p["ln_f.b"] = np.zeros(d, np.float32)
        p["head.w"] = normal(V, d)
        p["head.b"] = np.zeros(V, np.float32)
        return cls(config, p)

    def copy(self) -> "ToyModel":
        return ToyModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def linear_names(self) -> List[str]:
        return linear_names(self.config)

    def layer_params(self, i: int) -> Dict[str, np.ndarray]:
        """Views of layer ``i``'s parameters keyed without the ``layers.i.`` prefix."""
        pre = f"layers.{i}."
        return {k[len(pre):]: v for k, v in self.params.items() if k.startswith(pre)}

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def forward(self, tokens, plan: Optional[QuantizationPlan] = None) -> np.ndarray:
        return forward(self, tokens, plan)


# ---------------------------------------------------------------- primitives


def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + np.float32(LN_EPS))
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _ln_bwd(dy, g, cache):
    xhat, rstd = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(0)
    db = dy.reshape(-1, dy.shape[-1]).sum(0)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _gelu_fwd(x):
    inner = _GELU_C * (x + np.float32(0.044715) * x * x * x)
    t = np.tanh(inner)
    return np.float32(0.5) * x * (np.float32(1.0) + t), t


def _gelu_bwd(dy, x, t):
    dinner = _GELU_C * (np.float32(1.0) + np.float32(3 * 0.044715) * x * x)
    return dy * (np.float32(0.5) * (np.float32(1.0) + t) + np.float32(0.5) * x * (np.float32(1.0) - t * t) * dinner)


def _linear(x, w, b, act: Optional[QuantScheme]):
    xq = fake_quant(x, act, ACTIVATION) if act is not None else x
    return xq @ w.T + b, xq


def _split_heads(x, h):
    B, T, d = x.shape
    return x.reshape(B, T, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, h, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, h * dh)


def _causal_mask(T):
    return np.triu(np.full((T, T), -np.inf, dtype=np.float32), k=1)


# ---------------------------------------------------------------- layer


def layer_forward(
    lp: Dict[str, np.ndarray],
    x: np.ndarray,
    n_heads: int,
    weights: Optional[Dict[str, np.ndarray]] = None,
    act: Optional[QuantScheme] = None,
    keep: bool = False,
):
    """One transformer layer on ``x`` of shape (B, T, d).

    ``weights`` overrides linear weights by short name (``"q"``, ``"fc1"``...).
    Returns ``(y, cache)``; cache is ``None`` unless ``keep``.
    """
    W = {n: (weights[n] if weights and n in weights else lp[n + ".w"]) for n in LINEARS}
    T = x.shape[1]
    dh = x.shape[2] // n_heads
    h1, ln1c = _ln_fwd(x, lp["ln1.g"], lp["ln1.b"])
    q, q_in = _linear(h1, W["q"], lp["q.b"], act)
    k, k_in = _linear(h1, W["k"], lp["k.b"], act)
    v, v_in = _linear(h1, W["v"], lp["v.b"], act)
    qh, kh, vh = (_split_heads(t, n_heads) for t in (q, k, v))
    scale = np.float32(1.0 / np.sqrt(dh))
    s = (qh @ kh.transpose(0, 1, 3, 2)) * scale + _causal_mask(T)
    s = s - s.max(-1, keepdims=True)
    e = np.exp(s)
    P = e / e.sum(-1, keepdims=True)
    ctx = _merge_heads(P @ vh)
    a, o_in = _linear(ctx, W["o"], lp["o.b"], act)
    x1 = x + a
    h2, ln2c = _ln_fwd(x1, lp["ln2.g"], lp["ln2.b"])
    u, fc1_in = _linear(h2, W["fc1"], lp["fc1.b"], act)
    gact, tnh = _gelu_fwd(u)
    m, fc2_in = _linear(gact, W["fc2"], lp["fc2.b"], act)
    y = x1 + m
    cache = None
    if keep:
        cache = dict(
            W=W, ln1c=ln1c, ln2c=ln2c, qh=qh, kh=kh, vh=vh, P=P, scale=scale, n_heads=n_heads,
            ins={"q": q_in, "k": k_in, "v": v_in, "o": o_in, "fc1": fc1_in, "fc2": fc2_in},
            u=u, tnh=tnh,
        )
    return y, cache


def _lin_bwd(dy, x_in, w):
    d = dy.shape[-1]
    gw = dy.reshape(-1, d).T @ x_in.reshape(-1, x_in.shape[-1])
    gb = dy.reshape(-1, d).sum(0)
    return dy @ w, gw, gb


def layer_backward(lp: Dict[str, np.ndarray], cache: dict, dy: np.ndarray):
    """Gradients of a layer; activation quantization is treated as identity."""
    W = cache["W"]
    ins = cache["ins"]
    g: Dict[str, np.ndarray] = {}
    # mlp branch
    dgact, g["fc2.w"], g["fc2.b"] = _lin_bwd(dy, ins["fc2"], W["fc2"])
    du = _gelu_bwd(dgact, cache["u"], cache["tnh"])
    dh2, g["fc1.w"], g["fc1.b"] = _lin_bwd(du, ins["fc1"], W["fc1"])
    dx1, g["ln2.g"], g["ln2.b"] = _ln_bwd(dh2, lp["ln2.g"], cache["ln2c"])
    dx1 = dx1 + dy
    # attention branch
    dctx, g["o.w"], g["o.b"] = _lin_bwd(dx1, ins["o"], W["o"])
    h = cache["n_heads"]
    dctx_h = _split_heads(dctx, h)
    P, qh, kh, vh, scale = cache["P"], cache["qh"], cache["kh"], cache["vh"], cache["scale"]
    dP = dctx_h @ vh.transpose(0, 1, 3, 2)
    dvh = P.transpose(0, 1, 3, 2) @ dctx_h
    ds = P * (dP - (dP * P).sum(-1, keepdims=True))
    dqh = (ds @ kh) * scale
    dkh = (ds.transpose(0, 1, 3, 2) @ qh) * scale
    dh1 = np.zeros_like(ins["q"])
    for n, dt in (("q", dqh), ("k", dkh), ("v", dvh)):
        dpart, g[n + ".w"], g[n + ".b"] = _lin_bwd(_merge_heads(dt), ins[n], W[n])
        dh1 = dh1 + dpart
    dx, g["ln1.g"], g["ln1.b"] = _ln_bwd(dh1, lp["ln1.g"], cache["ln1c"])
    return dx + dx1, g


# ---------------------------------------------------------------- model


def _as_batch(tokens, config: ToyModelConfig) -> Tuple[np.ndarray, bool]:
    t = np.asarray(tokens)
    single = t.ndim == 1
    if single:
        t = t[None, :]
    if t.ndim != 2:
        raise ValueError("tokens must be a 1-D sequence or a 2-D batch")
    if t.size and (t.min() < 0 or t.max() >= config.vocab_size):
        raise ValueError(f"token id outside vocabulary [0, {config.vocab_size})")
    if t.shape[1] > config.max_seq_len:
        raise ValueError(f"sequence length {t.shape[1]} exceeds max_seq_len {config.max_seq_len}")
    if t.shape[1] == 0:
        raise ValueError("empty token sequence")
    return t.astype(np.int64), single


def embed(model: ToyModel, tokens: np.ndarray) -> np.ndarray:
    T = tokens.shape[1]
    return model.params["tok_emb"][tokens] + model.params["pos_emb"][:T]


def _layer_weights(model: ToyModel, i: int, plan: Optional[QuantizationPlan]):
    if plan is None:
        return None
    pre = f"layers.{i}."
    return {n: plan.weight_for(pre + n, model.params[pre + n + ".w"]) for n in LINEARS}


def forward(model: ToyModel, tokens, plan: Optional[QuantizationPlan] = None) -> np.ndarray:
    """Logits of shape (T, V) for a 1-D sequence or (B, T, V) for a batch."""
    t, single = _as_batch(tokens, model.config)
    act = plan.activation if plan is not None else None
    x = embed(model, t)
    for i in range(model.config.n_layers):
        x, _ = layer_forward(model.layer_params(i), x, model.config.n_heads, _layer_weights(model, i, plan), act)
    p = model.params
    hf, _ = _ln_fwd(x, p["ln_f.g"], p["ln_f.b"])
    logits = hf @ p["head.w"].T + p["head.b"]
    return logits[0] if single else logits


def layer_inputs(model: ToyModel, tokens) -> List[np.ndarray]:
    """Residual-stream input of every layer for a full-precision forward."""
    t, _ = _as_batch(tokens, model.config)
    x = embed(model, t)
    out = []
    for i in range(model.config.n_layers):
        out.append(x)
        x, _ = layer_forward(model.layer_params(i), x, model.config.n_heads)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(-1, keepdims=True)
    return z - np.log(np.exp(z).sum(-1, keepdims=True))


def loss_and_grads(model: ToyModel, inputs: np.ndarray, targets: np.ndarray):
    """Mean next-token cross entropy and its gradient for every parameter."""
    t, _ = _as_batch(inputs, model.config)
    cfg = model.config
    p = model.params
    x = embed(model, t)
    caches = []
    for i in range(cfg.n_layers):
        x, c = layer_forward(model.layer_params(i), x, cfg.n_heads, keep=True)
        caches.append(c)
    hf, lnfc = _ln_fwd(x, p["ln_f.g"], p["ln_f.b"])
    logits = hf @ p["head.w"].T + p["head.b"]
    B, T, V = logits.shape
    lp = log_softmax(logits)
    tg = np.asarray(targets).reshape(B, T)
    nll = -np.take_along_axis(lp, tg[..., None], -1)[..., 0]
    loss = float(nll.mean())

    dlogits = np.exp(lp)
    np.put_along_axis(dlogits, tg[..., None], np.take_along_axis(dlogits, tg[..., None], -1) - 1.0, -1)
    dlogits = (dlogits / (B * T)).astype(p["head.w"].dtype)
    grads: Dict[str, np.ndarray] = {}
    dhf, grads["head.w"], grads["head.b"] = _lin_bwd(dlogits, hf, p["head.w"])
    dx, grads["ln_f.g"], grads["ln_f.b"] = _ln_bwd(dhf, p["ln_f.g"], lnfc)
    for i in reversed(range(cfg.n_layers)):
        dx, g = layer_backward(model.layer_params(i), caches[i], dx)
        for k, v in g.items():
            grads[f"layers.{i}.{k}"] = v
    dtok = np.zeros_like(p["tok_emb"])
    np.add.at(dtok, t.ravel(), dx.reshape(-1, cfg.d_model))
    grads["tok_emb"] = dtok
    dpos = np.zeros_like(p["pos_emb"])
    dpos[:T] = dx.sum(0)
    grads["pos_emb"] = dpos
    return loss, grads
