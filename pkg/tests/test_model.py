import numpy as np
import pytest

from ptqlab.model import (
    DegradationClass,
    QuantizationPlan,
    ToyModel,
    ToyModelConfig,
    classify_delta,
    forward,
    linear_names,
    model_bytes,
    perplexity,
    train_toy,
)
from ptqlab.model.metrics import nll_sum
from ptqlab.model.transformer import log_softmax, loss_and_grads
from ptqlab.quant import Granularity, Mode, QuantScheme

SMALL = ToyModelConfig(vocab_size=11, d_model=8, n_heads=2, n_layers=2, max_seq_len=5, seed=1)


def test_gradients_match_finite_differences():
    m = ToyModel.init(SMALL)
    rng = np.random.default_rng(0)
    for k in m.params:
        m.params[k] = m.params[k].astype(np.float64) + rng.standard_normal(m.params[k].shape) * 0.3
    x = rng.integers(0, 11, (2, 5))
    y = rng.integers(0, 11, (2, 5))
    _, g = loss_and_grads(m, x, y)
    assert set(g) == set(m.params)
    worst = 0.0
    h = 1e-5
    for k, v in m.params.items():
        for _ in range(3):
            idx = tuple(int(rng.integers(0, s)) for s in v.shape)
            if k == "tok_emb":
                idx = (int(x.ravel()[0]),) + idx[1:]
            old = v[idx]
            v[idx] = old + h
            a, _ = loss_and_grads(m, x, y)
            v[idx] = old - h
            b, _ = loss_and_grads(m, x, y)
            v[idx] = old
            fd = (a - b) / (2 * h)
            worst = max(worst, abs(fd - g[k][idx]) / (abs(fd) + 1e-6))
    assert worst < 1e-4


def test_logits_shape():
    m = ToyModel.init(SMALL)
    assert forward(m, [1, 2, 3]).shape == (3, 11)
    assert forward(m, np.zeros((4, 5), int)).shape == (4, 5, 11)


def test_rejects_bad_tokens():
    m = ToyModel.init(SMALL)
    with pytest.raises(ValueError):
        forward(m, [11])
    with pytest.raises(ValueError):
        forward(m, np.zeros(6, int))


def test_passthrough_plan_is_bit_identical():
    m = ToyModel.init(SMALL)
    toks = np.arange(5) % 11
    plan = QuantizationPlan.uniform(m.linear_names(), None)
    assert plan.is_passthrough
    assert forward(m, toks, plan).tobytes() == forward(m, toks).tobytes()


def test_causality():
    m = ToyModel.init(SMALL)
    a = np.array([1, 2, 3, 4, 5])
    b = a.copy()
    b[3] = 9
    la, lb = forward(m, a), forward(m, b)
    np.testing.assert_array_equal(la[:3], lb[:3])
    assert not np.allclose(la[3:], lb[3:])


def test_uniform_logits_give_vocab_perplexity():
    m = ToyModel.init(SMALL)
    m.params["head.w"][:] = 0
    m.params["head.b"][:] = 0
    assert perplexity(m, np.arange(23) % 11) == pytest.approx(11.0, rel=1e-9)


def test_nll_scores_every_token_once():
    m = ToyModel.init(SMALL)
    toks = np.random.default_rng(0).integers(0, 11, 23)
    total, n = nll_sum(m, toks)
    assert n == 22
    ref = 0.0
    for s in range(0, 22, 5):
        x = toks[s : min(s + 5, 22)]
        lp = log_softmax(forward(m, x))
        ref -= sum(lp[i, toks[s + i + 1]] for i in range(len(x)))
    assert total == pytest.approx(ref, rel=1e-9)


def test_memorizes_a_loop():
    cfg = ToyModelConfig(vocab_size=16, d_model=32, n_heads=2, n_layers=1, max_seq_len=16, seed=0)
    toks = np.tile(np.random.default_rng(3).permutation(16), 64)
    model, _ = train_toy(cfg, toks, steps=200, lr=1e-2, seed=0, batch_size=8, warmup=10)
    assert perplexity(model, toks[:257]) < 1.2


@pytest.mark.parametrize(
    "delta, cls",
    [(0.0, DegradationClass.CLASS1), (0.05, DegradationClass.CLASS1), (0.1, DegradationClass.CLASS1),
     (0.3, DegradationClass.CLASS2), (0.5, DegradationClass.CLASS2), (0.7, DegradationClass.CLASS3),
     (-0.2, DegradationClass.CLASS1)],
)
def test_classify_delta(delta, cls):
    assert classify_delta(delta) is cls


def test_classify_delta_nan():
    with pytest.raises(ValueError):
        classify_delta(float("nan"))


def test_train_zero_steps_returns_init():
    model, loss = train_toy(SMALL, np.arange(50) % 11, steps=0)
    assert np.isnan(loss)
    init = ToyModel.init(SMALL)
    assert all(np.array_equal(model.params[k], init.params[k]) for k in init.params)


def test_training_is_deterministic_and_learns():
    toks = np.tile(np.arange(11), 30)
    a, la = train_toy(SMALL, toks, steps=40, seed=5, batch_size=4, warmup=5)
    b, lb = train_toy(SMALL, toks, steps=40, seed=5, batch_size=4, warmup=5)
    assert la == lb
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)
    assert perplexity(a, toks) < perplexity(ToyModel.init(SMALL), toks)


def test_training_lowers_loss_on_bundled_corpus(tiny_model, corpus_splits):
    rng = np.random.default_rng(0)
    train = corpus_splits[0]
    starts = rng.integers(0, len(train) - 33, 16)
    win = np.stack([train[s : s + 33] for s in starts])
    before, _ = loss_and_grads(ToyModel.init(tiny_model.config), win[:, :-1], win[:, 1:])
    after, _ = loss_and_grads(tiny_model, win[:, :-1], win[:, 1:])
    assert after < before


def test_model_bytes_full_precision():
    m = ToyModel.init(SMALL)
    assert model_bytes(m) == 4 * m.parameter_count()
    assert model_bytes(m, fp_bits=16) == 2 * m.parameter_count()


def test_model_bytes_quantized_accounting():
    cfg = ToyModelConfig(vocab_size=8, d_model=1024, n_heads=1, n_layers=1, d_ff=1024, max_seq_len=1)
    m = ToyModel(cfg, {"layers.0.q.w": np.zeros((1024, 1024), np.float32)})
    s = QuantScheme(4, Mode.SYMMETRIC, Granularity.BLOCK, 32)
    plan = QuantizationPlan.uniform(["layers.0.q"], s)
    assert model_bytes(m, plan) == 1024 * 1024 * 4.5 / 8


def test_model_bytes_shrinks_under_plan():
    m = ToyModel.init(SMALL)
    plan = QuantizationPlan.uniform(linear_names(SMALL), QuantScheme(4, granularity=Granularity.ROW))
    assert model_bytes(m, plan) < model_bytes(m)
