import numpy as np
import pytest

from ptqlab.algos import (
    GptqOptions,
    OptimizerOptions,
    PlanError,
    capture_calibration,
    gptq,
    layer_objective,
    quantize_model,
    rtn,
    validate_plan,
    zq_global,
    zq_local,
)
from ptqlab.algos.zq import ste_mask
from ptqlab.model import QuantizationPlan, ToyModel, ToyModelConfig, forward
from ptqlab.model.transformer import LINEARS
from ptqlab.quant import Granularity, Mode, QuantScheme, quantize

ASYM4 = QuantScheme(4, Mode.ASYMMETRIC, Granularity.ROW)


def naive_objective(w, wq, x):
    total = 0.0
    for i in range(w.shape[0]):
        for t in range(x.shape[1]):
            r = sum((float(w[i, k]) - float(wq[i, k])) * float(x[k, t]) for k in range(w.shape[1]))
            total += r * r
    return total


def diagonal_calibration(rng, cols, per_row=3):
    """Rows of X with disjoint support, so X X^T is diagonal."""
    x = np.zeros((cols, cols * per_row), np.float32)
    for k in range(cols):
        x[k, k * per_row : (k + 1) * per_row] = rng.standard_normal(per_row)
    return x


def test_rtn_example():
    q = rtn(np.array([[0.0, 1.0, 2.0, 3.0]]), QuantScheme(2, Mode.ASYMMETRIC))
    assert q.codes.tolist() == [[0, 1, 2, 3]]


def test_layer_objective_matches_naive(rng):
    w = rng.standard_normal((4, 6)).astype(np.float32)
    x = rng.standard_normal((6, 5)).astype(np.float32)
    q = rtn(w, QuantScheme(3))
    assert layer_objective(w, q, x) == pytest.approx(naive_objective(w, q.dequantize(), x), rel=1e-9)
    assert layer_objective(w, w, x) == 0.0


def test_layer_objective_scales_quadratically_in_x(rng):
    w = rng.standard_normal((4, 6))
    x = rng.standard_normal((6, 5))
    wq = np.round(w)
    assert layer_objective(w, wq, 3 * x) == pytest.approx(9 * layer_objective(w, wq, x), rel=1e-12)


def test_layer_objective_shape_checks(rng):
    w = rng.standard_normal((4, 6))
    with pytest.raises(ValueError):
        layer_objective(w, w[:, :5], np.ones((6, 2)))
    with pytest.raises(ValueError):
        layer_objective(w, w, np.ones((5, 2)))


@pytest.mark.parametrize("scheme", [ASYM4, QuantScheme(3, Mode.SYMMETRIC, Granularity.BLOCK, 4)])
def test_gptq_diagonal_hessian_equals_rtn(rng, scheme):
    w = rng.standard_normal((8, 16)).astype(np.float32)
    x = diagonal_calibration(rng, 16)
    assert gptq(w, x, scheme) == rtn(w, scheme)


def test_gptq_single_weight_equals_rtn(rng):
    for _ in range(10):
        w = rng.standard_normal((1, 1)).astype(np.float32)
        x = rng.standard_normal((1, 4)).astype(np.float32)
        assert gptq(w, x, ASYM4) == rtn(w, ASYM4)


def test_gptq_beats_rtn_on_correlated_inputs():
    wins, g_sum, r_sum = 0, 0.0, 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        w = r.standard_normal((32, 32)).astype(np.float32)
        x = r.standard_normal((32, 64)).astype(np.float32)
        g = layer_objective(w, gptq(w, x, ASYM4), x)
        o = layer_objective(w, rtn(w, ASYM4), x)
        wins += g <= o
        g_sum += g
        r_sum += o
    assert wins >= 9 and g_sum < r_sum


def test_gptq_invariant_to_duplicated_calibration(rng):
    w = rng.standard_normal((16, 16)).astype(np.float32)
    x = rng.standard_normal((16, 24)).astype(np.float32)
    assert gptq(w, x, ASYM4) == gptq(w, np.concatenate([x, x], axis=1), ASYM4)


def test_gptq_shares_rtn_group_params(rng):
    w = rng.standard_normal((8, 32)).astype(np.float32)
    x = rng.standard_normal((32, 40)).astype(np.float32)
    s = QuantScheme(4, Mode.ASYMMETRIC, Granularity.BLOCK, 8)
    g, r = gptq(w, x, s), rtn(w, s)
    np.testing.assert_array_equal(g.scales, r.scales)
    np.testing.assert_array_equal(g.zeros, r.zeros)


def test_gptq_rejects_bad_inputs(rng):
    w = rng.standard_normal((4, 8)).astype(np.float32)
    with pytest.raises(ValueError):
        gptq(w, np.ones((7, 3)), ASYM4)
    with pytest.raises(ValueError):
        GptqOptions(damp_ratio=0)


def test_ste_mask_half_step_window():
    s = QuantScheme(2, Mode.ASYMMETRIC, Granularity.TENSOR)
    v = np.array([[0.0, 1.0, 2.0, 3.0]], np.float32)
    np.testing.assert_array_equal(ste_mask(v, s), 1.0)


def test_zq_local_zero_iterations_is_rtn(rng):
    w = rng.standard_normal((8, 16)).astype(np.float32)
    x = rng.standard_normal((16, 20)).astype(np.float32)
    assert zq_local(w, x, ASYM4, OptimizerOptions(iterations=0)) == rtn(w, ASYM4)


def test_zq_local_vanishing_lr_is_rtn(rng):
    w = rng.standard_normal((8, 16)).astype(np.float32)
    x = rng.standard_normal((16, 20)).astype(np.float32)
    opts = OptimizerOptions(learning_rates=(1e-30,), iterations=5)
    assert zq_local(w, x, ASYM4, opts) == rtn(w, ASYM4)


def test_zq_local_never_worse_than_rtn():
    for seed in range(5):
        r = np.random.default_rng(seed)
        w = r.standard_normal((8, 16)).astype(np.float32)
        x = r.standard_normal((16, 32)).astype(np.float32)
        opts = OptimizerOptions(learning_rates=(1e-2, 1e-3), iterations=30, batch_size=4, seed=seed)
        q = zq_local(w, x, QuantScheme(3), opts)
        assert layer_objective(w, q, x) <= layer_objective(w, rtn(w, QuantScheme(3)), x)


def test_zq_local_improves_on_average():
    gains = []
    for seed in range(5):
        r = np.random.default_rng(seed)
        w = r.standard_normal((16, 16)).astype(np.float32)
        x = r.standard_normal((16, 64)).astype(np.float32)
        opts = OptimizerOptions(learning_rates=(1e-2, 1e-3), iterations=60, batch_size=16)
        gains.append(layer_objective(w, rtn(w, ASYM4), x) - layer_objective(w, zq_local(w, x, ASYM4, opts), x))
    assert min(gains) >= 0 and sum(gains) > 0


def test_zq_local_scalar_case():
    w = np.array([[0.3]], np.float32)
    x = np.array([[1.0, -2.0]], np.float32)
    q = zq_local(w, x, ASYM4, OptimizerOptions(iterations=10))
    assert layer_objective(w, q, x) == pytest.approx(0.0, abs=1e-12)


def small_layer(seed=0, d=16, heads=2):
    cfg = ToyModelConfig(vocab_size=8, d_model=d, n_heads=heads, n_layers=1, max_seq_len=8, seed=seed)
    return ToyModel.init(cfg).layer_params(0)


def test_zq_global_passthrough_keeps_layer(rng):
    lp = small_layer()
    xs = rng.standard_normal((3, 8, 16)).astype(np.float32)
    res = zq_global(lp, xs, None, OptimizerOptions(iterations=3), n_heads=2)
    assert res.quantized == {} and res.objective == 0.0
    assert all(np.array_equal(res.params[k], lp[k]) for k in lp)


def test_zq_global_zero_iterations_is_rtn(rng):
    lp = small_layer()
    xs = rng.standard_normal((3, 8, 16)).astype(np.float32)
    res = zq_global(lp, xs, ASYM4, OptimizerOptions(iterations=0), n_heads=2)
    assert set(res.quantized) == set(LINEARS)
    for n in LINEARS:
        assert res.quantized[n] == rtn(lp[n + ".w"], ASYM4)
    assert res.objective == res.init_objective


def test_zq_global_never_worse_than_rtn():
    for seed in range(3):
        lp = small_layer(seed)
        xs = np.random.default_rng(seed).standard_normal((4, 8, 16)).astype(np.float32)
        opts = OptimizerOptions(learning_rates=(1e-2, 1e-3), iterations=10, seed=seed)
        res = zq_global(lp, xs, QuantScheme(3), opts, n_heads=2)
        assert res.objective <= res.init_objective
        assert set(res.history) == {1e-2, 1e-3}


def test_zq_global_freeze_float_keeps_norms(rng):
    lp = small_layer()
    xs = rng.standard_normal((4, 8, 16)).astype(np.float32)
    res = zq_global(lp, xs, QuantScheme(3), OptimizerOptions((1e-2,), iterations=10), n_heads=2, freeze_float=True)
    for k in lp:
        if not k.endswith(".w"):
            np.testing.assert_array_equal(res.params[k], lp[k])


def test_capture_calibration(tiny_model, corpus_splits):
    train, _ = corpus_splits
    a = capture_calibration(tiny_model, train, samples=4, seq_len=16, seed=3)
    b = capture_calibration(tiny_model, train, samples=4, seq_len=16, seed=3)
    assert len(a) == 6 * tiny_model.config.n_layers
    d = tiny_model.config.d_model
    assert a.inputs["layers.0.q"].shape == (d, 64)
    assert a.inputs["layers.1.fc2"].shape == (tiny_model.config.d_ff, 64)
    assert a.layer_inputs[0].shape == (4, 16, d)
    assert all(np.array_equal(a.inputs[k], b.inputs[k]) for k in a.inputs)
    with pytest.raises(ValueError):
        capture_calibration(tiny_model, train, seq_len=tiny_model.config.max_seq_len + 1)


def test_validate_plan_names_layer(tiny_model):
    plan = QuantizationPlan.uniform(tiny_model.linear_names(), QuantScheme(4, granularity=Granularity.BLOCK, block=48))
    with pytest.raises(PlanError, match="layers.0.q"):
        validate_plan(tiny_model, plan)


def test_quantize_model_methods(tiny_model, corpus_splits):
    train, valid = corpus_splits
    calib = capture_calibration(tiny_model, train, samples=4, seq_len=16)
    s = QuantScheme(3, granularity=Granularity.BLOCK, block=16)
    names = tiny_model.linear_names()
    objectives = {}
    for method in ("rtn", "gptq", "zq-local", "zq-global"):
        plan = QuantizationPlan.uniform(names, s, method)
        res = quantize_model(tiny_model, plan, calib, zq_opts=OptimizerOptions((1e-3,), iterations=3))
        assert set(res.plan.quantized) == set(names)
        assert forward(res.model, valid[:16], res.plan).shape == (16, 256)
        objectives[method] = res.total_objective
        assert {r["layer"] for r in res.report} == set(names)
    assert objectives["gptq"] < objectives["rtn"]
    assert objectives["zq-local"] <= objectives["rtn"]


def test_quantize_model_needs_calibration(tiny_model):
    plan = QuantizationPlan.uniform(tiny_model.linear_names(), ASYM4, "gptq")
    with pytest.raises(ValueError):
        quantize_model(tiny_model, plan)


def test_rtn_plan_matches_on_the_fly(tiny_model, corpus_splits):
    _, valid = corpus_splits
    plan = QuantizationPlan.uniform(tiny_model.linear_names(), ASYM4)
    res = quantize_model(tiny_model, plan)
    np.testing.assert_array_equal(forward(res.model, valid[:32], res.plan), forward(tiny_model, valid[:32], plan))
    assert res.plan.quantized["layers.0.q"] == quantize(tiny_model.params["layers.0.q.w"], ASYM4)
