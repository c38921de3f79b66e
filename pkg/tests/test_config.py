import pytest

from ptqlab.config import (
    ConfigError,
    parse_scheme_token,
    plan_from,
    read_config,
    train_options_from,
    zq_options_from,
)
from ptqlab.quant import Granularity, Mode, QuantScheme

NAMES = ["layers.0.q", "layers.0.fc2"]


def test_overrides_create_sections():
    cp = read_config(None, ["weights.bits=4", "weights.granularity=block32"])
    assert cp["weights"]["bits"] == "4"


def test_bad_override_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config(None, ["nodot=1"])
    with pytest.raises(ConfigError):
        read_config(str(tmp_path / "missing.ini"))


def test_plan_with_per_layer_override(tmp_path):
    f = tmp_path / "plan.ini"
    f.write_text(
        "[weights]\nbits = 4\nmode = sym\ngranularity = 32\nmethod = gptq\n"
        "[layers.0.fc2]\nbits = 8\nmethod = rtn\n"
        "[activation]\nbits = 8\nmode = sym\n"
    )
    plan = plan_from(read_config(str(f)), NAMES)
    assert plan.weights["layers.0.q"].scheme == QuantScheme(4, Mode.SYMMETRIC, Granularity.BLOCK, 32)
    assert plan.weights["layers.0.q"].method == "gptq"
    assert plan.weights["layers.0.fc2"].scheme.bits == 8
    assert plan.weights["layers.0.fc2"].method == "rtn"
    assert plan.activation == QuantScheme(8, Mode.SYMMETRIC, Granularity.TOKEN)


def test_sixteen_bits_is_passthrough():
    plan = plan_from(read_config(None, ["weights.bits=16"]), NAMES)
    assert plan.is_passthrough
    assert plan_from(read_config(None), NAMES).is_passthrough


@pytest.mark.parametrize(
    "token, expected",
    [
        ("none", None),
        ("asym4/block32", QuantScheme(4, Mode.ASYMMETRIC, Granularity.BLOCK, 32)),
        ("sym8/token", QuantScheme(8, Mode.SYMMETRIC, Granularity.TOKEN)),
        ("8", QuantScheme(8, Mode.ASYMMETRIC, Granularity.TOKEN)),
    ],
)
def test_parse_scheme_token(token, expected):
    assert parse_scheme_token(token, "token") == expected


def test_parse_scheme_token_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_scheme_token("int4")


def test_option_defaults_and_seed_override():
    cp = read_config(None, ["zq.learning_rates=1e-2, 1e-3", "zq.iterations=7"])
    z = zq_options_from(cp, seed=9)
    assert z.learning_rates == (1e-2, 1e-3) and z.iterations == 7 and z.seed == 9
    assert train_options_from(cp)["steps"] == 600
