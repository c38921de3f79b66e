import numpy as np
import pytest

from ptqlab.corpus import load_tokens, split
from ptqlab.model import ToyModelConfig, train_toy
from ptqlab.io import save_checkpoint

TINY = ToyModelConfig(vocab_size=256, d_model=32, n_heads=2, n_layers=2, max_seq_len=32, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def corpus_splits():
    return split(load_tokens())


@pytest.fixture(scope="session")
def tiny_model(corpus_splits):
    """Small model trained briefly on the bundled corpus (a few seconds)."""
    model, _ = train_toy(TINY, corpus_splits[0], steps=60, lr=3e-3, seed=0, batch_size=8)
    return model


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_model, tmp_path_factory):
    return save_checkpoint(tiny_model, tmp_path_factory.mktemp("ckpt") / "tiny")


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, name, passed, detail=""):
        lines.append((number, name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(lines):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {name}: {detail}")
