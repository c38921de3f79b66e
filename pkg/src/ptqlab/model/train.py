from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from ..optim import Adam
from .transformer import ToyModel, ToyModelConfig, loss_and_grads

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def sample_windows(tokens: np.ndarray, n: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` random windows of ``length`` consecutive tokens, shape (n, length)."""
    if len(tokens) < length:
        raise ValueError(f"corpus of {len(tokens)} tokens is shorter than a {length}-token window")
    starts = rng.integers(0, len(tokens) - length + 1, size=n)
    return np.stack([tokens[s : s + length] for s in starts])


def train_toy(
    config: ToyModelConfig,
    corpus_tokens,
    steps: int = 1500,
    lr: float = 3e-3,
    seed: int = 0,
    batch_size: int = 16,
    warmup: int = 50,
    log_every: int = 0,
) -> Tuple[ToyModel, float]:
    """Train a fresh toy model with Adam on next-token cross entropy.

    Learning rate warms up linearly for ``warmup`` steps then decays
    linearly to 10% of ``lr``. Returns the model and its last training loss
    (NaN if ``steps == 0``).
    """
    tokens = np.asarray(corpus_tokens, dtype=np.int64)
    if tokens.size == 0:
        raise ValueError("empty training corpus")
    model = ToyModel.init(config)
    if steps <= 0:
        return model, float("nan")
    T = min(config.max_seq_len, len(tokens) - 1)
    if T < 1:
        raise ValueError("training corpus needs at least two tokens")
    rng = np.random.default_rng(seed)
    opt = Adam(model.params)
    loss = float("nan")
    for step in range(steps):
        win = sample_windows(tokens, batch_size, T + 1, rng)
        loss, grads = loss_and_grads(model, win[:, :-1], win[:, 1:])
        if not np.isfinite(loss):
            raise TrainingError(f"training diverged at step {step} (loss={loss})")
        if step < warmup:
            cur = lr * (step + 1) / warmup
        else:
            cur = lr * (1.0 - 0.9 * (step - warmup) / max(1, steps - warmup))
        opt.step(grads, cur)
        if log_every and step % log_every == 0:
            log.info("step %d loss %.4f", step, loss)
    return model, loss
