"""Adam over a dict of numpy parameters, plus learning-rate schedules."""

from __future__ import annotations

from typing import Dict

import numpy as np


def linear_decay(lr: float, step: int, total: int) -> float:
    """Learning rate decaying linearly from ``lr`` to zero over ``total`` steps."""
    if total <= 0:
        return lr
    return lr * (1.0 - step / total)


class Adam:
    def __init__(self, params: Dict[str, np.ndarray], betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray], lr: float) -> None:
        """Update ``self.params`` in place; keys missing from ``grads`` are skipped."""
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            if k not in self.params:
                continue
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            upd = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            self.params[k] -= upd.astype(self.params[k].dtype)
