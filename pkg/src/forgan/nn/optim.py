from __future__ import annotations

from typing import Sequence

import numpy as np

from ..exceptions import MissingGradientError
from .tensor import Tensor


class Adam:
    """Adaptive-moment gradient descent with bias-corrected moments."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, clear: bool = True) -> None:
        missing = [i for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise MissingGradientError(
                f"{len(missing)} parameter(s) have no gradient; call backward() first"
            )
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        if clear:
            self.zero_grad()

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v],
                "lr": self.lr, "betas": (self.beta1, self.beta2), "eps": self.eps}
