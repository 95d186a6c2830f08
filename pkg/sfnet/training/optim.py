from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..tensor.core import Tensor


class Adam:
    """Adam with bias correction; parameters are updated through ``Tensor.assign``."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self._params = list(params)
        self._lr = lr
        self._beta1 = beta1
        self._beta2 = beta2
        self._eps = eps
        self._m = [np.zeros_like(p.data) for p in self._params]
        self._v = [np.zeros_like(p.data) for p in self._params]
        self.steps = 0

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    def step(self, grad_scale: float = 1.0) -> None:
        self.steps += 1
        if self._lr == 0:
            return
        t = self.steps
        c1 = 1.0 - self._beta1**t
        c2 = 1.0 - self._beta2**t
        for p, m, v in zip(self._params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad * grad_scale
            m *= self._beta1
            m += (1.0 - self._beta1) * g
            v *= self._beta2
            v += (1.0 - self._beta2) * g * g
            update = self._lr * (m / c1) / (np.sqrt(v / c2) + self._eps)
            p.assign(p.data - update)
