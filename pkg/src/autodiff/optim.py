"""Adam with bias correction."""
from typing import Iterable, List

import numpy as np

from src.autodiff.tensor import Parameter
from src.utils.errors import MissingGrad


def adam_step(p: Parameter, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Parameter:
    if p.grad is None:
        raise MissingGrad(f"parameter {p.name or '?'} has no gradient")
    g = p.grad.astype(p.dtype, copy=False)
    p.step_count += 1
    p.m = beta1 * p.m + (1 - beta1) * g
    p.v = beta2 * p.v + (1 - beta2) * g * g
    if lr != 0:
        m_hat = p.m / (1 - beta1 ** p.step_count)
        v_hat = p.v / (1 - beta2 ** p.step_count)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
    p.grad = None
    return p


class Adam:
    """Steps every parameter that received a gradient; the rest keep their state."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self) -> int:
        stepped = 0
        for p in self.params:
            if p.grad is None:
                continue
            adam_step(p, self.lr, self.beta1, self.beta2, self.eps)
            stepped += 1
        return stepped

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
