"""First-order optimizers for the numpy-backed models."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam with bias correction; step() returns the parameter delta to add."""

    def __init__(
        self,
        shape: tuple[int, ...] | int,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)

    def step(self, grad: np.ndarray) -> np.ndarray:
        if grad.shape != self.m.shape:
            raise ValueError(f"gradient shape {grad.shape} != state shape {self.m.shape}")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return -self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
