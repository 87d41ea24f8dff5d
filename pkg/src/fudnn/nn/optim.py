"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

__all__ = ["adam_step", "Adam"]


def adam_step(param, grad, m, v, t, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update; ``t`` is the 1-based step count."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Tracks first/second moments for every trainable field of a network."""

    def __init__(self, network, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {
            key: np.zeros_like(layer.params[name])
            for key, layer, name in network.param_entries()
        }
        self.v = {key: np.zeros_like(arr) for key, arr in self.m.items()}

    def step(self, network) -> None:
        """Apply the gradients currently stored on the network's layers."""
        self.t += 1
        for key, layer, name in network.param_entries():
            grad = layer.grads.get(name)
            if grad is None:
                raise ValueError(f"no gradient for {key}; run a train-mode backward first")
            adam_step(
                layer.params[name], grad, self.m[key], self.v[key],
                self.t, self.lr, self.beta1, self.beta2, self.eps,
            )
