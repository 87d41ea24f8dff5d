"""Finite-difference verification of the analytic backward passes."""

from __future__ import annotations

import numpy as np

from . import ops
from .network import Network, NetworkSpec

__all__ = ["grad_check", "default_gradcheck_spec", "run_network_gradcheck"]


def grad_check(net: Network, x: np.ndarray, labels: np.ndarray,
               eps: float = 1e-5, check_input: bool = True,
               forward_seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every forward pass is driven by a freshly seeded generator so that
    dropout masks are identical across evaluations; batch-norm runs in train
    mode on batch statistics. The network should be built in float64 for the
    differences to resolve below the 1e-4 acceptance threshold.

    The relative-error denominator is floored at 1e-6: gradients that are
    structurally zero (e.g. a bias feeding straight into batch norm) sit at
    the ~1e-11 rounding noise of the central differences, far below what
    finite differences can resolve.
    """
    x = np.asarray(x, dtype=net.dtype)
    labels = np.asarray(labels, dtype=np.int64)

    def loss_at() -> float:
        rng = np.random.default_rng(np.random.SeedSequence(forward_seed))
        loss, _ = net.loss(x, labels, train=True, rng=rng)
        return loss

    # Analytic gradients.
    rng = np.random.default_rng(np.random.SeedSequence(forward_seed))
    logits = net.forward(x, train=True, rng=rng)
    _, _, dlogits = ops.softmax_cross_entropy(logits, labels)
    dx_analytic = net.backward(dlogits)
    analytic = {
        key: layer.grads[name].copy() for key, layer, name in net.param_entries()
    }

    worst = 0.0

    def rel_err(a: float, n: float) -> float:
        return abs(a - n) / max(abs(a), abs(n), 1e-6)

    for key, layer, name in net.param_entries():
        p = layer.params[name]
        flat = p.ravel()
        ga = analytic[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_at()
            flat[i] = orig - eps
            down = loss_at()
            flat[i] = orig
            worst = max(worst, rel_err(ga[i], (up - down) / (2 * eps)))

    if check_input:
        fx = x.ravel()
        gx = dx_analytic.ravel()
        for i in range(fx.size):
            orig = fx[i]
            fx[i] = orig + eps
            up = loss_at()
            fx[i] = orig - eps
            down = loss_at()
            fx[i] = orig
            worst = max(worst, rel_err(gx[i], (up - down) / (2 * eps)))
    return float(worst)


def default_gradcheck_spec(variant: str = "fudnn") -> NetworkSpec:
    """A down-scaled spec with every layer kind of the full stack."""
    return NetworkSpec(
        n_channels=5,
        n_samples=40,
        n_classes=3,
        variant=variant,
        conv1_maps=3,
        conv2_maps=4,
        kernel_len=5,
        pool_len=2,
        dropout_p=0.5,
        lstm_hidden=4,
    )


def run_network_gradcheck(spec: NetworkSpec | None = None, seed: int = 0,
                          batch: int = 2, eps: float = 1e-5) -> float:
    """Build a float64 network from ``spec`` and gradient-check it end to end."""
    spec = spec or default_gradcheck_spec()
    net = Network(spec, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence(seed + 1))
    x = rng.standard_normal((batch, 1, spec.n_channels, spec.n_samples))
    labels = rng.integers(0, spec.n_classes, size=batch)
    return grad_check(net, x, labels, eps=eps)
