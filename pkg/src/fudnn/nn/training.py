"""Training and evaluation loops for a built network."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .optim import Adam

__all__ = ["train_network", "evaluate"]


def train_network(
    net,
    x: np.ndarray,
    y: np.ndarray,
    *,
    epochs: int = 100,
    batch_size: int = 32,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    seed: int = 0,
) -> dict:
    """Minibatch Adam training with a seeded shuffle per epoch.

    ``x`` is (N, 1, K, T), ``y`` integer class indices. One generator drives
    both the shuffling and the dropout masks, so a fixed seed gives a
    bit-identical trajectory. Raises NumericError if the loss leaves the
    finite range.

    Returns a history dict with per-epoch mean loss and training accuracy.
    """
    x = np.asarray(x, dtype=net.dtype)
    y = np.asarray(y, dtype=np.int64)
    if len(x) != len(y):
        raise ValueError("inputs and labels disagree in length")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    opt = Adam(net, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    history = {"loss": [], "accuracy": []}
    n = len(x)
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        hits = 0
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            loss, probs = net.loss(x[idx], y[idx], train=True, rng=rng)
            if not np.isfinite(loss):
                raise NumericError(f"training loss became {loss}")
            opt.step(net)
            losses.append(loss * len(idx))
            hits += int((probs.argmax(axis=1) == y[idx]).sum())
        history["loss"].append(float(np.sum(losses) / n))
        history["accuracy"].append(hits / n)
    return history


def evaluate(net, x: np.ndarray, y: np.ndarray, batch_size: int = 256):
    """Accuracy, confusion matrix and per-window probabilities on held-out data.

    Prediction is the argmax of the class probabilities; ties resolve to the
    lowest class index. confusion[true, predicted] counts windows.
    """
    y = np.asarray(y, dtype=np.int64)
    probs = net.predict_probs(np.asarray(x, dtype=net.dtype), batch_size=batch_size)
    if not np.all(np.isfinite(probs)):
        raise NumericError("evaluation produced non-finite probabilities")
    pred = probs.argmax(axis=1)
    n_classes = probs.shape[1]
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    accuracy = float((pred == y).mean()) if len(y) else float("nan")
    return accuracy, confusion, probs
