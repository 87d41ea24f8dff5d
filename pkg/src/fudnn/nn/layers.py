"""Layer objects: parameters, state, and the forward/backward plumbing."""

from __future__ import annotations

import numpy as np

from . import ops

__all__ = [
    "Layer",
    "TimeConv",
    "BatchNorm",
    "Elu",
    "AvgPoolTime",
    "SpatialCollapseConv",
    "Dropout",
    "BiLSTM",
    "MapsToSequence",
    "TemporalMean",
    "Flatten",
    "Dense",
]


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: ``params`` are trainable, ``state`` persists but is not."""

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, train: bool, rng):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def out_shape(self, shape: tuple) -> tuple:
        raise NotImplementedError


class TimeConv(Layer):
    """Temporal convolution (no padding) applied across all EEG channels."""

    def __init__(self, name, in_maps, out_maps, kernel_len, rng, dtype):
        super().__init__(name)
        self.kernel_len = kernel_len
        fan = in_maps * kernel_len, out_maps * kernel_len
        self.params["w"] = _glorot(rng, (out_maps, in_maps, kernel_len), *fan, dtype)
        self.params["b"] = np.zeros(out_maps, dtype=dtype)

    def forward(self, x, train, rng):
        y, self._cache = ops.conv2d_forward(x, self.params["w"], self.params["b"])
        return y

    def backward(self, dy):
        dx, dw, db = ops.conv2d_backward(dy, self._cache)
        self.grads = {"w": dw, "b": db}
        return dx

    def out_shape(self, shape):
        c, h, t = shape
        if t - self.kernel_len + 1 < 1:
            raise ValueError(f"{self.name}: kernel {self.kernel_len} exceeds input length {t}")
        return (self.params["w"].shape[0], h, t - self.kernel_len + 1)


class BatchNorm(Layer):
    def __init__(self, name, n_maps, rng, dtype, momentum=0.9, eps=1e-5):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(n_maps, dtype=dtype)
        self.params["beta"] = np.zeros(n_maps, dtype=dtype)
        self.state["running_mean"] = np.zeros(n_maps, dtype=dtype)
        self.state["running_var"] = np.ones(n_maps, dtype=dtype)

    def forward(self, x, train, rng):
        y, self._cache = ops.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.state["running_mean"], self.state["running_var"],
            train, self.momentum, self.eps,
        )
        return y

    def backward(self, dy):
        dx, dgamma, dbeta = ops.batchnorm_backward(dy, self._cache)
        self.grads = {"gamma": dgamma, "beta": dbeta}
        return dx

    def out_shape(self, shape):
        return shape


class Elu(Layer):
    def forward(self, x, train, rng):
        y, self._cache = ops.elu_forward(x)
        return y

    def backward(self, dy):
        return ops.elu_backward(dy, self._cache)

    def out_shape(self, shape):
        return shape


class AvgPoolTime(Layer):
    """Mean pooling over time with stride equal to the pool length."""

    def __init__(self, name, k):
        super().__init__(name)
        self.k = k

    def forward(self, x, train, rng):
        y, self._cache = ops.avgpool_forward(x, self.k)
        return y

    def backward(self, dy):
        return ops.avgpool_backward(dy, self._cache)

    def out_shape(self, shape):
        c, h, t = shape
        if t // self.k < 1:
            raise ValueError(f"{self.name}: pool {self.k} exceeds time axis {t}")
        return (c, h, t // self.k)


class SpatialCollapseConv(Layer):
    """Depthwise kernel spanning the full channel axis; collapses it to 1."""

    def __init__(self, name, n_maps, n_channels, rng, dtype):
        super().__init__(name)
        self.params["w"] = _glorot(rng, (n_maps, n_channels), n_channels, 1, dtype)
        self.params["b"] = np.zeros(n_maps, dtype=dtype)

    def forward(self, x, train, rng):
        y, self._cache = ops.depthwise_forward(x, self.params["w"], self.params["b"])
        return y

    def backward(self, dy):
        dx, dw, db = ops.depthwise_backward(dy, self._cache)
        self.grads = {"w": dw, "b": db}
        return dx

    def out_shape(self, shape):
        c, h, t = shape
        if h != self.params["w"].shape[1]:
            raise ValueError(f"{self.name}: kernel spans {self.params['w'].shape[1]} channels, input has {h}")
        return (c, 1, t)


class Dropout(Layer):
    def __init__(self, name, p):
        super().__init__(name)
        self.p = p

    def forward(self, x, train, rng):
        y, self._cache = ops.dropout_forward(x, self.p, train, rng)
        return y

    def backward(self, dy):
        return ops.dropout_backward(dy, self._cache)

    def out_shape(self, shape):
        return shape


class BiLSTM(Layer):
    def __init__(self, name, in_features, hidden, rng, dtype):
        super().__init__(name)
        self.hidden = hidden
        for d in ("fwd", "bwd"):
            self.params[f"{d}_wx"] = _glorot(rng, (in_features, 4 * hidden),
                                             in_features, 4 * hidden, dtype)
            self.params[f"{d}_wh"] = _glorot(rng, (hidden, 4 * hidden),
                                             hidden, 4 * hidden, dtype)
            b = np.zeros(4 * hidden, dtype=dtype)
            b[hidden:2 * hidden] = 1.0  # forget gate opens at init
            self.params[f"{d}_b"] = b

    def forward(self, x, train, rng):
        y, self._cache = ops.bilstm_forward(x, self.params)
        return y

    def backward(self, dy):
        dx, grads = ops.bilstm_backward(dy, self._cache)
        self.grads = grads
        return dx

    def out_shape(self, shape):
        length, _ = shape
        return (length, 2 * self.hidden)


class MapsToSequence(Layer):
    """(B, C, 1, T) -> (B, T, C): time becomes the sequence axis."""

    def forward(self, x, train, rng):
        if x.shape[2] != 1:
            raise ValueError("sequence conversion expects a collapsed channel axis")
        self._cache = x.shape
        return np.ascontiguousarray(x[:, :, 0, :].transpose(0, 2, 1))

    def backward(self, dy):
        return np.ascontiguousarray(dy.transpose(0, 2, 1))[:, :, None, :]

    def out_shape(self, shape):
        c, h, t = shape
        if h != 1:
            raise ValueError("sequence conversion expects a collapsed channel axis")
        return (t, c)


class TemporalMean(Layer):
    """(B, C, H, T) -> (B, C, H): global average over the time axis."""

    def forward(self, x, train, rng):
        self._cache = x.shape
        return x.mean(axis=3)

    def backward(self, dy):
        shape = self._cache
        return np.broadcast_to(dy[..., None] / shape[3], shape).astype(dy.dtype, copy=True)

    def out_shape(self, shape):
        c, h, t = shape
        return (c, h)


class Flatten(Layer):
    def forward(self, x, train, rng):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._cache)

    def out_shape(self, shape):
        return (int(np.prod(shape)),)


class Dense(Layer):
    def __init__(self, name, in_features, out_features, rng, dtype):
        super().__init__(name)
        self.params["w"] = _glorot(rng, (in_features, out_features),
                                   in_features, out_features, dtype)
        self.params["b"] = np.zeros(out_features, dtype=dtype)

    def forward(self, x, train, rng):
        y, self._cache = ops.dense_forward(x, self.params["w"], self.params["b"])
        return y

    def backward(self, dy):
        dx, dw, db = ops.dense_backward(dy, self._cache)
        self.grads = {"w": dw, "b": db}
        return dx

    def out_shape(self, shape):
        return (self.params["w"].shape[1],)
