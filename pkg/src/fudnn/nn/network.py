"""Network assembly: the full decoder stack and its ablation prefixes.

The full stack ("fudnn") is, in order: temporal convolution + batch norm
(kept linear, no activation), a second temporal convolution + batch norm +
ELU, average pooling + dropout, a channel-collapsing depthwise convolution
+ batch norm + ELU, average pooling + dropout, a BiLSTM over the remaining
time steps, then flatten + dense + softmax. The ablation variants keep the
leading blocks and replace the rest with a temporal-mean + dense head:

    cnn1  first convolution block only
    cnn2  both convolution blocks
    cnn3  everything through the depthwise block
    fudnn the complete stack

Defaults reproduce the reference architecture for a 64-channel, 500-sample
input (40/80 feature maps, kernel 50, pool 7, hidden 100).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from . import layers as L
from . import ops

__all__ = ["VARIANTS", "NetworkSpec", "Network"]

VARIANTS = ("cnn1", "cnn2", "cnn3", "fudnn")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture hyperparameters; shapes are validated at build time."""

    n_channels: int = 64
    n_samples: int = 500
    n_classes: int = 4
    variant: str = "fudnn"
    conv1_maps: int = 40
    conv2_maps: int = 80
    kernel_len: int = 50
    pool_len: int = 7
    dropout_p: float = 0.5
    lstm_hidden: int = 100
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("n_channels", "n_samples", "n_classes", "conv1_maps",
                     "conv2_maps", "kernel_len", "pool_len", "lstm_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        self.block_shapes()  # raises on an incompatible chain

    def block_shapes(self) -> list[tuple]:
        """Per-block output shapes (batch axis omitted), input first.

        For the full stack on the default configuration this is the trace
        (1,64,500) -> (40,64,451) -> (80,64,402) -> (80,64,57) -> (80,1,57)
        -> (80,1,8) -> (8,200) -> (1600,) -> (n_classes,).
        """
        k, t = self.n_channels, self.n_samples
        t1 = t - self.kernel_len + 1
        shapes = [(1, k, t), (self.conv1_maps, k, t1)]
        if t1 < 1:
            raise ConfigError("first convolution kernel exceeds the input length")
        if self.variant == "cnn1":
            return shapes + [(self.n_classes,)]
        t2 = t1 - self.kernel_len + 1
        if t2 < 1:
            raise ConfigError("second convolution kernel exceeds its input length")
        shapes.append((self.conv2_maps, k, t2))
        if self.variant == "cnn2":
            return shapes + [(self.n_classes,)]
        t3 = t2 // self.pool_len
        if t3 < 1:
            raise ConfigError("first pooling stage empties the time axis")
        shapes.append((self.conv2_maps, k, t3))
        shapes.append((self.conv2_maps, 1, t3))
        if self.variant == "cnn3":
            return shapes + [(self.n_classes,)]
        t4 = t3 // self.pool_len
        if t4 < 1:
            raise ConfigError("second pooling stage empties the time axis")
        shapes.append((self.conv2_maps, 1, t4))
        shapes.append((t4, 2 * self.lstm_hidden))
        shapes.append((t4 * 2 * self.lstm_hidden,))
        shapes.append((self.n_classes,))
        return shapes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


class Network:
    """A built decoder: ordered layers, deterministic for a fixed seed."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        self.layers = self._build(spec, rng, self.dtype)
        # Realized shapes must agree with the spec's analytic trace.
        shape = (1, spec.n_channels, spec.n_samples)
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if shape != (spec.n_classes,):
            raise ConfigError(
                f"layer chain produces {shape}, expected ({spec.n_classes},)"
            )

    @staticmethod
    def _build(spec: NetworkSpec, rng, dtype):
        k = spec.n_channels
        kl = spec.kernel_len
        bn = dict(momentum=spec.bn_momentum, eps=spec.bn_eps)
        stack = [
            L.TimeConv("conv1", 1, spec.conv1_maps, kl, rng, dtype),
            L.BatchNorm("bn1", spec.conv1_maps, rng, dtype, **bn),
        ]
        if spec.variant != "cnn1":
            stack += [
                L.TimeConv("conv2", spec.conv1_maps, spec.conv2_maps, kl, rng, dtype),
                L.BatchNorm("bn2", spec.conv2_maps, rng, dtype, **bn),
                L.Elu("elu2"),
            ]
        if spec.variant in ("cnn3", "fudnn"):
            stack += [
                L.AvgPoolTime("pool1", spec.pool_len),
                L.Dropout("drop1", spec.dropout_p),
                L.SpatialCollapseConv("spatial", spec.conv2_maps, k, rng, dtype),
                L.BatchNorm("bn3", spec.conv2_maps, rng, dtype, **bn),
                L.Elu("elu3"),
            ]
        if spec.variant == "fudnn":
            t1 = spec.n_samples - kl + 1
            t4 = ((t1 - kl + 1) // spec.pool_len) // spec.pool_len
            stack += [
                L.AvgPoolTime("pool2", spec.pool_len),
                L.Dropout("drop2", spec.dropout_p),
                L.MapsToSequence("seq"),
                L.BiLSTM("bilstm", spec.conv2_maps, spec.lstm_hidden, rng, dtype),
                L.Flatten("flatten"),
                L.Dense("dense", t4 * 2 * spec.lstm_hidden, spec.n_classes, rng, dtype),
            ]
        else:
            # Ablation head: mean over time, flatten, linear classifier.
            maps = spec.conv1_maps if spec.variant == "cnn1" else spec.conv2_maps
            height = 1 if spec.variant == "cnn3" else k
            stack += [
                L.TemporalMean("head_mean"),
                L.Flatten("head_flatten"),
                L.Dense("head_dense", maps * height, spec.n_classes, rng, dtype),
            ]
        return stack

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        """Logits for a (B, 1, K, T) batch."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (
            self.spec.n_channels, self.spec.n_samples
        ):
            raise ValueError(
                f"expected input (B, 1, {self.spec.n_channels}, {self.spec.n_samples}), "
                f"got {x.shape}"
            )
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        dy = dlogits
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def loss(self, x: np.ndarray, labels: np.ndarray, train: bool = False, rng=None):
        """(loss, probs); in train mode also populates layer gradients."""
        logits = self.forward(x, train, rng)
        loss, probs, dlogits = ops.softmax_cross_entropy(logits, np.asarray(labels))
        if train:
            self.backward(dlogits)
        return loss, probs

    def predict_probs(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = []
        for s in range(0, len(x), batch_size):
            logits = self.forward(x[s:s + batch_size], train=False)
            z = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(z)
            out.append(e / e.sum(axis=1, keepdims=True))
        return np.concatenate(out, axis=0)

    # -- parameter access ----------------------------------------------------

    def param_entries(self):
        """Stable (key, layer, field) order: layer order, then field name."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{i:02d}.{layer.name}.{name}", layer, name

    def state_entries(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.state):
                yield f"{i:02d}.{layer.name}.{name}", layer, name

    @property
    def n_parameters(self) -> int:
        return sum(layer.params[n].size for _, layer, n in self.param_entries())

    def get_param_vector(self) -> np.ndarray:
        return np.concatenate(
            [layer.params[n].ravel() for _, layer, n in self.param_entries()]
        ) if self.n_parameters else np.empty(0, dtype=self.dtype)

    def set_param_vector(self, vec: np.ndarray) -> None:
        off = 0
        for _, layer, n in self.param_entries():
            p = layer.params[n]
            p[...] = vec[off:off + p.size].reshape(p.shape)
            off += p.size
        if off != len(vec):
            raise ValueError("parameter vector length mismatch")
