"""Dense-tensor layer primitives: forward passes with hand-derived backwards.

Shapes follow the (batch, maps, channels, time) convention for the
convolutional stages and (batch, steps, features) for the recurrent one.
Every backward here is verified against central finite differences in the
test suite; none of them may be changed without re-running those checks.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sp_fft

from ..errors import ConfigError

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "batchnorm_forward",
    "batchnorm_backward",
    "elu_forward",
    "elu_backward",
    "avgpool_forward",
    "avgpool_backward",
    "depthwise_forward",
    "depthwise_backward",
    "dropout_forward",
    "dropout_backward",
    "dense_forward",
    "dense_backward",
    "softmax_cross_entropy",
    "lstm_forward",
    "lstm_backward",
    "bilstm_forward",
    "bilstm_backward",
]

def _rfft_time(a: np.ndarray, nfft: int) -> np.ndarray:
    return sp_fft.rfft(a, n=nfft, axis=-1)


def _mix_freq(a: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """Per-frequency map mixing: (B, Ci, H, F) x (Co, Ci, F) -> (B, Co, H, F)."""
    b, ci, h, f = a.shape
    co = kern.shape[0]
    lhs = a.transpose(3, 0, 2, 1).reshape(f, b * h, ci)
    rhs = kern.transpose(2, 1, 0)                      # (F, Ci, Co)
    out = lhs @ rhs                                    # (F, B*H, Co)
    return out.reshape(f, b, h, co).transpose(1, 3, 2, 0)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Temporal convolution over all EEG channels at once.

    x: (B, Cin, H, T); w: (Cout, Cin, klen); b: (Cout,). Valid (no-padding)
    cross-correlation, so the output time length is T - klen + 1.

    Runs in the frequency domain: with nfft >= T the circular terms never
    reach the valid output region, for the data path and both gradients.
    """
    bsz, cin, h, t = x.shape
    cout, cin_k, klen = w.shape
    if cin_k != cin:
        raise ValueError(f"kernel expects {cin_k} input maps, got {cin}")
    if klen > t:
        raise ValueError(f"kernel length {klen} exceeds input length {t}")
    tout = t - klen + 1
    nfft = sp_fft.next_fast_len(t, real=True)
    xf = _rfft_time(x, nfft)
    wf = _rfft_time(w, nfft)
    yf = _mix_freq(xf, np.conj(wf))
    y = sp_fft.irfft(yf, n=nfft, axis=-1)[..., :tout]
    y = np.ascontiguousarray(y, dtype=x.dtype)
    y += b.reshape(1, -1, 1, 1)
    return y, (xf, wf, x.shape, w.shape, nfft)


def conv2d_backward(dy: np.ndarray, cache):
    xf, wf, x_shape, w_shape, nfft = cache
    cout, cin, klen = w_shape
    t = x_shape[3]
    db = dy.sum(axis=(0, 2, 3))
    dyf = _rfft_time(dy, nfft)

    # dw[o,i,k] = sum_{b,h,t} x[b,i,h,t+k] dy[b,o,h,t]: correlation at lags [0, klen)
    f = xf.shape[-1]
    lhs = np.conj(dyf).transpose(3, 1, 0, 2).reshape(f, cout, -1)  # (F, Co, B*H)
    rhs = xf.transpose(3, 0, 2, 1).reshape(f, -1, cin)             # (F, B*H, Ci)
    dwf = (lhs @ rhs).transpose(1, 2, 0)                           # (Co, Ci, F)
    dw = sp_fft.irfft(dwf, n=nfft, axis=-1)[..., :klen]
    dw = np.ascontiguousarray(dw, dtype=dy.dtype)

    # dx[b,i,h,s] = sum_{o,k} dy[b,o,h,s-k] w[o,i,k]: full convolution with w
    dxf = _mix_freq(dyf, wf.transpose(1, 0, 2))
    dx = sp_fft.irfft(dxf, n=nfft, axis=-1)[..., :t]
    dx = np.ascontiguousarray(dx, dtype=dy.dtype)
    return dx, dw, db


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
):
    """Per-feature-map normalization over the (batch, channel, time) axes.

    Training uses batch statistics and updates the running buffers in place;
    evaluation uses the running statistics.
    """
    if x.ndim != 4:
        raise ValueError("batchnorm expects (B, C, H, T) input")
    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    if train:
        if x.shape[0] < 2:
            raise ConfigError("batch normalization needs a batch of at least 2 in train mode")
        mu = x.mean(axis=axes)
        xhat = x - mu.reshape(1, -1, 1, 1)
        var = np.einsum("bcht,bcht->c", xhat, xhat, optimize=True) / m
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
        ivar = 1.0 / np.sqrt(var + eps)
        xhat *= ivar.reshape(1, -1, 1, 1)
    else:
        mu = running_mean
        var = running_var
        ivar = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu.reshape(1, -1, 1, 1)) * ivar.reshape(1, -1, 1, 1)
    y = xhat * gamma.reshape(1, -1, 1, 1)
    y += beta.reshape(1, -1, 1, 1)
    return y, (xhat, ivar, gamma, m, train)


def batchnorm_backward(dy: np.ndarray, cache):
    xhat, ivar, gamma, m, train = cache
    dgamma = np.einsum("bcht,bcht->c", dy, xhat, optimize=True)
    dbeta = np.einsum("bcht->c", dy, optimize=True)
    g = (gamma * ivar).reshape(1, -1, 1, 1)
    if not train:
        return dy * g, dgamma, dbeta
    dx = dy - (dbeta / m).reshape(1, -1, 1, 1)
    dx -= xhat * (dgamma / m).reshape(1, -1, 1, 1)
    dx *= g
    return dx, dgamma, dbeta


def elu_forward(x: np.ndarray):
    """ELU with alpha = 1: x for x > 0, exp(x) - 1 otherwise."""
    t = np.minimum(x, 0)
    np.expm1(t, out=t)
    y = np.maximum(x, 0)
    y += t
    return y, y


def elu_backward(dy: np.ndarray, cache):
    y = cache
    # d/dx ELU = 1 for x > 0 and exp(x) = y + 1 otherwise, i.e. min(y + 1, 1).
    g = np.minimum(y + 1, y.dtype.type(1))
    g *= dy
    return g


def avgpool_forward(x: np.ndarray, k: int):
    """Non-overlapping mean pooling over time; a trailing remainder is dropped."""
    t = x.shape[3]
    tout = t // k
    if tout < 1:
        raise ValueError(f"pool length {k} exceeds time axis {t}")
    y = x[..., : tout * k].reshape(*x.shape[:3], tout, k).mean(axis=4)
    return y, (x.shape, k)


def avgpool_backward(dy: np.ndarray, cache):
    x_shape, k = cache
    dx = np.zeros(x_shape, dtype=dy.dtype)
    tout = dy.shape[3]
    dx[..., : tout * k] = np.repeat(dy, k, axis=3) / k
    return dx


def depthwise_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Per-map spatial kernel spanning the whole channel axis.

    x: (B, C, H, T); w: (C, H); b: (C,). Each feature map is collapsed to a
    single spatial row with its own kernel; maps do not mix.
    """
    if x.shape[1] != w.shape[0] or x.shape[2] != w.shape[1]:
        raise ValueError(
            f"input shape {x.shape} does not match depthwise kernel {w.shape}"
        )
    y = np.einsum("bcht,ch->bct", x, w, optimize=True) + b.reshape(1, -1, 1)
    return y[:, :, None, :], (x, w)


def depthwise_backward(dy: np.ndarray, cache):
    x, w = cache
    d = dy[:, :, 0, :]
    dw = np.einsum("bct,bcht->ch", d, x, optimize=True)
    db = d.sum(axis=(0, 2))
    dx = w[None, :, :, None] * d[:, :, None, :]
    return dx, dw, db


def dropout_forward(x: np.ndarray, p: float, train: bool, rng):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError("dropout probability must lie in [0, 1)")
    if not train or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    mask = (rng.random(x.shape) >= p).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - p))
    return x * mask * scale, (mask, scale)


def dropout_backward(dy: np.ndarray, cache):
    if cache is None:
        return dy
    mask, scale = cache
    return dy * mask * scale


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean categorical cross-entropy with the fused softmax gradient.

    Returns (loss, probs, dlogits) where dlogits = (probs - onehot) / B.
    """
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, np.finfo(probs.dtype).tiny)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray,
                 reverse: bool = False):
    """One LSTM direction over a (B, L, F) sequence.

    Gate order in the packed weight matrices is (input, forget, cell, output).
    Returns the hidden sequence (B, L, H) indexed in original time order;
    with ``reverse`` the scan runs from the last step to the first.
    """
    bsz, length, _ = x.shape
    hid = wh.shape[0]
    h = np.zeros((bsz, hid), dtype=x.dtype)
    c = np.zeros((bsz, hid), dtype=x.dtype)
    h_seq = np.empty((bsz, length, hid), dtype=x.dtype)
    steps = range(length - 1, -1, -1) if reverse else range(length)
    caches = []
    for t in steps:
        z = x[:, t] @ wx + h @ wh + b
        i = _sigmoid(z[:, :hid])
        f = _sigmoid(z[:, hid:2 * hid])
        g = np.tanh(z[:, 2 * hid:3 * hid])
        o = _sigmoid(z[:, 3 * hid:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        caches.append((t, x[:, t], h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        h_seq[:, t] = h
    return h_seq, (caches, wx, wh, x.shape)


def lstm_backward(dh_seq: np.ndarray, cache):
    caches, wx, wh, x_shape = cache
    hid = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hid, dtype=wx.dtype)
    dx = np.zeros(x_shape, dtype=wx.dtype)
    dh_next = np.zeros((x_shape[0], hid), dtype=wx.dtype)
    dc_next = np.zeros_like(dh_next)
    for t, x_t, h_prev, c_prev, i, f, g, o, tc in reversed(caches):
        dh = dh_seq[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dwx += x_t.T @ dz
        dwh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ wx.T
        dh_next = dz @ wh.T
    return dx, dwx, dwh, db


def bilstm_forward(x: np.ndarray, params: dict):
    """Both LSTM directions; per-step outputs concatenated to (B, L, 2H)."""
    h_f, cache_f = lstm_forward(x, params["fwd_wx"], params["fwd_wh"], params["fwd_b"])
    h_b, cache_b = lstm_forward(
        x, params["bwd_wx"], params["bwd_wh"], params["bwd_b"], reverse=True
    )
    return np.concatenate([h_f, h_b], axis=2), (cache_f, cache_b)


def bilstm_backward(dy: np.ndarray, cache):
    cache_f, cache_b = cache
    hid = dy.shape[2] // 2
    dx_f, dwx_f, dwh_f, db_f = lstm_backward(np.ascontiguousarray(dy[:, :, :hid]), cache_f)
    dx_b, dwx_b, dwh_b, db_b = lstm_backward(np.ascontiguousarray(dy[:, :, hid:]), cache_b)
    grads = {
        "fwd_wx": dwx_f, "fwd_wh": dwh_f, "fwd_b": db_f,
        "bwd_wx": dwx_b, "bwd_wh": dwh_b, "bwd_b": db_b,
    }
    return dx_f + dx_b, grads
