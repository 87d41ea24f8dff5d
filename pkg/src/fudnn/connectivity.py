"""Phase-locking-value functional connectivity and channel weighting.

The pipeline: extract per-channel analytic phases from every training
window, average the unit phasors of all pairwise phase differences over
windows and time jointly, fold the upper-triangular result into a
symmetric matrix, sum it per channel, and min-max normalize the sums
into a weight vector that multiplies the channel axis of the input.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core import Montage
from .dsp import FirFilter, Window, design_fir_bandpass, filtfilt, instantaneous_phase

__all__ = [
    "PhaseTensor",
    "PlvMatrix",
    "ChannelWeights",
    "phases_from_windows",
    "pairwise_plv",
    "symmetrize",
    "channel_strengths",
    "minmax_normalize",
    "apply_weights",
    "threshold_edges",
    "pearson_cc",
    "fit_weights",
    "write_edges_csv",
    "write_weights_json",
]


@dataclass(frozen=True)
class PhaseTensor:
    """Instantaneous phases for N windows x K channels x T samples.

    ``degenerate`` flags channels that were identically zero in at least
    one window; their phases are defined but carry no information, and
    PLV computations refuse them.
    """

    phases: np.ndarray
    rate_hz: float
    band: tuple[float, float] | None = None
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        phases = np.asarray(self.phases)
        if phases.dtype not in (np.float32, np.float64):
            phases = phases.astype(np.float64)
        if phases.ndim != 3:
            raise ValueError("phases must be [windows x channels x time]")
        if phases.shape[0] < 1 or phases.shape[2] < 1:
            raise ValueError("need at least one window and one time bin")
        if np.max(np.abs(phases)) > np.pi + 1e-9:
            raise ValueError("phases must lie in (-pi, pi]")
        object.__setattr__(self, "phases", phases)
        if self.degenerate is None:
            object.__setattr__(
                self, "degenerate", np.zeros(phases.shape[1], dtype=bool)
            )
        else:
            object.__setattr__(
                self, "degenerate", np.asarray(self.degenerate, dtype=bool)
            )

    @property
    def n_windows(self) -> int:
        return self.phases.shape[0]

    @property
    def n_channels(self) -> int:
        return self.phases.shape[1]

    @property
    def n_samples(self) -> int:
        return self.phases.shape[2]


def phases_from_windows(windows, band: tuple[float, float] | None = None,
                        fir_order: int = 30) -> PhaseTensor:
    """Analytic-signal phases of a set of windows, optionally band-limited first.

    ``windows`` is a sequence of ``dsp.Window`` (or any objects with ``data``
    and ``rate_hz``) or a ready [N x K x T] array plus nothing else. With
    ``band`` given, each channel is zero-phase filtered to that band before
    phase extraction, as used for the per-band edge maps.
    """
    if isinstance(windows, np.ndarray):
        data = windows
        rate = None
    else:
        windows = list(windows)
        if not windows:
            raise ValueError("need at least one window")
        data = np.stack([np.asarray(w.data) for w in windows])
        rate = windows[0].rate_hz
    if data.ndim != 3:
        raise ValueError("window data must stack to [N x K x T]")
    if data.dtype not in (np.float32, np.float64):
        data = data.astype(np.float64)
    if band is not None:
        if rate is None:
            raise ValueError("band-limited phases need windows with a sampling rate")
        fir = design_fir_bandpass(fir_order, band[0], band[1], rate)
        flat = data.reshape(-1, data.shape[-1])
        data = filtfilt(flat, fir).reshape(data.shape).astype(data.dtype)
    # A channel is degenerate if any window of it is all-zero.
    nonzero = np.any(data != 0, axis=2)        # [N x K]
    degenerate = ~nonzero.all(axis=0)
    return PhaseTensor(
        phases=instantaneous_phase(data),
        rate_hz=float(rate) if rate is not None else 0.0,
        band=None if band is None else (float(band[0]), float(band[1])),
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class PlvMatrix:
    """K x K phase-locking values; upper-triangular or symmetric form.

    The diagonal is excluded (kept at zero): self-locking is identically 1
    and would only add a constant to every channel strength, which the
    min-max step cancels.
    """

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("PLV matrix must be square")
        if self.kind not in ("upper_triangular", "symmetric"):
            raise ValueError(f"unknown PLV matrix kind {self.kind!r}")
        if np.min(values) < -1e-12 or np.max(values) > 1.0 + 1e-9:
            raise ValueError("PLV entries must lie in [0, 1]")
        if self.kind == "symmetric" and not np.array_equal(values, values.T):
            raise ValueError("symmetric PLV matrix must satisfy S == S.T exactly")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]


def pairwise_plv(phases: PhaseTensor) -> PlvMatrix:
    """Phase-locking value for every channel pair.

    plv[k1, k2] = | mean over windows and time of exp(j*(phi_k1 - phi_k2)) |,
    i.e. the modulus of the average unit phasor of the phase difference,
    averaged jointly over the N*T phase samples. Stored upper-triangular
    with a zero diagonal.
    """
    if np.any(phases.degenerate):
        bad = int(np.flatnonzero(phases.degenerate)[0])
        raise ValueError(
            f"channel {bad} is degenerate (all-zero window); PLV is undefined for it"
        )
    n, k, t = phases.phases.shape
    u = np.exp(1j * phases.phases)             # [N x K x T]
    flat = np.ascontiguousarray(u.transpose(1, 0, 2).reshape(k, n * t))
    g = flat @ flat.conj().T                   # sum of cross phasors
    plv = np.abs(g) / (n * t)
    plv = np.minimum(plv, 1.0)
    return PlvMatrix(values=np.triu(plv, k=1), kind="upper_triangular")


def symmetrize(plv: PlvMatrix) -> PlvMatrix:
    """Fold an upper-triangular PLV matrix into symmetric form: S = P + P^T."""
    if plv.kind != "upper_triangular":
        raise ValueError("symmetrize expects an upper-triangular PLV matrix")
    if np.any(np.tril(plv.values) != 0):
        raise ValueError("input carries content on or below the diagonal")
    return PlvMatrix(values=plv.values + plv.values.T, kind="symmetric")


def channel_strengths(s: PlvMatrix) -> np.ndarray:
    """Total connectivity per channel: column sums of the symmetric matrix."""
    if s.kind != "symmetric":
        raise ValueError("channel strengths are defined on the symmetric matrix")
    return s.values.sum(axis=0)


@dataclass(frozen=True)
class ChannelWeights:
    """Per-channel weights in [0, 1] that scale the input's channel axis."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if w.ndim != 1 or len(w) < 2:
            raise ValueError("weights must be a vector of length >= 2")
        if np.min(w) < -1e-12 or np.max(w) > 1.0 + 1e-12:
            raise ValueError("weights must lie in [0, 1]")

    @property
    def n_channels(self) -> int:
        return len(self.w)


def minmax_normalize(v: np.ndarray) -> ChannelWeights:
    """Min-max normalize a strength vector onto [0, 1].

    A constant vector carries no ordering information; it maps to all-ones
    so that weighting degrades to identity rather than zeroing the signal.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) < 2:
        raise ValueError("need a vector of length >= 2")
    span = np.max(v) - np.min(v)
    if span == 0:
        return ChannelWeights(w=np.ones(len(v)))
    return ChannelWeights(w=(v - np.min(v)) / span)


def apply_weights(window: np.ndarray, weights: ChannelWeights) -> np.ndarray:
    """Scale each channel row of a [K x T] window by its weight."""
    window = np.asarray(window)
    if window.ndim != 2 or window.shape[0] != weights.n_channels:
        raise ValueError(
            f"window shape {window.shape} does not match {weights.n_channels} weights"
        )
    return window * weights.w.astype(window.dtype)[:, None]


def threshold_edges(s: PlvMatrix, threshold: float = 0.9) -> list[tuple[int, int, float]]:
    """Channel pairs whose symmetric PLV exceeds the threshold.

    Returns unique (k1, k2, value) with k1 < k2, sorted by descending value
    then by index.
    """
    if s.kind != "symmetric":
        raise ValueError("edge thresholding is defined on the symmetric matrix")
    k1s, k2s = np.nonzero(np.triu(s.values, k=1) > threshold)
    edges = [(int(a), int(b), float(s.values[a, b])) for a, b in zip(k1s, k2s)]
    edges.sort(key=lambda e: (-e[2], e[0], e[1]))
    return edges


def pearson_cc(a, b) -> float:
    """Sample Pearson correlation between two weight vectors."""
    va = a.w if isinstance(a, ChannelWeights) else np.asarray(a, dtype=np.float64)
    vb = b.w if isinstance(b, ChannelWeights) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValueError("inputs must be vectors of equal length")
    da = va - va.mean()
    db = vb - vb.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0:
        raise ValueError("correlation is undefined for a constant input")
    return float(np.sum(da * db) / denom)


def fit_weights(train_windows, band: tuple[float, float] | None = None) -> ChannelWeights:
    """Channel weights from training windows only.

    Pools every training window across classes, extracts phases, and runs
    the PLV -> symmetrize -> per-channel sum -> min-max chain. The result
    is frozen and applied unchanged to held-out data, so no test statistics
    leak into the weighting.
    """
    phases = phases_from_windows(train_windows, band=band)
    return minmax_normalize(channel_strengths(symmetrize(pairwise_plv(phases))))


def write_edges_csv(edges, montage: Montage, path) -> None:
    """Write thresholded edges as CSV rows (k1_label, k2_label, value)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["k1_label", "k2_label", "value"])
        for k1, k2, v in edges:
            w.writerow([montage.labels[k1], montage.labels[k2], repr(float(v))])


def write_weights_json(weights: ChannelWeights, montage: Montage, path) -> None:
    """Write channel weights as a {label: weight} JSON object."""
    if weights.n_channels != montage.n_channels:
        raise ValueError("weights and montage disagree on channel count")
    obj = {lab: float(w) for lab, w in zip(montage.labels, weights.w)}
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
