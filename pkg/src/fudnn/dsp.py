"""Deterministic signal processing for the decoding pipeline.

Covers windowed-sinc FIR design, zero-phase (forward-backward) filtering,
integer-factor downsampling with anti-alias prefiltering, sliding-window
augmentation, analytic-signal phase extraction, Welch PSD, event-related
spectral perturbation, and a mains notch. Everything here is pure: same
inputs give bit-identical outputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .core import Dataset, Recording, Trial
from .errors import ConfigError

__all__ = [
    "FirFilter",
    "design_fir_bandpass",
    "design_fir_lowpass",
    "filtfilt",
    "downsample",
    "downsample_array",
    "Window",
    "sliding_windows",
    "instantaneous_phase",
    "is_degenerate",
    "psd_welch",
    "TimeFreqMap",
    "ersp",
    "notch_60hz",
    "preprocess_dataset",
    "write_psd_csv",
    "write_timefreq_csv",
]


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase FIR filter taps plus the design that produced them."""

    taps: np.ndarray
    design: dict

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        object.__setattr__(self, "taps", taps)
        if not np.all(np.isfinite(taps)):
            raise ValueError("filter taps must be finite")
        if np.max(np.abs(taps - taps[::-1])) > 1e-12:
            raise ValueError("filter taps must be symmetric (linear phase)")

    @property
    def order(self) -> int:
        return len(self.taps) - 1

    def gain_at(self, freq_hz, rate_hz=None) -> np.ndarray:
        """Magnitude response |H(f)| evaluated from the tap DFT."""
        rate = self.design["rate_hz"] if rate_hz is None else rate_hz
        f = np.atleast_1d(np.asarray(freq_hz, dtype=float))
        k = np.arange(len(self.taps))
        h = np.abs(np.sum(self.taps * np.exp(-2j * np.pi * f[:, None] * k / rate), axis=1))
        return h if np.ndim(freq_hz) else float(h[0])


def design_fir_bandpass(order: int, low_hz: float, high_hz: float, rate_hz: float) -> FirFilter:
    """Hamming windowed-sinc band-pass with an exact DC null.

    The taps are the difference of two windowed sinc low-passes, mean-removed
    so that H(0) == 0 exactly: at practical orders the lower band edge sits
    inside the transition band, and without the null the filter would pass DC.

    Parameters
    ----------
    order : even int >= 2; the filter has ``order + 1`` taps.
    low_hz, high_hz : pass band edges, 0 < low < high < rate/2.
    rate_hz : sampling rate the filter is designed for.
    """
    if order < 2 or order % 2 != 0:
        raise ConfigError("FIR order must be an even integer >= 2")
    if not (0.0 < low_hz < high_hz < rate_hz / 2.0):
        raise ConfigError(
            f"band [{low_hz}, {high_hz}] Hz must satisfy 0 < low < high < {rate_hz / 2} (Nyquist)"
        )
    n = np.arange(order + 1) - order / 2.0
    sinc_lp = lambda fc: 2.0 * fc / rate_hz * np.sinc(2.0 * fc / rate_hz * n)
    taps = (sinc_lp(high_hz) - sinc_lp(low_hz)) * np.hamming(order + 1)
    taps = taps - taps.sum() / len(taps)
    return FirFilter(
        taps=taps,
        design={
            "window": "hamming",
            "band": (float(low_hz), float(high_hz)),
            "rate_hz": float(rate_hz),
            "order": int(order),
        },
    )


def design_fir_lowpass(order: int, cutoff_hz: float, rate_hz: float) -> FirFilter:
    """Hamming windowed-sinc low-pass (used as the anti-alias prefilter)."""
    if order < 2 or order % 2 != 0:
        raise ConfigError("FIR order must be an even integer >= 2")
    if not (0.0 < cutoff_hz < rate_hz / 2.0):
        raise ConfigError(f"cutoff {cutoff_hz} Hz must lie below Nyquist {rate_hz / 2} Hz")
    n = np.arange(order + 1) - order / 2.0
    taps = 2.0 * cutoff_hz / rate_hz * np.sinc(2.0 * cutoff_hz / rate_hz * n)
    taps = taps * np.hamming(order + 1)
    return FirFilter(
        taps=taps,
        design={
            "window": "hamming",
            "band": (0.0, float(cutoff_hz)),
            "rate_hz": float(rate_hz),
            "order": int(order),
        },
    )


def filtfilt(x: np.ndarray, fir: FirFilter) -> np.ndarray:
    """Zero-phase filtering: forward pass, then backward pass.

    The magnitude response is squared and the net phase is zero. Edge
    transients are absorbed by reflection padding of 3x the tap count,
    which requires ``len(x) > 3 * len(taps)``.

    Accepts a 1-D signal or a [channels x time] matrix (filtered row-wise).
    Returns float64.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("filtfilt expects a 1-D signal or 2-D [channels x time] matrix")
    taps = fir.taps
    ntaps = len(taps)
    pad = 3 * ntaps
    if x.shape[1] <= pad:
        raise ValueError(
            f"signal of {x.shape[1]} samples is too short for reflection padding of {pad}"
        )
    xp = np.pad(x, ((0, 0), (pad, pad)), mode="reflect")
    out = np.empty_like(x)
    for ch in range(x.shape[0]):
        fwd = np.convolve(xp[ch], taps, mode="full")
        bwd = np.convolve(fwd[::-1], taps, mode="full")[::-1]
        # Two full convolutions delay the signal by ntaps-1 in total.
        start = pad + ntaps - 1
        out[ch] = bwd[start:start + x.shape[1]]
    return out[0] if squeeze else out


def _check_factor(rate_hz: float, target_hz: float) -> int:
    factor = rate_hz / target_hz
    if target_hz <= 0 or abs(factor - round(factor)) > 1e-9 or round(factor) < 1:
        raise ConfigError(
            f"downsampling from {rate_hz} to {target_hz} Hz is not an integer factor"
        )
    return int(round(factor))


def downsample_array(data: np.ndarray, rate_hz: float, target_hz: float) -> np.ndarray:
    """Anti-alias low-pass (zero-phase) then decimate a [K x T] array."""
    factor = _check_factor(rate_hz, target_hz)
    if factor == 1:
        return np.array(data, copy=True)
    order = 33 * factor
    if order % 2:
        order += 1
    aa = design_fir_lowpass(order, 0.45 * target_hz, rate_hz)
    filtered = filtfilt(np.asarray(data, dtype=np.float64), aa)
    return filtered[..., ::factor]


def downsample(recording: Recording, target_hz: float) -> Recording:
    """Downsample a recording by an integer factor; markers are re-indexed."""
    factor = _check_factor(recording.rate_hz, target_hz)
    if factor == 1:
        return recording
    data = downsample_array(recording.samples, recording.rate_hz, target_hz)
    return Recording(
        montage=recording.montage,
        rate_hz=float(target_hz),
        samples=data.astype(np.float32),
        markers=tuple((i // factor, c) for i, c in recording.markers),
    )


@dataclass(frozen=True)
class Window:
    """One augmentation window cut from a trial.

    Keeps the parent ``trial_id`` so evaluation protocols can guarantee that
    no window of a held-out trial leaks into training.
    """

    data: np.ndarray
    label: object
    trial_id: int
    start: int
    rate_hz: float
    subject_id: str = ""


def sliding_windows(trial: Trial, window_s: float = 2.0, overlap: float = 0.5) -> list[Window]:
    """Cut a trial into overlapping fixed-length windows.

    step = window * (1 - overlap); the number of windows is
    floor((T - W) / step) + 1. Window data are bit-exact slices of the trial.
    """
    if not 0.0 <= overlap < 1.0:
        raise ConfigError("overlap must lie in [0, 1)")
    w = int(round(window_s * trial.rate_hz))
    if w <= 0:
        raise ConfigError("window_s must span at least one sample")
    if w > trial.n_samples:
        raise ValueError(
            f"window of {w} samples does not fit in trial of {trial.n_samples}"
        )
    step = int(round(w * (1.0 - overlap)))
    step = max(step, 1)
    count = (trial.n_samples - w) // step + 1
    return [
        Window(
            data=trial.data[:, i * step:i * step + w].copy(),
            label=trial.label,
            trial_id=trial.trial_id,
            start=i * step,
            rate_hz=trial.rate_hz,
            subject_id=trial.subject_id,
        )
        for i in range(count)
    ]


def instantaneous_phase(x: np.ndarray) -> np.ndarray:
    """Phase of the analytic signal, in (-pi, pi].

    The analytic signal is built in the frequency domain (negative
    frequencies zeroed, positive doubled). Input may be 1-D or have the
    time axis last. An all-zero signal yields a defined but meaningless
    phase; detect that case with ``is_degenerate``.
    """
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    if x.shape[-1] < 8:
        raise ValueError("need at least 8 samples for phase extraction")
    return np.angle(sp_signal.hilbert(x, axis=-1))


def is_degenerate(x: np.ndarray) -> bool:
    """True when a signal carries no oscillation at all (identically zero)."""
    return not np.any(np.asarray(x) != 0)


def psd_welch(x: np.ndarray, rate_hz: float, seg_len: int, overlap: float = 0.5):
    """Welch power spectral density with Hann windows.

    Returns (freqs_hz, power) where power is the one-sided density, so
    integrating it over frequency recovers the mean squared signal.
    """
    x = np.asarray(x, dtype=np.float64)
    if seg_len > x.shape[-1]:
        raise ValueError(f"seg_len {seg_len} exceeds signal length {x.shape[-1]}")
    if not 0.0 <= overlap < 1.0:
        raise ConfigError("overlap must lie in [0, 1)")
    freqs, power = sp_signal.welch(
        x,
        fs=rate_hz,
        window="hann",
        nperseg=int(seg_len),
        noverlap=int(round(seg_len * overlap)),
        detrend=False,
        scaling="density",
    )
    return freqs, power


@dataclass(frozen=True)
class TimeFreqMap:
    """Time-frequency map in dB relative to a baseline."""

    freqs_hz: np.ndarray
    times_s: np.ndarray
    values_db: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "freqs_hz", np.asarray(self.freqs_hz, dtype=np.float64))
        object.__setattr__(self, "times_s", np.asarray(self.times_s, dtype=np.float64))
        object.__setattr__(self, "values_db", np.asarray(self.values_db, dtype=np.float64))
        if self.values_db.shape != (len(self.freqs_hz), len(self.times_s)):
            raise ValueError("values_db must be [freqs x times]")
        if not np.all(np.isfinite(self.values_db)):
            raise ValueError("time-frequency values must be finite")


def _stft_power(x: np.ndarray, w: int, hop: int, nfft: int, win: np.ndarray) -> np.ndarray:
    starts = np.arange(0, x.shape[-1] - w + 1, hop)
    frames = np.stack([x[s:s + w] for s in starts], axis=0) * win
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    return (spec.real ** 2 + spec.imag ** 2).T  # [freq x frame]


def ersp(
    trials,
    channel: int,
    baseline_s: tuple[float, float] = (-0.5, 0.0),
    freq_range: tuple[float, float] = (0.5, 50.0),
    n_times: int = 400,
    window_s: float = 1.0,
    hop: int | None = None,
) -> TimeFreqMap:
    """Event-related spectral perturbation on one channel.

    Per frequency: short-time Hann-windowed power averaged over trials,
    expressed as 10*log10 relative to the mean power of the frames whose
    centers fall inside ``baseline_s``. Frames are linearly resampled onto
    exactly ``n_times`` time points. All trials must share rate, length and
    onset offset (``t0_s``), and must start early enough to cover the
    baseline interval.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("ersp needs at least one trial")
    rate = trials[0].rate_hz
    n = trials[0].n_samples
    t0 = trials[0].t0_s
    for t in trials:
        if t.n_samples != n or abs(t.rate_hz - rate) > 1e-9 or abs(t.t0_s - t0) > 1e-9:
            raise ValueError("all trials must share length, rate and onset offset")
    if t0 > baseline_s[0] + 1e-12:
        raise ValueError(
            f"trials start at t={t0:.3f}s; baseline from {baseline_s[0]:.3f}s is not covered"
        )

    w = int(round(window_s * rate))
    if w > n:
        raise ValueError("analysis window longer than trial")
    if hop is None:
        hop = max(1, (n - w) // max(n_times - 1, 1))
    nfft = 2 * w
    win = np.hanning(w)

    freqs = np.fft.rfftfreq(nfft, d=1.0 / rate)
    sel = (freqs >= freq_range[0]) & (freqs <= freq_range[1])
    if not np.any(sel):
        raise ValueError("no FFT bins inside the requested frequency range")

    starts = np.arange(0, n - w + 1, hop)
    centers = t0 + (starts + (w - 1) / 2.0) / rate
    base_frames = (centers >= baseline_s[0] - 1e-12) & (centers <= baseline_s[1] + 1e-12)
    if not np.any(base_frames):
        raise ValueError("no analysis frame falls inside the baseline interval")

    p_sum = np.zeros((int(sel.sum()), len(starts)))
    base_sum = np.zeros(int(sel.sum()))
    for t in trials:
        p = _stft_power(np.asarray(t.data[channel], dtype=np.float64), w, hop, nfft, win)[sel]
        p_sum += p
        base_sum += p[:, base_frames].mean(axis=1)
    p_mean = p_sum / len(trials)
    base_mean = base_sum / len(trials)
    if np.any(base_mean <= 0):
        raise ValueError("baseline power is zero at some frequency; ratio undefined")

    values = 10.0 * np.log10(p_mean / base_mean[:, None])
    out_times = np.linspace(centers[0], centers[-1], n_times)
    resampled = np.empty((values.shape[0], n_times))
    for i in range(values.shape[0]):
        resampled[i] = np.interp(out_times, centers, values[i])
    return TimeFreqMap(freqs_hz=freqs[sel], times_s=out_times, values_db=resampled)


def notch_60hz(x: np.ndarray, rate_hz: float) -> np.ndarray:
    """Second-order IIR notch at 60 Hz with a 2 Hz (-3 dB) width."""
    if rate_hz <= 120.0:
        raise ConfigError("60 Hz notch needs a sampling rate above 120 Hz")
    b, a = sp_signal.iirnotch(60.0, Q=30.0, fs=rate_hz)
    return sp_signal.lfilter(b, a, np.asarray(x, dtype=np.float64), axis=-1)


def preprocess_dataset(
    dataset: Dataset,
    band: tuple[float, float] = (0.5, 13.0),
    target_rate_hz: float = 250.0,
    fir_order: int = 30,
) -> Dataset:
    """Downsample then band-pass every trial; the standard pipeline front end."""
    if not dataset.trials:
        return dataset
    rate = dataset.rate_hz
    factor = _check_factor(rate, target_rate_hz)
    bp = design_fir_bandpass(fir_order, band[0], band[1], target_rate_hz)
    out = []
    for t in dataset.trials:
        data = t.data
        if factor != 1:
            data = downsample_array(data, rate, target_rate_hz)
        data = filtfilt(np.asarray(data, dtype=np.float64), bp)
        out.append(
            Trial(
                label=t.label,
                data=data.astype(np.float32),
                rate_hz=float(target_rate_hz),
                subject_id=t.subject_id,
                trial_id=t.trial_id,
                t0_s=t.t0_s,
                source_trial_id=t.source_trial_id,
            )
        )
    return Dataset(subject_id=dataset.subject_id, trials=tuple(out), montage=dataset.montage)


def write_psd_csv(freqs: np.ndarray, powers: dict[str, np.ndarray], path) -> None:
    """Write PSD curves as CSV: one frequency column, one column per label."""
    names = list(powers)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["freq_hz"] + names)
        for i, fr in enumerate(freqs):
            w.writerow([repr(float(fr))] + [repr(float(powers[n][i])) for n in names])


def write_timefreq_csv(tf: TimeFreqMap, path) -> None:
    """Write a time-frequency map as CSV: freq rows x time columns."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["freq_hz"] + [repr(float(t)) for t in tf.times_s])
        for i, fr in enumerate(tf.freqs_hz):
            w.writerow([repr(float(fr))] + [repr(float(v)) for v in tf.values_db[i]])
