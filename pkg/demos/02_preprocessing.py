"""The preprocessing front end: downsample, zero-phase band-pass, windows.

Mirrors the standard pipeline: 1,000 Hz raw trials are decimated to 250 Hz
behind an anti-alias low-pass, band-passed 0.5-13 Hz with an order-30
Hamming windowed-sinc applied forward-backward, then cut into 2 s windows
with 50% overlap (4 windows per 5 s trial).

Run:  python demos/02_preprocessing.py
"""

import numpy as np

from fudnn.dsp import design_fir_bandpass, filtfilt, preprocess_dataset, sliding_windows
from fudnn.synthgen import default_spec, generate

spec = default_spec(4, n_trials_per_class=5, rate_hz=1000.0, seed=0)
ds = generate(spec)[0]
print(f"raw: {ds.n_trials} trials, {ds.trials[0].n_samples} samples at {ds.rate_hz:.0f} Hz")

pre = preprocess_dataset(ds, band=(0.5, 13.0), target_rate_hz=250.0, fir_order=30)
print(f"preprocessed: {pre.trials[0].n_samples} samples at {pre.rate_hz:.0f} Hz")

windows = [w for t in pre.trials for w in sliding_windows(t, window_s=2.0, overlap=0.5)]
print(f"windows: {len(windows)} of shape {windows[0].data.shape} "
      f"({len(windows) // pre.n_trials} per trial)")

# Zero phase: a band-limited tone passes without any lag.
fir = design_fir_bandpass(30, 0.5, 13.0, 250.0)
t = np.arange(1000) / 250.0
tone = np.sin(2 * np.pi * 8.0 * t)
out = filtfilt(tone, fir)
lag = int(np.argmax(np.correlate(out, tone, mode="full"))) - (len(tone) - 1)
print(f"\n8 Hz tone through forward-backward filter: lag = {lag} samples, "
      f"gain = {np.max(np.abs(out[200:-200])):.3f}")
print(f"DC gain of the design: {fir.gain_at(0.0):.2e} (exact null)")
