"""Spectral verification tools: Welch PSD and event-related perturbation.

PSD shows where each channel carries power; ERSP shows when band power
rises relative to a pre-onset baseline. Both export plot-ready CSV (one
frequency column, one column per channel / time point).

Run:  python demos/06_spectral_analysis.py
"""

import numpy as np

from fudnn.core import epoch
from fudnn.dsp import ersp, psd_welch, write_psd_csv, write_timefreq_csv
from fudnn.synthgen import default_spec, generate, make_recording

spec = default_spec(4, n_trials_per_class=8, seed=5)

# PSD per channel, averaged over trials of one subject.
ds = generate(spec)[0]
channels = ("Fz", "Cz", "Oz")
powers = {}
freqs = None
for label in channels:
    ch = ds.montage.index(label)
    acc = None
    for t in ds.trials:
        freqs, p = psd_welch(t.data[ch].astype(np.float64), ds.rate_hz, seg_len=500)
        acc = p if acc is None else acc + p
    powers[label] = acc / ds.n_trials

alpha = (freqs >= 8) & (freqs <= 13)
for label in channels:
    print(f"{label}: mean alpha-band power {powers[label][alpha].mean():8.3f}")
write_psd_csv(freqs, powers, "/tmp/demo_psd.csv")
print("PSD written to /tmp/demo_psd.csv")

# ERSP needs pre-onset baseline: epoch a continuous recording with offset.
rec, label_map = make_recording(spec, gap_s=2.0)
trials = epoch(rec, None, offset_s=-0.5, length_s=5.5, label_map=label_map)
oz_trials = [t for t in trials if t.label.value == "PW"]  # occipital alpha class
tf = ersp(oz_trials, channel=rec.montage.index("Oz"), baseline_s=(-0.5, 0.0))
band = (tf.freqs_hz >= 8) & (tf.freqs_hz <= 13)
late = tf.times_s > 0.5
print(f"\nERSP on Oz during occipital-alpha imagery: "
      f"{tf.values_db[np.ix_(band, late)].mean():+.1f} dB in 8-13 Hz after onset")
write_timefreq_csv(tf, "/tmp/demo_ersp.csv")
print("ERSP written to /tmp/demo_ersp.csv "
      f"({len(tf.freqs_hz)} frequencies x {len(tf.times_s)} time points)")
