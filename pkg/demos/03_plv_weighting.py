"""Phase-locking-value connectivity and the channel weight vector.

Phases come from the analytic signal of each window; the PLV of a channel
pair is the modulus of the mean unit phasor of their phase difference,
averaged jointly over windows and time. Folding the upper-triangular
matrix symmetric, summing per channel and min-max normalizing gives the
weight vector that multiplies the channel axis of the network input.

Run:  python demos/03_plv_weighting.py
"""

import numpy as np

from fudnn.connectivity import (
    apply_weights,
    channel_strengths,
    minmax_normalize,
    pairwise_plv,
    phases_from_windows,
    symmetrize,
    threshold_edges,
)
from fudnn.experiment import windows_for_trials
from fudnn.synthgen import FRONTAL_GROUP, OCCIPITAL_GROUP, default_spec, generate

spec = default_spec(4, n_trials_per_class=10, seed=3)
ds = generate(spec)[0]
windows = windows_for_trials(ds.trials)
print(f"{len(windows)} windows from {ds.n_trials} trials")

phases = phases_from_windows(windows)
plv = pairwise_plv(phases)
sym = symmetrize(plv)
weights = minmax_normalize(channel_strengths(sym))

frontal = [ds.montage.index(c) for c in FRONTAL_GROUP]
occipital = [ds.montage.index(c) for c in OCCIPITAL_GROUP]
rest = [i for i in range(64) if i not in frontal + occipital]
print(f"mean weight: frontal {weights.w[frontal].mean():.3f}, "
      f"occipital {weights.w[occipital].mean():.3f}, "
      f"noise channels {weights.w[rest].mean():.3f}")

edges = threshold_edges(sym, threshold=0.9)
print(f"\n{len(edges)} edges above 0.9; strongest five:")
for k1, k2, v in edges[:5]:
    print(f"  {ds.montage.labels[k1]:5s} - {ds.montage.labels[k2]:5s}  {v:.3f}")

weighted = apply_weights(ds.trials[0].data, weights)
print(f"\nweighting scales the channel axis: "
      f"rms(Cz) {np.std(ds.trials[0].data[ds.montage.index('Cz')]):.2f} -> "
      f"{np.std(weighted[ds.montage.index('Cz')]):.2f}")
