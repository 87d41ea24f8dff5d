"""Synthetic phase-locked EEG with known ground truth.

Each class plants one or more sources: a group of channels sharing a
band-limited carrier (common phase within the group, random per trial)
plus independent channel noise. Coupling interpolates between a fully
shared carrier (PLV 1 within the group) and fully independent wideband
activity (PLV at the finite-sample floor). Subjects share the group
topology but jitter the per-channel amplitudes, so cross-subject transfer
is learnable without being trivial.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .core import CLASS_SETS, DEFAULT_MONTAGE, ClassLabel, Dataset, Montage, Recording, Trial
from .errors import ConfigError

__all__ = [
    "DELTA_BAND",
    "ALPHA_BAND",
    "FRONTAL_GROUP",
    "OCCIPITAL_GROUP",
    "SourceSpec",
    "SynthSpec",
    "default_spec",
    "generate",
    "make_recording",
    "oracle_separability",
]

DELTA_BAND = (0.5, 4.0)
ALPHA_BAND = (8.0, 13.0)

FRONTAL_GROUP = ("Fp1", "Fp2", "AF5", "AF6", "AF7", "AF8", "AFz", "Fz")
OCCIPITAL_GROUP = ("PO3", "PO4", "PO7", "PO8", "POz", "O1", "O2", "Oz")


@dataclass(frozen=True)
class SourceSpec:
    """One coherent source: which channels, which band, how tightly locked.

    With ``alternating`` every second listed channel receives the carrier
    sign-flipped. That leaves every per-channel spectrum (and the
    phase-locking modulus) unchanged but reverses the cross-channel phase
    relation, so it is invisible to any model without cross-channel
    interactions.
    """

    channels: tuple[str, ...]
    band: tuple[float, float]
    coupling: float = 1.0
    amplitude: float = 1.0
    alternating: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "band", (float(self.band[0]), float(self.band[1])))
        if not 0.0 <= self.coupling <= 1.0:
            raise ConfigError("coupling must lie in [0, 1]")
        if not 0.0 < self.band[0] < self.band[1]:
            raise ConfigError("band must satisfy 0 < low < high")

    def polarity(self, index: int) -> float:
        return -1.0 if self.alternating and index % 2 else 1.0


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters; deterministic for a fixed seed."""

    n_subjects: int = 1
    n_trials_per_class: int = 50
    rate_hz: float = 250.0
    duration_s: float = 5.0
    montage: Montage = DEFAULT_MONTAGE
    class_sources: dict = field(default_factory=dict)
    noise_sd: float = 1.0
    seed: int = 0
    subject_jitter_sd: float = 0.0
    pink_noise: bool = False

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_trials_per_class < 1:
            raise ConfigError("need at least one subject and one trial per class")
        if self.rate_hz <= 0 or self.duration_s <= 0:
            raise ConfigError("rate_hz and duration_s must be positive")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be non-negative")
        srcs = {}
        for label, sources in self.class_sources.items():
            label = ClassLabel(label) if not isinstance(label, ClassLabel) else label
            srcs[label] = tuple(sources)
            for s in srcs[label]:
                for ch in s.channels:
                    self.montage.index(ch)  # raises for unknown channels
                if s.band[1] >= self.rate_hz / 2:
                    raise ConfigError(f"source band {s.band} exceeds Nyquist")
        object.__setattr__(self, "class_sources", srcs)

    @property
    def classes(self) -> tuple[ClassLabel, ...]:
        return tuple(l for l in ClassLabel if l in self.class_sources)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.rate_hz))

    def to_json_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "n_trials_per_class": self.n_trials_per_class,
            "rate_hz": self.rate_hz,
            "duration_s": self.duration_s,
            "montage": {
                "labels": list(self.montage.labels),
                "reference_note": self.montage.reference_note,
            },
            "classes": {
                label.value: [
                    {
                        "channels": list(s.channels),
                        "band": list(s.band),
                        "coupling": s.coupling,
                        "amplitude": s.amplitude,
                        "alternating": s.alternating,
                    }
                    for s in sources
                ]
                for label, sources in self.class_sources.items()
            },
            "noise_sd": self.noise_sd,
            "seed": self.seed,
            "subject_jitter_sd": self.subject_jitter_sd,
            "pink_noise": self.pink_noise,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SynthSpec":
        montage = DEFAULT_MONTAGE
        if d.get("montage"):
            montage = Montage(
                labels=tuple(d["montage"]["labels"]),
                reference_note=d["montage"].get("reference_note", ""),
            )
        sources = {
            ClassLabel(label): [
                SourceSpec(
                    channels=tuple(s["channels"]),
                    band=tuple(s["band"]),
                    coupling=s.get("coupling", 1.0),
                    amplitude=s.get("amplitude", 1.0),
                    alternating=s.get("alternating", False),
                )
                for s in lst
            ]
            for label, lst in d.get("classes", {}).items()
        }
        return cls(
            n_subjects=int(d.get("n_subjects", 1)),
            n_trials_per_class=int(d.get("n_trials_per_class", 50)),
            rate_hz=float(d.get("rate_hz", 250.0)),
            duration_s=float(d.get("duration_s", 5.0)),
            montage=montage,
            class_sources=sources,
            noise_sd=float(d.get("noise_sd", 1.0)),
            seed=int(d.get("seed", 0)),
            subject_jitter_sd=float(d.get("subject_jitter_sd", 0.0)),
            pink_noise=bool(d.get("pink_noise", False)),
        )

    @classmethod
    def from_json_file(cls, path) -> "SynthSpec":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def default_spec(n_classes: int = 4, *, n_subjects: int = 1,
                 n_trials_per_class: int = 50, rate_hz: float = 250.0,
                 amplitude: float = 1.5, coupling: float = 0.95,
                 noise_sd: float = 1.0, seed: int = 0,
                 subject_jitter_sd: float = 0.1) -> SynthSpec:
    """High-SNR reference spec: alpha sources crossed over (frontal vs
    occipital) location and (in-phase vs alternating) group polarity.

    The crossing is chosen so that each decoder stage contributes: a
    purely linear model sees nothing (carriers have random trial phase),
    per-channel band power resolves only the location axis, and the
    polarity axis requires cross-channel interactions (the depthwise stage
    or the connectivity weighting).
    """
    recipes = {
        ClassLabel.PP: (FRONTAL_GROUP, False),
        ClassLabel.PW: (OCCIPITAL_GROUP, False),
        ClassLabel.OD: (FRONTAL_GROUP, True),
        ClassLabel.EF: (OCCIPITAL_GROUP, True),
    }
    sources = {
        label: [SourceSpec(channels=grp, band=ALPHA_BAND, coupling=coupling,
                           amplitude=amplitude, alternating=alt)]
        for label, (grp, alt) in recipes.items()
        if label in CLASS_SETS[n_classes]
    }
    return SynthSpec(
        n_subjects=n_subjects,
        n_trials_per_class=n_trials_per_class,
        rate_hz=rate_hz,
        class_sources=sources,
        noise_sd=noise_sd,
        seed=seed,
        subject_jitter_sd=subject_jitter_sd,
    )


def _band_noise(rng, n: int, band: tuple[float, float], rate_hz: float) -> np.ndarray:
    """Unit-RMS noise confined to a frequency band (random phase per draw)."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    x = np.fft.irfft(spec, n=n)
    rms = np.sqrt(np.mean(x * x))
    if rms == 0:
        raise ConfigError(f"band {band} contains no FFT bins at {n} samples, {rate_hz} Hz")
    return x / rms


def _noise(rng, shape, sd: float, pink: bool, rate_hz: float) -> np.ndarray:
    if sd == 0:
        return np.zeros(shape)
    white = rng.standard_normal(shape)
    if not pink:
        return sd * white
    spec = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(shape[-1], d=1.0 / rate_hz)
    weight = np.zeros_like(freqs)
    weight[1:] = 1.0 / np.sqrt(freqs[1:])
    spec *= weight
    x = np.fft.irfft(spec, n=shape[-1], axis=-1)
    rms = np.sqrt(np.mean(x * x, axis=-1, keepdims=True))
    return sd * x / np.maximum(rms, 1e-30)


def _subject_gains(spec: SynthSpec, rng) -> dict:
    """Per-(class, source, channel) amplitude factors for one subject."""
    gains = {}
    for label in spec.classes:
        for si, src in enumerate(spec.class_sources[label]):
            z = rng.standard_normal(len(src.channels))
            gains[(label, si)] = np.exp(spec.subject_jitter_sd * z)
    return gains


def _render_sources(spec: SynthSpec, label: ClassLabel, gains: dict, rng,
                    n: int) -> np.ndarray:
    """Source mix for one trial: (K, n), without sensor noise."""
    k = spec.montage.n_channels
    mix = np.zeros((k, n))
    for si, src in enumerate(spec.class_sources[label]):
        carrier = _band_noise(rng, n, src.band, spec.rate_hz)
        root_c = np.sqrt(src.coupling)
        root_i = np.sqrt(1.0 - src.coupling)
        for ci, ch in enumerate(src.channels):
            idx = spec.montage.index(ch)
            sig = (root_c * src.polarity(ci)) * carrier
            if root_i > 0:
                private = rng.standard_normal(n)
                sig = sig + root_i * private
            mix[idx] += src.amplitude * gains[(label, si)][ci] * sig
    return mix


def generate(spec: SynthSpec) -> list[Dataset]:
    """One Dataset per subject; fully determined by ``spec.seed``."""
    if not spec.class_sources:
        raise ConfigError("spec defines no classes")
    root = np.random.SeedSequence(spec.seed)
    subject_seqs = root.spawn(spec.n_subjects)
    n = spec.n_samples
    datasets = []
    for s_idx, s_seq in enumerate(subject_seqs):
        jitter_seq, trial_root = s_seq.spawn(2)
        gains = _subject_gains(spec, np.random.default_rng(jitter_seq))
        trial_seqs = trial_root.spawn(len(spec.classes) * spec.n_trials_per_class)
        trials = []
        tid = 0
        for label in spec.classes:
            for _ in range(spec.n_trials_per_class):
                rng = np.random.default_rng(trial_seqs[tid])
                data = _noise(rng, (spec.montage.n_channels, n), spec.noise_sd,
                              spec.pink_noise, spec.rate_hz)
                data += _render_sources(spec, label, gains, rng, n)
                trials.append(
                    Trial(
                        label=label,
                        data=data.astype(np.float32),
                        rate_hz=spec.rate_hz,
                        subject_id=f"sub{s_idx + 1:02d}",
                        trial_id=tid,
                    )
                )
                tid += 1
        datasets.append(
            Dataset(subject_id=f"sub{s_idx + 1:02d}", trials=tuple(trials),
                    montage=spec.montage)
        )
    return datasets


def make_recording(spec: SynthSpec, subject_index: int = 0,
                   gap_s: float = 2.0) -> tuple[Recording, dict]:
    """Render one subject as a continuous recording with event markers.

    Trials are laid end to end over a continuous noise background with
    ``gap_s`` of plain noise between onsets, one marker per onset. Returns
    the recording plus the event-code -> class-label map needed to epoch it.
    """
    if not spec.class_sources:
        raise ConfigError("spec defines no classes")
    root = np.random.SeedSequence((spec.seed, 7))
    s_seq = root.spawn(spec.n_subjects)[subject_index]
    jitter_seq, trial_root = s_seq.spawn(2)
    gains = _subject_gains(spec, np.random.default_rng(jitter_seq))

    n = spec.n_samples
    gap = int(round(gap_s * spec.rate_hz))
    order = []
    for label in spec.classes:
        order.extend([label] * spec.n_trials_per_class)
    total = gap + len(order) * (n + gap)

    noise_rng = np.random.default_rng(trial_root.spawn(1)[0])
    data = _noise(noise_rng, (spec.montage.n_channels, total), spec.noise_sd,
                  spec.pink_noise, spec.rate_hz)
    label_codes = {label: i + 1 for i, label in enumerate(spec.classes)}
    markers = []
    trial_seqs = trial_root.spawn(len(order) + 1)[1:]
    pos = gap
    for i, label in enumerate(order):
        rng = np.random.default_rng(trial_seqs[i])
        data[:, pos:pos + n] += _render_sources(spec, label, gains, rng, n)
        markers.append((pos, label_codes[label]))
        pos += n + gap
    rec = Recording(
        montage=spec.montage,
        rate_hz=spec.rate_hz,
        samples=data.astype(np.float32),
        markers=tuple(markers),
    )
    label_map = {code: label for label, code in label_codes.items()}
    return rec, label_map


def _template_features(data: np.ndarray, combos, montage: Montage,
                       rate_hz: float) -> np.ndarray:
    """Per (group, band) combo: mean band power and mean pairwise correlation.

    The correlation term is computed on the band-limited signals and is
    signed, so it separates in-phase from alternating-polarity groups that
    share identical per-channel spectra.
    """
    x = np.asarray(data, dtype=np.float64)
    spec = np.fft.rfft(x, axis=1)
    freqs = np.fft.rfftfreq(x.shape[1], d=1.0 / rate_hz)
    power = spec.real ** 2 + spec.imag ** 2
    feats = []
    for channels, band in combos:
        idx = [montage.index(c) for c in channels]
        sel = (freqs >= band[0]) & (freqs <= band[1])
        feats.append(power[np.ix_(idx, np.flatnonzero(sel))].mean())
        masked = np.zeros_like(spec[idx])
        masked[:, sel] = spec[np.ix_(idx, np.flatnonzero(sel))]
        narrow = np.fft.irfft(masked, n=x.shape[1], axis=1)
        norms = np.sqrt(np.sum(narrow * narrow, axis=1))
        norms = np.maximum(norms, 1e-30)
        unit = narrow / norms[:, None]
        gram = unit @ unit.T
        pairs = gram[np.triu_indices(len(idx), k=1)]
        feats.append(float(pairs.mean()))
    return np.asarray(feats)


def oracle_separability(spec: SynthSpec, n_draws: int = 2000, seed: int | None = None) -> float:
    """Monte-Carlo accuracy of a generative-template classifier.

    The classifier knows the generative structure: for every (channel
    group, band) combination used by any class it measures the mean band
    power and the mean signed within-group correlation (the statistic that
    separates polarity patterns). Half the draws fit per-class feature
    centroids, the other half are classified by the nearest centroid. This
    is an upper reference for what the trained decoder can reach on the
    same spec.
    """
    classes = spec.classes
    if not classes:
        raise ConfigError("spec defines no classes")
    combos = sorted(
        {(s.channels, s.band) for lst in spec.class_sources.values() for s in lst}
    )
    per_class = max(2, int(np.ceil(n_draws / len(classes))))
    mc = dataclasses.replace(
        spec,
        n_subjects=1,
        n_trials_per_class=per_class,
        subject_jitter_sd=0.0,
        seed=spec.seed if seed is None else seed,
    )
    trials = generate(mc)[0].trials
    feats = {label: [] for label in classes}
    for t in trials:
        feats[t.label].append(
            _template_features(t.data, combos, spec.montage, spec.rate_hz)
        )
    half = per_class // 2
    train_pool = np.asarray([f for label in classes for f in feats[label][:half]])
    scale = np.maximum(train_pool.std(axis=0), 1e-30)
    centroids = {
        label: np.mean(np.asarray(f[:half]), axis=0) / scale
        for label, f in feats.items()
    }
    hits = 0
    total = 0
    for label in classes:
        for f in feats[label][half:]:
            fs = f / scale
            d = {c: float(np.sum((fs - mu) ** 2)) for c, mu in centroids.items()}
            best = min(classes, key=lambda c: d[c])
            hits += best == label
            total += 1
    return hits / total
