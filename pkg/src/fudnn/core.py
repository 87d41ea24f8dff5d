"""Domain model for multichannel EEG: montage, recordings, trials, datasets.

Sample values are stored as float32 microvolts throughout so that the
on-disk container round-trips bit-exactly. All containers are immutable
by convention: operations return new objects and never mutate inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "ClassLabel",
    "CLASS_SETS",
    "Montage",
    "DEFAULT_MONTAGE",
    "Recording",
    "Trial",
    "Dataset",
    "epoch",
    "split_trials",
]


class ClassLabel(enum.Enum):
    """Imagery task labels: phone pickup, water pouring, door opening, eating."""

    PP = "PP"
    PW = "PW"
    OD = "OD"
    EF = "EF"

    def __str__(self) -> str:
        return self.value


# Fixed class subsets for the 2-, 3-, and 4-way decoding problems.
CLASS_SETS: dict[int, tuple[ClassLabel, ...]] = {
    2: (ClassLabel.PW, ClassLabel.EF),
    3: (ClassLabel.PW, ClassLabel.OD, ClassLabel.EF),
    4: (ClassLabel.PP, ClassLabel.PW, ClassLabel.OD, ClassLabel.EF),
}


def _expand_10_20(groups: list[str]) -> list[str]:
    out: list[str] = []
    for g in groups:
        if "-" in g and g[-1].isdigit():
            stem = g.rstrip("0123456789-")
            lo_s, hi_s = g[len(stem):].split("-")
            for i in range(int(lo_s), int(hi_s) + 1):
                out.append(f"{stem}{i}")
        else:
            out.append(g)
    return out


# 64-channel 10-20 cap. The bracketed ranges expand to 60 names; the four
# temporal extension sites bring the count to the full 64 electrodes.
_MONTAGE_64 = _expand_10_20([
    "Fp1-2", "AF5-6", "AF7-8", "AFz", "F1-8", "Fz", "FT7-8", "FC1-6",
    "T7-8", "C1-6", "Cz", "TP7-8", "CP1-6", "CPz", "P1-8", "Pz",
    "PO3-4", "PO7-8", "POz", "O1-2", "Oz", "Iz",
]) + ["FT9", "FT10", "TP9", "TP10"]


@dataclass(frozen=True)
class Montage:
    """Ordered channel layout.

    Attributes:
        labels: channel names in recording order (length K).
        reference_note: free-text description of ground/reference placement.
    """

    labels: tuple[str, ...]
    reference_note: str = ""

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("montage needs at least 2 channels")
        if len(set(labels)) != len(labels):
            raise ValueError("montage labels must be unique")

    @property
    def n_channels(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"channel {label!r} not in montage") from None


DEFAULT_MONTAGE = Montage(
    labels=tuple(_MONTAGE_64),
    reference_note="ground Fpz, reference FCz",
)


def _as_samples(data, n_channels=None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"samples must be 2-D [channels x time], got shape {arr.shape}")
    if n_channels is not None and arr.shape[0] != n_channels:
        raise ValueError(
            f"samples have {arr.shape[0]} rows but montage has {n_channels} channels"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain non-finite values")
    return arr


@dataclass(frozen=True)
class Recording:
    """A continuous multichannel recording with event markers.

    Attributes:
        montage: channel layout; ``samples`` row order follows it.
        rate_hz: sampling rate in samples/second.
        samples: float32 array [K x T_total], microvolts.
        markers: (sample_index, event_code) pairs, sorted by index.
    """

    montage: Montage
    rate_hz: float
    samples: np.ndarray
    markers: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        samples = _as_samples(self.samples, self.montage.n_channels)
        object.__setattr__(self, "samples", samples)
        markers = tuple((int(i), int(c)) for i, c in self.markers)
        for i, _ in markers:
            if not 0 <= i < samples.shape[1]:
                raise ValueError(f"marker index {i} outside recording of {samples.shape[1]} samples")
        if any(markers[j][0] > markers[j + 1][0] for j in range(len(markers) - 1)):
            raise ValueError("markers must be sorted by sample index")
        object.__setattr__(self, "markers", markers)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.rate_hz


@dataclass(frozen=True)
class Trial:
    """One labelled imagery segment.

    ``t0_s`` is the time of the first sample relative to imagery onset
    (negative when the trial carries pre-onset baseline). ``source_trial_id``
    tracks provenance for segments cut out of a parent trial, e.g. sliding
    windows; it stays None for trials epoched directly from a recording.
    """

    label: ClassLabel
    data: np.ndarray
    rate_hz: float
    subject_id: str = ""
    trial_id: int = 0
    t0_s: float = 0.0
    source_trial_id: int | None = None

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if not isinstance(self.label, ClassLabel):
            object.__setattr__(self, "label", ClassLabel(self.label))
        object.__setattr__(self, "data", _as_samples(self.data))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.rate_hz


@dataclass(frozen=True)
class Dataset:
    """All trials of one subject, sharing a montage and sampling rate."""

    subject_id: str
    trials: tuple[Trial, ...]
    montage: Montage

    def __post_init__(self):
        trials = tuple(self.trials)
        object.__setattr__(self, "trials", trials)
        k = self.montage.n_channels
        ids = set()
        for t in trials:
            if t.n_channels != k:
                raise ValueError(
                    f"trial {t.trial_id} has {t.n_channels} channels, montage has {k}"
                )
            if trials and abs(t.rate_hz - trials[0].rate_hz) > 1e-9:
                raise ValueError("all trials in a dataset must share one sampling rate")
            if t.trial_id in ids:
                raise ValueError(f"duplicate trial_id {t.trial_id}")
            ids.add(t.trial_id)

    @property
    def rate_hz(self) -> float:
        if not self.trials:
            raise ValueError("empty dataset has no rate")
        return self.trials[0].rate_hz

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    def labels_present(self) -> tuple[ClassLabel, ...]:
        seen = {t.label for t in self.trials}
        return tuple(l for l in ClassLabel if l in seen)

    def filter_classes(self, classes) -> "Dataset":
        keep = set(classes)
        return Dataset(
            subject_id=self.subject_id,
            trials=tuple(t for t in self.trials if t.label in keep),
            montage=self.montage,
        )


def epoch(
    recording: Recording,
    event_codes,
    offset_s: float,
    length_s: float,
    label_map: dict,
    subject_id: str = "",
) -> list[Trial]:
    """Cut labelled trials out of a continuous recording at event markers.

    Parameters
    ----------
    recording : Recording
    event_codes : int, iterable of int, or None
        Marker codes to epoch on; None epochs every marker.
    offset_s : float
        Window start relative to the marker (negative = before it).
    length_s : float
        Window length in seconds.
    label_map : dict
        Maps event code -> ClassLabel (or its string value).

    Returns
    -------
    list of Trial, one per matching marker, in marker order. ``t0_s`` of
    each trial equals ``offset_s``.
    """
    if event_codes is None:
        codes = None
    elif np.isscalar(event_codes):
        codes = {int(event_codes)}
    else:
        codes = {int(c) for c in event_codes}

    n_len = int(round(length_s * recording.rate_hz))
    if n_len <= 0:
        raise ValueError("length_s must span at least one sample")
    n_off = int(round(offset_s * recording.rate_hz))

    trials = []
    for idx, code in recording.markers:
        if codes is not None and code not in codes:
            continue
        if code not in label_map:
            raise KeyError(f"event code {code} has no entry in label_map")
        start = idx + n_off
        stop = start + n_len
        if start < 0 or stop > recording.n_samples:
            raise ValueError(
                f"epoch window [{start}, {stop}) at marker {idx} is outside the "
                f"recording of {recording.n_samples} samples"
            )
        trials.append(
            Trial(
                label=ClassLabel(label_map[code]),
                data=recording.samples[:, start:stop].copy(),
                rate_hz=recording.rate_hz,
                subject_id=subject_id,
                trial_id=len(trials),
                t0_s=offset_s,
            )
        )
    return trials


def split_trials(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified random split at trial granularity.

    ``fraction`` is the training share. Per class, round((1-fraction)*n)
    trials go to the test side, so per-class counts deviate from the exact
    proportion by at most one trial. Deterministic for a fixed seed.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError("fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)

    by_class: dict[ClassLabel, list[Trial]] = {}
    for t in sorted(dataset.trials, key=lambda t: t.trial_id):
        by_class.setdefault(t.label, []).append(t)

    train, test = [], []
    for label in ClassLabel:
        if label not in by_class:
            continue
        pool = by_class[label]
        n_test = int(round((1.0 - fraction) * len(pool)))
        if n_test == 0 or n_test == len(pool):
            raise ConfigError(
                f"class {label}: {len(pool)} trials cannot yield a non-empty "
                f"train/test split at fraction {fraction}"
            )
        order = rng.permutation(len(pool))
        test.extend(pool[i] for i in order[:n_test])
        train.extend(pool[i] for i in order[n_test:])

    key = lambda t: t.trial_id
    return (
        Dataset(dataset.subject_id, tuple(sorted(train, key=key)), dataset.montage),
        Dataset(dataset.subject_id, tuple(sorted(test, key=key)), dataset.montage),
    )
