"""EEG decoding with phase-locking-value channel weighting.

The package covers the full pipeline: synthetic ground-truth generation,
preprocessing (downsample, zero-phase band-pass, sliding windows),
PLV-based functional-connectivity channel weighting, a CNN-BiLSTM decoder
on a from-scratch reverse-mode engine, and the evaluation protocols
(stratified k-fold, layer ablation, leave-one-subject-out, paired
permutation testing).
"""

__version__ = "0.1.0"

from .core import (
    CLASS_SETS,
    DEFAULT_MONTAGE,
    ClassLabel,
    Dataset,
    Montage,
    Recording,
    Trial,
    epoch,
    split_trials,
)
from .eegc import load_csv_recording, load_eegc, save_csv_recording, save_eegc
from .errors import ConfigError, FormatError, NumericError

__all__ = [
    "__version__",
    "CLASS_SETS",
    "DEFAULT_MONTAGE",
    "ClassLabel",
    "Dataset",
    "Montage",
    "Recording",
    "Trial",
    "epoch",
    "split_trials",
    "load_eegc",
    "save_eegc",
    "load_csv_recording",
    "save_csv_recording",
    "ConfigError",
    "FormatError",
    "NumericError",
]
