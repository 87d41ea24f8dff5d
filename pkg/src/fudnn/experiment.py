"""Evaluation protocols: stratified folds, subject-dependent training,
layer-wise ablation, leave-one-subject-out transfer, and the paired
permutation test.

Splits always happen at trial granularity; windows are cut (or grouped)
only after a trial has been assigned to exactly one side, so no window of
a held-out trial can reach training. Channel weights are fit on the
training windows of each fold and frozen before touching test data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .connectivity import apply_weights, fit_weights
from .core import CLASS_SETS, ClassLabel, Dataset
from .dsp import Window, sliding_windows
from .errors import ConfigError
from .nn import Network, NetworkSpec, evaluate, train_network

__all__ = [
    "ExperimentConfig",
    "Metrics",
    "make_folds",
    "windows_for_trials",
    "windows_from_container",
    "windows_to_arrays",
    "run_subject_dependent",
    "run_ablation",
    "run_loso",
    "permutation_test",
    "write_results_csv",
    "write_summary_json",
]

_VARIANT_ALIASES = {
    "cnn-i": "cnn1", "cnn-ii": "cnn2", "cnn-iii": "cnn3",
    "cnn1": "cnn1", "cnn2": "cnn2", "cnn3": "cnn3", "fudnn": "fudnn",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a protocol run, including network size.

    The architecture defaults match the full-size decoder; ``desk_scale``
    shrinks the feature maps and hidden units (same layer kinds and kernel
    sizes) so that complete protocol runs finish in minutes on one core.
    """

    class_set: int = 4
    folds: int = 5
    seed: int = 0
    variant: str = "fudnn"
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    window_s: float = 2.0
    overlap: float = 0.5
    conv1_maps: int = 40
    conv2_maps: int = 80
    kernel_len: int = 50
    pool_len: int = 7
    dropout_p: float = 0.5
    lstm_hidden: int = 100
    shuffle_labels: bool = False

    def __post_init__(self):
        if self.class_set not in CLASS_SETS:
            raise ConfigError(f"class_set must be one of {sorted(CLASS_SETS)}")
        v = _VARIANT_ALIASES.get(str(self.variant).lower())
        if v is None:
            raise ConfigError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if self.folds < 2:
            raise ConfigError("need at least 2 folds")
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigError("epochs must be >= 1 and batch_size >= 2")

    @property
    def classes(self) -> tuple[ClassLabel, ...]:
        return CLASS_SETS[self.class_set]

    @property
    def uses_channel_weights(self) -> bool:
        # PLV weighting is the full model's addition; ablation prefixes run raw.
        return self.variant == "fudnn"

    def network_spec(self, n_channels: int, n_samples: int) -> NetworkSpec:
        return NetworkSpec(
            n_channels=n_channels,
            n_samples=n_samples,
            n_classes=self.class_set,
            variant=self.variant,
            conv1_maps=self.conv1_maps,
            conv2_maps=self.conv2_maps,
            kernel_len=self.kernel_len,
            pool_len=self.pool_len,
            dropout_p=self.dropout_p,
            lstm_hidden=self.lstm_hidden,
        )

    @classmethod
    def desk_scale(cls, **overrides) -> "ExperimentConfig":
        """Down-scaled configuration for verification runs on one core."""
        base = dict(
            conv1_maps=4, conv2_maps=8, lstm_hidden=16,
            epochs=6, batch_size=16, lr=2e-3,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: config is not valid JSON ({e})") from e


@dataclass
class Metrics:
    """Per-fold accuracies with their aggregates and the summed confusion."""

    fold_accuracies: list[float]
    confusion: np.ndarray
    class_labels: tuple[str, ...]
    extra: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def sd(self) -> float:
        """Sample standard deviation over folds (the value after the +/-)."""
        if len(self.fold_accuracies) < 2:
            return 0.0
        return float(np.std(self.fold_accuracies, ddof=1))

    def summary(self) -> dict:
        return {
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "mean": self.mean,
            "sd": self.sd,
            "confusion": self.confusion.tolist(),
            "class_labels": list(self.class_labels),
            **dict(self.extra),
        }


def _stratified_partition(units: list[tuple[int, ClassLabel]], k: int, seed: int):
    """Split unit ids into k disjoint stratified test groups.

    ``units`` are (id, label) pairs. Returns a list of k sorted id lists
    covering every unit exactly once; per class the group sizes differ by
    at most one. Deterministic in ``seed``.
    """
    if k < 2:
        raise ConfigError("need at least 2 folds")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF01D)))
    by_class: dict[ClassLabel, list[int]] = {}
    for uid, label in sorted(units):
        by_class.setdefault(label, []).append(uid)
    low = min(len(v) for v in by_class.values())
    if k > low:
        raise ConfigError(
            f"{k} folds need at least {k} trials per class; smallest class has {low}"
        )
    groups = [[] for _ in range(k)]
    for label in ClassLabel:
        if label not in by_class:
            continue
        ids = by_class[label]
        order = rng.permutation(len(ids))
        for fold, chunk in enumerate(np.array_split(order, k)):
            groups[fold].extend(ids[j] for j in chunk)
    return [sorted(g) for g in groups]


def make_folds(dataset: Dataset, k: int = 5, seed: int = 0):
    """Stratified k-fold plan at trial level.

    Every trial lands in exactly one test fold; per class the test counts
    across folds differ by at most one. Returns (train_trials, test_trials)
    pairs. Deterministic for a fixed seed.
    """
    units = [(t.trial_id, t.label) for t in dataset.trials]
    by_id = {t.trial_id: t for t in dataset.trials}
    folds = []
    for test_ids in _stratified_partition(units, k, seed):
        test_set = set(test_ids)
        train = [by_id[i] for i, _ in sorted(units) if i not in test_set]
        test = [by_id[i] for i in test_ids]
        folds.append((train, test))
    return folds


def windows_for_trials(trials, window_s: float = 2.0, overlap: float = 0.5) -> list[Window]:
    out: list[Window] = []
    for t in trials:
        out.extend(sliding_windows(t, window_s=window_s, overlap=overlap))
    return out


def windows_from_container(dataset: Dataset) -> list[Window]:
    """Reinterpret a windowed EEGC dataset as Window objects.

    Each stored trial must carry ``source_trial_id`` (set by the preprocess
    step); that id is the fold-granularity unit, while the container's own
    trial_id keeps windows distinguishable.
    """
    windows = []
    for t in dataset.trials:
        if t.source_trial_id is None:
            raise ConfigError(
                f"trial {t.trial_id} has no source_trial_id; not a windowed dataset"
            )
        windows.append(
            Window(
                data=t.data,
                label=t.label,
                trial_id=int(t.source_trial_id),
                start=int(t.trial_id),
                rate_hz=t.rate_hz,
                subject_id=t.subject_id or dataset.subject_id,
            )
        )
    return windows


def _dataset_windows(dataset: Dataset, config: ExperimentConfig) -> list[Window]:
    """Windows for a dataset holding either raw trials or prebuilt windows."""
    trials = dataset.trials
    if trials and all(t.source_trial_id is not None for t in trials):
        return windows_from_container(dataset)
    return windows_for_trials(trials, config.window_s, config.overlap)


def windows_to_arrays(windows, classes, weights=None):
    """Stack windows into network input.

    Returns (x, y, keys): x is (N, 1, K, T) float32, y integer labels indexed
    into ``classes``, keys are (subject_id, trial_id, start) identity tuples
    for leakage audits. ``weights`` (ChannelWeights) multiplies the channel
    axis when given.
    """
    if not windows:
        raise ValueError("no windows to stack")
    class_index = {c: i for i, c in enumerate(classes)}
    xs = np.empty((len(windows), 1) + windows[0].data.shape, dtype=np.float32)
    ys = np.empty(len(windows), dtype=np.int64)
    keys = []
    for i, w in enumerate(windows):
        data = w.data
        if data.shape != windows[0].data.shape:
            raise ValueError("windows disagree in shape")
        if weights is not None:
            data = apply_weights(data, weights)
        xs[i, 0] = data
        ys[i] = class_index[w.label]
        keys.append((w.subject_id, w.trial_id, w.start))
    return xs, ys, keys


def _shuffle_unit_labels(windows: list[Window], seed: int) -> list[Window]:
    """Permute labels across source trials (null-hypothesis control)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5EED)))
    unit_labels = {}
    for w in windows:
        unit_labels.setdefault(w.trial_id, w.label)
    ids = sorted(unit_labels)
    labels = [unit_labels[i] for i in ids]
    perm = rng.permutation(len(ids))
    shuffled = {uid: labels[j] for uid, j in zip(ids, perm)}
    return [replace(w, label=shuffled[w.trial_id]) for w in windows]


def _fold_seeds(seed: int, fold: int) -> tuple[int, int]:
    ss = np.random.SeedSequence((seed, fold))
    a, b = ss.generate_state(2)
    return int(a), int(b)


def _units_of(windows: list[Window]) -> list[tuple[int, ClassLabel]]:
    units = {}
    for w in windows:
        if units.setdefault(w.trial_id, w.label) != w.label:
            raise ValueError(f"trial {w.trial_id} carries inconsistent labels")
    return sorted(units.items())


def _train_eval_windows(train_w, test_w, config: ExperimentConfig, fold_tag: int):
    weights = fit_weights(train_w) if config.uses_channel_weights else None
    x_tr, y_tr, keys_tr = windows_to_arrays(train_w, config.classes, weights)
    x_te, y_te, keys_te = windows_to_arrays(test_w, config.classes, weights)
    leaked = set(keys_tr) & set(keys_te)
    if leaked:
        raise AssertionError(f"{len(leaked)} windows leaked between train and test")
    net_seed, shuffle_seed = _fold_seeds(config.seed, fold_tag)
    spec = config.network_spec(x_tr.shape[2], x_tr.shape[3])
    net = Network(spec, seed=net_seed)
    train_network(
        net, x_tr, y_tr,
        epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
        beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps,
        seed=shuffle_seed,
    )
    acc, confusion, _ = evaluate(net, x_te, y_te)
    return acc, confusion, net, weights, (len(keys_tr), len(keys_te))


def run_subject_dependent(dataset: Dataset, config: ExperimentConfig,
                          return_models: bool = False):
    """Stratified k-fold evaluation on one subject.

    Accepts either raw trials (windows are cut per fold) or a windowed
    dataset from the preprocess step (windows are grouped by their source
    trial). Per fold: fit channel weights on the training windows (full
    model only), train, evaluate on the held-out trials' windows.
    """
    ds = dataset.filter_classes(config.classes)
    windows = _dataset_windows(ds, config)
    if config.shuffle_labels:
        windows = _shuffle_unit_labels(windows, config.seed)
    units = _units_of(windows)
    test_groups = _stratified_partition(units, config.folds, config.seed)

    accs, confusions, models = [], [], []
    for i, test_ids in enumerate(test_groups):
        test_set = set(test_ids)
        train_w = [w for w in windows if w.trial_id not in test_set]
        test_w = [w for w in windows if w.trial_id in test_set]
        acc, confusion, net, weights, _ = _train_eval_windows(train_w, test_w, config, i)
        accs.append(acc)
        confusions.append(confusion)
        models.append((net, weights))
    metrics = Metrics(
        fold_accuracies=accs,
        confusion=np.sum(confusions, axis=0),
        class_labels=tuple(c.value for c in config.classes),
        extra={
            "subject_id": dataset.subject_id,
            "variant": config.variant,
            "class_set": config.class_set,
            "fold_test_trials": test_groups,
        },
    )
    if return_models:
        return metrics, models
    return metrics


def run_ablation(dataset: Dataset, config: ExperimentConfig) -> dict[str, Metrics]:
    """All four stack variants under identical folds and seeds.

    The fold plan and the per-fold seeds depend only on (seed, fold), so
    every variant sees bit-identical splits; channel weighting is active
    only for the full model.
    """
    out: dict[str, Metrics] = {}
    for variant in ("cnn1", "cnn2", "cnn3", "fudnn"):
        cfg = replace(config, variant=variant)
        out[variant] = run_subject_dependent(dataset, cfg)
    fingerprint = out["fudnn"].extra["fold_test_trials"]
    for variant, metrics in out.items():
        if metrics.extra["fold_test_trials"] != fingerprint:
            raise AssertionError("fold assignment diverged across variants")
    return out


def run_loso(datasets, target_subject: str, config: ExperimentConfig,
             return_model: bool = False):
    """Leave-one-subject-out: train pooled on the others, test on the target.

    Channel weights come from the pooled training subjects only. The
    returned metrics carry a leakage audit (train/test window counts and
    their intersection, which must be empty).
    """
    subjects = {d.subject_id: d for d in datasets}
    if len(subjects) != len(list(datasets)):
        raise ConfigError("duplicate subject ids in the dataset list")
    if target_subject not in subjects:
        raise ConfigError(f"unknown target subject {target_subject!r}")
    if len(subjects) < 2:
        raise ConfigError("leave-one-subject-out needs at least 2 subjects")

    train_w: list[Window] = []
    train_ids = []
    for sid in sorted(subjects):
        if sid == target_subject:
            continue
        d = subjects[sid].filter_classes(config.classes)
        train_w.extend(_dataset_windows(d, config))
        train_ids.append(sid)
    test_w = _dataset_windows(subjects[target_subject].filter_classes(config.classes), config)

    weights = fit_weights(train_w) if config.uses_channel_weights else None
    x_tr, y_tr, keys_tr = windows_to_arrays(train_w, config.classes, weights)
    x_te, y_te, keys_te = windows_to_arrays(test_w, config.classes, weights)
    leaked = set(keys_tr) & set(keys_te)
    if leaked:
        raise AssertionError(f"{len(leaked)} windows leaked into training")

    target_index = sorted(subjects).index(target_subject)
    net_seed, shuffle_seed = _fold_seeds(config.seed, 1000 + target_index)
    spec = config.network_spec(x_tr.shape[2], x_tr.shape[3])
    net = Network(spec, seed=net_seed)
    train_network(
        net, x_tr, y_tr,
        epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
        beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps,
        seed=shuffle_seed,
    )
    acc, confusion, _ = evaluate(net, x_te, y_te)
    metrics = Metrics(
        fold_accuracies=[acc],
        confusion=confusion,
        class_labels=tuple(c.value for c in config.classes),
        extra={
            "target_subject": target_subject,
            "train_subjects": train_ids,
            "n_train_windows": len(keys_tr),
            "n_test_windows": len(keys_te),
            "leaked_windows": len(leaked),
        },
    )
    if return_model:
        return metrics, (net, weights)
    return metrics


def permutation_test(paired_a, paired_b, n_perm: int = 10000, seed: int = 0) -> float:
    """Two-sided paired permutation test on the mean difference.

    Under the null the sign of each paired difference is exchangeable; the
    p-value is the fraction of sign assignments whose |mean| reaches the
    observed one. Runs exhaustively when 2^n <= n_perm, otherwise by Monte
    Carlo with the identity assignment included, so p is always in (0, 1].
    """
    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    if len(a) == 0:
        raise ValueError("need at least one pair")
    d = a - b
    t_obs = abs(d.mean())
    n = len(d)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(d))) if n else 1.0)
    if 2 ** n <= max(n_perm, 2):
        signs = np.array(
            [[1.0 if (m >> i) & 1 else -1.0 for i in range(n)] for m in range(2 ** n)]
        )
        stats = np.abs(signs @ d) / n
        return float(np.mean(stats >= t_obs - tol))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xBEEF)))
    hits = 1  # identity assignment
    for _ in range(n_perm):
        s = rng.integers(0, 2, size=n) * 2.0 - 1.0
        if abs(np.mean(s * d)) >= t_obs - tol:
            hits += 1
    return hits / (n_perm + 1)


def write_results_csv(rows, path) -> None:
    """Rows of (subject, variant, class_set, fold, accuracy) as CSV."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject", "variant", "class_set", "fold", "accuracy"])
        for subject, variant, class_set, fold, acc in rows:
            w.writerow([subject, variant, class_set, fold, repr(float(acc))])


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
