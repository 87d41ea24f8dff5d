"""Command-line entry point orchestrating the pipeline.

Subcommands: synth, preprocess, plv, train, eval, ablation, loso, analyze,
gradcheck. Every command writes its primary outputs plus a manifest.json
into its output directory and nothing anywhere else. Exit codes: 0 ok,
1 usage, 2 malformed input, 3 numeric failure, 4 invalid configuration.
Warnings go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .connectivity import (
    channel_strengths,
    fit_weights,
    pairwise_plv,
    phases_from_windows,
    symmetrize,
    threshold_edges,
    write_edges_csv,
    write_weights_json,
)
from .core import Dataset, Trial
from .dsp import ersp, preprocess_dataset, psd_welch, write_psd_csv, write_timefreq_csv
from .eegc import load_eegc, save_eegc
from .errors import ConfigError, FormatError, NumericError
from .experiment import (
    ExperimentConfig,
    permutation_test,
    run_ablation,
    run_loso,
    run_subject_dependent,
    windows_from_container,
    windows_to_arrays,
)
from .nn import (
    evaluate,
    load_checkpoint,
    run_network_gradcheck,
    save_checkpoint,
)
from .synthgen import SynthSpec, generate

_EXIT_USAGE = 1
_EXIT_FORMAT = 2
_EXIT_NUMERIC = 3
_EXIT_CONFIG = 4

_thread_limiter = None  # keeps the threadpool cap alive for the process


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _apply_threads(threads) -> None:
    global _thread_limiter
    if threads is None:
        env = os.environ.get("FUDNN_THREADS")
        if env is None:
            return
        try:
            threads = int(env)
        except ValueError:
            _warn(f"ignoring non-integer FUDNN_THREADS={env!r}")
            return
    if threads < 1:
        raise ConfigError("--threads must be a positive integer")
    try:
        import threadpoolctl
    except ImportError:
        _warn("threadpoolctl not available; thread cap not applied")
        return
    _thread_limiter = threadpoolctl.threadpool_limits(limits=threads)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: dict, inputs, outputs,
                    started: float, seed=None) -> None:
    manifest = {
        "tool": "fudnn",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": sorted(str(o) for o in outputs),
        "seed": seed,
        "started_utc": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "duration_s": time.time() - started,
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def _parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"band must look like LOW:HIGH, got {text!r}") from None
    return lo, hi


def _load_dataset(path) -> Dataset:
    obj = load_eegc(path)
    if not isinstance(obj, Dataset):
        raise FormatError(f"{path}: expected a dataset EEGC file")
    return obj


def _config_with_overrides(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json_file(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for name in ("seed", "epochs", "folds", "class_set", "variant"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.time()
    spec = SynthSpec.from_json_file(args.spec)
    out = _out_dir(args.out)
    outputs = []
    for ds in generate(spec):
        path = out / f"{ds.subject_id}.eegc"
        save_eegc(ds, path)
        outputs.append(path.name)
    _write_manifest(out, "synth", spec.to_json_dict(), [args.spec], outputs,
                    started, seed=spec.seed)
    return 0


def cmd_preprocess(args) -> int:
    started = time.time()
    ds = _load_dataset(args.input)
    band = _parse_band(args.band)
    pre = preprocess_dataset(ds, band=band, target_rate_hz=args.rate, fir_order=args.order)
    windows = []
    wid = 0
    for trial in pre.trials:
        from .dsp import sliding_windows

        for w in sliding_windows(trial, window_s=args.window, overlap=args.overlap):
            windows.append(
                Trial(
                    label=w.label,
                    data=w.data,
                    rate_hz=w.rate_hz,
                    subject_id=w.subject_id,
                    trial_id=wid,
                    t0_s=trial.t0_s + w.start / w.rate_hz,
                    source_trial_id=w.trial_id,
                )
            )
            wid += 1
    out = _out_dir(args.out)
    dest = out / (Path(args.input).stem + ".eegc")
    save_eegc(Dataset(pre.subject_id, tuple(windows), pre.montage), dest)
    config = {
        "band": list(band), "rate": args.rate, "window": args.window,
        "overlap": args.overlap, "order": args.order,
    }
    _write_manifest(out, "preprocess", config, [args.input], [dest.name], started)
    return 0


def cmd_plv(args) -> int:
    started = time.time()
    ds = _load_dataset(args.input)
    if not ds.trials:
        raise FormatError(f"{args.input}: dataset holds no trials")
    band = _parse_band(args.band) if args.band else None
    try:
        windows = windows_from_container(ds)
    except ConfigError:
        cfg = ExperimentConfig()
        from .experiment import windows_for_trials

        windows = windows_for_trials(ds.trials, cfg.window_s, cfg.overlap)
    phases = phases_from_windows(windows, band=band)
    sym = symmetrize(pairwise_plv(phases))
    from .connectivity import minmax_normalize

    weights = minmax_normalize(channel_strengths(sym))
    edges = threshold_edges(sym, threshold=args.threshold)

    out = _out_dir(args.out)
    matrix_path = out / "plv_matrix.csv"
    with open(matrix_path, "w", newline="") as f:
        import csv as _csv

        w = _csv.writer(f)
        w.writerow(["channel"] + list(ds.montage.labels))
        for i, lab in enumerate(ds.montage.labels):
            w.writerow([lab] + [repr(float(v)) for v in sym.values[i]])
    edges_path = out / "edges.csv"
    write_edges_csv(edges, ds.montage, edges_path)
    weights_path = out / "weights.json"
    write_weights_json(weights, ds.montage, weights_path)
    config = {"band": None if band is None else list(band), "threshold": args.threshold}
    _write_manifest(out, "plv", config, [args.input],
                    [matrix_path.name, edges_path.name, weights_path.name], started)
    return 0


def cmd_train(args) -> int:
    started = time.time()
    ds = _load_dataset(args.input)
    cfg = _config_with_overrides(args)
    metrics, models = run_subject_dependent(ds, cfg, return_models=True)

    out = _out_dir(args.out)
    outputs = []
    rows = [
        (ds.subject_id, cfg.variant, cfg.class_set, i, acc)
        for i, acc in enumerate(metrics.fold_accuracies)
    ]
    from .experiment import write_results_csv, write_summary_json

    results = out / "results.csv"
    write_results_csv(rows, results)
    outputs.append(results.name)
    summary = out / "summary.json"
    write_summary_json({"config": cfg.to_dict(), **metrics.summary()}, summary)
    outputs.append(summary.name)
    for i, (net, weights) in enumerate(models):
        stem = out / f"ckpt_fold{i}"
        save_checkpoint(
            net, stem, epoch=cfg.epochs,
            channel_weights=None if weights is None else weights.w,
            class_labels=[c.value for c in cfg.classes],
            extra={"window_s": cfg.window_s, "overlap": cfg.overlap, "fold": i},
        )
        outputs += [stem.name + ".json", stem.name + ".bin"]
    _write_manifest(out, "train", cfg.to_dict(), [args.input], outputs,
                    started, seed=cfg.seed)
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    stem = Path(args.model)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    net, manifest = load_checkpoint(stem)
    ds = _load_dataset(args.data)

    class_labels = manifest.get("class_labels")
    if not class_labels:
        raise FormatError(f"{stem}.json: checkpoint lacks class labels")
    from .core import ClassLabel

    classes = tuple(ClassLabel(c) for c in class_labels)
    extra = manifest.get("extra", {})
    cfg = ExperimentConfig(
        class_set=len(classes),
        window_s=float(extra.get("window_s", 2.0)),
        overlap=float(extra.get("overlap", 0.5)),
    )
    from .experiment import _dataset_windows

    windows = _dataset_windows(ds.filter_classes(classes), cfg)
    weights_list = manifest.get("channel_weights")
    weights = None
    if weights_list is not None:
        from .connectivity import ChannelWeights

        weights = ChannelWeights(w=np.asarray(weights_list))
    x, y, keys = windows_to_arrays(windows, classes, weights)
    acc, confusion, probs = evaluate(net, x, y)

    out = _out_dir(args.out)
    metrics_path = out / "metrics.json"
    with open(metrics_path, "w") as f:
        json.dump(
            {
                "accuracy": acc,
                "n_windows": len(y),
                "confusion": confusion.tolist(),
                "class_labels": list(class_labels),
            },
            f, indent=2, sort_keys=True,
        )
    pred_path = out / "predictions.csv"
    with open(pred_path, "w", newline="") as f:
        import csv as _csv

        w = _csv.writer(f)
        w.writerow(["subject", "trial_id", "start", "true", "predicted"]
                   + [f"p_{c}" for c in class_labels])
        pred = probs.argmax(axis=1)
        for i, (sid, tid, start) in enumerate(keys):
            w.writerow(
                [sid, tid, start, class_labels[y[i]], class_labels[pred[i]]]
                + [repr(float(p)) for p in probs[i]]
            )
    _write_manifest(out, "eval", {"model": str(stem)}, [stem.with_suffix(".json"),
                    stem.with_suffix(".bin"), args.data],
                    [metrics_path.name, pred_path.name], started)
    return 0


def cmd_ablation(args) -> int:
    started = time.time()
    ds = _load_dataset(args.input)
    cfg = _config_with_overrides(args)
    results = run_ablation(ds, cfg)

    out = _out_dir(args.out)
    rows = []
    for variant, metrics in results.items():
        for i, acc in enumerate(metrics.fold_accuracies):
            rows.append((ds.subject_id, variant, cfg.class_set, i, acc))
    from .experiment import write_results_csv, write_summary_json

    results_path = out / "results.csv"
    write_results_csv(rows, results_path)
    fudnn_acc = results["fudnn"].fold_accuracies
    summary = {
        "config": cfg.to_dict(),
        "variants": {v: m.summary() for v, m in results.items()},
        "p_vs_fudnn": {
            v: permutation_test(fudnn_acc, results[v].fold_accuracies, seed=cfg.seed)
            for v in ("cnn1", "cnn2", "cnn3")
        },
    }
    summary_path = out / "summary.json"
    write_summary_json(summary, summary_path)
    _write_manifest(out, "ablation", cfg.to_dict(), [args.input],
                    [results_path.name, summary_path.name], started, seed=cfg.seed)
    return 0


def cmd_loso(args) -> int:
    started = time.time()
    in_dir = Path(args.dir)
    files = sorted(in_dir.glob("*.eegc"))
    if len(files) < 2:
        raise FormatError(f"{in_dir}: need at least two subject EEGC files")
    datasets = [_load_dataset(p) for p in files]
    cfg = _config_with_overrides(args)
    metrics = run_loso(datasets, args.target, cfg)

    out = _out_dir(args.out)
    from .experiment import write_results_csv, write_summary_json

    results_path = out / "results.csv"
    write_results_csv(
        [(args.target, cfg.variant, cfg.class_set, 0, metrics.fold_accuracies[0])],
        results_path,
    )
    summary_path = out / "summary.json"
    write_summary_json({"config": cfg.to_dict(), **metrics.summary()}, summary_path)
    _write_manifest(out, "loso", cfg.to_dict(), files,
                    [results_path.name, summary_path.name], started, seed=cfg.seed)
    return 0


def cmd_analyze(args) -> int:
    started = time.time()
    ds = _load_dataset(args.input)
    if not ds.trials:
        raise FormatError(f"{args.input}: dataset holds no trials")
    out = _out_dir(args.out)
    outputs = []
    if args.psd:
        labels = [c.strip() for c in args.channels.split(",")] if args.channels else \
            list(ds.montage.labels[:3])
        idx = [ds.montage.index(c) for c in labels]
        seg = args.seg_len or min(int(2 * ds.rate_hz), ds.trials[0].n_samples)
        powers = {}
        freqs = None
        for lab, ch in zip(labels, idx):
            acc = None
            for t in ds.trials:
                freqs, p = psd_welch(t.data[ch], ds.rate_hz, seg_len=seg)
                acc = p if acc is None else acc + p
            powers[lab] = acc / ds.n_trials
        path = out / "psd.csv"
        write_psd_csv(freqs, powers, path)
        outputs.append(path.name)
        config = {"mode": "psd", "channels": labels, "seg_len": seg}
    else:
        if not args.channels:
            raise ConfigError("--ersp needs --channels with exactly one channel label")
        labels = [c.strip() for c in args.channels.split(",")]
        if len(labels) != 1:
            raise ConfigError("--ersp analyzes one channel at a time")
        ch = ds.montage.index(labels[0])
        baseline = _parse_band(args.baseline) if ":" in args.baseline else None
        if baseline is None:
            raise ConfigError("--baseline must look like START:END in seconds")
        tf = ersp(ds.trials, channel=ch, baseline_s=baseline)
        path = out / "ersp.csv"
        write_timefreq_csv(tf, path)
        outputs.append(path.name)
        config = {"mode": "ersp", "channel": labels[0], "baseline": list(baseline)}
    _write_manifest(out, "analyze", config, [args.input], outputs, started)
    return 0


def cmd_gradcheck(args) -> int:
    from .nn import default_gradcheck_spec
    from .nn.network import NetworkSpec

    if args.config:
        with open(args.config) as f:
            try:
                spec = NetworkSpec.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{args.config}: not valid JSON ({e})") from e
    else:
        spec = default_gradcheck_spec()
    err = run_network_gradcheck(spec, seed=args.seed or 0)
    print(f"max relative gradient error: {err:.3e}")
    if not err < 1e-4:
        raise NumericError(f"gradient check failed: {err:.3e} >= 1e-4")
    return 0


# -- argument wiring ----------------------------------------------------------


def _build_parser() -> _Parser:
    p = _Parser(prog="fudnn", description=__doc__)
    p.add_argument("--version", action="version", version=f"fudnn {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS worker threads (default: FUDNN_THREADS or library default)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic EEG from a JSON spec")
    s.add_argument("spec", help="SynthSpec JSON file")
    s.add_argument("out", help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="downsample, band-pass, cut windows")
    s.add_argument("input", help="dataset EEGC file")
    s.add_argument("out", help="output directory")
    s.add_argument("--band", default="0.5:13", help="band-pass edges LOW:HIGH Hz")
    s.add_argument("--rate", type=float, default=250.0, help="target sampling rate Hz")
    s.add_argument("--window", type=float, default=2.0, help="window length seconds")
    s.add_argument("--overlap", type=float, default=0.5, help="window overlap fraction")
    s.add_argument("--order", type=int, default=30, help="FIR band-pass order")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("plv", help="connectivity matrix, edges and channel weights")
    s.add_argument("input", help="dataset EEGC file (windowed or trial-level)")
    s.add_argument("out", help="output directory")
    s.add_argument("--band", default=None, help="optional sub-band LOW:HIGH Hz for phases")
    s.add_argument("--threshold", type=float, default=0.9, help="edge threshold")
    s.set_defaults(func=cmd_plv)

    def _train_like(s):
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--epochs", type=int, default=None)
        s.add_argument("--folds", type=int, default=None)
        s.add_argument("--class-set", dest="class_set", type=int, default=None)

    s = sub.add_parser("train", help="subject-dependent k-fold training")
    s.add_argument("input", help="preprocessed (windowed) dataset EEGC")
    s.add_argument("config", help="ExperimentConfig JSON file")
    s.add_argument("out", help="output directory")
    s.add_argument("--variant", default=None, help="cnn1|cnn2|cnn3|fudnn")
    _train_like(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    s.add_argument("model", help="checkpoint stem (or its .json path)")
    s.add_argument("data", help="dataset EEGC file")
    s.add_argument("out", help="output directory")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablation", help="compare cnn1/cnn2/cnn3/fudnn on shared folds")
    s.add_argument("input", help="preprocessed (windowed) dataset EEGC")
    s.add_argument("config", help="ExperimentConfig JSON file")
    s.add_argument("out", help="output directory")
    s.set_defaults(variant=None)
    _train_like(s)
    s.set_defaults(func=cmd_ablation)

    s = sub.add_parser("loso", help="leave-one-subject-out transfer")
    s.add_argument("dir", help="directory of per-subject EEGC files")
    s.add_argument("out", help="output directory")
    s.add_argument("--target", required=True, help="held-out subject id")
    s.add_argument("--config", default=None, help="ExperimentConfig JSON file")
    s.add_argument("--variant", default=None, help="cnn1|cnn2|cnn3|fudnn")
    _train_like(s)
    s.set_defaults(func=cmd_loso)

    s = sub.add_parser("analyze", help="spectral summaries as plot-ready CSV")
    s.add_argument("input", help="dataset EEGC file")
    s.add_argument("out", help="output directory")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--psd", action="store_true", help="Welch power spectral density")
    g.add_argument("--ersp", action="store_true", help="event-related spectral perturbation")
    s.add_argument("--channels", default=None, help="comma-separated channel labels")
    s.add_argument("--seg-len", dest="seg_len", type=int, default=None,
                   help="Welch segment length in samples")
    s.add_argument("--baseline", default="-0.5:0", help="ERSP baseline START:END seconds")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("gradcheck", help="finite-difference check of the engine")
    s.add_argument("--config", default=None, help="NetworkSpec JSON for the checked stack")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_threads(args.threads)
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return _EXIT_USAGE
    except FormatError as e:
        print(f"input error: {e}", file=sys.stderr)
        return _EXIT_FORMAT
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return _EXIT_CONFIG
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return _EXIT_NUMERIC
    except FileNotFoundError as e:
        print(f"input error: {e}", file=sys.stderr)
        return _EXIT_FORMAT
    except (ValueError, KeyError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return _EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
