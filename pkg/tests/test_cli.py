import json

import numpy as np
import pytest

from fudnn.cli import main
from fudnn.core import ClassLabel
from fudnn.eegc import load_eegc

TINY_MONTAGE = [f"c{i}" for i in range(8)]


def synth_spec_dict(n_trials=4, coupling=0.98, noise_sd=0.3, n_subjects=1, seed=0):
    return {
        "n_subjects": n_subjects,
        "n_trials_per_class": n_trials,
        "rate_hz": 100.0,
        "duration_s": 5.0,
        "montage": {"labels": TINY_MONTAGE, "reference_note": ""},
        "classes": {
            "PW": [{"channels": ["c0", "c1", "c2"], "band": [8.0, 13.0],
                    "coupling": coupling, "amplitude": 3.0}],
            "EF": [{"channels": ["c5", "c6", "c7"], "band": [2.0, 4.0],
                    "coupling": coupling, "amplitude": 3.0}],
        },
        "noise_sd": noise_sd,
        "seed": seed,
        "subject_jitter_sd": 0.05,
    }


def train_config_dict(**overrides):
    cfg = {
        "class_set": 2,
        "folds": 2,
        "seed": 0,
        "variant": "fudnn",
        "epochs": 1,
        "batch_size": 4,
        "lr": 2e-3,
        "window_s": 2.0,
        "overlap": 0.5,
        "conv1_maps": 2,
        "conv2_maps": 3,
        "kernel_len": 5,
        "pool_len": 2,
        "dropout_p": 0.1,
        "lstm_hidden": 3,
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture
def synth_dir(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(synth_spec_dict()))
    out = tmp_path / "raw"
    assert main(["synth", str(spec), str(out)]) == 0
    return out


@pytest.fixture
def windowed_file(tmp_path, synth_dir):
    out = tmp_path / "pre"
    code = main([
        "preprocess", str(synth_dir / "sub01.eegc"), str(out),
        "--band", "0.5:13", "--rate", "50", "--window", "2", "--overlap", "0.5",
    ])
    assert code == 0
    return out / "sub01.eegc"


class TestSynth:
    def test_writes_subject_files_and_manifest(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(synth_spec_dict(n_subjects=2)))
        out = tmp_path / "o"
        assert main(["synth", str(spec), str(out)]) == 0
        assert (out / "sub01.eegc").exists() and (out / "sub02.eegc").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert str(spec) in manifest["inputs"]
        ds = load_eegc(out / "sub01.eegc")
        assert ds.n_trials == 8

    def test_missing_spec_file_is_input_error(self, tmp_path):
        assert main(["synth", str(tmp_path / "nope.json"), str(tmp_path / "o")]) == 2


class TestPreprocess:
    def test_windows_per_trial(self, windowed_file):
        ds = load_eegc(windowed_file)
        # 8 trials of 5 s at 50 Hz with 2 s / 50% windows -> 4 windows each
        assert ds.n_trials == 32
        assert ds.rate_hz == 50.0
        assert ds.trials[0].data.shape == (8, 100)
        assert all(t.source_trial_id is not None for t in ds.trials)

    def test_idempotent_outputs(self, tmp_path, synth_dir):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert main(["preprocess", str(synth_dir / "sub01.eegc"), str(out),
                         "--rate", "50"]) == 0
        assert (a / "sub01.eegc").read_bytes() == (b / "sub01.eegc").read_bytes()

    def test_recording_input_rejected(self, tmp_path):
        from fudnn.core import Montage, Recording
        from fudnn.eegc import save_eegc

        rec = Recording(
            montage=Montage(labels=("a", "b")), rate_hz=100.0,
            samples=np.zeros((2, 1000), dtype=np.float32),
        )
        p = tmp_path / "rec.eegc"
        save_eegc(rec, p)
        assert main(["preprocess", str(p), str(tmp_path / "o")]) == 2


class TestPlv:
    def test_outputs_and_edges_cover_coupled_groups(self, tmp_path, windowed_file):
        out = tmp_path / "plv"
        assert main(["plv", str(windowed_file), str(out), "--threshold", "0.9"]) == 0
        for name in ("plv_matrix.csv", "edges.csv", "weights.json", "manifest.json"):
            assert (out / name).exists()
        edges = (out / "edges.csv").read_text().strip().splitlines()[1:]
        pairs = {tuple(sorted(line.split(",")[:2])) for line in edges}
        group_pairs = {("c0", "c1"), ("c0", "c2"), ("c1", "c2"),
                       ("c5", "c6"), ("c5", "c7"), ("c6", "c7")}
        assert group_pairs <= pairs
        weights = json.loads((out / "weights.json").read_text())
        assert set(weights) == set(TINY_MONTAGE)

    def test_subband_option(self, tmp_path, windowed_file):
        out = tmp_path / "plv_alpha"
        assert main(["plv", str(windowed_file), str(out), "--band", "8:13"]) == 0
        assert (out / "edges.csv").exists()


class TestTrain:
    def test_outputs_and_reproducibility(self, tmp_path, windowed_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(train_config_dict()))
        a = tmp_path / "run_a"
        b = tmp_path / "run_b"
        for out in (a, b):
            assert main(["train", str(windowed_file), str(cfg), str(out)]) == 0
        for name in ("results.csv", "summary.json", "ckpt_fold0.json",
                     "ckpt_fold0.bin", "manifest.json"):
            assert (a / name).exists()
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
        for fold in range(2):
            assert (a / f"ckpt_fold{fold}.bin").read_bytes() == \
                (b / f"ckpt_fold{fold}.bin").read_bytes()
            assert (a / f"ckpt_fold{fold}.json").read_bytes() == \
                (b / f"ckpt_fold{fold}.json").read_bytes()
        summary = json.loads((a / "summary.json").read_text())
        assert len(summary["fold_accuracies"]) == 2
        assert summary["config"]["variant"] == "fudnn"

    def test_cli_flag_overrides_config_file(self, tmp_path, windowed_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(train_config_dict(seed=0)))
        out = tmp_path / "o"
        assert main(["train", str(windowed_file), str(cfg), str(out),
                     "--seed", "7", "--variant", "cnn1"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 7
        assert manifest["config"]["variant"] == "cnn1"

    def test_unknown_config_field_is_config_error(self, tmp_path, windowed_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({**train_config_dict(), "bogus": 1}))
        assert main(["train", str(windowed_file), str(cfg), str(tmp_path / "o")]) == 4


class TestEval:
    def test_checkpoint_evaluates_on_data(self, tmp_path, windowed_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(train_config_dict()))
        run = tmp_path / "run"
        assert main(["train", str(windowed_file), str(cfg), str(run)]) == 0
        out = tmp_path / "eval"
        assert main(["eval", str(run / "ckpt_fold0"), str(windowed_file), str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert metrics["n_windows"] == 32
        lines = (out / "predictions.csv").read_text().strip().splitlines()
        assert len(lines) == 33


class TestAblation:
    def test_summary_covers_all_variants(self, tmp_path, windowed_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(train_config_dict()))
        out = tmp_path / "abl"
        assert main(["ablation", str(windowed_file), str(cfg), str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["variants"]) == {"cnn1", "cnn2", "cnn3", "fudnn"}
        assert set(summary["p_vs_fudnn"]) == {"cnn1", "cnn2", "cnn3"}
        rows = (out / "results.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 4 * 2


class TestLoso:
    def test_two_subject_transfer(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(synth_spec_dict(n_subjects=2)))
        raw = tmp_path / "raw"
        assert main(["synth", str(spec), str(raw)]) == 0
        pre = tmp_path / "pre"
        for sub in ("sub01", "sub02"):
            assert main(["preprocess", str(raw / f"{sub}.eegc"), str(pre),
                         "--rate", "50"]) == 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(train_config_dict()))
        out = tmp_path / "loso"
        assert main(["loso", str(pre), str(out), "--target", "sub02",
                     "--config", str(cfg)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["leaked_windows"] == 0
        assert summary["train_subjects"] == ["sub01"]
        assert summary["n_train_windows"] == 32


class TestAnalyze:
    def test_psd_csv(self, tmp_path, synth_dir):
        out = tmp_path / "an"
        assert main(["analyze", str(synth_dir / "sub01.eegc"), str(out),
                     "--psd", "--channels", "c0,c5"]) == 0
        lines = (out / "psd.csv").read_text().strip().splitlines()
        assert lines[0] == "freq_hz,c0,c5"
        assert len(lines) > 10

    def test_ersp_needs_baseline_data(self, tmp_path, synth_dir):
        out = tmp_path / "an2"
        code = main(["analyze", str(synth_dir / "sub01.eegc"), str(out),
                     "--ersp", "--channels", "c0"])
        assert code == 2  # trials start at onset; no baseline available

    def test_ersp_on_baseline_bearing_trials(self, tmp_path):
        from fudnn.core import Dataset, Montage, Trial
        from fudnn.eegc import save_eegc

        rng = np.random.default_rng(0)
        montage = Montage(labels=("a", "b"))
        trials = tuple(
            Trial(label=ClassLabel.PW,
                  data=rng.standard_normal((2, 500)).astype(np.float32),
                  rate_hz=100.0, trial_id=i, t0_s=-1.0)
            for i in range(5)
        )
        p = tmp_path / "base.eegc"
        save_eegc(Dataset(subject_id="s", trials=trials, montage=montage), p)
        out = tmp_path / "an3"
        assert main(["analyze", str(p), str(out), "--ersp", "--channels", "a",
                     "--baseline", "-1:0"]) == 0
        assert (out / "ersp.csv").exists()


class TestGradcheckCommand:
    def test_default_config_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        assert "max relative gradient error" in capsys.readouterr().out


class TestErrorCodes:
    def test_no_arguments_is_usage_error(self):
        assert main([]) == 1

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_corrupt_eegc_is_input_error(self, tmp_path):
        bad = tmp_path / "bad.eegc"
        bad.write_bytes(b"NOT A REAL FILE")
        assert main(["plv", str(bad), str(tmp_path / "o")]) == 2

    def test_bad_band_flag_is_config_error(self, tmp_path, synth_dir):
        assert main(["preprocess", str(synth_dir / "sub01.eegc"),
                     str(tmp_path / "o"), "--band", "banana"]) == 4

    def test_non_integer_rate_factor_is_config_error(self, tmp_path, synth_dir):
        assert main(["preprocess", str(synth_dir / "sub01.eegc"),
                     str(tmp_path / "o"), "--rate", "33"]) == 4
