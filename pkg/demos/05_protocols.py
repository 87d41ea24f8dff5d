"""Evaluation protocols in miniature: ablation, LOSO, permutation test.

Runs the four stack variants (first conv block only; both conv blocks;
through the depthwise block; full model with PLV weighting) under shared
folds, then leave-one-subject-out transfer across synthetic subjects that
share the group topology with jittered amplitudes. Small sizes keep this
demo fast; the acceptance suite runs the full desk-scale versions.

Run:  python demos/05_protocols.py
"""

from fudnn.dsp import preprocess_dataset
from fudnn.experiment import (
    ExperimentConfig,
    permutation_test,
    run_ablation,
    run_loso,
)
from fudnn.synthgen import default_spec, generate

spec = default_spec(2, n_subjects=3, n_trials_per_class=10, seed=1)
datasets = [preprocess_dataset(d) for d in generate(spec)]

config = ExperimentConfig.desk_scale(class_set=2, folds=2, epochs=3, seed=0)

print("ablation on", datasets[0].subject_id)
results = run_ablation(datasets[0], config)
for variant, metrics in results.items():
    print(f"  {variant:6s} mean {metrics.mean:.3f} over {len(metrics.fold_accuracies)} folds")

p = permutation_test(results["fudnn"].fold_accuracies, results["cnn1"].fold_accuracies)
print(f"paired permutation test fudnn vs cnn1: p = {p:.3f} "
      "(2 folds cannot reach significance; the acceptance suite uses more)")

print("\nleave-one-subject-out, target sub03")
loso = run_loso(datasets, "sub03", config)
print(f"  trained on {loso.extra['train_subjects']}, "
      f"{loso.extra['n_train_windows']} windows")
print(f"  target accuracy {loso.fold_accuracies[0]:.3f}; "
      f"leaked windows: {loso.extra['leaked_windows']}")
