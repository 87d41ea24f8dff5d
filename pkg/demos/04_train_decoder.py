"""Train the full decoder on one subject at desk scale.

Uses the down-scaled configuration (4/8 feature maps, hidden 16 -- same
layer kinds and kernel sizes as the full architecture) so a complete
stratified 5-fold run finishes in a few minutes on one core. The full-size
architecture (40/80 maps, hidden 100) is what `NetworkSpec()` builds by
default; print its shape trace to see the contract.

Run:  python demos/04_train_decoder.py
"""

from fudnn.dsp import preprocess_dataset
from fudnn.experiment import ExperimentConfig, run_subject_dependent
from fudnn.nn import NetworkSpec
from fudnn.synthgen import default_spec, generate

print("full-size architecture trace for a 1 x 64 x 500 input:")
for shape in NetworkSpec().block_shapes():
    print("  ", shape)

spec = default_spec(4, n_trials_per_class=50, seed=7)
ds = preprocess_dataset(generate(spec)[0])

config = ExperimentConfig.desk_scale(class_set=4, folds=5, seed=0)
print(f"\ntraining variant={config.variant} for {config.epochs} epochs per fold "
      f"(this takes a few minutes on one core)...")
metrics = run_subject_dependent(ds, config)

print(f"fold accuracies: {['%.3f' % a for a in metrics.fold_accuracies]}")
print(f"mean {metrics.mean:.3f} +/- {metrics.sd:.3f} (sd over folds)")
print("confusion (rows true, columns predicted):")
print(metrics.confusion)
