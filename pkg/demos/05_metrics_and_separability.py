# Segmentation scoring and spectral statistics.
#
# Ground truth is weakly labelled (contour pixels carry the 255 ignore
# label), so the confusion matrix skips them. Reports carry per-class
# recall / precision / IoU plus three aggregates: overall (micro), mean
# (macro) and weighted (inverse class frequency, normalized to sum 1).

import numpy as np

from specdrive.metrics import (
    accumulate,
    compute_metrics,
    inverse_frequency_weights,
    report_csv,
)
from specdrive.mosaic import preprocess_pipeline
from specdrive.spectral import (
    band_correlation,
    class_stats,
    select_bands,
    separability,
)
from specdrive.synth import SceneSpec, synth_scene

rng = np.random.default_rng(0)

# --- metrics on a noisy prediction -----------------------------------------
gt = rng.integers(0, 3, (100, 120)).astype(np.uint8)
gt[0:10] = 255  # a weakly-labelled band
pred = gt.copy()
flip = rng.random(gt.shape) < 0.1
pred[flip] = rng.integers(0, 3, int(flip.sum()))
pred[gt == 255] = 0

cm = accumulate(gt, pred, 3)
# class frequencies of a heavily imbalanced road dataset: the majority class
# dominates the overall score, the weighted score surfaces the minority one
freqs = np.array([0.5956, 0.0338, 0.3706])
print("inverse-frequency weights:", np.round(inverse_frequency_weights(freqs), 4))
report = compute_metrics(cm, frequencies=freqs)
print(report_csv(report, ["road", "marks", "other"]))

# --- spectral statistics on a synthetic scene --------------------------------
scene = synth_scene(SceneSpec(kind="classes", num_classes=3, seed=21, noise=0.002))
cube = preprocess_pipeline(scene.raw, scene.dark, scene.white, scene.layout).cube

corr = band_correlation(cube)
off = corr[~np.eye(25, dtype=bool)]
print(f"band correlation: mean |rho| {np.abs(off).mean():.3f}, "
      f"max off-diagonal {off.max():.3f}")

stats = class_stats(cube, scene.labels, 3)
sep = separability(stats)
print("\nclass separability (0 = identical, 2 = perfectly separable):")
for i in range(3):
    row = " ".join("   . " if np.isnan(v) or i == j else f"{v:5.3f}"
                   for j, v in enumerate(sep.jm[i]))
    print(f"  class{i}: {row}   mean {sep.class_means[i]:.3f}")

labelled = cube.reshape(-1, 25)[scene.labels.ravel() != 255]
bands = select_bands(labelled, 3)
print(f"\nthree most informative bands by orthogonal projection: {bands}")
