"""
Cross-validation over the pipeline variants
===========================================

Generates a small synthetic expression dataset and scores four pipeline
variants under the same stratified folds, sharing the kernel responses
and tracked displacements across methods.  The miniature scale keeps the
run around ten seconds; rates climb several points at the desk-scale
defaults in configs/desk.cfg.
"""

import numpy as np

from faceseq import pipeline as pl
from faceseq import subspace


# 72 sequences, 12 per class, half of them reduced-intensity variants of
# the same sources.  Two folds so every method trains on 36 sequences.
config = pl.RunConfig(
    frame_rows=56,
    frame_cols=42,
    frames_per_sequence=5,
    seqs_per_class=12,
    folds=2,
    seed=7,
    d_r=10,
    d_c=8,
    lda_out=14,
    geo_d_r=10,
    geo_d_c=3,
    hlda=subspace.HldaOptions(max_iters=15, multistart=False),
)

print("generating synthetic dataset...")
records = pl.gen_synthetic(config, config.seed)
labels = np.array([r.label for r in records])
print(f"{len(records)} sequences, per-class counts "
      f"{np.bincount(labels)[1:].tolist()}")

# the variants, weakest first:
#   2dhlda      stacked single-direction projection, no final LDA stage
#   2dlda-lda   per-channel pooled-scatter projections plus final LDA
#   proposed    same cascade with the heteroscedastic projection fit
#   proposed-geo  appearance features joined with tracked-motion features
methods = ("2dhlda", "2dlda-lda", "proposed", "proposed-geo")

print("running cross-validation (about ten seconds)...")
result = pl.cross_validate(records, config, methods=methods)

print()
print(pl.format_report(result))

print("one line per method, pooled over folds:")
for m in methods:
    rate = result.methods[m].pooled.rate()
    print(f"  {m:13s} {rate:6.2f}%")
