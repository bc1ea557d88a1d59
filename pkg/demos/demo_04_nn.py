"""
Training a small 1-D CNN with the numpy engine
==============================================

Conv, batch norm, pooling, dropout and a dense head, trained with Adam and
early stopping. Gradients are checked against central differences first.
"""

import numpy as np

from gaitshap.metrics import evaluate
from gaitshap.nn.gradcheck import finite_diff_gradcheck
from gaitshap.nn.model import ModelSpec, StackSpec, init_params, full_cnn_spec, predict_proba
from gaitshap.nn.training import TrainConfig, train_model
from gaitshap.pipeline import build_dataset
from gaitshap.segmentation import split_subjects
from gaitshap.synthetic import GaitGenParams, generate_cohort

# the full-size architecture, for reference
print("full CNN time axis:", full_cnn_spec().time_trace())

spec = ModelSpec((128, 3), (StackSpec("conv", 8, 7, dropout=0.1),
                            StackSpec("conv", 16, 5, dropout=0.1)),
                 dense_units=16, head_dropout=0.2, learning_rate=3e-3)

X = np.random.default_rng(0).normal(size=(4, 128, 3))
# a small step keeps the central differences clear of ReLU and max-pool kinks
err, n = finite_diff_gradcheck(spec, init_params(spec, 0), X, [0, 1, 0, 1], h=1e-6)
print(f"gradient check: max relative error {err:.1e} over {n} coordinates")

cohort = generate_cohort(10, 10, GaitGenParams(noise_std=0.05), seed=0)
ds = build_dataset([(t, g) for t, _, g in cohort])
split = split_subjects([(s, d.group) for s, d in ds.subjects.items()], seed=0)
data = ds.arrays(split)

params, history = train_model(spec, *data["train"][:2], *data["validation"][:2],
                              TrainConfig(max_epochs=30, patience=5))
print(f"stopped after {len(history)} epochs")
Xte, yte, _ = data["test"]
report = evaluate(predict_proba(spec, params, Xte)[:, 1], yte)
print(f"test accuracy {report.accuracy:.3f}, AUC {report.auc:.3f}")
