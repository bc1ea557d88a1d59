"""
Confusion matrix, ROC and AUC
=============================

OlderAdult is the positive class. AUC is computed by the trapezoid rule and
equals the probability that a positive outscores a negative.
"""

import numpy as np

from gaitshap.metrics import ConfusionMatrix, classification_metrics, evaluate
from gaitshap.reporting import format_metrics_row

# counts rebuilt from per-class rates
cm = ConfusionMatrix.from_rates(0.859, 0.763, 26 * 80, 23 * 80)
m = classification_metrics(cm)
print(cm)
print("acc prec rec f1 AUC:", format_metrics_row(*m, 0.89))

rng = np.random.default_rng(0)
truth = rng.integers(0, 2, 200)
scores = np.clip(0.5 + 0.25 * (2 * truth - 1) + rng.normal(0, 0.25, 200), 0, 1)
report = evaluate(scores, truth)
pos, neg = scores[truth == 1], scores[truth == 0]
concordance = ((pos[:, None] > neg).sum() + 0.5 * (pos[:, None] == neg).sum()) / (len(pos) * len(neg))
print(f"AUC {report.auc:.6f}, pairwise concordance {concordance:.6f}")
print("ROC points:", len(report.roc))
