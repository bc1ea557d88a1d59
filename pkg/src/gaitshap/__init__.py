"""Gait accelerometry classification with Shapley-value attribution.

Stages: preprocessing (filter, scale, resample), segmentation (heel
contacts, strides, model segments, subject split), a numpy network engine
(``gaitshap.nn``), Bayesian hyperparameter search, evaluation metrics,
Shapley attribution and reporting. A synthetic gait generator supplies
data with known structure.
"""

__version__ = "0.1.0"

from .errors import GaitShapError  # noqa: E402

__all__ = ["GaitShapError", "__version__"]
