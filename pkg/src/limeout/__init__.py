"""Process-fairness audits of tabular classifiers.

A model is explained globally with LIME; when user-declared sensitive
features rank among its most important ones it is rebuilt as the average of
classifiers trained with those features dropped.
"""
__version__ = "0.1.0"

from .core import AuditReport, LimeOutConfig, audit_dataset, run_limeout, significance_test
from .data import Dataset, FeatureSchema, load_csv, smote_oversample, train_test_split
from .global_explain import GlobalConfig, assess_fairness, lime_global, submodular_pick
from .lime import Discretizer, LimeConfig, explain_instance
from .models import Recipe, drop_features, ensemble_average, evaluate

__all__ = [
    "AuditReport", "LimeOutConfig", "audit_dataset", "run_limeout", "significance_test",
    "Dataset", "FeatureSchema", "load_csv", "smote_oversample", "train_test_split",
    "GlobalConfig", "assess_fairness", "lime_global", "submodular_pick",
    "Discretizer", "LimeConfig", "explain_instance",
    "Recipe", "drop_features", "ensemble_average", "evaluate",
]
