"""SVM detection harness for labeled model-weight feature exports."""

from .harness import (
    KERNELS,
    FeatureTable,
    HarnessError,
    InputError,
    OptionError,
    SchemaError,
    SvmReport,
    load_features,
    reports_to_json,
    split_pairs,
    train_eval,
)

__version__ = "0.1.0"

__all__ = [
    "KERNELS",
    "FeatureTable",
    "HarnessError",
    "InputError",
    "OptionError",
    "SchemaError",
    "SvmReport",
    "load_features",
    "reports_to_json",
    "split_pairs",
    "train_eval",
    "__version__",
]
