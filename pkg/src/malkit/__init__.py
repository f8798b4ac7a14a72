"""Multi-attribution conversion modeling toolkit.

Train conversion-rate models against labels produced by several click
attribution mechanisms at once, with one mechanism designated as the
serving target and the rest used as auxiliary learning signal.
"""
from .attribution import (
    MECHANISMS,
    Click,
    ConversionPath,
    attribute_all,
    cat_decode,
    cat_encode,
)
from .datagen import Dataset, GenConfig, generate, read_dataset, split_days, summarize, write_dataset
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FeatureError,
    GenerationError,
    MalkitError,
    MetricUndefinedError,
    NumericError,
    ParseError,
    SpecError,
)
from .metrics import MetricReport, auc, evaluate, gauc, group_lift, mml
from .models import FAMILIES, FeatureSchema, Model, ModelSpec, build, score_dataset
from .training import SearchResult, TrainConfig, TrainResult, fit, greedy_aux_search, train

__version__ = "0.1.0"

__all__ = [
    "MECHANISMS",
    "Click",
    "ConversionPath",
    "attribute_all",
    "cat_decode",
    "cat_encode",
    "Dataset",
    "GenConfig",
    "generate",
    "read_dataset",
    "split_days",
    "summarize",
    "write_dataset",
    "MalkitError",
    "ConfigError",
    "SpecError",
    "ContractError",
    "DimensionError",
    "FeatureError",
    "NumericError",
    "MetricUndefinedError",
    "ParseError",
    "GenerationError",
    "MetricReport",
    "auc",
    "gauc",
    "evaluate",
    "group_lift",
    "mml",
    "FAMILIES",
    "FeatureSchema",
    "Model",
    "ModelSpec",
    "build",
    "score_dataset",
    "TrainConfig",
    "TrainResult",
    "SearchResult",
    "fit",
    "train",
    "greedy_aux_search",
    "__version__",
]
