"""Sleep-quality prediction from actigraphy."""
from .dataset import (IntensityFeaturizer, SequencePadder, SMOTEOversampler, TrainingRecord,
                      build_records, intensity_features, make_pseudo_sequence,
                      pad_to_fixed_length, smote, subject_split)
from .estimator import SleepQualityClassifier
from .evaluation import EvalReport, evaluate, roc_auc, roc_curve
from .ingest import EpochSeries, parse_epoch_csv, serialize_epoch_csv
from .models import ModelSpec, Network, build, paper_best_spec
from .segmentation import SegmentationConfig, SleepPeriod, detect_sleep_periods
from .synth import CohortSpec, generate
from .training import ArraySplit, GridSpec, TrainConfig, grid_search, train

__version__ = "0.1.0"

__all__ = [
    "ArraySplit", "CohortSpec", "EpochSeries", "EvalReport", "GridSpec", "IntensityFeaturizer",
    "ModelSpec", "Network", "SMOTEOversampler", "SegmentationConfig", "SequencePadder",
    "SleepPeriod", "SleepQualityClassifier", "TrainConfig", "TrainingRecord", "build",
    "build_records", "detect_sleep_periods", "evaluate", "generate", "grid_search",
    "intensity_features", "make_pseudo_sequence", "pad_to_fixed_length", "paper_best_spec",
    "parse_epoch_csv", "roc_auc", "roc_curve", "serialize_epoch_csv", "smote",
    "subject_split", "train",
]
