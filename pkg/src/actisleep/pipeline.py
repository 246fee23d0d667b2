"""End-to-end glue: series -> records -> representation -> split -> model -> metrics."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._random import derive_seed
from .dataset import (DEFAULT_CUTPOINTS, PARTITIONS, DatasetSplit, SMOTEOversampler,
                      build_records, intensity_features, pad_sequences, subject_split)
from .estimator import SleepQualityClassifier
from .evaluation import EvalReport, evaluate
from .models import ModelSpec, paper_best_spec
from .segmentation import SegmentationConfig, detect_sleep_periods
from .training import ArraySplit


def cohort_records(series, cfg: SegmentationConfig | None = None) -> list:
    """Segment every series and pair awake gaps with the following night."""
    cfg = cfg or SegmentationConfig()
    records = []
    for s in series:
        records.extend(build_records(s, detect_sleep_periods(s, cfg)))
    return records


def representation(records, input_repr: str, max_len: int,
                   cutpoints=DEFAULT_CUTPOINTS) -> np.ndarray:
    """Feature matrix for ``records``.

    ``raw_padded`` and ``pseudo_seq`` share the zero-padded minute rows; the
    recurrent networks cut them into steps themselves.
    """
    if input_repr == "intensity4":
        return np.array([intensity_features(r.awake, cutpoints).fractions for r in records])
    if input_repr in ("raw_padded", "pseudo_seq"):
        return pad_sequences([r.awake for r in records], max_len)
    raise ValueError(f"unknown input_repr {input_repr!r}")


@dataclass
class PreparedData:
    split: ArraySplit
    partitions: DatasetSplit
    max_len: int
    input_repr: str
    n_synthetic: int = 0
    info: dict = field(default_factory=dict)


def prepare(records, seed: int, input_repr: str = "raw_padded", max_len: int | None = None,
            use_smote: bool = True, k_neighbors: int = 5,
            cutpoints=DEFAULT_CUTPOINTS, partitions: DatasetSplit | None = None) -> PreparedData:
    """Split by subject, build one representation and rebalance the training part.

    ``max_len`` defaults to the longest training awake segment. SMOTE only
    touches the training partition.
    """
    if partitions is None:
        partitions = subject_split(records, derive_seed(seed, "split"))
    for name in PARTITIONS:
        if not partitions.partition(name):
            raise ValueError(f"partition {name!r} has no records")
    if max_len is None:
        max_len = max(len(r.awake) for r in partitions.train)
    arrays = {}
    for name in PARTITIONS:
        recs = partitions.partition(name)
        arrays[name] = (representation(recs, input_repr, max_len, cutpoints),
                        np.array([r.label for r in recs]))
    X_train, y_train = arrays["train"]
    n_synthetic = 0
    if use_smote:
        sampler = SMOTEOversampler(k_neighbors, derive_seed(seed, "smote"))
        X_train, y_train = sampler.fit_resample(X_train, y_train)
        n_synthetic = sampler.n_synthetic_
    split = ArraySplit(X_train, y_train, *arrays["validation"], *arrays["test"])
    return PreparedData(split, partitions, int(max_len), input_repr, n_synthetic)


def fit_model(spec: ModelSpec, data: PreparedData, seed: int, **train_kwargs) -> SleepQualityClassifier:
    params = {k: v for k, v in spec.to_dict().items()}
    est = SleepQualityClassifier(**params, random_state=derive_seed(seed, f"train-{spec.arch}"),
                                 **train_kwargs)
    return est.fit(data.split.X_train, data.split.y_train, data.split.X_val, data.split.y_val)


def score_test(est: SleepQualityClassifier, data: PreparedData) -> EvalReport:
    return evaluate(est.predict_proba(data.split.X_test)[:, 1], data.split.y_test)


@dataclass
class ArchOutcome:
    spec: ModelSpec
    estimator: SleepQualityClassifier
    report: EvalReport
    seconds: float


def run_architectures(records, seed: int, archs=("lr", "mlp", "cnn", "rnn", "lstm"),
                      specs: dict | None = None, max_len: int | None = None,
                      **train_kwargs) -> dict[str, ArchOutcome]:
    """Train each architecture on one shared subject split and score the test part."""
    specs = specs or {}
    partitions = subject_split(records, derive_seed(seed, "split"))
    prepared: dict[str, PreparedData] = {}
    out = {}
    for arch in archs:
        spec = specs.get(arch) or paper_best_spec(arch)
        if spec.input_repr not in prepared:
            prepared[spec.input_repr] = prepare(records, seed, spec.input_repr, max_len,
                                                partitions=partitions)
        data = prepared[spec.input_repr]
        t0 = time.perf_counter()
        est = fit_model(spec, data, seed, **train_kwargs)
        out[arch] = ArchOutcome(spec, est, score_test(est, data), time.perf_counter() - t0)
    return out
