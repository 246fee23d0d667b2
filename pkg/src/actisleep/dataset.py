"""Supervised records, input representations, subject splits and SMOTE."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._random import make_rng
from .ingest import EpochSeries, vertical_series
from .segmentation import SleepPeriod
from .validation import check_binary_labels, check_cutpoints, check_sequences

DEFAULT_CUTPOINTS = (100, 760, 2020)
SPLIT_RATIOS = (0.70, 0.15, 0.15)
PARTITIONS = ("train", "validation", "test")
INTENSITY_LEVELS = ("sedentary", "light", "moderate", "vigorous")


@dataclass(frozen=True, eq=False)
class TrainingRecord:
    """Awake-time activity and the quality label of the sleep that follows.

    ``start`` is the minute index of the first awake minute in the source
    series, when known.
    """

    subject_id: str
    awake: np.ndarray
    label: int
    start: int | None = None

    def __post_init__(self):
        awake = np.array(self.awake, dtype=np.float64).reshape(-1)
        awake.setflags(write=False)
        object.__setattr__(self, "awake", awake)
        if self.label not in (0, 1):
            raise ValueError("label must be 1 (Good) or 0 (Poor)")

    def __eq__(self, other):
        if not isinstance(other, TrainingRecord):
            return NotImplemented
        return (self.subject_id == other.subject_id and self.label == other.label
                and np.array_equal(self.awake, other.awake))

    __hash__ = None


def build_records(series: EpochSeries, periods: Sequence[SleepPeriod]) -> list[TrainingRecord]:
    """Pair each awake gap with the sleep period that follows it.

    The gap runs from the minute after the previous awakening (or the series
    start) to the minute before the next bedtime, so latency and sleep
    minutes never leak into a record.
    """
    counts = vertical_series(series)
    records = []
    start = 0
    for p in periods:
        if p.bedtime > start:
            records.append(TrainingRecord(series.subject_id, counts[start:p.bedtime],
                                          p.label_value, start))
        start = p.awakening + 1
    return records


@dataclass(frozen=True, eq=False)
class PseudoSequence:
    steps: np.ndarray
    S: int
    original_len: int

    def flatten(self) -> np.ndarray:
        return self.steps.reshape(-1)[:self.original_len]


def make_pseudo_sequence(awake, S: int) -> PseudoSequence:
    """Merge consecutive blocks of ``S`` minutes into single time steps.

    The trailing block is zero-padded, so there are ``ceil(len / S)`` steps.
    """
    if S < 1:
        raise ValueError("S must be at least 1")
    awake = np.asarray(awake, dtype=np.float64).reshape(-1)
    n_steps = max(1, math.ceil(len(awake) / S))
    padded = np.zeros(n_steps * S)
    padded[:len(awake)] = awake
    return PseudoSequence(padded.reshape(n_steps, S), S, len(awake))


def pad_sequences(seqs, target_len: int) -> np.ndarray:
    """Stack sequences into ``(n, target_len)``, zero-padding or truncating at the end."""
    if target_len <= 0:
        raise ValueError("target_len must be positive")
    out = np.zeros((len(seqs), target_len))
    truncated = 0
    for i, s in enumerate(seqs):
        s = np.asarray(s, dtype=np.float64).reshape(-1)
        if len(s) > target_len:
            truncated += 1
        m = min(len(s), target_len)
        out[i, :m] = s[:m]
    if truncated:
        warnings.warn(f"{truncated} sequence(s) longer than {target_len} were truncated",
                      stacklevel=2)
    return out


def pad_to_fixed_length(records: Sequence[TrainingRecord], target_len: int) -> list[TrainingRecord]:
    padded = pad_sequences([r.awake for r in records], target_len)
    return [replace(r, awake=row) for r, row in zip(records, padded)]


@dataclass(frozen=True)
class IntensityFeatures:
    fractions: tuple[float, float, float, float]
    cutpoints: tuple[float, float, float] = DEFAULT_CUTPOINTS

    def as_array(self) -> np.ndarray:
        return np.array(self.fractions)


def intensity_features(awake, cutpoints=DEFAULT_CUTPOINTS) -> IntensityFeatures:
    """Fraction of minutes that are sedentary, light, moderate and vigorous.

    Bin ``k`` holds counts in ``[cutpoints[k-1], cutpoints[k])``.
    """
    cp = check_cutpoints(cutpoints)
    awake = np.asarray(awake, dtype=np.float64).reshape(-1)
    if len(awake) == 0:
        raise ValueError("awake sequence is empty")
    bins = np.searchsorted(cp, awake, side="right")
    fractions = np.bincount(bins, minlength=4) / len(awake)
    return IntensityFeatures(tuple(float(f) for f in fractions), cp)


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int
    assignment: dict = field(default_factory=dict)
    ratios: tuple = SPLIT_RATIOS

    def partition(self, name: str) -> list:
        return getattr(self, name)


def partition_sizes(n_subjects: int, ratios=SPLIT_RATIOS) -> tuple[int, ...]:
    """Largest-remainder rounding of ``ratios * n_subjects``; no partition left empty."""
    quotas = [r * n_subjects for r in ratios]
    sizes = [int(math.floor(q + 1e-9)) for q in quotas]
    remainders = [q - s for q, s in zip(quotas, sizes)]
    for i in sorted(range(len(ratios)), key=lambda i: (-remainders[i], i))[:n_subjects - sum(sizes)]:
        sizes[i] += 1
    while min(sizes) == 0:
        sizes[sizes.index(max(sizes))] -= 1
        sizes[sizes.index(0)] += 1
    return tuple(sizes)


def assign_subjects(subject_ids, seed: int, ratios=SPLIT_RATIOS) -> dict[str, str]:
    """Deterministic subject -> partition map, shared by every representation."""
    subjects = sorted(set(subject_ids))
    if len(subjects) < len(ratios):
        raise ValueError(f"need at least {len(ratios)} distinct subjects, got {len(subjects)}")
    order = make_rng(seed).permutation(len(subjects))
    sizes = partition_sizes(len(subjects), ratios)
    assignment = {}
    pos = 0
    for name, size in zip(PARTITIONS, sizes):
        for k in order[pos:pos + size]:
            assignment[subjects[k]] = name
        pos += size
    return assignment


def subject_split(records: Sequence[TrainingRecord], seed: int,
                  ratios=SPLIT_RATIOS, assignment: dict | None = None) -> DatasetSplit:
    if assignment is None:
        assignment = assign_subjects([r.subject_id for r in records], seed, ratios)
    parts = {name: [] for name in PARTITIONS}
    for r in records:
        parts[assignment[r.subject_id]].append(r)
    return DatasetSplit(parts["train"], parts["validation"], parts["test"], seed,
                        dict(assignment), tuple(ratios))


def _nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    d2 = cdist(X, X, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(minority, k: int = 5, amount: float = 1.0, seed=0, return_parents: bool = False):
    """Synthesize ``round(amount * len(minority))`` minority points.

    Each synthetic point is ``x + lam * (x_nn - x)`` where ``x_nn`` is drawn
    from the ``k`` Euclidean nearest minority neighbours of ``x`` and
    ``lam ~ U[0, 1)``. Base points cycle through the minority set for the
    whole part of ``amount``; the fractional part uses a random subset.
    With ``return_parents`` the base indices, neighbour indices and ``lam``
    are returned as well.
    """
    X = np.asarray(minority, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("minority must be a 2-D array of feature vectors")
    n = len(X)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= n:
        raise ValueError(f"k={k} requires more than {k} minority samples, got {n}")
    if amount < 0:
        raise ValueError("amount must be non-negative")
    n_new = int(round(amount * n))
    rng = make_rng(seed)
    whole, frac = divmod(n_new, n)
    base = np.concatenate([np.tile(np.arange(n), whole),
                           np.sort(rng.choice(n, frac, replace=False))]).astype(np.int64)
    neighbors = _nearest_neighbors(X, k)
    nn = neighbors[base, rng.integers(0, k, size=n_new)]
    lam = rng.random(n_new)
    synthetic = X[base] + lam[:, None] * (X[nn] - X[base])
    if return_parents:
        return synthetic, base, nn, lam
    return synthetic


class SMOTEOversampler(BaseEstimator):
    """Balance a binary training set by oversampling its minority class."""

    def __init__(self, k_neighbors: int = 5, random_state: int = 0):
        self.k_neighbors = k_neighbors
        self.random_state = random_state

    def fit_resample(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = check_binary_labels(y, len(X))
        counts = np.bincount(y, minlength=2)
        minority = int(np.argmin(counts))
        deficit = int(counts.max() - counts.min())
        self.n_synthetic_ = deficit
        if deficit == 0:
            return X.copy(), y.copy()
        X_min = X[y == minority]
        synthetic, base, _, _ = smote(X_min, self.k_neighbors, deficit / len(X_min),
                                      self.random_state, return_parents=True)
        self.synthetic_parents_ = base
        return (np.vstack([X, synthetic]),
                np.concatenate([y, np.full(len(synthetic), minority)]))


class SequencePadder(TransformerMixin, BaseEstimator):
    """Zero-pad ragged awake sequences to a common length.

    ``max_len=None`` learns the longest training sequence.
    """

    def __init__(self, max_len: int | None = None):
        self.max_len = max_len

    def fit(self, X, y=None):
        seqs = check_sequences(X)
        self.max_len_ = int(self.max_len or max(len(s) for s in seqs))
        return self

    def transform(self, X):
        check_is_fitted(self, "max_len_")
        return pad_sequences(check_sequences(X), self.max_len_)


class IntensityFeaturizer(TransformerMixin, BaseEstimator):
    """Map awake sequences to their four intensity-level fractions."""

    def __init__(self, cutpoints=DEFAULT_CUTPOINTS):
        self.cutpoints = cutpoints

    def fit(self, X, y=None):
        self.cutpoints_ = check_cutpoints(self.cutpoints)
        return self

    def transform(self, X):
        check_is_fitted(self, "cutpoints_")
        return np.array([intensity_features(s, self.cutpoints_).fractions
                         for s in check_sequences(X)])

    def get_feature_names_out(self, input_features=None):
        return np.array(INTENSITY_LEVELS, dtype=object)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def records_to_csv(records: Sequence[TrainingRecord]) -> str:
    """One row per record: ``subject_id,label,len,v1,...,vlen``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subject_id", "label", "len", "values"])
    for r in records:
        writer.writerow([r.subject_id, r.label, len(r.awake), *(_fmt(v) for v in r.awake)])
    return buf.getvalue()


def records_from_csv(text: str) -> list[TrainingRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[:3] != ["subject_id", "label", "len"]:
        raise ValueError("not a dataset partition file")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        n = int(row[2])
        values = [float(v) for v in row[3:]]
        if len(values) != n:
            raise ValueError(f"line {lineno}: len={n} but {len(values)} values")
        out.append(TrainingRecord(row[0], np.array(values), int(row[1])))
    return out
