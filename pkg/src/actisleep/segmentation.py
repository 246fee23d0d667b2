"""Sleep-period detection and sleep-efficiency labelling.

A minute is a *sleep candidate* when none of its three axes exceeds
``sleep_count_threshold`` and *sedentary* when its vertical count is below
``sedentary_cutpoint``. Minute indices are 0-based offsets from the series
start; periods span the inclusive range ``[onset, awakening]``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .ingest import EpochSeries

GOOD_THRESHOLD = 0.85


@dataclass(frozen=True)
class SegmentationConfig:
    sleep_count_threshold: int = 0
    sedentary_cutpoint: int = 100
    onset_run_min: int = 15
    awakening_run_min: int = 15
    post_awakening_activity_min: int = 30
    waso_run_min: int = 5

    def __post_init__(self):
        runs = (self.onset_run_min, self.awakening_run_min,
                self.post_awakening_activity_min, self.waso_run_min)
        if min(runs) <= 0:
            raise ValueError("run lengths must be positive")
        if self.sleep_count_threshold > self.sedentary_cutpoint:
            raise ValueError("sleep_count_threshold must not exceed sedentary_cutpoint")


@dataclass(frozen=True)
class SleepPeriod:
    bedtime: int
    onset: int
    awakening: int
    waso_min: int
    latency_min: int

    def __post_init__(self):
        if not self.bedtime <= self.onset < self.awakening:
            raise ValueError(f"need bedtime <= onset < awakening, got {self}")
        if not 0 <= self.waso_min <= self.length:
            raise ValueError("waso_min out of range")
        if self.latency_min != self.onset - self.bedtime:
            raise ValueError("latency_min must equal onset - bedtime")

    @property
    def length(self) -> int:
        return self.awakening - self.onset + 1

    @property
    def efficiency(self) -> float:
        return sleep_efficiency(self)

    @property
    def label(self) -> str:
        return quality_label(self.efficiency)

    @property
    def label_value(self) -> int:
        return int(self.label == "Good")


def quality_label(efficiency: float) -> str:
    return "Good" if efficiency > GOOD_THRESHOLD else "Poor"


def sleep_efficiency(period: SleepPeriod) -> float:
    """(length - WASO) / (length + latency), length counting both endpoints."""
    length = period.length
    return (length - period.waso_min) / (length + period.latency_min)


def sleep_candidate_mask(series: EpochSeries, cfg: SegmentationConfig) -> np.ndarray:
    return (series.axes <= cfg.sleep_count_threshold).all(axis=1)


def sedentary_mask(series: EpochSeries, cfg: SegmentationConfig) -> np.ndarray:
    return series.vertical < cfg.sedentary_cutpoint


def runs_of(mask: np.ndarray) -> np.ndarray:
    """``(start, end)`` rows, inclusive, for every maximal run of True."""
    padded = np.concatenate(([False], np.asarray(mask, dtype=bool), [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return edges.reshape(-1, 2) - np.array([0, 1])


def _require_minutes(series: EpochSeries):
    if series.epoch_length_s != 60:
        raise ValueError("segmentation expects a minute-resolution series")


def infer_bedtime(series: EpochSeries, candidate_onset: int,
                  cfg: SegmentationConfig = SegmentationConfig(), lower: int = 0) -> int:
    """Start of the sedentary run ending right before ``candidate_onset``.

    The backward scan never goes below ``lower`` (the minute after the
    previous awakening), so a bedtime cannot fall inside an earlier period.
    """
    n = len(series)
    if not 0 <= candidate_onset < n:
        raise IndexError(f"candidate_onset {candidate_onset} outside [0, {n})")
    if not 0 <= lower <= candidate_onset:
        raise ValueError("lower must lie in [0, candidate_onset]")
    sed = sedentary_mask(series, cfg)[lower:candidate_onset]
    active = np.flatnonzero(~sed)
    return lower + (int(active[-1]) + 1 if len(active) else 0)


def compute_waso(series: EpochSeries, period: SleepPeriod,
                 cfg: SegmentationConfig = SegmentationConfig()) -> int:
    """Minutes in wake runs longer than ``waso_run_min`` inside the period."""
    inner = ~sleep_candidate_mask(series, cfg)[period.onset + 1:period.awakening]
    lengths = np.diff(runs_of(inner), axis=1).ravel() + 1
    return int(lengths[lengths > cfg.waso_run_min].sum())


def compute_latency(series: EpochSeries, period: SleepPeriod,
                    cfg: SegmentationConfig = SegmentationConfig()) -> int:
    return period.onset - period.bedtime


def _boundaries(candidate: np.ndarray, cfg: SegmentationConfig) -> list[tuple[int, int]]:
    n = len(candidate)
    runs = runs_of(candidate)
    lengths = runs[:, 1] - runs[:, 0] + 1
    onset_starts = runs[lengths >= cfg.onset_run_min, 0]
    closing = runs[lengths >= cfg.awakening_run_min]
    window = cfg.post_awakening_activity_min

    out = []
    pos = 0
    while True:
        k = np.searchsorted(onset_starts, pos)
        if k == len(onset_starts):
            break
        onset = int(onset_starts[k])
        awakening = None
        for start, end in closing[np.searchsorted(closing[:, 0], onset):]:
            if end + window > n - 1:
                break  # the activity window after this run is not observed
            nxt = np.searchsorted(onset_starts, end + 1)
            if nxt == len(onset_starts) or onset_starts[nxt] > end + window:
                awakening = int(end)
                break
        if awakening is None:
            break
        out.append((onset, awakening))
        pos = awakening + 1
    return out


def detect_sleep_periods(series: EpochSeries,
                         cfg: SegmentationConfig = SegmentationConfig()) -> list[SleepPeriod]:
    """Detect chronological, non-overlapping sleep periods.

    Onset is the first minute of a run of at least ``onset_run_min``
    sleep-candidate minutes. The period closes at the last minute of the
    first run of at least ``awakening_run_min`` candidates that is followed
    by ``post_awakening_activity_min`` observed minutes in which no new
    onset-length run begins. Candidate runs separated by shorter gaps belong
    to the same period. A period whose closing window runs past the end of
    the series is discarded.
    """
    _require_minutes(series)
    candidate = sleep_candidate_mask(series, cfg)
    periods = []
    lower = 0
    for onset, awakening in _boundaries(candidate, cfg):
        bedtime = infer_bedtime(series, onset, cfg, lower=lower)
        stub = SleepPeriod(bedtime, onset, awakening, 0, onset - bedtime)
        waso = compute_waso(series, stub, cfg)
        periods.append(SleepPeriod(bedtime, onset, awakening, waso, onset - bedtime))
        lower = awakening + 1
    return periods


PERIOD_COLUMNS = ("subject_id", "bedtime", "onset", "awakening", "waso_min",
                  "latency_min", "efficiency", "label")


def periods_to_csv(rows: Iterable[tuple[str, SleepPeriod]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PERIOD_COLUMNS)
    for subject_id, p in rows:
        writer.writerow([subject_id, p.bedtime, p.onset, p.awakening, p.waso_min,
                         p.latency_min, repr(p.efficiency), p.label])
    return buf.getvalue()


def periods_from_csv(text: str) -> list[tuple[str, SleepPeriod]]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append((row["subject_id"], SleepPeriod(
            int(row["bedtime"]), int(row["onset"]), int(row["awakening"]),
            int(row["waso_min"]), int(row["latency_min"]))))
    return out
