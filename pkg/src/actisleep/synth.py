"""Synthetic actigraphy cohorts with a planted activity -> sleep-quality link.

Each subject-day is an awake block built from activity bouts, a sedentary
lead-in (the latency), and a night of zero counts. Moderate and vigorous
bouts cluster in one stretch of the day whose position follows a personal
habit (some subjects are active early, others late), with sedentary and
light bouts around it. Good nights have few,
short disturbances; Poor nights get a long latency and 6-20 minute wake
runs until their efficiency sits at least ``margin`` below the 0.85 cut.
The label of each night is drawn from the intensity fractions of the awake
block that precedes it:

* ``nonlinear``: ``P(Good) = sigmoid(a*moderate + b*vigorous - c*sedentary**2 + d)``
  with a negative ``b`` so that both inactive and over-exerted days sleep
  badly, which makes the label non-monotone in total activity.
* ``linear``: a score linear in the fractions.
* ``none``: labels independent of activity.

``noise_level`` scales standard-logistic noise added to the score before
thresholding at zero, so ``noise_level=0`` makes labels deterministic.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from ._random import derive_seed, make_rng
from .dataset import DEFAULT_CUTPOINTS, intensity_features
from .ingest import AXES, EpochSeries
from .segmentation import GOOD_THRESHOLD

SIGNALS = ("nonlinear", "linear", "none")

# Target intensity mix (sedentary, light, moderate, vigorous) per day archetype.
ARCHETYPES = {
    "sedentary": (0.80, 0.16, 0.03, 0.01),
    "light": (0.35, 0.50, 0.13, 0.02),
    "moderate": (0.22, 0.25, 0.50, 0.03),
    "vigorous": (0.50, 0.20, 0.06, 0.24),
}
ARCHETYPE_WEIGHTS = (0.15, 0.20, 0.45, 0.20)
# (min, max) bout length in minutes per intensity level
BOUT_MINUTES = ((10, 60), (5, 30), (15, 60), (3, 10))
COEFFICIENTS = {
    "nonlinear": dict(moderate=14.0, vigorous=-14.0, sedentary_sq=-8.0, intercept=-2.5),
    "linear": dict(moderate=10.0, vigorous=6.0, sedentary=-6.0, intercept=0.5),
}
VIGOROUS_MAX = 9000
# share of the background (sedentary/light) minutes placed before the active stretch
HABIT_RANGE = (0.2, 0.8)
HABIT_JITTER = 0.05


@dataclass(frozen=True)
class CohortSpec:
    n_subjects: int = 92
    days: int = 7
    seed: int = 0
    signal: str = "nonlinear"
    noise_level: float = 0.5
    vertical_axis: str = "y"
    margin: float = 0.03
    cutpoints: tuple = DEFAULT_CUTPOINTS
    start: str = "2024-01-06T07:00:00+00:00"

    def __post_init__(self):
        if self.n_subjects < 3:
            raise ValueError("n_subjects must be at least 3")
        if self.days < 1:
            raise ValueError("days must be at least 1")
        if self.signal not in SIGNALS:
            raise ValueError(f"signal must be one of {SIGNALS}")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        if self.vertical_axis not in AXES:
            raise ValueError("vertical_axis must be x, y or z")
        if not 0 < self.margin < 0.1:
            raise ValueError("margin must lie in (0, 0.1)")


@dataclass(frozen=True)
class GroundTruth:
    subject_id: str
    night: int
    bedtime: int
    onset: int
    awakening: int
    waso_min: int
    latency_min: int
    efficiency: float
    label: str
    p_good: float
    fractions: tuple


TRUTH_COLUMNS = ("subject_id", "night", "bedtime", "onset", "awakening", "waso_min",
                 "latency_min", "efficiency", "label", "p_good",
                 "sedentary", "light", "moderate", "vigorous")


@dataclass
class Cohort:
    spec: CohortSpec
    series: list = field(default_factory=list)
    truth: list = field(default_factory=list)

    def truth_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRUTH_COLUMNS)
        for t in self.truth:
            writer.writerow([t.subject_id, t.night, t.bedtime, t.onset, t.awakening,
                             t.waso_min, t.latency_min, repr(t.efficiency), t.label,
                             repr(t.p_good), *(repr(f) for f in t.fractions)])
        return buf.getvalue()


def _sigmoid(z: float) -> float:
    return float(1.0 / (1.0 + np.exp(-z)))


def quality_score(fractions, signal: str) -> float:
    sed, light, mod, vig = fractions
    if signal == "nonlinear":
        c = COEFFICIENTS["nonlinear"]
        return (c["moderate"] * mod + c["vigorous"] * vig
                + c["sedentary_sq"] * sed ** 2 + c["intercept"])
    if signal == "linear":
        c = COEFFICIENTS["linear"]
        return c["moderate"] * mod + c["vigorous"] * vig + c["sedentary"] * sed + c["intercept"]
    return 0.0


def _band_counts(rng, level: int, n: int, cutpoints) -> np.ndarray:
    lo = (1, *cutpoints)[level]
    hi = (*cutpoints, VIGOROUS_MAX + 1)[level] - 1
    if level == 3:
        return rng.integers(lo, hi + 1, size=n)
    # smooth bout: a level with small multiplicative jitter, kept inside the band
    centre = rng.uniform(lo, hi)
    jitter = rng.normal(0.0, 0.05 * centre, size=n)
    return np.clip(np.rint(centre + jitter), lo, hi).astype(np.int64)


def _awake_block(rng, length: int, fractions, cutpoints, lead: float = 0.5) -> np.ndarray:
    minutes = np.floor(np.asarray(fractions) * length).astype(int)
    minutes[1] += length - minutes.sum()
    background, active = [], []
    for level, total in enumerate(minutes):
        lo, hi = BOUT_MINUTES[level]
        while total > 0:
            d = min(total, int(rng.integers(lo, hi + 1)))
            (active if level >= 2 else background).append((level, d))
            total -= d
    background = [background[i] for i in rng.permutation(len(background))]
    active = [active[i] for i in rng.permutation(len(active))]
    target = lead * sum(d for _, d in background)
    before, used = [], 0
    while background and used + background[0][1] <= target:
        used += background[0][1]
        before.append(background.pop(0))
    bouts = before + active + background
    # bedtime inference needs a non-sedentary minute right before the lead-in
    last_active = max(i for i, (lv, _) in enumerate(bouts) if lv > 0)
    bouts.append(bouts.pop(last_active))
    return np.concatenate([_band_counts(rng, lv, d, cutpoints) for lv, d in bouts])


def _split_sleep(rng, total: int, parts: int, minimum: int) -> np.ndarray:
    """Random composition of ``total`` into ``parts`` pieces, each >= minimum."""
    spare = total - parts * minimum
    cuts = np.sort(rng.integers(0, spare + 1, size=parts - 1))
    return np.diff(np.r_[0, cuts, spare]) + minimum


def _night(rng, good: bool, margin: float):
    """Latency, per-minute vertical counts of the night (0 = asleep), and WASO."""
    length = int(rng.integers(420, 541))
    if good:
        latency = int(rng.integers(2, 21))
        runs = [int(rng.integers(1, 6)) for _ in range(rng.integers(0, 3))]
        if rng.random() < 0.5:
            runs.append(int(rng.integers(6, 11)))
    else:
        latency = int(rng.integers(20, 61))
        target = GOOD_THRESHOLD - margin - 0.02 * rng.random()
        needed = length - target * (length + latency)
        runs, waso = [], 0
        while waso < needed:
            d = int(rng.integers(6, 21))
            runs.append(d)
            waso += d
        runs += [int(rng.integers(1, 6)) for _ in range(rng.integers(0, 3))]
        runs = [runs[i] for i in rng.permutation(len(runs))]
    waso = sum(d for d in runs if d > 5)
    sleep = _split_sleep(rng, length - sum(runs), len(runs) + 1, 20)
    counts = np.zeros(length, dtype=np.int64)
    pos = 0
    for s, d in zip(sleep, runs + [0]):
        pos += s
        counts[pos:pos + d] = rng.integers(20, 600, size=d)
        pos += d
    return latency, counts, waso


def _triaxial(rng, vertical: np.ndarray, vertical_axis: str) -> np.ndarray:
    """Other axes scale the vertical count; zero minutes stay zero on every axis."""
    axes = np.empty((len(vertical), 3), dtype=np.int64)
    k = AXES[vertical_axis]
    for j in range(3):
        axes[:, j] = vertical if j == k else np.rint(vertical * rng.uniform(0.3, 1.2, len(vertical)))
    return axes


def _subject(spec: CohortSpec, index: int):
    rng = make_rng(derive_seed(spec.seed, f"subject-{index}"))
    subject_id = f"S{index + 1:03d}"
    start = datetime.fromisoformat(spec.start).astimezone(timezone.utc)
    start += timedelta(minutes=int(rng.integers(0, 60)))
    names = list(ARCHETYPES)
    preference = rng.dirichlet(20.0 * np.asarray(ARCHETYPE_WEIGHTS))
    habit = rng.uniform(*HABIT_RANGE)

    chunks, truth = [], []
    pos = 0
    for night in range(spec.days):
        kind = names[rng.choice(len(names), p=preference)]
        fractions = rng.dirichlet(60.0 * np.asarray(ARCHETYPES[kind]) + 0.5)
        lead = float(np.clip(habit + HABIT_JITTER * rng.standard_normal(), 0.0, 1.0))
        awake = _awake_block(rng, int(rng.integers(840, 1021)), fractions, spec.cutpoints, lead)
        realised = intensity_features(awake, spec.cutpoints).fractions
        score = quality_score(realised, spec.signal)
        noise = spec.noise_level * rng.logistic() if spec.noise_level else 0.0
        if spec.signal == "none":
            good = bool(rng.random() < 0.5)
            p_good = 0.5
        else:
            good = score + noise > 0
            p_good = _sigmoid(score / spec.noise_level) if spec.noise_level else float(score > 0)
        latency, night_counts, waso = _night(rng, good, spec.margin)
        lead_in = rng.integers(1, 100, size=latency)
        bedtime = pos + len(awake)
        onset = bedtime + latency
        awakening = onset + len(night_counts) - 1
        length = len(night_counts)
        efficiency = (length - waso) / (length + latency)
        truth.append(GroundTruth(subject_id, night, bedtime, onset, awakening, waso, latency,
                                 efficiency, "Good" if good else "Poor", p_good, realised))
        chunks += [awake, lead_in, night_counts]
        pos = awakening + 1
    tail = _awake_block(rng, int(rng.integers(60, 180)), ARCHETYPES["light"], spec.cutpoints)
    chunks.append(tail)
    vertical = np.concatenate(chunks).astype(np.int64)
    series = EpochSeries.from_axes(subject_id, start, _triaxial(rng, vertical, spec.vertical_axis),
                                   vertical_axis=spec.vertical_axis)
    return series, truth


def generate(spec: CohortSpec = CohortSpec()) -> Cohort:
    """Build the cohort; subjects draw from independent derived seeds."""
    cohort = Cohort(spec)
    for i in range(spec.n_subjects):
        series, truth = _subject(spec, i)
        cohort.series.append(series)
        cohort.truth.extend(truth)
    return cohort
