from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actisleep.ingest import EpochSeries
from actisleep.segmentation import (SegmentationConfig, SleepPeriod, compute_latency,
                                    compute_waso, detect_sleep_periods, infer_bedtime,
                                    periods_from_csv, periods_to_csv, quality_label,
                                    sleep_candidate_mask, sleep_efficiency)

from oracles import brute_force_periods, random_minute_axes

T0 = datetime(2024, 1, 1, 20, 0, tzinfo=timezone.utc)


def series_of(axes, start=T0):
    return EpochSeries.from_axes("s", start, axes)


def blocks(*parts):
    """Concatenate (length, (x, y, z)) constant blocks."""
    return np.concatenate([np.tile(v, (n, 1)) for n, v in parts])


STILL, SEDENTARY, ACTIVE = (0, 0, 0), (20, 50, 10), (400, 900, 300)


def as_tuples(periods):
    return [(p.bedtime, p.onset, p.awakening, p.waso_min, p.latency_min) for p in periods]


def test_single_night():
    s = series_of(blocks((120, SEDENTARY), (480, STILL), (60, ACTIVE)))
    (p,) = detect_sleep_periods(s)
    assert (p.onset, p.awakening) == (120, 599)
    assert p.bedtime == 0 and p.latency_min == 120 and p.waso_min == 0
    assert as_tuples([p]) == brute_force_periods(s.axes, s.vertical)


def test_all_active_is_empty():
    assert detect_sleep_periods(series_of(blocks((500, ACTIVE)))) == []


def test_two_nights_ordered():
    night = [(30, SEDENTARY), (300, STILL), (6, ACTIVE), (200, STILL)]
    s = series_of(blocks((60, ACTIVE), *night, (600, ACTIVE), *night, (60, ACTIVE)))
    periods = detect_sleep_periods(s)
    assert len(periods) == 2
    assert periods[0].awakening < periods[1].bedtime
    assert periods[0].waso_min == 6
    assert as_tuples(periods) == brute_force_periods(s.axes, s.vertical)


def test_short_gap_joins_runs_into_one_period():
    # 20 active minutes between two sleep runs cannot satisfy the 30-minute window
    s = series_of(blocks((40, ACTIVE), (100, STILL), (20, ACTIVE), (100, STILL), (60, ACTIVE)))
    (p,) = detect_sleep_periods(s)
    assert (p.onset, p.awakening, p.waso_min) == (40, 259, 20)


def test_closing_window_must_be_observed():
    s = series_of(blocks((40, ACTIVE), (100, STILL), (29, ACTIVE)))
    assert detect_sleep_periods(s) == []
    s = series_of(blocks((40, ACTIVE), (100, STILL), (30, ACTIVE)))
    assert len(detect_sleep_periods(s)) == 1


def test_threshold_applies_to_every_axis():
    s = series_of(blocks((40, ACTIVE), (100, (0, 0, 1)), (60, ACTIVE)))
    assert detect_sleep_periods(s) == []
    loose = SegmentationConfig(sleep_count_threshold=1)
    assert len(detect_sleep_periods(s, loose)) == 1


def test_bedtime_examples():
    s = series_of(blocks((40, ACTIVE), (10, SEDENTARY), (100, STILL)))
    assert infer_bedtime(s, 50) == 40
    s = series_of(blocks((49, SEDENTARY), (1, ACTIVE), (100, STILL)))
    assert infer_bedtime(s, 50) == 50
    s = series_of(blocks((50, SEDENTARY), (100, STILL)))
    assert infer_bedtime(s, 50) == 0
    with pytest.raises(IndexError):
        infer_bedtime(s, 150)


def test_bedtime_scan_matches_backward_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        vertical = rng.choice([0, 50, 99, 100, 500], size=80)
        s = series_of(np.column_stack([vertical, vertical, vertical]))
        onset = int(rng.integers(0, 80))
        b = onset
        while b > 0 and vertical[b - 1] < 100:
            b -= 1
        assert infer_bedtime(s, onset) == b


def test_waso_counts_runs_longer_than_five():
    s = series_of(blocks((40, ACTIVE), (50, STILL), (7, ACTIVE), (50, STILL),
                         (3, ACTIVE), (50, STILL), (60, ACTIVE)))
    (p,) = detect_sleep_periods(s)
    assert p.waso_min == 7
    assert compute_waso(s, p) == 7


def test_waso_zero_and_six_minute_boundary():
    s = series_of(blocks((40, ACTIVE), (200, STILL), (60, ACTIVE)))
    assert detect_sleep_periods(s)[0].waso_min == 0
    for gap, expected in ((5, 0), (6, 6)):
        s = series_of(blocks((40, ACTIVE), (50, STILL), (gap, ACTIVE), (50, STILL), (60, ACTIVE)))
        assert detect_sleep_periods(s)[0].waso_min == expected


def test_latency_and_efficiency_examples():
    p = SleepPeriod(40, 50, 529, 20, 10)
    assert compute_latency(None, p) == 10
    assert p.length == 480
    assert p.efficiency == pytest.approx(460 / 490) and p.efficiency == pytest.approx(0.93878, abs=1e-5)
    assert p.label == "Good"
    p = SleepPeriod(0, 60, 539, 100, 60)
    assert p.efficiency == pytest.approx(0.70370, abs=1e-5) and p.label == "Poor"
    assert sleep_efficiency(SleepPeriod(5, 5, 100, 0, 0)) == 1.0


def test_label_threshold_is_strict():
    assert quality_label(0.85) == "Poor"
    assert quality_label(np.nextafter(0.85, 1)) == "Good"


def test_period_validation():
    with pytest.raises(ValueError):
        SleepPeriod(10, 5, 20, 0, -5)
    with pytest.raises(ValueError):
        SleepPeriod(0, 5, 20, 0, 4)
    with pytest.raises(ValueError):
        SegmentationConfig(onset_run_min=0)
    with pytest.raises(ValueError):
        SegmentationConfig(sleep_count_threshold=200)


def test_periods_csv_round_trip():
    s = series_of(blocks((120, SEDENTARY), (480, STILL), (60, ACTIVE)))
    rows = [("s1", p) for p in detect_sleep_periods(s)]
    text = periods_to_csv(rows)
    assert text.splitlines()[0] == "subject_id,bedtime,onset,awakening,waso_min,latency_min,efficiency,label"
    assert periods_from_csv(text) == rows


def test_random_series_match_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(60):
        axes = random_minute_axes(rng, int(rng.integers(1, 1500)))
        s = series_of(axes)
        assert as_tuples(detect_sleep_periods(s)) == brute_force_periods(axes, s.vertical)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 1200), st.integers(-10_000, 10_000))
def test_period_invariants_and_translation(seed, n, shift):
    axes = random_minute_axes(np.random.default_rng(seed), n)
    s = series_of(axes)
    periods = detect_sleep_periods(s)
    cand = sleep_candidate_mask(s, SegmentationConfig())
    last = -1
    for p in periods:
        assert last < p.bedtime <= p.onset < p.awakening
        assert cand[p.onset:p.onset + 15].all()
        assert 0.0 <= p.efficiency <= 1.0
        assert p.latency_min == p.onset - p.bedtime
        last = p.awakening
    moved = series_of(axes, start=T0 + timedelta(minutes=shift))
    assert detect_sleep_periods(moved) == periods
