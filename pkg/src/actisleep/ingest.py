"""Epoch-count ingestion: CSV parsing, gap handling and minute aggregation.

The input format is one row per epoch::

    subject_id,timestamp_iso8601,axis_x,axis_y,axis_z

Timestamps must carry an explicit UTC offset; they are normalised to UTC.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Union

import numpy as np

HEADER = ("subject_id", "timestamp_iso8601", "axis_x", "axis_y", "axis_z")
AXES = {"x": 0, "y": 1, "z": 2}
DEFAULT_GAP_LIMIT_MIN = 5


class EpochParseError(ValueError):
    """Malformed epoch CSV input. ``lineno`` is 1-based and counts the header."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Epoch:
    timestamp: datetime
    axis_counts: tuple[int, int, int]
    vertical: int
    imputed: bool = False


@dataclass(frozen=True, eq=False)
class EpochSeries:
    """Contiguous, gap-free epoch counts of one subject.

    ``axes`` is an ``(n, 3)`` integer array; ``vertical`` holds the counts of
    the axis chosen as vertical at parse time. Imputed epochs (short gaps
    filled with zeros) are flagged in ``imputed``. A subject whose recording
    has a gap longer than the gap limit yields several series distinguished
    by ``block``.
    """

    subject_id: str
    start: datetime
    axes: np.ndarray
    vertical: np.ndarray
    epoch_length_s: int = 60
    imputed: np.ndarray | None = None
    block: int = 0
    vertical_axis: str = "y"

    def __post_init__(self):
        axes = np.array(self.axes, dtype=np.int64).reshape(-1, 3)
        vertical = np.array(self.vertical, dtype=np.int64).reshape(-1)
        if len(axes) == 0:
            raise ValueError("an EpochSeries must not be empty")
        if len(vertical) != len(axes):
            raise ValueError("vertical and axes lengths differ")
        if (axes < 0).any() or (vertical < 0).any():
            raise ValueError("activity counts must be non-negative")
        if self.epoch_length_s <= 0:
            raise ValueError("epoch_length_s must be positive")
        if self.start.tzinfo is None:
            raise ValueError("start must be timezone-aware")
        imputed = (np.zeros(len(axes), dtype=bool) if self.imputed is None
                   else np.array(self.imputed, dtype=bool).reshape(-1))
        if len(imputed) != len(axes):
            raise ValueError("imputed flags and axes lengths differ")
        for arr in (axes, vertical, imputed):
            arr.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "vertical", vertical)
        object.__setattr__(self, "imputed", imputed)
        object.__setattr__(self, "start", self.start.astimezone(timezone.utc))

    @classmethod
    def from_axes(cls, subject_id: str, start: datetime, axes,
                  vertical_axis: str = "y", **kwargs) -> "EpochSeries":
        axes = np.asarray(axes, dtype=np.int64).reshape(-1, 3)
        return cls(subject_id, start, axes, axes[:, AXES[vertical_axis]],
                   vertical_axis=vertical_axis, **kwargs)

    def __len__(self) -> int:
        return len(self.axes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EpochSeries):
            return NotImplemented
        return (self.subject_id == other.subject_id
                and self.start == other.start
                and self.epoch_length_s == other.epoch_length_s
                and self.block == other.block
                and np.array_equal(self.axes, other.axes)
                and np.array_equal(self.vertical, other.vertical)
                and np.array_equal(self.imputed, other.imputed))

    __hash__ = None

    def timestamp(self, i: int) -> datetime:
        return self.start + timedelta(seconds=int(i) * self.epoch_length_s)

    @property
    def timestamps(self) -> list[datetime]:
        return [self.timestamp(i) for i in range(len(self))]

    @property
    def epochs(self) -> list[Epoch]:
        return [
            Epoch(self.timestamp(i), tuple(int(v) for v in self.axes[i]),
                  int(self.vertical[i]), bool(self.imputed[i]))
            for i in range(len(self))
        ]

    def shifted(self, delta: timedelta) -> "EpochSeries":
        """Same counts, every timestamp moved by ``delta``."""
        return EpochSeries(self.subject_id, self.start + delta, self.axes,
                           self.vertical, self.epoch_length_s, self.imputed,
                           self.block, self.vertical_axis)


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    return ts.astimezone(timezone.utc)


def _parse_count(text: str) -> int:
    value = int(text.strip())
    if value < 0:
        raise ValueError(f"negative count {value}")
    return value


Source = Union[bytes, str, IO[bytes], IO[str]]


def _as_text(source: Source) -> io.StringIO:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def parse_epoch_csv(source: Source, vertical_axis: str = "y",
                    gap_limit_min: float = DEFAULT_GAP_LIMIT_MIN,
                    epoch_length_s: int | None = None) -> list[EpochSeries]:
    """Parse an epoch CSV into one series per subject (and per contiguous block).

    Rows may appear in any order. Missing epochs spanning at most
    ``gap_limit_min`` minutes are filled with zero counts flagged as imputed;
    longer gaps start a new block. The epoch length is the smallest spacing
    observed for a subject unless given explicitly.

    Raises
    ------
    EpochParseError
        On a wrong header, an unparsable row, a negative count, a duplicate
        ``(subject_id, timestamp)`` pair or misaligned timestamps.
    """
    if vertical_axis not in AXES:
        raise ValueError(f"vertical_axis must be one of {sorted(AXES)}")
    reader = csv.reader(_as_text(source))
    try:
        header = next(reader)
    except StopIteration:
        raise EpochParseError("empty input, header required", 1) from None
    if tuple(h.strip() for h in header) != HEADER:
        raise EpochParseError(f"expected header {','.join(HEADER)}", 1)

    rows: dict[str, dict[datetime, tuple[tuple[int, int, int], int]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(HEADER):
            raise EpochParseError(f"expected {len(HEADER)} fields, got {len(row)}", lineno)
        subject = row[0].strip()
        if not subject:
            raise EpochParseError("empty subject_id", lineno)
        try:
            ts = parse_timestamp(row[1])
            counts = tuple(_parse_count(c) for c in row[2:])
        except ValueError as exc:
            raise EpochParseError(str(exc), lineno) from None
        per_subject = rows.setdefault(subject, {})
        if ts in per_subject:
            first = per_subject[ts][1]
            raise EpochParseError(
                f"duplicate epoch for subject {subject!r} at {ts.isoformat()} "
                f"(first seen on line {first})", lineno)
        per_subject[ts] = (counts, lineno)

    series = []
    for subject in sorted(rows):
        series.extend(_assemble(subject, rows[subject], vertical_axis,
                                gap_limit_min, epoch_length_s))
    return series


def _assemble(subject, by_ts, vertical_axis, gap_limit_min, epoch_length_s):
    stamps = sorted(by_ts)
    if epoch_length_s is None:
        diffs = [(b - a).total_seconds() for a, b in zip(stamps, stamps[1:])]
        epoch_length_s = int(min(diffs)) if diffs else 60
    if epoch_length_s <= 0:
        raise EpochParseError(f"subject {subject!r}: non-positive epoch length")
    step = timedelta(seconds=epoch_length_s)
    max_missing = int(gap_limit_min * 60 // epoch_length_s)

    blocks: list[list[tuple[datetime, tuple[int, int, int] | None]]] = [[]]
    prev = None
    for ts in stamps:
        if prev is not None:
            n_steps, rem = divmod((ts - prev).total_seconds(), epoch_length_s)
            if rem:
                raise EpochParseError(
                    f"subject {subject!r}: timestamp {ts.isoformat()} not aligned "
                    f"to {epoch_length_s}s epochs", by_ts[ts][1])
            missing = int(n_steps) - 1
            if missing > max_missing:
                blocks.append([])
            else:
                blocks[-1].extend((prev + step * (k + 1), None) for k in range(missing))
        blocks[-1].append((ts, by_ts[ts][0]))
        prev = ts

    out = []
    for b, block in enumerate(blocks):
        axes = np.array([c if c is not None else (0, 0, 0) for _, c in block],
                        dtype=np.int64)
        imputed = np.array([c is None for _, c in block])
        out.append(EpochSeries(subject, block[0][0], axes, axes[:, AXES[vertical_axis]],
                               epoch_length_s, imputed, b, vertical_axis))
    return out


def serialize_epoch_csv(series: Iterable[EpochSeries]) -> bytes:
    """Inverse of :func:`parse_epoch_csv`; imputed epochs are omitted."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for s in series:
        for i in range(len(s)):
            if s.imputed[i]:
                continue
            x, y, z = (int(v) for v in s.axes[i])
            writer.writerow([s.subject_id, s.timestamp(i).isoformat(), x, y, z])
    return buf.getvalue().encode("utf-8")


def aggregate_to_minutes(series: EpochSeries) -> EpochSeries:
    """Sum sub-minute epochs into wall-clock minutes.

    A minute is imputed only if all of its constituent epochs are.
    """
    if len(series) == 0:
        raise ValueError("cannot aggregate an empty series")
    e = series.epoch_length_s
    if e == 60:
        return series
    if 60 % e:
        raise ValueError(f"epoch length {e}s does not divide a minute")
    start = series.start
    if start.microsecond:
        raise ValueError("series start must fall on a whole second")
    first_minute = start.replace(second=0)
    bins = (start.second + np.arange(len(series)) * e) // 60
    n_min = int(bins[-1]) + 1
    axes = np.zeros((n_min, 3), dtype=np.int64)
    np.add.at(axes, bins, series.axes)
    vertical = np.bincount(bins, weights=series.vertical, minlength=n_min).astype(np.int64)
    real = np.bincount(bins, weights=~series.imputed, minlength=n_min)
    return EpochSeries(series.subject_id, first_minute, axes, vertical, 60,
                       real == 0, series.block, series.vertical_axis)


def vertical_series(series: EpochSeries) -> np.ndarray:
    """Per-minute vertical counts as floats."""
    if series.epoch_length_s != 60:
        raise ValueError("vertical_series expects a minute-resolution series")
    return series.vertical.astype(np.float64)
