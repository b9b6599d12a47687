"""CGM data handling: CSV ingestion, feature crafting, windowing, splits, synthetic data.

The canonical CSV format is::

    timestamp,glucose_mgdl,basal_u_per_hr,bolus_u,carbs_g
    2023-12-19T00:00:00Z,120.00,0.500,0.000,0.00

Timestamps are ISO-8601 UTC at seconds resolution and must be strictly
increasing. Glucose is mandatory per row; empty basal/bolus/carbs cells
default to 0 (no event).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import FormatError, OrderingError, RowError, SplitError

CSV_HEADER = ("timestamp", "glucose_mgdl", "basal_u_per_hr", "bolus_u", "carbs_g")

#: Column order of the model's input features.
FEATURE_NAMES = ("glucose", "basal", "bolus", "carbs", "moving_avg", "region")
N_FEATURES = len(FEATURE_NAMES)

#: Sensor sampling interval and the widest gap a window may contain (1.5x).
SAMPLE_INTERVAL_S = 300.0
GAP_TOLERANCE_S = 450.0

HYPO_REGION = 1
NORMAL_REGION = 2
HYPER_REGION = 3


@dataclass(frozen=True)
class Thresholds:
    """Glucose region boundaries in mg/dL (both boundaries belong to the normal region)."""

    hypo: float = 70.0
    hyper: float = 180.0

    def __post_init__(self):
        if not (0.0 < self.hypo < self.hyper):
            raise ValueError(f"need 0 < hypo < hyper, got ({self.hypo}, {self.hyper})")


@dataclass(frozen=True)
class CgmRecord:
    """One timestamped sensor/pump sample."""

    timestamp: datetime  # tz-aware UTC
    glucose: float  # mg/dL
    basal: float = 0.0  # insulin units/hour
    bolus: float = 0.0  # insulin units
    carbs: float = 0.0  # grams


@dataclass
class WindowSet:
    """Supervised samples: ``x`` is (n, in_len, 6), ``y`` is raw future glucose (n, out_len).

    ``origin_s`` holds the epoch second of each window's last input row.
    Targets are never normalized; they stay in mg/dL.
    """

    x: np.ndarray
    y: np.ndarray
    origin_s: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, idx) -> "WindowSet":
        if isinstance(idx, int):
            idx = slice(idx, idx + 1)
        return WindowSet(self.x[idx], self.y[idx], self.origin_s[idx])


def classify_region(glucose: float, thresholds: Thresholds = Thresholds()) -> int:
    """Map a glucose value to region 1 (hypo), 2 (normal, boundaries inclusive) or 3 (hyper)."""
    if not math.isfinite(glucose):
        raise ValueError(f"glucose must be finite, got {glucose}")
    if glucose < thresholds.hypo:
        return HYPO_REGION
    if glucose > thresholds.hyper:
        return HYPER_REGION
    return NORMAL_REGION


def region_labels(glucose: np.ndarray, thresholds: Thresholds = Thresholds()) -> np.ndarray:
    """Vectorized :func:`classify_region` over an array of glucose values."""
    glucose = np.asarray(glucose, dtype=np.float64)
    if not np.all(np.isfinite(glucose)):
        raise ValueError("glucose values must be finite")
    labels = np.full(glucose.shape, NORMAL_REGION, dtype=np.int64)
    labels[glucose < thresholds.hypo] = HYPO_REGION
    labels[glucose > thresholds.hyper] = HYPER_REGION
    return labels


def moving_average(series: Sequence[float] | np.ndarray, period: int = 200) -> np.ndarray:
    """Trailing mean over ``period`` samples, expanding during the first ``period - 1``.

    Element i is the mean of elements max(0, i-period+1)..i, so the output
    has the same length as the input.
    """
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise ValueError("series must be non-empty")
    csum = np.cumsum(series)
    out = np.empty_like(csum)
    head = min(period, series.size)
    out[:head] = csum[:head] / np.arange(1, head + 1)
    if series.size > period:
        out[period:] = (csum[period:] - csum[:-period]) / period
    return out


def _records_to_columns(records: Sequence[CgmRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Split records into an epoch-seconds vector and a (n, 4) raw signal matrix."""
    ts = np.array([int(r.timestamp.timestamp()) for r in records], dtype=np.int64)
    raw = np.array([(r.glucose, r.basal, r.bolus, r.carbs) for r in records], dtype=np.float64)
    return ts, raw.reshape(len(records), 4)


def build_features(
    records: Sequence[CgmRecord],
    thresholds: Thresholds = Thresholds(),
    ma_period: int = 200,
) -> np.ndarray:
    """Craft the (n, 6) feature matrix in :data:`FEATURE_NAMES` order.

    The two derived columns are the trailing ``ma_period`` moving average of
    glucose and the ordinal region label of each glucose value.
    """
    if len(records) == 0:
        return np.empty((0, N_FEATURES), dtype=np.float64)
    _, raw = _records_to_columns(records)
    features = np.empty((len(records), N_FEATURES), dtype=np.float64)
    features[:, :4] = raw
    features[:, 4] = moving_average(raw[:, 0], ma_period)
    features[:, 5] = region_labels(raw[:, 0], thresholds)
    return features


def record_timestamps(records: Sequence[CgmRecord]) -> np.ndarray:
    """Epoch seconds (int64) of each record."""
    return np.array([int(r.timestamp.timestamp()) for r in records], dtype=np.int64)


def make_windows(
    features: np.ndarray,
    timestamps_s: np.ndarray,
    in_len: int = 72,
    out_len: int = 12,
    stride: int = 1,
    gap_tolerance_s: float = GAP_TOLERANCE_S,
) -> WindowSet:
    """Slide a supervised window over contiguous stretches of the feature matrix.

    A window covers ``in_len + out_len`` consecutive rows and is emitted only
    when every inter-row gap inside it is <= ``gap_tolerance_s``. Targets are
    the raw glucose column of the ``out_len`` rows after the input block.
    Insufficient data yields an empty set, never an error.
    """
    features = np.asarray(features, dtype=np.float64)
    timestamps_s = np.asarray(timestamps_s, dtype=np.int64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    if features.shape[0] != timestamps_s.shape[0]:
        raise ValueError("features and timestamps must be aligned")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")

    total = in_len + out_len
    n = features.shape[0]
    xs, ys, origins = [], [], []
    for start, length in _contiguous_runs(timestamps_s, gap_tolerance_s, n):
        for pos in range(start, start + length - total + 1, stride):
            xs.append(features[pos : pos + in_len])
            ys.append(features[pos + in_len : pos + total, 0])
            origins.append(timestamps_s[pos + in_len - 1])
    if not xs:
        return WindowSet(
            np.empty((0, in_len, features.shape[1])),
            np.empty((0, out_len)),
            np.empty((0,), dtype=np.int64),
        )
    return WindowSet(np.stack(xs), np.stack(ys), np.array(origins, dtype=np.int64))


def _contiguous_runs(timestamps_s: np.ndarray, tolerance_s: float, n: int):
    """Yield (start, length) of maximal runs whose inter-sample gaps are all within tolerance."""
    if n == 0:
        return
    gaps = np.diff(timestamps_s)
    breaks = np.flatnonzero(gaps > tolerance_s)
    start = 0
    for b in breaks:
        yield start, b + 1 - start
        start = b + 1
    yield start, n - start


def chronological_split(items, fraction: float):
    """Split an ordered collection into (first floor(fraction*n), remainder) without shuffling."""
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(items)
    head_n = int(math.floor(fraction * n))
    if head_n == 0 or head_n == n:
        raise SplitError(f"split of {n} items at {fraction} leaves an empty part")
    return items[:head_n], items[head_n:]


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _parse_timestamp(text: str, line: int) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise RowError(line, f"bad timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_signal(cell: str, name: str, line: int) -> float:
    """Optional non-negative signal column; empty cells mean 'no event'."""
    cell = cell.strip()
    if cell == "":
        return 0.0
    try:
        value = float(cell)
    except ValueError as exc:
        raise RowError(line, f"non-numeric {name} {cell!r}") from exc
    if not math.isfinite(value) or value < 0.0:
        raise RowError(line, f"{name} must be finite and >= 0, got {cell!r}")
    return value


def parse_csv(source: str | bytes | IO) -> list[CgmRecord]:
    """Read the canonical CGM CSV into records.

    Accepts a path, raw bytes, or an open text/binary stream. Rows with an
    empty or invalid glucose cell raise :class:`RowError` with the line
    number; a wrong header raises :class:`FormatError`; timestamps must be
    strictly increasing or :class:`OrderingError` is raised.
    """
    if isinstance(source, bytes):
        return _parse_csv_text(io.StringIO(source.decode("utf-8")))
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return _parse_csv_text(fh)
    if isinstance(source, io.TextIOBase):
        return _parse_csv_text(source)
    # binary stream
    return _parse_csv_text(io.TextIOWrapper(source, encoding="utf-8"))


def _parse_csv_text(stream: IO) -> list[CgmRecord]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty file") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise FormatError(f"expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}")

    records: list[CgmRecord] = []
    prev_ts: datetime | None = None
    for line, row in enumerate(reader, start=2):
        if not row or all(cell.strip() == "" for cell in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise RowError(line, f"expected {len(CSV_HEADER)} cells, got {len(row)}")
        ts = _parse_timestamp(row[0], line)
        glucose_cell = row[1].strip()
        if glucose_cell == "":
            raise RowError(line, "missing glucose")
        try:
            glucose = float(glucose_cell)
        except ValueError as exc:
            raise RowError(line, f"non-numeric glucose {glucose_cell!r}") from exc
        if not math.isfinite(glucose) or glucose <= 0.0:
            raise RowError(line, f"glucose must be finite and > 0, got {glucose_cell!r}")
        basal = _parse_signal(row[2], "basal", line)
        bolus = _parse_signal(row[3], "bolus", line)
        carbs = _parse_signal(row[4], "carbs", line)
        if prev_ts is not None and ts <= prev_ts:
            raise OrderingError(f"line {line}: timestamp {ts.isoformat()} not after previous")
        prev_ts = ts
        records.append(CgmRecord(ts, glucose, basal, bolus, carbs))
    return records


def write_csv(records: Iterable[CgmRecord], sink: str | IO) -> None:
    """Write records in the canonical CSV format (deterministic formatting)."""
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            _write_csv_stream(records, fh)
    else:
        _write_csv_stream(records, sink)


def _write_csv_stream(records: Iterable[CgmRecord], fh: IO) -> None:
    fh.write(",".join(CSV_HEADER) + "\n")
    for r in records:
        ts = r.timestamp.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        fh.write(f"{ts},{r.glucose:.2f},{r.basal:.3f},{r.bolus:.3f},{r.carbs:.2f}\n")


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

_SYNTH_START = datetime(2024, 1, 1, tzinfo=timezone.utc)
_MEAL_WINDOWS_H = ((6.5, 8.5), (11.5, 13.5), (17.5, 19.5))
_SPIKE_TAU_MIN = 45.0
_SPIKE_SUPPORT_MIN = 300.0


def generate_synthetic(
    seed: int,
    days: int,
    thresholds: Thresholds = Thresholds(),
    start: datetime = _SYNTH_START,
) -> list[CgmRecord]:
    """Deterministic synthetic CGM/pump series at exact 5-minute spacing.

    Glucose is a 24-hour sinusoid (nadir in the early morning) plus one spike
    kernel per meal, plus seeded Gaussian noise, clamped to [40, 400] mg/dL.
    Three meals per day land at pseudo-random times inside breakfast/lunch/
    dinner windows, each with a matching carbs entry and a proportional bolus.
    The same seed always yields the same records; runs of two days or more
    cover all three glucose regions by construction.
    """
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    rng = np.random.default_rng(seed)
    n = 288 * days
    minutes = np.arange(n, dtype=np.float64) * 5.0
    hours = minutes / 60.0

    # Nadir ~65 mg/dL around 01:00, peak ~175 around 13:00.
    glucose = 120.0 + 55.0 * np.sin(2.0 * np.pi * (hours - 7.0) / 24.0)
    basal = 0.75 + 0.25 * np.sin(2.0 * np.pi * (hours - 3.0) / 24.0)
    bolus = np.zeros(n)
    carbs = np.zeros(n)

    for day in range(days):
        for lo, hi in _MEAL_WINDOWS_H:
            meal_hour = rng.uniform(lo, hi)
            grams = float(rng.integers(30, 91))
            idx = int(round((day * 24.0 + meal_hour) * 12.0))  # 12 samples/hour
            if idx >= n:
                continue
            carbs[idx] += grams
            bolus[idx] += round(grams / 10.0, 1)
            glucose += _meal_spike(minutes, minutes[idx], amplitude=1.15 * grams)

    glucose += rng.normal(0.0, 6.0, size=n)
    glucose = np.clip(glucose, 40.0, 400.0)

    base_s = int(start.timestamp())
    step = int(SAMPLE_INTERVAL_S)
    return [
        CgmRecord(
            datetime.fromtimestamp(base_s + i * step, tz=timezone.utc),
            float(round(glucose[i], 2)),
            float(round(basal[i], 3)),
            float(bolus[i]),
            float(carbs[i]),
        )
        for i in range(n)
    ]


def _meal_spike(minutes: np.ndarray, meal_minute: float, amplitude: float) -> np.ndarray:
    """Gamma-shaped post-meal glucose excursion peaking ``amplitude`` at +tau minutes."""
    dt = minutes - meal_minute
    active = (dt > 0.0) & (dt < _SPIKE_SUPPORT_MIN)
    spike = np.zeros_like(minutes)
    z = dt[active] / _SPIKE_TAU_MIN
    spike[active] = amplitude * z * np.exp(1.0 - z)
    return spike
