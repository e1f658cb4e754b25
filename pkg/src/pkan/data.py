"""Synthetic satellite-traffic generation, CSV ingestion and windowing.

Serves as the stand-in for the proprietary per-beam hourly PRB dataset:
diurnal + weekly sinusoids, Poisson-arriving Pareto-magnitude bursts with a
geometric 3-hour decay, and Gaussian or Student-t noise, floored at zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

HOUR = timedelta(hours=1)
DEFAULT_START = datetime(2024, 1, 1, 0, 0, 0)

BURST_DECAY = (1.0, 0.5, 0.25)  # contribution over the 3 hours after arrival


class DataError(ValueError):
    """Malformed input data; message carries the offending row when known."""


@dataclass
class TimeSeries:
    beam_id: str
    start: datetime
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0):
            raise DataError(f"beam {self.beam_id}: negative PRB values")

    def __len__(self):
        return len(self.values)

    def timestamps(self):
        return [self.start + i * HOUR for i in range(len(self.values))]


@dataclass(frozen=True)
class SplitSpec:
    train_hours: int = 360  # two weeks + one day
    test_hours: int = 192  # one week + one day


@dataclass(frozen=True)
class SyntheticSpec:
    length: int = 552
    base_level: float = 120.0
    diurnal_amplitude: float = 40.0
    diurnal_phase: float = 0.0
    weekly_amplitude: float = 15.0
    burst_rate: float = 0.02
    burst_shape: float = 2.5
    burst_scale: float = 20.0
    noise_family: str = "gaussian"
    noise_scale: float = 5.0
    noise_df: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.length <= 0:
            raise DataError("length must be positive")
        if self.burst_rate < 0:
            raise DataError("burst_rate must be >= 0")
        if self.noise_scale < 0 or self.burst_scale <= 0 or self.burst_shape <= 0:
            raise DataError("scales and shapes must be positive")
        if self.noise_family not in ("gaussian", "student_t"):
            raise DataError(f"unknown noise family {self.noise_family!r}")


def generate(spec: SyntheticSpec, beam_id="beam0", start=DEFAULT_START) -> TimeSeries:
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length, dtype=np.float64)
    y = (
        spec.base_level
        + spec.diurnal_amplitude * np.sin(2 * np.pi * t / 24.0 + spec.diurnal_phase)
        + spec.weekly_amplitude * np.sin(2 * np.pi * t / 168.0)
    )
    counts = rng.poisson(spec.burst_rate, spec.length)
    burst = np.zeros(spec.length + len(BURST_DECAY))
    for hour in np.nonzero(counts)[0]:
        for _ in range(counts[hour]):
            magnitude = spec.burst_scale * (1.0 + rng.pareto(spec.burst_shape))
            for lag, decay in enumerate(BURST_DECAY):
                burst[hour + lag] += magnitude * decay
    y += burst[: spec.length]
    if spec.noise_scale > 0:
        if spec.noise_family == "gaussian":
            y += spec.noise_scale * rng.standard_normal(spec.length)
        else:
            y += spec.noise_scale * rng.standard_t(spec.noise_df, spec.length)
    return TimeSeries(beam_id=beam_id, start=start, values=np.maximum(y, 0.0))


def save_csv(path, series_list):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beam_id", "timestamp", "prb"])
        for series in sorted(series_list, key=lambda s: s.beam_id):
            for ts, value in zip(series.timestamps(), series.values):
                writer.writerow([series.beam_id, ts.isoformat(), repr(float(value))])


def load_csv(path):
    """Read `beam_id,timestamp,prb` rows into one TimeSeries per beam."""
    per_beam = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["beam_id", "timestamp", "prb"]:
            raise DataError(f"bad header {header!r}, expected beam_id,timestamp,prb")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"row {row_no}: expected 3 columns, got {len(row)}")
            beam, ts_str, prb_str = row
            try:
                ts = datetime.fromisoformat(ts_str)
            except ValueError:
                raise DataError(f"row {row_no}: bad timestamp {ts_str!r}") from None
            try:
                prb = float(prb_str)
            except ValueError:
                raise DataError(f"row {row_no}: bad prb value {prb_str!r}") from None
            if prb < 0:
                raise DataError(f"row {row_no}: negative prb {prb}")
            per_beam.setdefault(beam, []).append((row_no, ts, prb))
    out = []
    for beam in sorted(per_beam):
        rows = sorted(per_beam[beam], key=lambda r: r[1])
        for (row_a, ts_a, _), (row_b, ts_b, _) in zip(rows, rows[1:]):
            if ts_b == ts_a:
                raise DataError(f"row {row_b}: duplicate timestamp for beam {beam}")
            if ts_b - ts_a != HOUR:
                raise DataError(
                    f"row {row_b}: gap in beam {beam} ({ts_a} -> {ts_b}, expected hourly)"
                )
        out.append(
            TimeSeries(
                beam_id=beam,
                start=rows[0][1],
                values=np.array([r[2] for r in rows]),
            )
        )
    return out


def split(ts: TimeSeries, spec: SplitSpec):
    need = spec.train_hours + spec.test_hours
    if len(ts) < need:
        raise DataError(
            f"beam {ts.beam_id}: length {len(ts)} < train+test = {need}"
        )
    train = TimeSeries(ts.beam_id, ts.start, ts.values[: spec.train_hours])
    test = TimeSeries(
        ts.beam_id,
        ts.start + spec.train_hours * HOUR,
        ts.values[spec.train_hours : need],
    )
    return train, test


def fit_standardizer(train: TimeSeries):
    mean = float(train.values.mean())
    std = float(train.values.std())  # population std
    return mean, max(std, 1e-9)


def make_windows(ts: TimeSeries, context_len, horizon):
    """All stride-1 (context, target) windows; count = len - c - h + 1."""
    n = len(ts) - context_len - horizon + 1
    if n <= 0:
        raise DataError(
            f"beam {ts.beam_id}: length {len(ts)} < context+horizon = "
            f"{context_len + horizon}"
        )
    contexts = np.stack([ts.values[i : i + context_len] for i in range(n)])
    targets = np.stack(
        [ts.values[i + context_len : i + context_len + horizon] for i in range(n)]
    )
    return contexts, targets
