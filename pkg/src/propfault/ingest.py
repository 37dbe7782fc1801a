"""Flight-log ingestion: CSV loading, arm-IMU averaging, windowing, manifests.

All functions are pure over immutable inputs; callers may shard work across
threads freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from propfault.errors import (
    AlignmentError,
    ConfigError,
    DataError,
    LabelError,
    ParseError,
    SchemaError,
    ShortFlightError,
)

CHANNELS = ("acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z")
SEVERITY_MAX = 0.12

# Column map for CSVs produced by this package; dataset adapters are just
# alternative maps. "timestamp" is optional; when the mapped column is absent
# the caller-provided fallback rate is used.
DEFAULT_CSV_SCHEMA = {**{c: c for c in CHANNELS}, "timestamp": "t"}

# Reject logs whose timestamp deltas deviate from the median by more than
# this fraction: resampling would silently distort the PSDs downstream.
MAX_TIMESTAMP_JITTER = 0.2


@dataclass(frozen=True)
class FaultLabel:
    """Ground truth for one flight: blade damage fraction and affected motor."""

    severity: float = 0.0
    motor: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.severity <= SEVERITY_MAX):
            raise LabelError(
                f"severity {self.severity} outside [0, {SEVERITY_MAX}]"
            )
        if (self.severity == 0.0) != (self.motor is None):
            raise LabelError(
                f"severity {self.severity} inconsistent with motor {self.motor}: "
                "severity 0 requires no motor and vice versa"
            )
        if self.motor is not None and self.motor < 1:
            raise LabelError(f"motor index must be >= 1, got {self.motor}")

    @property
    def is_fault(self) -> bool:
        return self.severity > 0.0


@dataclass
class FlightRecord:
    """One flight's 6-channel IMU stream in CHANNELS order, shape (6, n)."""

    flight_id: str
    sample_rate_hz: float
    channels: np.ndarray
    label: FaultLabel

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 2 or self.channels.shape[0] != len(CHANNELS):
            raise DataError(
                f"flight {self.flight_id}: channels must be (6, n), "
                f"got {self.channels.shape}"
            )
        if self.channels.shape[1] < 1:
            raise DataError(f"flight {self.flight_id}: empty channels")
        if not np.isfinite(self.channels).all():
            raise DataError(f"flight {self.flight_id}: non-finite samples")
        if not (self.sample_rate_hz > 0):
            raise DataError(
                f"flight {self.flight_id}: sample_rate_hz must be > 0"
            )

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


@dataclass
class Window:
    """A contiguous slice of a flight, shape (6, window_length)."""

    flight_id: str
    start_index: int
    samples: np.ndarray
    sample_rate_hz: float
    label: FaultLabel


def load_flight_csv(
    path,
    schema: dict | None = None,
    *,
    sample_rate_hz: float | None = None,
    flight_id: str | None = None,
    label: FaultLabel | None = None,
) -> FlightRecord:
    """Parse one flight CSV into a FlightRecord.

    `schema` maps each channel name (and optionally "timestamp") to a CSV
    column. The sample rate is inferred from the median timestamp delta when
    a timestamp column is present, otherwise `sample_rate_hz` is required.
    """
    path = Path(path)
    schema = dict(DEFAULT_CSV_SCHEMA if schema is None else schema)
    df = pd.read_csv(path, dtype=str)

    missing = [ch for ch in CHANNELS if schema.get(ch, ch) not in df.columns]
    if missing:
        cols = ", ".join(f"{ch} (column '{schema.get(ch, ch)}')" for ch in missing)
        raise SchemaError(f"{path.name}: missing channel column(s): {cols}")

    def numeric(col: str) -> np.ndarray:
        values = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ParseError(
                f"{path.name}: non-numeric value in column '{col}' at data row {row}"
            )
        return values

    data = np.stack([numeric(schema.get(ch, ch)) for ch in CHANNELS])

    ts_col = schema.get("timestamp")
    if ts_col is not None and ts_col in df.columns:
        t = numeric(ts_col)
        if len(t) < 2:
            raise DataError(f"{path.name}: need >= 2 timestamps to infer rate")
        deltas = np.diff(t)
        med = float(np.median(deltas))
        if med <= 0:
            raise DataError(f"{path.name}: non-increasing timestamps")
        if np.abs(deltas - med).max() > MAX_TIMESTAMP_JITTER * med:
            raise DataError(
                f"{path.name}: non-uniform sampling (timestamp jitter exceeds "
                f"{MAX_TIMESTAMP_JITTER:.0%} of the median delta)"
            )
        rate = 1.0 / med
    elif sample_rate_hz is not None:
        rate = float(sample_rate_hz)
    else:
        raise ConfigError(
            f"{path.name}: no timestamp column and no fallback sample rate"
        )

    return FlightRecord(
        flight_id=flight_id if flight_id is not None else path.stem,
        sample_rate_hz=rate,
        channels=data,
        label=label if label is not None else FaultLabel(),
    )


def average_arm_imus(records: list[FlightRecord]) -> FlightRecord:
    """Channel-wise arithmetic mean of per-arm IMU streams of one flight."""
    if not records:
        raise DataError("no records to average")
    first = records[0]
    for r in records[1:]:
        if r.n_samples != first.n_samples:
            raise AlignmentError(
                f"arm streams disagree in length: {first.n_samples} vs {r.n_samples}"
            )
        if not math.isclose(r.sample_rate_hz, first.sample_rate_hz, rel_tol=1e-6):
            raise AlignmentError(
                f"arm streams disagree in sample rate: "
                f"{first.sample_rate_hz} vs {r.sample_rate_hz}"
            )
        if r.label != first.label:
            raise AlignmentError("arm streams disagree in fault label")
    mean = np.mean([r.channels for r in records], axis=0)
    return FlightRecord(
        flight_id=first.flight_id,
        sample_rate_hz=first.sample_rate_hz,
        channels=mean,
        label=first.label,
    )


def make_windows(
    record: FlightRecord, window_length: int = 500, stride: int = 250
) -> list[Window]:
    """Slice a flight into complete overlapping windows; partials are dropped."""
    if window_length < 1 or stride < 1:
        raise ConfigError("window_length and stride must be positive")
    n = record.n_samples
    if window_length > n:
        raise ShortFlightError(
            f"flight {record.flight_id}: {n} samples < window {window_length}"
        )
    windows = []
    for start in range(0, n - window_length + 1, stride):
        windows.append(
            Window(
                flight_id=record.flight_id,
                start_index=start,
                samples=record.channels[:, start : start + window_length].copy(),
                sample_rate_hz=record.sample_rate_hz,
                label=record.label,
            )
        )
    return windows


def write_flight_csv(record: FlightRecord, path, *, timestamp_column: str = "t"):
    """Write a FlightRecord in the canonical CSV layout (round-trips with load)."""
    t = np.arange(record.n_samples) / record.sample_rate_hz
    frame = pd.DataFrame({timestamp_column: t})
    for i, ch in enumerate(CHANNELS):
        frame[ch] = record.channels[i]
    frame.to_csv(path, index=False)


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row; `path` may hold several '|'-separated per-arm files."""

    path: str
    flight_id: str
    severity: float = 0.0
    motor: int | None = None
    platform: str = "synth"

    def label(self) -> FaultLabel:
        return FaultLabel(severity=self.severity, motor=self.motor)


MANIFEST_COLUMNS = ("path", "flight_id", "severity", "motor", "platform")


def write_manifest(entries: list[ManifestEntry], path):
    rows = [
        {
            "path": e.path,
            "flight_id": e.flight_id,
            "severity": e.severity,
            "motor": "" if e.motor is None else e.motor,
            "platform": e.platform,
        }
        for e in entries
    ]
    pd.DataFrame(rows, columns=list(MANIFEST_COLUMNS)).to_csv(path, index=False)


def load_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    df = pd.read_csv(path)
    missing = [c for c in MANIFEST_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigError(f"manifest {path.name} missing columns: {missing}")
    entries = []
    for i, row in df.iterrows():
        motor = row["motor"]
        motor = None if pd.isna(motor) or motor == "" else int(motor)
        try:
            entries.append(
                ManifestEntry(
                    path=str(row["path"]),
                    flight_id=str(row["flight_id"]),
                    severity=float(row["severity"]),
                    motor=motor,
                    platform=str(row["platform"]),
                )
            )
        except LabelError as exc:
            raise ConfigError(f"manifest row {i}: {exc}") from exc
    if len({e.flight_id for e in entries}) != len(entries):
        raise ConfigError(f"manifest {path.name}: duplicate flight ids")
    return entries


def load_corpus(
    manifest_path,
    *,
    schema: dict | None = None,
    sample_rate_hz: float | None = None,
) -> list[FlightRecord]:
    """Load every flight in a manifest; multi-path rows are arm-averaged."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    records = []
    for entry in load_manifest(manifest_path):
        arms = []
        for raw in entry.path.split("|"):
            p = Path(raw)
            if not p.is_absolute():
                p = base / p
            arms.append(
                load_flight_csv(
                    p,
                    schema,
                    sample_rate_hz=sample_rate_hz,
                    flight_id=entry.flight_id,
                    label=entry.label(),
                )
            )
        records.append(arms[0] if len(arms) == 1 else average_arm_imus(arms))
    return records
