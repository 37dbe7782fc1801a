"""Per-window vibration features: time-domain stats plus Welch-PSD spectral stats.

Each of the 6 IMU channels contributes 4 time-domain statistics (mean, std,
rms, excess kurtosis) and 11 spectral statistics (log band power and
fractional band power in four bands, spectral centroid, dominant frequency,
spectral entropy), for 90 features per window. Spectral statistics ignore
bins below 5 Hz so turbulence drift does not dominate them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.signal import welch

from propfault.errors import DataError, InsufficientDataError
from propfault.ingest import CHANNELS, FaultLabel, Window, make_windows

BANDS = ((5.0, 30.0), (30.0, 80.0), (80.0, 150.0), (150.0, 250.0))
MIN_SPECTRAL_HZ = 5.0
LOG_EPS = 1e-12  # floor inside log band power; a silent -inf would poison fits
WELCH_SEGMENT = 256

TIME_STATS = ("mean", "std", "rms", "kurt")


def _band_tag(lo: float, hi: float) -> str:
    return f"{lo:g}_{hi:g}"


def spectral_stat_names(bands=BANDS) -> tuple[str, ...]:
    names = [f"logbp_{_band_tag(lo, hi)}" for lo, hi in bands]
    names += [f"fracbp_{_band_tag(lo, hi)}" for lo, hi in bands]
    names += ["centroid", "domfreq", "entropy"]
    return tuple(names)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names plus the band edges they were computed with."""

    names: tuple[str, ...]
    bands: tuple[tuple[float, float], ...] = BANDS
    channels: tuple[str, ...] = CHANNELS

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")
        if not self.names:
            raise DataError("empty feature schema")

    @classmethod
    def default(cls, channels=CHANNELS, bands=BANDS) -> "FeatureSchema":
        names = []
        for ch in channels:
            names += [f"{ch}_{s}" for s in TIME_STATS]
            names += [f"{ch}_{s}" for s in spectral_stat_names(bands)]
        return cls(names=tuple(names), bands=tuple(bands), channels=tuple(channels))

    @property
    def dim(self) -> int:
        return len(self.names)

    def hash(self) -> str:
        doc = {"names": list(self.names), "bands": [list(b) for b in self.bands]}
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode("utf-8")
        ).hexdigest()

    def index(self, name: str) -> int:
        return self.names.index(name)

    def time_domain_names(self) -> tuple[str, ...]:
        suffixes = tuple(f"_{s}" for s in TIME_STATS)
        return tuple(n for n in self.names if n.endswith(suffixes))

    def subset(self, names) -> "FeatureSchema":
        keep = set(names)
        unknown = keep - set(self.names)
        if unknown:
            raise DataError(f"unknown feature names: {sorted(unknown)}")
        return FeatureSchema(
            names=tuple(n for n in self.names if n in keep),
            bands=self.bands,
            channels=self.channels,
        )


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided power spectral density on a 0..Nyquist grid."""

    frequencies: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        if self.frequencies.shape != self.power.shape:
            raise DataError("PSD grids disagree in length")
        if np.any(np.diff(self.frequencies) <= 0):
            raise DataError("PSD frequencies must be strictly increasing")
        if np.any(self.power < 0):
            raise DataError("PSD power must be nonnegative")


def welch_psd(
    signal, sample_rate_hz: float, segment_length: int = WELCH_SEGMENT
) -> PsdEstimate:
    """Welch PSD: Hann taper, 50% overlap, per-segment mean removal, density scaling.

    With density scaling the integral of the PSD over frequency approximates
    the signal variance.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise DataError("welch_psd expects a 1-D signal")
    if len(x) < segment_length:
        raise InsufficientDataError(
            f"need >= {segment_length} samples for Welch PSD, got {len(x)}"
        )
    f, p = welch(
        x,
        fs=sample_rate_hz,
        window="hann",
        nperseg=segment_length,
        noverlap=segment_length // 2,
        detrend="constant",
        scaling="density",
    )
    return PsdEstimate(frequencies=f, power=np.maximum(p, 0.0))


def time_features(signal) -> np.ndarray:
    """(mean, population std, rms, excess kurtosis); kurtosis 0 if variance is 0."""
    x = np.asarray(signal, dtype=float)
    if len(x) < 4:
        raise InsufficientDataError("need >= 4 samples for time features")
    mean = x.mean()
    centered = x - mean
    m2 = np.mean(centered**2)
    std = np.sqrt(m2)
    rms = np.sqrt(np.mean(x**2))
    kurt = np.mean(centered**4) / m2**2 - 3.0 if m2 > 0 else 0.0
    return np.array([mean, std, rms, kurt])


def spectral_features(psd: PsdEstimate, bands=BANDS) -> np.ndarray:
    """11 spectral stats from a PSD; bins below MIN_SPECTRAL_HZ are excluded.

    Band sums use half-open [lo, hi) intervals; bands above Nyquist simply
    see fewer (or zero) bins. Fractional powers are normalized by the total
    power at or above MIN_SPECTRAL_HZ.
    """
    f, p = psd.frequencies, psd.power
    hf = f >= MIN_SPECTRAL_HZ
    total = float(p[hf].sum())

    band_powers = np.array(
        [float(p[(f >= lo) & (f < hi)].sum()) for lo, hi in bands]
    )
    log_bp = np.log(band_powers + LOG_EPS)

    if total <= LOG_EPS:
        frac = np.zeros(len(bands))
        centroid = 0.0
        domfreq = 0.0
        entropy = 0.0
    else:
        frac = band_powers / total
        fh, ph = f[hf], p[hf]
        centroid = float((fh * ph).sum() / total)
        domfreq = float(fh[int(np.argmax(ph))])
        q = ph / total
        nz = q > 0
        entropy = float(-(q[nz] * np.log(q[nz])).sum())

    return np.concatenate([log_bp, frac, [centroid, domfreq, entropy]])


@dataclass(frozen=True)
class FeatureVector:
    """One window's features in schema order, with provenance and label copy."""

    values: np.ndarray
    flight_id: str
    start_index: int
    label: FaultLabel


def extract_features(window: Window, schema: FeatureSchema) -> FeatureVector:
    values = np.empty(schema.dim)
    per_channel = len(TIME_STATS) + len(spectral_stat_names(schema.bands))
    for i, ch in enumerate(schema.channels):
        x = window.samples[i]
        psd = welch_psd(x, window.sample_rate_hz)
        block = np.concatenate([time_features(x), spectral_features(psd, schema.bands)])
        values[i * per_channel : (i + 1) * per_channel] = block
    if not np.isfinite(values).all():
        raise DataError(
            f"non-finite feature for flight {window.flight_id} "
            f"at start {window.start_index}"
        )
    return FeatureVector(
        values=values,
        flight_id=window.flight_id,
        start_index=window.start_index,
        label=window.label,
    )


@dataclass
class FeatureTable:
    """Feature matrix plus provenance arrays; motor 0 encodes healthy."""

    schema: FeatureSchema
    X: np.ndarray
    flight_ids: np.ndarray
    start_indices: np.ndarray
    severities: np.ndarray
    motors: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def healthy_mask(self) -> np.ndarray:
        return self.motors == 0

    @property
    def fault_mask(self) -> np.ndarray:
        return self.motors > 0

    def unique_flights(self) -> list[str]:
        seen: dict[str, None] = {}
        for fid in self.flight_ids:
            seen.setdefault(fid, None)
        return list(seen)

    def rows_for_flight(self, flight_id: str) -> np.ndarray:
        idx = np.flatnonzero(self.flight_ids == flight_id)
        return idx[np.argsort(self.start_indices[idx], kind="stable")]

    def subset_features(self, names) -> "FeatureTable":
        sub = self.schema.subset(names)
        cols = [self.schema.index(n) for n in sub.names]
        return FeatureTable(
            schema=sub,
            X=self.X[:, cols].copy(),
            flight_ids=self.flight_ids,
            start_indices=self.start_indices,
            severities=self.severities,
            motors=self.motors,
        )

    def to_csv(self, path):
        frame = pd.DataFrame(self.X, columns=list(self.schema.names))
        frame["flight_id"] = self.flight_ids
        frame["start_index"] = self.start_indices
        frame["severity"] = self.severities
        frame["motor"] = [m if m > 0 else "" for m in self.motors]
        frame.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path, bands=BANDS) -> "FeatureTable":
        df = pd.read_csv(path)
        meta = ("flight_id", "start_index", "severity", "motor")
        missing = [c for c in meta if c not in df.columns]
        if missing:
            raise DataError(f"feature CSV missing columns: {missing}")
        names = tuple(c for c in df.columns if c not in meta)
        motors = (
            pd.to_numeric(df["motor"], errors="coerce").fillna(0).astype(int).to_numpy()
        )
        return cls(
            schema=FeatureSchema(names=names, bands=tuple(bands)),
            X=df[list(names)].to_numpy(dtype=float),
            flight_ids=df["flight_id"].astype(str).to_numpy(),
            start_indices=df["start_index"].to_numpy(dtype=int),
            severities=df["severity"].to_numpy(dtype=float),
            motors=motors,
        )


def extract_table(windows: list[Window], schema: FeatureSchema) -> FeatureTable:
    vectors = [extract_features(w, schema) for w in windows]
    return FeatureTable(
        schema=schema,
        X=np.array([v.values for v in vectors]),
        flight_ids=np.array([v.flight_id for v in vectors], dtype=object),
        start_indices=np.array([v.start_index for v in vectors], dtype=int),
        severities=np.array([v.label.severity for v in vectors], dtype=float),
        motors=np.array(
            [v.label.motor if v.label.motor is not None else 0 for v in vectors],
            dtype=int,
        ),
    )


def extract_corpus(
    records, schema: FeatureSchema, window_length: int = 500, stride: int = 250
) -> FeatureTable:
    windows = []
    for record in records:
        windows.extend(make_windows(record, window_length, stride))
    return extract_table(windows, schema)


def cohens_d_ranking(
    healthy: np.ndarray, faulty: np.ndarray, names
) -> list[tuple[str, float]]:
    """Features ranked by |mean difference| / pooled std, descending."""
    h = np.asarray(healthy, dtype=float)
    f = np.asarray(faulty, dtype=float)
    if h.shape[0] < 2 or f.shape[0] < 2:
        raise InsufficientDataError("need >= 2 rows per group for Cohen's d")
    n0, n1 = h.shape[0], f.shape[0]
    v0 = h.var(axis=0, ddof=1)
    v1 = f.var(axis=0, ddof=1)
    pooled = np.sqrt(((n0 - 1) * v0 + (n1 - 1) * v1) / (n0 + n1 - 2))
    diff = np.abs(f.mean(axis=0) - h.mean(axis=0))
    d = np.where(pooled > 0, diff / np.where(pooled > 0, pooled, 1.0), 0.0)
    order = np.argsort(-d, kind="stable")
    return [(names[i], float(d[i])) for i in order]
