"""Composite likelihood-ratio scan, EMA smoothing, and per-flight decisions.

The per-window statistic is the maximum, over per-motor alternatives, of the
log-likelihood ratio against the healthy model; the maximizing motor doubles
as the localization estimate. Smoothing exploits fault persistence: transient
score noise is damped while sustained elevation survives.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from propfault.errors import ConfigError, DataError
from propfault.gaussian import HypothesisBank

DEFAULT_ALPHA_EMA = 0.3


def composite_q_matrix(bank: HypothesisBank, X) -> tuple[np.ndarray, np.ndarray]:
    """Per-row composite statistic and 1-based maximizing motor index.

    Rows of X must already be standardized with the bank's parameters. Argmax
    ties break toward the lowest motor index.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lp0 = bank.h0.log_pdf(X)
    diffs = np.stack([m.log_pdf(X) for m in bank.h1]) - lp0
    q = diffs.max(axis=0)
    m_star = diffs.argmax(axis=0) + 1
    return q, m_star


def composite_q(bank: HypothesisBank, x) -> tuple[float, int]:
    q, m = composite_q_matrix(bank, np.atleast_2d(x))
    return float(q[0]), int(m[0])


def ema_smooth(q_sequence, alpha: float = DEFAULT_ALPHA_EMA) -> np.ndarray:
    """Exponential moving average seeded with the first value.

    State never crosses flight boundaries: apply per flight.
    """
    q = np.asarray(q_sequence, dtype=float)
    if q.size == 0:
        raise DataError("cannot smooth an empty score sequence")
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha must be in (0, 1], got {alpha}")
    zi = np.array([(1.0 - alpha) * q[0]])
    out, _ = lfilter([alpha], [1.0, -(1.0 - alpha)], q, zi=zi)
    return out


@dataclass
class DetectionTrace:
    """Per-window statistics for one flight, in window order."""

    flight_id: str
    q: np.ndarray
    q_smoothed: np.ndarray
    motor_argmax: np.ndarray
    alpha_ema: float = DEFAULT_ALPHA_EMA
    start_indices: np.ndarray | None = None

    def __post_init__(self):
        if len(self.q) != len(self.q_smoothed) or len(self.q) != len(self.motor_argmax):
            raise DataError("trace arrays disagree in length")
        if not (0.0 < self.alpha_ema <= 1.0):
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha_ema}")


@dataclass
class FlightDecision:
    flight_id: str
    fault_declared: bool
    positive_fraction: float
    localized_motor: int | None
    threshold: float = 0.0


def scan_flight(
    bank: HypothesisBank,
    X_std,
    flight_id: str,
    *,
    alpha_ema: float = DEFAULT_ALPHA_EMA,
    start_indices=None,
) -> DetectionTrace:
    q, m_star = composite_q_matrix(bank, X_std)
    return DetectionTrace(
        flight_id=flight_id,
        q=q,
        q_smoothed=ema_smooth(q, alpha_ema),
        motor_argmax=m_star,
        alpha_ema=alpha_ema,
        start_indices=None if start_indices is None else np.asarray(start_indices),
    )


def decide_flight(trace: DetectionTrace, threshold: float = 0.0) -> FlightDecision:
    """Majority vote: fault iff strictly more than half the windows exceed threshold.

    The localized motor is the modal argmax among positive windows, ties
    broken toward the lowest index; absent when no window is positive.
    """
    if len(trace.q_smoothed) == 0:
        raise DataError("cannot decide an empty trace")
    positive = trace.q_smoothed > threshold
    fraction = float(positive.mean())
    motor: int | None = None
    if positive.any():
        counts = np.bincount(trace.motor_argmax[positive])
        motor = int(np.argmax(counts[1:]) + 1)
    return FlightDecision(
        flight_id=trace.flight_id,
        fault_declared=fraction > 0.5,
        positive_fraction=fraction,
        localized_motor=motor,
        threshold=threshold,
    )


def write_trace_csv(trace: DetectionTrace, path):
    """Per-window trace export; baseline scores reuse the same columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["flight_id", "window_index", "q", "q_smoothed", "motor_argmax"])
        for i in range(len(trace.q)):
            writer.writerow(
                [
                    trace.flight_id,
                    i,
                    repr(float(trace.q[i])),
                    repr(float(trace.q_smoothed[i])),
                    int(trace.motor_argmax[i]),
                ]
            )
