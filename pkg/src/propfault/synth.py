"""Synthetic multirotor IMU generator with controllable blade-imbalance faults.

Each motor injects a rotor tone (fundamental plus a 2nd harmonic) into every
channel through a fixed geometry-derived coupling matrix; blade damage scales
the affected motor's tone amplitude linearly with severity. On top of the
tones the generator layers the stochastic processes a real airframe exhibits:
RPM wobble, slow thrust (amplitude) modulation, per-path transmission-gain
fluctuation, sub-5 Hz turbulence, very-slow baseline drift, a modulated
broadband noise floor, and a near-Nyquist hiss. These independent processes
matter: they keep the 90-dim feature covariance well conditioned, which the
Gaussian models downstream depend on.

All level constants were tuned once against the frozen benchmark corpus so
that subtle (5%) faults land in the hard-but-detectable regime, and are kept
fixed so regression tests stay meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, lfilter

from propfault.errors import ConfigError
from propfault.ingest import CHANNELS, FaultLabel, FlightRecord, ManifestEntry

SEVERITY_MAX = 0.12

# Frozen generator constants (see module docstring).
FUNDAMENTAL_AMPLITUDE = 0.30
HARMONIC2_RATIO = 0.9
SEVERITY_GAIN = 24.0
NOISE_LEVEL = 0.8
TURBULENCE_LEVEL = 1.2
TURBULENCE_CUTOFF_HZ = 2.5
WOBBLE_FRACTION = 0.05
WOBBLE_CUTOFF_HZ = 3.0
AM_FRACTION = 0.3
AM_CUTOFF_HZ = 1.5
PATH_FRACTION = 0.25
PATH_CUTOFF_HZ = 1.5
DRIFT_LEVEL = 1.2
DRIFT_CUTOFF_HZ = 0.15
NOISE_AM_FRACTION = 0.5
NOISE_AM_CUTOFF_HZ = 1.2
HISS_LEVEL = 0.6

DEFAULT_SAMPLE_RATE_HZ = 500.0
DEFAULT_DURATION_S = 60.0


def default_rotor_speeds(motor_count: int) -> tuple[float, ...]:
    """Hover fundamentals spread across 100-140 Hz (6,000-8,400 RPM)."""
    if motor_count == 1:
        return (120.0,)
    return tuple(np.linspace(100.0, 140.0, motor_count))


def default_coupling(motor_count: int) -> np.ndarray:
    """Motor-to-channel gains from airframe geometry, shape (M, 6).

    Arms sit at staggered azimuths; each channel sees a deep azimuth-dependent
    gain so motors carry distinct channel signatures.
    """
    ang = 2.0 * np.pi * np.arange(motor_count) / motor_count + np.pi / (2 * motor_count)
    c = np.empty((motor_count, len(CHANNELS)))
    c[:, 0] = 0.55 + 0.5 * np.cos(ang)  # acc_x
    c[:, 1] = 0.55 + 0.5 * np.sin(ang)  # acc_y
    c[:, 2] = 0.55 + 0.5 * np.cos(2 * ang + 0.7)  # acc_z
    c[:, 3] = 0.55 + 0.5 * np.sin(ang + np.pi / 3)  # gyr_x
    c[:, 4] = 0.55 + 0.5 * np.cos(ang + np.pi / 3)  # gyr_y
    c[:, 5] = 0.55 + 0.5 * np.sin(2 * ang + 1.9)  # gyr_z
    return np.abs(c) + 0.05


@dataclass
class SynthConfig:
    motor_count: int = 6
    rotor_speed_hz: tuple[float, ...] = ()
    severity: tuple[float, ...] = ()
    coupling: np.ndarray | None = None
    fundamental_amplitude: float = FUNDAMENTAL_AMPLITUDE
    harmonic2_ratio: float = HARMONIC2_RATIO
    severity_gain: float = SEVERITY_GAIN
    noise_level: float = NOISE_LEVEL
    turbulence_level: float = TURBULENCE_LEVEL
    turbulence_cutoff_hz: float = TURBULENCE_CUTOFF_HZ
    wobble_fraction: float = WOBBLE_FRACTION
    wobble_cutoff_hz: float = WOBBLE_CUTOFF_HZ
    am_fraction: float = AM_FRACTION
    am_cutoff_hz: float = AM_CUTOFF_HZ
    path_fraction: float = PATH_FRACTION
    path_cutoff_hz: float = PATH_CUTOFF_HZ
    drift_level: float = DRIFT_LEVEL
    drift_cutoff_hz: float = DRIFT_CUTOFF_HZ
    noise_am_fraction: float = NOISE_AM_FRACTION
    noise_am_cutoff_hz: float = NOISE_AM_CUTOFF_HZ
    hiss_level: float = HISS_LEVEL
    duration_s: float = DEFAULT_DURATION_S
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    seed: int = 0
    flight_id: str = "synth"
    label_motor: int | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.motor_count < 1:
            raise ConfigError("motor_count must be >= 1")
        if not self.rotor_speed_hz:
            self.rotor_speed_hz = default_rotor_speeds(self.motor_count)
        if not self.severity:
            self.severity = tuple(0.0 for _ in range(self.motor_count))
        if len(self.rotor_speed_hz) != self.motor_count:
            raise ConfigError("need one rotor speed per motor")
        if len(self.severity) != self.motor_count:
            raise ConfigError("need one severity per motor")
        for s in self.severity:
            if not (0.0 <= s <= SEVERITY_MAX):
                raise ConfigError(f"severity {s} outside [0, {SEVERITY_MAX}]")
        if self.noise_level <= 0:
            raise ConfigError("noise_level must be > 0")
        if self.coupling is None:
            self.coupling = default_coupling(self.motor_count)

    def label(self) -> FaultLabel:
        if self.label_motor is not None:
            return FaultLabel(
                severity=self.severity[self.label_motor - 1], motor=self.label_motor
            )
        worst = int(np.argmax(self.severity))
        if self.severity[worst] > 0:
            return FaultLabel(severity=self.severity[worst], motor=worst + 1)
        return FaultLabel()


def _lowpass_noise(rng, n: int, cutoff_hz: float, fs: float) -> np.ndarray:
    b, a = butter(2, cutoff_hz / (fs / 2.0), btype="low")
    x = lfilter(b, a, rng.standard_normal(n))
    sd = x.std()
    return x / sd if sd > 0 else x


def generate_flight(config: SynthConfig) -> FlightRecord:
    """Deterministic under the config seed; severity only scales tone gains."""
    rng = np.random.default_rng(config.seed)
    fs = config.sample_rate_hz
    n = int(round(config.duration_s * fs))
    m_count = config.motor_count
    n_ch = len(CHANNELS)

    # draw order fixed so a given seed yields the same modulators and noise
    # regardless of severity; severity acts purely through amplitude gains
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(m_count, n_ch, 2))
    wobble = np.stack(
        [_lowpass_noise(rng, n, config.wobble_cutoff_hz, fs) for _ in range(m_count)]
    )
    thrust_am = np.stack(
        [_lowpass_noise(rng, n, config.am_cutoff_hz, fs) for _ in range(m_count)]
    )
    path_am = np.stack(
        [_lowpass_noise(rng, n, config.path_cutoff_hz, fs) for _ in range(m_count * n_ch)]
    ).reshape(m_count, n_ch, n)
    white = rng.standard_normal((n_ch, n))
    turbulence = np.stack(
        [_lowpass_noise(rng, n, config.turbulence_cutoff_hz, fs) for _ in range(n_ch)]
    )
    drift = np.stack(
        [_lowpass_noise(rng, n, config.drift_cutoff_hz, fs) for _ in range(n_ch)]
    )
    noise_env = np.stack(
        [
            np.clip(
                1.0
                + config.noise_am_fraction
                * _lowpass_noise(rng, n, config.noise_am_cutoff_hz, fs),
                0.1,
                None,
            )
            for _ in range(n_ch)
        ]
    )
    hiss = config.hiss_level * np.diff(
        rng.standard_normal((n_ch, n)), axis=1, prepend=0.0
    )

    channels = (
        config.noise_level * white * noise_env
        + config.turbulence_level * turbulence
        + config.drift_level * drift
        + hiss
    )
    for m in range(m_count):
        f_inst = config.rotor_speed_hz[m] * (1.0 + config.wobble_fraction * wobble[m])
        theta = 2.0 * np.pi * np.cumsum(f_inst) / fs
        gain = config.fundamental_amplitude * (
            1.0 + config.severity_gain * config.severity[m]
        )
        env_motor = np.clip(1.0 + config.am_fraction * thrust_am[m], 0.1, None)
        for c in range(n_ch):
            env = env_motor * np.clip(
                1.0 + config.path_fraction * path_am[m, c], 0.1, None
            )
            amp = config.coupling[m, c] * gain * env
            channels[c] += amp * np.sin(theta + phases[m, c, 0])
            channels[c] += (
                config.harmonic2_ratio
                * amp
                * np.sin(2.0 * theta + phases[m, c, 1])
            )

    return FlightRecord(
        flight_id=config.flight_id,
        sample_rate_hz=fs,
        channels=channels,
        label=config.label(),
    )


def generate_corpus(
    n_healthy: int,
    n_fault_per_severity: int,
    severities=(0.05, 0.10),
    motor_count: int = 6,
    *,
    seed: int = 0,
    duration_s: float = DEFAULT_DURATION_S,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    **config_overrides,
) -> list[FlightRecord]:
    """Corpus of healthy flights plus per-severity fault flights.

    Fault motors rotate round-robin across the airframe. Hover RPM scales with
    payload and trim, so each flight draws a common rotor-speed offset with
    only a small per-motor deviation around it (within +-5% overall).
    """
    if n_healthy < 1 or n_fault_per_severity < 1:
        raise ConfigError("flight counts must be >= 1")
    severities = tuple(severities)
    for s in severities:
        if not (0.0 < s <= SEVERITY_MAX):
            raise ConfigError(f"severity {s} outside (0, {SEVERITY_MAX}]")

    plan: list[tuple[str, float, int | None]] = []
    for i in range(n_healthy):
        plan.append((f"healthy_{i:02d}", 0.0, None))
    fault_idx = 0
    for sev in severities:
        for _ in range(n_fault_per_severity):
            motor = fault_idx % motor_count + 1
            plan.append(
                (f"fault{int(round(sev * 100)):02d}_m{motor}_{fault_idx:02d}", sev, motor)
            )
            fault_idx += 1

    seq = np.random.SeedSequence(seed)
    children = seq.spawn(len(plan))
    base_speeds = np.array(default_rotor_speeds(motor_count))
    records = []
    for (fid, sev, motor), child in zip(plan, children):
        child_rng = np.random.default_rng(child)
        common = child_rng.uniform(0.97, 1.03)
        offsets = common * child_rng.uniform(0.995, 1.005, size=motor_count)
        severity = tuple(
            sev if (motor is not None and m + 1 == motor) else 0.0
            for m in range(motor_count)
        )
        config = SynthConfig(
            motor_count=motor_count,
            rotor_speed_hz=tuple(base_speeds * offsets),
            severity=severity,
            duration_s=duration_s,
            sample_rate_hz=sample_rate_hz,
            seed=int(child_rng.integers(2**31)),
            flight_id=fid,
            label_motor=motor,
            **config_overrides,
        )
        records.append(generate_flight(config))
    return records


def corpus_manifest(records: list[FlightRecord], paths, platform: str | None = None):
    """Manifest entries for an on-disk corpus; paths align with records."""
    entries = []
    for record, path in zip(records, paths):
        entries.append(
            ManifestEntry(
                path=str(path),
                flight_id=record.flight_id,
                severity=record.label.severity,
                motor=record.label.motor,
                platform=platform or "synth",
            )
        )
    return entries
