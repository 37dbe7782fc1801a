"""Run configuration: documented defaults, INI loading, CLI overrides.

The config file is flat key-value text with sections; keys are unique across
sections and every key can be overridden on the command line.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass

from propfault.errors import ConfigError


@dataclass
class RunConfig:
    # windowing
    window_length: int = 500
    stride: int = 250
    sample_rate_hz: float = 376.0  # fallback when logs carry no timestamps
    # detector
    alpha_ema: float = 0.3
    vote_threshold: float = 0.0
    threshold_mode: str = "zero"  # "zero" or "q95" (95th pct of healthy smoothed q)
    # cls
    n_toys: int = 10000
    alpha_det: float = 0.05
    cls_on: str = "smoothed"  # apply CLs to the smoothed or the raw statistic
    # sbi
    sbi_components: int = 8
    sbi_hidden: str = "128,128"
    sbi_epochs: int = 200
    sbi_batch_size: int = 128
    sbi_learning_rate: float = 1e-3
    dequant_sigma: float = 0.005
    augment_factor: int = 3
    jitter_frac: float = 0.05
    sbi_samples: int = 5000
    credible_level: float = 0.9
    # eval
    methods: str = "lrt,mahalanobis,autoencoder,sprt"
    n_boot: int = 1000
    bootstrap_level: float = 0.95
    bootstrap_by_flight: bool = False
    tpr_targets: str = "0.8,0.9,0.95"
    page_target_arl: int = 200
    ae_epochs: int = 300
    # synth
    motor_count: int = 6
    duration_s: float = 60.0
    severities: str = "0.05,0.10"
    synth_sample_rate_hz: float = 500.0
    # run
    seed: int = 0
    threads: int = 0  # 0 = one worker per available core

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        return max(1, os.cpu_count() or 1)

    # -- parsed views --------------------------------------------------------

    def method_list(self) -> tuple[str, ...]:
        return tuple(m.strip() for m in self.methods.split(",") if m.strip())

    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(int(h) for h in self.sbi_hidden.split(",") if h.strip())

    def tpr_target_list(self) -> tuple[float, ...]:
        return tuple(float(t) for t in self.tpr_targets.split(",") if t.strip())

    def severity_list(self) -> tuple[float, ...]:
        return tuple(float(s) for s in self.severities.split(",") if s.strip())

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- loading -------------------------------------------------------------

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        cfg = cls()
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if key not in fields:
                    raise ConfigError(f"unknown config key '{key}' in [{section}]")
                cfg._set(key, raw, fields[key].type)
        return cfg

    def _set(self, key: str, raw: str, kind):
        try:
            if kind in (int, "int"):
                value = int(raw)
            elif kind in (float, "float"):
                value = float(raw)
            elif kind in (bool, "bool"):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                value = raw
        except ValueError as exc:
            raise ConfigError(f"config key '{key}': cannot parse '{raw}'") from exc
        setattr(self, key, value)

    def override(self, **kwargs) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(self)}
        for key, value in kwargs.items():
            if value is None:
                continue
            if key not in fields:
                raise ConfigError(f"unknown config key '{key}'")
            setattr(self, key, value)
        return self
