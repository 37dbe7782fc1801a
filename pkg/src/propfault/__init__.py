"""Statistical fault detection for multirotor propeller damage.

A three-level stack over per-window IMU vibration features: a composite
likelihood-ratio detector with per-motor alternatives and EMA smoothing, a
detection-oriented CLs statistic with toy Monte Carlo false-alarm control,
and a conditional-mixture posterior over fault severity and motor identity.
"""

from propfault.cls import ClsResult, ToyEnsemble, build_toy_ensemble, cls_detect
from propfault.detector import (
    DetectionTrace,
    FlightDecision,
    composite_q,
    composite_q_matrix,
    decide_flight,
    ema_smooth,
    scan_flight,
)
from propfault.features import (
    FeatureSchema,
    FeatureTable,
    FeatureVector,
    cohens_d_ranking,
    extract_corpus,
    extract_features,
    extract_table,
    spectral_features,
    time_features,
    welch_psd,
)
from propfault.gaussian import (
    GaussianModel,
    HypothesisBank,
    fit_bank,
    fit_gaussian,
    ledoit_wolf,
)
from propfault.ingest import (
    CHANNELS,
    FaultLabel,
    FlightRecord,
    ManifestEntry,
    Window,
    average_arm_imus,
    load_corpus,
    load_flight_csv,
    load_manifest,
    make_windows,
    write_flight_csv,
    write_manifest,
)
from propfault.sbi import (
    PosteriorModel,
    SeverityPosterior,
    build_training_pairs,
    calibration_report,
    posterior_query,
    train_posterior,
)
from propfault.synth import SynthConfig, generate_corpus, generate_flight

__version__ = "0.1.0"
