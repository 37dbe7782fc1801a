import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from propfault.evaluation import LofoConfig, run_lofo
from propfault.features import FeatureSchema, extract_corpus
from propfault.sbi import SbiTrainingSet, train_posterior
from propfault.synth import generate_corpus

FROZEN_SEED = 7


@pytest.fixture(scope="session")
def fixture_timings():
    """Elapsed seconds for the expensive session fixtures, for runtime gates."""
    return {}


@pytest.fixture(scope="session")
def frozen_corpus(fixture_timings):
    """The frozen 18-flight hexarotor benchmark corpus (6 healthy, 6+6 fault)."""
    start = time.perf_counter()
    records = generate_corpus(6, 6, (0.05, 0.10), 6, seed=FROZEN_SEED)
    fixture_timings["frozen_corpus"] = time.perf_counter() - start
    return records


@pytest.fixture(scope="session")
def frozen_table(frozen_corpus, fixture_timings):
    start = time.perf_counter()
    table = extract_corpus(frozen_corpus, FeatureSchema.default())
    fixture_timings["frozen_table"] = time.perf_counter() - start
    return table


@pytest.fixture(scope="session")
def frozen_lofo(frozen_table, fixture_timings):
    start = time.perf_counter()
    folds = run_lofo(frozen_table, LofoConfig(methods=("lrt", "mahalanobis"), seed=0))
    fixture_timings["frozen_lofo"] = time.perf_counter() - start
    return folds


@pytest.fixture(scope="session")
def frozen_lofo_time_only(frozen_table, fixture_timings):
    start = time.perf_counter()
    sub = frozen_table.subset_features(frozen_table.schema.time_domain_names())
    folds = run_lofo(sub, LofoConfig(methods=("lrt",), seed=0))
    fixture_timings["frozen_lofo_time_only"] = time.perf_counter() - start
    return folds


@pytest.fixture(scope="session")
def small_corpus():
    """Quick 10-flight quadrotor corpus with full motor coverage per fold."""
    return generate_corpus(2, 4, (0.05, 0.10), 4, seed=11, duration_s=30.0)


@pytest.fixture(scope="session")
def small_table(small_corpus):
    return extract_corpus(small_corpus, FeatureSchema.default())


@pytest.fixture(scope="session")
def linear_gaussian_setup(fixture_timings):
    """Conditional-mean recovery problem with a known analytic posterior.

    theta = w.x + noise with Gaussian regressors, so the true posterior at x
    is N(w.x, sigma^2); used for both accuracy and calibration checks.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(20)
    w = np.array([0.6, -0.4])
    sigma = 0.1
    x = rng.standard_normal((3000, 2))
    theta = (x @ w + sigma * rng.standard_normal(3000))[:, None]
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    ts = SbiTrainingSet(
        theta=theta, x=(x - mean) / std,
        standardize_mean=mean, standardize_std=std, motor_count=0,
    )
    model = train_posterior(ts, hidden=(32, 32), components=3, epochs=150, seed=2)
    fixture_timings["linear_gaussian"] = time.perf_counter() - start
    return {"model": model, "w": w, "sigma": sigma, "rng_seed": 21}


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
