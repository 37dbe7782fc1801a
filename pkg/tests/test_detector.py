import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ema_loop
from propfault.detector import (
    DetectionTrace,
    composite_q,
    composite_q_matrix,
    decide_flight,
    ema_smooth,
    scan_flight,
    write_trace_csv,
)
from propfault.errors import ConfigError, DataError
from propfault.gaussian import GaussianModel, HypothesisBank


def make_bank(h1_means, h0_mean=None, dim=None, cov_scale=1.0):
    dim = dim if dim is not None else len(h1_means[0])
    h0 = GaussianModel(
        np.zeros(dim) if h0_mean is None else np.asarray(h0_mean, float),
        np.eye(dim), 0.0,
    )
    h1 = tuple(
        GaussianModel(np.asarray(m, float), cov_scale * np.eye(dim), 0.0)
        for m in h1_means
    )
    return HypothesisBank(
        h0=h0, h1=h1, standardize_mean=np.zeros(dim), standardize_std=np.ones(dim)
    )


class TestCompositeQ:
    def test_identical_models_give_zero(self, rng):
        bank = make_bank([np.zeros(3)] * 4)
        for _ in range(10):
            q, m_star = composite_q(bank, rng.standard_normal(3))
            assert q == pytest.approx(0.0, abs=1e-12)
            assert m_star == 1

    def test_single_motor_reduces_to_simple_lrt(self, rng):
        mean = np.array([1.0, -1.0])
        bank = make_bank([mean])
        x = rng.standard_normal(2)
        q, m_star = composite_q(bank, x)
        expected = bank.h1[0].log_pdf(x) - bank.h0.log_pdf(x)
        assert q == pytest.approx(expected, abs=1e-12)
        assert m_star == 1

    def test_localizes_to_nearest_alternative(self):
        bank = make_bank([[4.0, 0.0], [0.0, 4.0]])
        q, m_star = composite_q(bank, np.array([0.0, 4.0]))
        assert m_star == 2
        assert q > 0
        # oracle: direct density evaluation
        x = np.array([0.0, 4.0])
        direct = max(
            bank.h1[0].log_pdf(x) - bank.h0.log_pdf(x),
            bank.h1[1].log_pdf(x) - bank.h0.log_pdf(x),
        )
        assert q == pytest.approx(direct, abs=1e-12)

    def test_shift_in_all_log_densities_cancels(self, rng):
        # adding the same constant to every log-density leaves q unchanged;
        # equivalent to scaling every density by the same factor
        bank = make_bank([[2.0, 0.0], [0.0, 2.0]])
        X = rng.standard_normal((20, 2))
        q, m = composite_q_matrix(bank, X)
        lp0 = bank.h0.log_pdf(X) + 7.5
        diffs = np.stack([h.log_pdf(X) + 7.5 for h in bank.h1]) - lp0
        np.testing.assert_allclose(diffs.max(axis=0), q, atol=1e-12)

    def test_tie_breaks_to_lowest_motor(self):
        bank = make_bank([[3.0, 0.0], [3.0, 0.0]])
        _, m_star = composite_q(bank, np.array([3.0, 0.0]))
        assert m_star == 1


class TestEmaSmooth:
    def test_constant_sequence_fixed_point(self):
        out = ema_smooth(np.full(20, 3.7), 0.3)
        np.testing.assert_allclose(out, 3.7, atol=1e-12)

    def test_single_step(self):
        out = ema_smooth([0.0, 1.0], 0.3)
        np.testing.assert_allclose(out, [0.0, 0.3], atol=1e-12)

    def test_matches_loop_oracle(self, rng):
        q = rng.standard_normal(100)
        np.testing.assert_allclose(ema_smooth(q, 0.3), ema_loop(q, 0.3), atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            ema_smooth([], 0.3)

    def test_alpha_range(self):
        with pytest.raises(ConfigError):
            ema_smooth([1.0], 0.0)
        np.testing.assert_allclose(ema_smooth([1.0, 2.0], 1.0), [1.0, 2.0])

    @settings(max_examples=30, deadline=None)
    @given(
        shift=st.floats(min_value=-10, max_value=10),
        alpha=st.floats(min_value=0.05, max_value=1.0),
    )
    def test_affine_in_constant_shift(self, shift, alpha):
        q = np.random.default_rng(8).standard_normal(40)
        np.testing.assert_allclose(
            ema_smooth(q + shift, alpha), ema_smooth(q, alpha) + shift, atol=1e-9
        )


class TestDecideFlight:
    def make_trace(self, q_smoothed, motors=None):
        n = len(q_smoothed)
        return DetectionTrace(
            flight_id="f",
            q=np.asarray(q_smoothed, float),
            q_smoothed=np.asarray(q_smoothed, float),
            motor_argmax=np.asarray(motors if motors is not None else [1] * n),
        )

    def test_majority_declares_fault(self):
        decision = decide_flight(self.make_trace([1.0] * 6 + [-1.0] * 4))
        assert decision.fault_declared
        assert decision.positive_fraction == pytest.approx(0.6)

    def test_exactly_half_is_not_fault(self):
        decision = decide_flight(self.make_trace([1.0] * 5 + [-1.0] * 5))
        assert not decision.fault_declared

    def test_localized_motor_is_mode_of_positive_windows(self):
        trace = self.make_trace(
            [1.0, 1.0, 1.0, -1.0, -1.0], motors=[2, 2, 3, 1, 1]
        )
        assert decide_flight(trace).localized_motor == 2

    def test_motor_tie_breaks_low(self):
        trace = self.make_trace([1.0, 1.0], motors=[3, 2])
        assert decide_flight(trace).localized_motor == 2

    def test_no_positive_windows_no_motor(self):
        decision = decide_flight(self.make_trace([-1.0, -2.0]))
        assert decision.localized_motor is None
        assert decision.positive_fraction == 0.0

    def test_alpha_one_is_permutation_invariant(self, rng):
        bank = make_bank([[2.0, 0.0]])
        X = rng.standard_normal((30, 2))
        d1 = decide_flight(scan_flight(bank, X, "f", alpha_ema=1.0))
        d2 = decide_flight(scan_flight(bank, X[::-1], "f", alpha_ema=1.0))
        assert d1.positive_fraction == d2.positive_fraction
        assert d1.fault_declared == d2.fault_declared


class TestSmoothingHelps:
    def test_ema_improves_over_raw_on_benchmark(self, frozen_lofo):
        from propfault.evaluation import auc, pooled_scores

        raw_scores, raw_labels, _ = pooled_scores(frozen_lofo, "lrt_composite")
        ema_scores, ema_labels, _ = pooled_scores(frozen_lofo, "lrt_ema")
        assert auc(ema_scores, ema_labels) >= auc(raw_scores, raw_labels)


class TestTraceExport:
    def test_csv_columns(self, tmp_path, rng):
        bank = make_bank([[2.0, 0.0]])
        trace = scan_flight(bank, rng.standard_normal((5, 2)), "flight-a")
        write_trace_csv(trace, tmp_path / "trace.csv")
        with open(tmp_path / "trace.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["flight_id", "window_index", "q", "q_smoothed", "motor_argmax"]
        assert len(rows) == 6
        assert float(rows[1][2]) == pytest.approx(trace.q[0])
