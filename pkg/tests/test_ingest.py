import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propfault.errors import (
    AlignmentError,
    ConfigError,
    DataError,
    LabelError,
    ParseError,
    SchemaError,
    ShortFlightError,
)
from propfault.ingest import (
    CHANNELS,
    FaultLabel,
    FlightRecord,
    ManifestEntry,
    average_arm_imus,
    load_corpus,
    load_flight_csv,
    load_manifest,
    make_windows,
    write_flight_csv,
    write_manifest,
)


def make_record(n=1000, rate=376.0, seed=0, label=None):
    data = np.random.default_rng(seed).standard_normal((6, n))
    return FlightRecord("f0", rate, data, label or FaultLabel())


def write_csv(path, n=1000, dt=1.0 / 376.0, drop=None, corrupt_at=None):
    frame = pd.DataFrame({"t": np.arange(n) * dt})
    for i, ch in enumerate(CHANNELS):
        frame[ch] = np.sin(0.01 * i * np.arange(n))
    if drop:
        frame = frame.drop(columns=[drop])
    if corrupt_at is not None:
        frame = frame.astype(object)
        frame.loc[corrupt_at, "acc_y"] = "oops"
    frame.to_csv(path, index=False)
    return path


class TestFaultLabel:
    def test_healthy_default(self):
        label = FaultLabel()
        assert not label.is_fault and label.motor is None

    def test_severity_requires_motor(self):
        with pytest.raises(LabelError):
            FaultLabel(severity=0.05)

    def test_motor_requires_severity(self):
        with pytest.raises(LabelError):
            FaultLabel(severity=0.0, motor=2)

    def test_severity_range(self):
        with pytest.raises(LabelError):
            FaultLabel(severity=0.5, motor=1)


class TestLoadFlightCsv:
    def test_rate_inferred_from_timestamps(self, tmp_path):
        path = write_csv(tmp_path / "a.csv")
        record = load_flight_csv(path)
        assert record.sample_rate_hz == pytest.approx(376.0, rel=1e-6)
        assert record.n_samples == 1000

    def test_two_ms_spacing_gives_500(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", dt=0.002)
        record = load_flight_csv(path)
        assert record.sample_rate_hz == pytest.approx(500.0, rel=1e-9)

    def test_missing_channel_names_it(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", drop="gyr_z")
        with pytest.raises(SchemaError, match="gyr_z"):
            load_flight_csv(path)

    def test_non_numeric_cell_reports_row(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", corrupt_at=17)
        with pytest.raises(ParseError, match="row 17"):
            load_flight_csv(path)

    def test_non_uniform_timestamps_rejected(self, tmp_path):
        frame = pd.DataFrame({"t": np.concatenate([np.arange(500) * 0.002,
                                                   1.0 + np.arange(500) * 0.004])})
        for ch in CHANNELS:
            frame[ch] = 0.0
        frame.to_csv(tmp_path / "a.csv", index=False)
        with pytest.raises(DataError, match="non-uniform"):
            load_flight_csv(tmp_path / "a.csv")

    def test_fallback_rate_without_timestamps(self, tmp_path):
        frame = pd.DataFrame({ch: np.zeros(300) for ch in CHANNELS})
        frame.to_csv(tmp_path / "a.csv", index=False)
        record = load_flight_csv(tmp_path / "a.csv", sample_rate_hz=250.0)
        assert record.sample_rate_hz == 250.0
        with pytest.raises(ConfigError):
            load_flight_csv(tmp_path / "a.csv")

    def test_round_trip_with_writer(self, tmp_path):
        record = make_record(n=800, rate=500.0)
        write_flight_csv(record, tmp_path / "rt.csv")
        loaded = load_flight_csv(tmp_path / "rt.csv", flight_id="f0")
        assert loaded.sample_rate_hz == pytest.approx(500.0, rel=1e-6)
        np.testing.assert_allclose(loaded.channels, record.channels, rtol=1e-12)

    def test_adapter_column_map(self, tmp_path):
        # dataset adapters are just alternative column maps
        n = 300
        frame = pd.DataFrame({"TimeUS": np.arange(n) * 0.002})
        for i, ch in enumerate(CHANNELS):
            frame[f"IMU_{ch.upper()}"] = np.full(n, float(i))
        frame.to_csv(tmp_path / "a.csv", index=False)
        schema = {ch: f"IMU_{ch.upper()}" for ch in CHANNELS}
        schema["timestamp"] = "TimeUS"
        record = load_flight_csv(tmp_path / "a.csv", schema)
        assert record.sample_rate_hz == pytest.approx(500.0)
        np.testing.assert_allclose(record.channels[3], 3.0)


class TestAverageArmImus:
    def test_identical_streams_unchanged(self):
        records = [make_record(seed=3) for _ in range(4)]
        merged = average_arm_imus(records)
        np.testing.assert_allclose(merged.channels, records[0].channels)

    def test_two_streams_mean(self):
        a = FlightRecord("f", 100.0, np.ones((6, 10)), FaultLabel())
        b = FlightRecord("f", 100.0, 3 * np.ones((6, 10)), FaultLabel())
        merged = average_arm_imus([a, b])
        np.testing.assert_allclose(merged.channels, 2.0)

    def test_noise_variance_drops_by_k(self):
        n = 100_000
        records = [make_record(n=n, seed=s) for s in range(4)]
        merged = average_arm_imus(records)
        assert merged.channels.var() == pytest.approx(0.25, rel=0.10)

    def test_permutation_invariant(self):
        records = [make_record(seed=s) for s in range(3)]
        forward = average_arm_imus(records)
        backward = average_arm_imus(records[::-1])
        np.testing.assert_allclose(forward.channels, backward.channels, atol=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(AlignmentError):
            average_arm_imus([make_record(n=100), make_record(n=99)])

    def test_label_mismatch(self):
        a = make_record(label=FaultLabel())
        b = make_record(label=FaultLabel(severity=0.05, motor=1))
        with pytest.raises(AlignmentError):
            average_arm_imus([a, b])


class TestMakeWindows:
    def test_three_windows_from_1000(self):
        windows = make_windows(make_record(n=1000), 500, 250)
        assert [w.start_index for w in windows] == [0, 250, 500]

    def test_exact_length_single_window(self):
        assert len(make_windows(make_record(n=500), 500, 250)) == 1

    def test_short_flight_error(self):
        with pytest.raises(ShortFlightError):
            make_windows(make_record(n=499), 500, 250)

    @settings(max_examples=50, deadline=None)
    @given(
        length=st.integers(min_value=20, max_value=2000),
        window=st.integers(min_value=5, max_value=200),
        stride=st.integers(min_value=1, max_value=100),
    )
    def test_window_count_formula(self, length, window, stride):
        if window > length:
            return
        windows = make_windows(make_record(n=length), window, stride)
        assert len(windows) == (length - window) // stride + 1

    def test_nonoverlapping_windows_reconstruct_prefix(self):
        record = make_record(n=1234)
        windows = make_windows(record, 100, 100)
        rebuilt = np.concatenate([w.samples for w in windows], axis=1)
        np.testing.assert_array_equal(rebuilt, record.channels[:, : rebuilt.shape[1]])

    def test_windows_carry_label_and_rate(self):
        label = FaultLabel(severity=0.05, motor=2)
        windows = make_windows(make_record(n=600, rate=500.0, label=label), 500, 250)
        assert windows[0].label == label
        assert windows[0].sample_rate_hz == 500.0


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = [
            ManifestEntry("a.csv", "f1", 0.0, None, "synth"),
            ManifestEntry("b.csv", "f2", 0.05, 3, "synth"),
        ]
        write_manifest(entries, tmp_path / "m.csv")
        loaded = load_manifest(tmp_path / "m.csv")
        assert loaded == entries

    def test_duplicate_flight_ids_rejected(self, tmp_path):
        entries = [ManifestEntry("a.csv", "f1"), ManifestEntry("b.csv", "f1")]
        write_manifest(entries, tmp_path / "m.csv")
        with pytest.raises(ConfigError):
            load_manifest(tmp_path / "m.csv")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ConfigError):
            load_manifest(tmp_path / "nope.csv")

    def test_load_corpus_with_arm_average(self, tmp_path):
        a = FlightRecord("f1", 100.0, np.ones((6, 300)), FaultLabel())
        b = FlightRecord("f1", 100.0, 3 * np.ones((6, 300)), FaultLabel())
        write_flight_csv(a, tmp_path / "arm1.csv")
        write_flight_csv(b, tmp_path / "arm2.csv")
        write_manifest(
            [ManifestEntry("arm1.csv|arm2.csv", "f1", 0.0, None, "quad")],
            tmp_path / "m.csv",
        )
        records = load_corpus(tmp_path / "m.csv")
        assert len(records) == 1
        np.testing.assert_allclose(records[0].channels, 2.0)
