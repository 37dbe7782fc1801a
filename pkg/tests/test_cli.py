import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from propfault.cli import EXIT_CONFIG, EXIT_MODEL, main


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Corpus + staged artifacts produced through the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    assert main([
        "--seed", "3", "synth", "--out", str(corpus),
        "--flights", "9", "--motors", "3", "--duration", "30",
    ]) == 0
    features = root / "features.csv"
    assert main([
        "extract", "--manifest", str(corpus / "manifest.csv"),
        "--out", str(features),
    ]) == 0
    bank = root / "bank.json"
    assert main(["fit", "--features", str(features), "--out", str(bank)]) == 0
    ensemble = root / "ensemble.json"
    assert main([
        "--seed", "3", "cls", "--bank", str(bank),
        "--out", str(ensemble), "--n-toys", "2000",
    ]) == 0
    return {
        "root": root,
        "corpus": corpus,
        "features": features,
        "bank": bank,
        "ensemble": ensemble,
    }


class TestSynth:
    def test_writes_flights_and_manifest(self, workspace):
        csvs = sorted(workspace["corpus"].glob("*.csv"))
        names = {p.name for p in csvs}
        assert "manifest.csv" in names
        assert len(names) == 10  # 9 flights + manifest

    def test_rerun_is_hash_identical(self, tmp_path):
        for out in ("one", "two"):
            assert main([
                "--seed", "5", "synth", "--out", str(tmp_path / out),
                "--flights", "3", "--motors", "3", "--duration", "5",
                "--severities", "0.05,0.10",
            ]) == 0
        ones = sorted((tmp_path / "one").glob("*.csv"))
        twos = sorted((tmp_path / "two").glob("*.csv"))
        assert [sha256(a) for a in ones] == [sha256(b) for b in twos]

    def test_invalid_severity_exits_config(self, tmp_path, capsys):
        rc = main([
            "synth", "--out", str(tmp_path / "x"), "--flights", "4",
            "--severities", "0.5", "--duration", "5",
        ])
        assert rc == EXIT_CONFIG
        assert "0.12" in capsys.readouterr().err

    def test_indivisible_flights_rejected(self, tmp_path):
        rc = main(["synth", "--out", str(tmp_path / "x"), "--flights", "7",
                   "--duration", "5"])
        assert rc == EXIT_CONFIG


class TestExtractAndFit:
    def test_feature_csv_shape(self, workspace):
        import pandas as pd

        df = pd.read_csv(workspace["features"])
        assert df.shape[1] == 94  # 90 features + 4 provenance columns
        assert df.shape[0] > 0

    def test_bank_document_contents(self, workspace):
        doc = json.loads(workspace["bank"].read_text())
        assert doc["format"] == "bank"
        assert len(doc["h1"]) == 3
        assert doc["healthy_q95"] is not None
        assert "h1_shrinkage" in doc["metadata"]

    def test_missing_manifest_exits_config(self, tmp_path):
        rc = main(["extract", "--manifest", str(tmp_path / "none.csv"),
                   "--out", str(tmp_path / "f.csv")])
        assert rc == EXIT_CONFIG


class TestDetect:
    def test_fault_flight_declared(self, workspace, tmp_path):
        fault_csv = next(workspace["corpus"].glob("fault10_*.csv"))
        out = tmp_path / "det.json"
        rc = main([
            "detect", "--bank", str(workspace["bank"]),
            "--ensemble", str(workspace["ensemble"]),
            "--flight", str(fault_csv), "--out", str(out),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["decision"]["fault_declared"]
        first = report["windows"][0]
        for key in ("q", "q_smoothed", "motor_argmax", "p_b", "p_sb", "cls_det"):
            assert key in first

    def test_fresh_healthy_flight_at_q95_threshold(self, workspace, tmp_path):
        # a flight the bank never saw must stay near the calibrated 5% false
        # positive fraction at the stored healthy-q95 operating point
        import numpy as np

        from propfault.ingest import write_flight_csv
        from propfault.synth import SynthConfig, default_rotor_speeds, generate_flight

        rng = np.random.default_rng(404)
        offsets = rng.uniform(0.97, 1.03) * rng.uniform(0.995, 1.005, size=3)
        record = generate_flight(SynthConfig(
            motor_count=3,
            rotor_speed_hz=tuple(np.array(default_rotor_speeds(3)) * offsets),
            duration_s=30.0, seed=404, flight_id="fresh_healthy",
        ))
        flight_csv = tmp_path / "fresh_healthy.csv"
        write_flight_csv(record, flight_csv)
        out = tmp_path / "det.json"
        rc = main([
            "--config", str(_write_config(tmp_path, "threshold_mode = q95")),
            "detect", "--bank", str(workspace["bank"]),
            "--ensemble", str(workspace["ensemble"]),
            "--flight", str(flight_csv), "--out", str(out),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert not report["decision"]["fault_declared"]
        assert report["decision"]["positive_fraction"] <= 0.25

    def test_fresh_fault_flight_at_q95_threshold(self, workspace, tmp_path):
        import numpy as np

        from propfault.ingest import write_flight_csv
        from propfault.synth import SynthConfig, default_rotor_speeds, generate_flight

        rng = np.random.default_rng(505)
        offsets = rng.uniform(0.97, 1.03) * rng.uniform(0.995, 1.005, size=3)
        record = generate_flight(SynthConfig(
            motor_count=3,
            rotor_speed_hz=tuple(np.array(default_rotor_speeds(3)) * offsets),
            severity=(0.10, 0.0, 0.0), label_motor=1,
            duration_s=30.0, seed=505, flight_id="fresh_fault",
        ))
        flight_csv = tmp_path / "fresh_fault.csv"
        write_flight_csv(record, flight_csv)
        out = tmp_path / "det.json"
        rc = main([
            "--config", str(_write_config(tmp_path, "threshold_mode = q95")),
            "detect", "--bank", str(workspace["bank"]),
            "--ensemble", str(workspace["ensemble"]),
            "--flight", str(flight_csv), "--out", str(out),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["decision"]["fault_declared"]

    def test_corrupted_bank_exits_model_error(self, workspace, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("garbage")
        rc = main([
            "detect", "--bank", str(bad),
            "--ensemble", str(workspace["ensemble"]),
            "--flight", str(next(workspace["corpus"].glob("healthy_*.csv"))),
            "--out", str(tmp_path / "o.json"),
        ])
        assert rc == EXIT_MODEL

    def test_mismatched_ensemble_exits_model_error(self, workspace, tmp_path):
        doc = json.loads(workspace["ensemble"].read_text())
        doc["schema_hash"] = "0" * 64
        mismatched = tmp_path / "ens.json"
        mismatched.write_text(json.dumps(doc))
        rc = main([
            "detect", "--bank", str(workspace["bank"]),
            "--ensemble", str(mismatched),
            "--flight", str(next(workspace["corpus"].glob("healthy_*.csv"))),
            "--out", str(tmp_path / "o.json"),
        ])
        assert rc == EXIT_MODEL

    def test_sbi_summaries_for_positive_windows(self, workspace, tmp_path):
        model = tmp_path / "post.json"
        rc = main([
            "--seed", "2", "sbi-train", "--features", str(workspace["features"]),
            "--out", str(model), "--epochs", "15", "--hidden", "32",
            "--components", "3",
        ])
        assert rc == 0
        fault_csv = next(workspace["corpus"].glob("fault10_*.csv"))
        out = tmp_path / "det.json"
        rc = main([
            "detect", "--bank", str(workspace["bank"]),
            "--ensemble", str(workspace["ensemble"]),
            "--flight", str(fault_csv), "--out", str(out),
            "--sbi-model", str(model),
        ])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["sbi"], "positive windows should carry posterior summaries"
        entry = report["sbi"][0]
        for key in ("sev_mean", "interval", "p_fault", "motor_map"):
            assert key in entry


class TestSbiInfer:
    def test_posterior_report_rows(self, workspace, tmp_path):
        model = tmp_path / "post.json"
        assert main([
            "--seed", "2", "sbi-train", "--features", str(workspace["features"]),
            "--out", str(model), "--epochs", "10", "--hidden", "16",
            "--components", "2",
        ]) == 0
        out = tmp_path / "posteriors.json"
        assert main([
            "sbi-infer", "--model", str(model),
            "--features", str(workspace["features"]),
            "--out", str(out), "--n-samples", "200",
        ]) == 0
        doc = json.loads(out.read_text())
        assert len(doc["posteriors"]) > 0
        row = doc["posteriors"][0]
        for key in ("flight_id", "sev_mean", "interval", "p_fault", "motor_map"):
            assert key in row


class TestEvalLofo:
    def test_report_and_summary(self, workspace, tmp_path, capsys):
        out = tmp_path / "eval"
        rc = main([
            "--seed", "1", "eval-lofo",
            "--manifest", str(workspace["corpus"] / "manifest.csv"),
            "--out", str(out), "--methods", "lrt,mahalanobis",
            "--n-boot", "50",
        ])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert 0.0 <= report["methods"]["lrt_ema"]["auc_all"] <= 1.0
        assert report["methods"]["autoencoder"] == {"status": "not run"}
        # all defaults echo into the report for provenance
        assert report["config"]["window_length"] == 500
        assert report["config"]["alpha_ema"] == 0.3
        assert "lrt_ema" in capsys.readouterr().out

    def test_lrt_only_omits_baselines(self, workspace, tmp_path):
        out = tmp_path / "eval"
        rc = main([
            "eval-lofo", "--manifest", str(workspace["corpus"] / "manifest.csv"),
            "--out", str(out), "--methods", "lrt", "--n-boot", "20",
        ])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["methods"]["mahalanobis"] == {"status": "not run"}


def _write_config(tmp_path, *lines):
    path = tmp_path / "config.ini"
    path.write_text("[detector]\n" + "\n".join(lines) + "\n")
    return path


class TestConfigFile:
    def test_documented_defaults(self):
        from propfault.config import RunConfig

        cfg = RunConfig()
        assert cfg.window_length == 500
        assert cfg.stride == 250
        assert cfg.alpha_ema == 0.3
        assert cfg.n_toys == 10_000
        assert cfg.alpha_det == 0.05
        assert cfg.resolved_threads() >= 1

    def test_ini_overrides_defaults(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[windows]\nwindow_length = 256\n[detector]\nalpha_ema = 0.5\n")
        from propfault.config import RunConfig

        cfg = RunConfig.from_ini(path)
        assert cfg.window_length == 256
        assert cfg.alpha_ema == 0.5

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[windows]\nbogus = 1\n")
        from propfault.config import RunConfig
        from propfault.errors import ConfigError

        with pytest.raises(ConfigError):
            RunConfig.from_ini(path)
