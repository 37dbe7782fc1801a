"""Leave-one-flight-out harness, detection metrics, and report generation.

Every fold withholds all windows of one flight, refits every model on the
rest, and scores the held-out windows; metrics are computed on the pooled
held-out scores. Window-level bootstrap is the default resampling unit (a
flight-level switch is exposed).
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from propfault.baselines import Autoencoder, calibrate_page, page_cusum, sprt_flight
from propfault.detector import decide_flight, scan_flight
from propfault.errors import (
    ConfigError,
    DataError,
    InsufficientDataError,
    MissingClassError,
    UndefinedMetricError,
)
from propfault.features import FeatureTable, cohens_d_ranking
from propfault.gaussian import fit_bank

REPORT_SCHEMA_VERSION = 1

SCORE_METHODS = ("lrt_pooled", "lrt_composite", "lrt_ema", "mahalanobis", "autoencoder")
DECISION_METHODS = ("lrt_ema", "sprt", "cusum_page")
METHOD_FAMILIES = ("lrt", "mahalanobis", "autoencoder", "sprt")


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties credited 0.5."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n0 == 0 or n1 == 0:
        raise UndefinedMetricError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n0 * n1))


def bootstrap_ci(
    scores,
    labels,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    *,
    flight_ids=None,
) -> tuple[float, float, float]:
    """Bootstrap (sd, lo, hi) of the AUC; resamples windows by default.

    When flight_ids is given, whole flights are resampled instead. Resamples
    that lose one class are redrawn a bounded number of times, then skipped.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if not labels.any() or labels.all():
        raise UndefinedMetricError("bootstrap needs both classes")
    rng = np.random.default_rng(seed)
    n = len(scores)
    groups = None
    if flight_ids is not None:
        flight_ids = np.asarray(flight_ids)
        uniq = list(dict.fromkeys(flight_ids))
        groups = [np.flatnonzero(flight_ids == f) for f in uniq]

    values = []
    for _ in range(n_boot):
        for _attempt in range(100):
            if groups is None:
                idx = rng.integers(0, n, size=n)
            else:
                picks = rng.integers(0, len(groups), size=len(groups))
                idx = np.concatenate([groups[p] for p in picks])
            lab = labels[idx]
            if lab.any() and not lab.all():
                values.append(auc(scores[idx], lab))
                break
    if not values:
        raise UndefinedMetricError("all bootstrap resamples were single-class")
    values = np.asarray(values)
    sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(values, [tail, 100.0 - tail])
    return sd, float(lo), float(hi)


def far_at_tpr(scores, labels, tpr_targets=(0.80, 0.90, 0.95)) -> dict:
    """False alarm rate at the largest threshold reaching each TPR target.

    Detection rule is score >= threshold on both classes.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    fault = np.sort(scores[labels])
    healthy = scores[~labels]
    if len(fault) == 0 or len(healthy) == 0:
        raise UndefinedMetricError("FAR@TPR needs both classes")
    table = {}
    n1 = len(fault)
    for target in tpr_targets:
        k = int(np.ceil(target * n1 - 1e-12))
        k = min(max(k, 1), n1)
        threshold = float(fault[n1 - k])
        table[float(target)] = {
            "threshold": threshold,
            "far": float((healthy >= threshold).mean()),
            "tpr": float((fault >= threshold).mean()),
        }
    return table


def roc_points(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) at every distinct score, descending thresholds."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    points = []
    for threshold in np.unique(scores)[::-1]:
        hit = scores >= threshold
        points.append(
            (
                float(threshold),
                float(hit[~labels].mean()),
                float(hit[labels].mean()),
            )
        )
    return points


@dataclass
class FoldResult:
    """Held-out scores and decisions for one LOFO fold."""

    flight_id: str
    true_fault: bool
    true_severity: float
    true_motor: int | None
    scores: dict[str, np.ndarray]
    motor_argmax: np.ndarray | None
    decisions: dict[str, bool]
    localized_motor: int | None
    positive_fraction: float | None
    skipped: tuple[str, ...] = ()


@dataclass
class LofoConfig:
    methods: tuple[str, ...] = METHOD_FAMILIES
    motor_count: int | None = None
    alpha_ema: float = 0.3
    vote_threshold: float = 0.0
    ae_epochs: int = 300
    ae_patience: int = 20
    page_target_arl: int = 200
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        unknown = set(self.methods) - set(METHOD_FAMILIES)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")


def _run_fold(table: FeatureTable, flight_id: str, cfg: LofoConfig, fold_seed) -> FoldResult:
    test_rows = table.rows_for_flight(flight_id)
    train_mask = table.flight_ids != flight_id
    assert not set(table.flight_ids[train_mask]) & {flight_id}, "LOFO leakage"

    train = FeatureTable(
        schema=table.schema,
        X=table.X[train_mask],
        flight_ids=table.flight_ids[train_mask],
        start_indices=table.start_indices[train_mask],
        severities=table.severities[train_mask],
        motors=table.motors[train_mask],
    )
    X_test = table.X[test_rows]
    severity = float(table.severities[test_rows[0]])
    motor = int(table.motors[test_rows[0]]) or None

    rng = np.random.default_rng(fold_seed)
    scores: dict[str, np.ndarray] = {}
    decisions: dict[str, bool] = {}
    motor_argmax = None
    localized = None
    positive_fraction = None
    skipped: list[str] = []

    bank = None
    if "lrt" in cfg.methods or "sprt" in cfg.methods or "mahalanobis" in cfg.methods:
        try:
            bank = fit_bank(train, motor_count=cfg.motor_count)
        except (MissingClassError, InsufficientDataError) as exc:
            warnings.warn(f"fold {flight_id}: {exc}; skipping bank-based methods")

    if "lrt" in cfg.methods:
        if bank is None:
            skipped.append("lrt")
        else:
            Xs = bank.standardize(X_test)
            trace = scan_flight(bank, Xs, flight_id, alpha_ema=cfg.alpha_ema)
            scores["lrt_composite"] = trace.q
            scores["lrt_ema"] = trace.q_smoothed
            motor_argmax = trace.motor_argmax
            decision = decide_flight(trace, cfg.vote_threshold)
            decisions["lrt_ema"] = decision.fault_declared
            localized = decision.localized_motor
            positive_fraction = decision.positive_fraction
            try:
                pooled = fit_bank(train, pooled=True)
                pooled_trace = scan_flight(pooled, pooled.standardize(X_test), flight_id)
                scores["lrt_pooled"] = pooled_trace.q
            except (MissingClassError, InsufficientDataError):
                skipped.append("lrt_pooled")

    if "mahalanobis" in cfg.methods:
        if bank is None:
            skipped.append("mahalanobis")
        else:
            maha = bank.h0.mahalanobis(bank.standardize(X_test))
            scores["mahalanobis"] = maha
            train_healthy = bank.standardize(train.X[train.healthy_mask])
            healthy_scores = bank.h0.mahalanobis(train_healthy)
            drift, threshold = calibrate_page(
                healthy_scores,
                target_arl=cfg.page_target_arl,
                seed=int(rng.integers(2**31)),
            )
            decisions["cusum_page"] = page_cusum(maha, drift, threshold).triggered

    if "autoencoder" in cfg.methods:
        try:
            healthy_rows = train.X[train.healthy_mask]
            mean = healthy_rows.mean(axis=0)
            std = healthy_rows.std(axis=0)
            std = np.where(std < 1e-12, 1.0, std)
            ae = Autoencoder(n_features=table.X.shape[1], seed=int(rng.integers(2**31)))
            ae.fit(
                (healthy_rows - mean) / std,
                epochs=cfg.ae_epochs,
                patience=cfg.ae_patience,
                seed=int(rng.integers(2**31)),
            )
            scores["autoencoder"] = ae.score((X_test - mean) / std)
        except InsufficientDataError as exc:
            warnings.warn(f"fold {flight_id}: {exc}; skipping autoencoder")
            skipped.append("autoencoder")

    if "sprt" in cfg.methods:
        if bank is None:
            skipped.append("sprt")
        else:
            result = sprt_flight(bank, bank.standardize(X_test), flight_id=flight_id)
            decisions["sprt"] = result.fault_declared

    return FoldResult(
        flight_id=flight_id,
        true_fault=severity > 0,
        true_severity=severity,
        true_motor=motor,
        scores=scores,
        motor_argmax=motor_argmax,
        decisions=decisions,
        localized_motor=localized,
        positive_fraction=positive_fraction,
        skipped=tuple(skipped),
    )


def run_lofo(table: FeatureTable, cfg: LofoConfig | None = None) -> list[FoldResult]:
    """One fold per flight; each fold refits on the remaining flights."""
    cfg = cfg or LofoConfig()
    flights = table.unique_flights()
    if len(flights) < 2:
        raise DataError("LOFO needs at least 2 flights")
    fold_seeds = np.random.SeedSequence(cfg.seed).spawn(len(flights))
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [
                pool.submit(_run_fold, table, fid, cfg, s)
                for fid, s in zip(flights, fold_seeds)
            ]
            return [f.result() for f in futures]
    return [_run_fold(table, fid, cfg, s) for fid, s in zip(flights, fold_seeds)]


def pooled_scores(folds: list[FoldResult], method: str):
    """Held-out scores pooled across folds: (scores, fault labels, severities)."""
    chunks, labels, severities = [], [], []
    for fold in folds:
        if method not in fold.scores:
            continue
        s = fold.scores[method]
        chunks.append(s)
        labels.append(np.full(len(s), fold.true_fault))
        severities.append(np.full(len(s), fold.true_severity))
    if not chunks:
        raise UndefinedMetricError(f"no scores recorded for method {method}")
    return (
        np.concatenate(chunks),
        np.concatenate(labels),
        np.concatenate(severities),
    )


def _method_stats(
    folds, method, *, n_boot, bootstrap_level, tpr_targets, seed, by_flight=False
) -> dict:
    scores, labels, severities = pooled_scores(folds, method)
    flight_ids = np.concatenate(
        [
            np.full(len(f.scores[method]), f.flight_id, dtype=object)
            for f in folds
            if method in f.scores
        ]
    )
    sd, lo, hi = bootstrap_ci(
        scores,
        labels,
        n_boot=n_boot,
        level=bootstrap_level,
        seed=seed,
        flight_ids=flight_ids if by_flight else None,
    )
    per_severity = {}
    for sev in sorted(set(severities[labels])):
        mask = ~labels | (severities == sev)
        per_severity[f"{sev:g}"] = auc(scores[mask], labels[mask])
    return {
        "auc_all": auc(scores, labels),
        "auc_by_severity": per_severity,
        "bootstrap": {"sd": sd, "lo": lo, "hi": hi, "n_boot": n_boot},
        "far_at_tpr": {
            f"{t:g}": v for t, v in far_at_tpr(scores, labels, tpr_targets).items()
        },
        "n_windows": int(len(scores)),
    }


def _confusion(folds, method) -> dict:
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for fold in folds:
        if method not in fold.decisions:
            continue
        declared = fold.decisions[method]
        if fold.true_fault:
            counts["tp" if declared else "fn"] += 1
        else:
            counts["fp" if declared else "tn"] += 1
    return counts


def emit_report(
    folds: list[FoldResult],
    table: FeatureTable,
    *,
    out_dir,
    config_echo: dict | None = None,
    n_boot: int = 1000,
    bootstrap_level: float = 0.95,
    tpr_targets=(0.80, 0.90, 0.95),
    bootstrap_by_flight: bool = False,
    seed: int = 0,
) -> dict:
    """Build the run report, validate it, and write JSON + CSV exports."""
    if not folds:
        raise DataError("no folds to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    methods: dict[str, dict] = {}
    for method in SCORE_METHODS:
        present = any(method in f.scores for f in folds)
        if not present:
            methods[method] = {"status": "not run"}
            continue
        methods[method] = _method_stats(
            folds,
            method,
            n_boot=n_boot,
            bootstrap_level=bootstrap_level,
            tpr_targets=tpr_targets,
            seed=seed,
            by_flight=bootstrap_by_flight,
        )
    for method in DECISION_METHODS:
        if any(method in f.decisions for f in folds):
            methods.setdefault(method, {})["per_flight"] = _confusion(folds, method)
    methods["lstm_ae"] = {"status": "not implemented"}

    per_flight = []
    for fold in folds:
        per_flight.append(
            {
                "flight_id": fold.flight_id,
                "true_fault": fold.true_fault,
                "true_severity": fold.true_severity,
                "true_motor": fold.true_motor,
                "decisions": dict(fold.decisions),
                "localized_motor": fold.localized_motor,
                "positive_fraction": fold.positive_fraction,
                "skipped": list(fold.skipped),
            }
        )

    healthy = table.X[table.healthy_mask]
    fault = table.X[table.fault_mask]
    ranking = []
    if len(healthy) >= 2 and len(fault) >= 2:
        ranking = cohens_d_ranking(healthy, fault, table.schema.names)

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": dict(config_echo or {}),
        "corpus": {
            "n_flights": len(table.unique_flights()),
            "n_windows": int(table.n),
            "n_healthy_windows": int(table.healthy_mask.sum()),
            "n_fault_windows": int(table.fault_mask.sum()),
            "severities": sorted({f"{s:g}" for s in table.severities[table.fault_mask]}),
        },
        "methods": methods,
        "per_flight_decisions": per_flight,
        "feature_ranking_top10": [[n, d] for n, d in ranking[:10]],
    }
    validate_report(report)

    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2), encoding="utf-8"
    )

    roc_rows = []
    for method in SCORE_METHODS:
        if methods.get(method, {}).get("status"):
            continue
        scores, labels, _ = pooled_scores(folds, method)
        for threshold, fpr, tpr in roc_points(scores, labels):
            roc_rows.append(
                {"method": method, "threshold": threshold, "fpr": fpr, "tpr": tpr}
            )
    pd.DataFrame(roc_rows, columns=["method", "threshold", "fpr", "tpr"]).to_csv(
        out_dir / "roc_points.csv", index=False
    )

    far_rows = []
    for method, stats in methods.items():
        for target, entry in stats.get("far_at_tpr", {}).items():
            far_rows.append({"method": method, "tpr_target": target, **entry})
    pd.DataFrame(
        far_rows, columns=["method", "tpr_target", "threshold", "far", "tpr"]
    ).to_csv(out_dir / "far_table.csv", index=False)

    flight_rows = []
    for entry in per_flight:
        row = {
            "flight_id": entry["flight_id"],
            "true_fault": entry["true_fault"],
            "true_severity": entry["true_severity"],
            "true_motor": entry["true_motor"],
            "localized_motor": entry["localized_motor"],
            "positive_fraction": entry["positive_fraction"],
        }
        for method in DECISION_METHODS:
            row[f"declared_{method}"] = entry["decisions"].get(method)
        flight_rows.append(row)
    pd.DataFrame(flight_rows).to_csv(out_dir / "per_flight_decisions.csv", index=False)

    pd.DataFrame(ranking, columns=["feature", "cohens_d"]).to_csv(
        out_dir / "feature_ranking.csv", index=False
    )

    write_method_scores_csv(folds, out_dir / "per_window_scores.csv")
    return report


def write_method_scores_csv(folds: list[FoldResult], path):
    """Per-window scores for every method in the detection-trace column layout.

    Baselines have no smoothed variant or motor estimate; their score fills
    both score columns and the motor column stays empty.
    """
    rows = []
    for fold in folds:
        composite = fold.scores.get("lrt_composite")
        smoothed = fold.scores.get("lrt_ema")
        if composite is not None:
            for i in range(len(composite)):
                rows.append(
                    {
                        "method": "lrt",
                        "flight_id": fold.flight_id,
                        "window_index": i,
                        "q": composite[i],
                        "q_smoothed": smoothed[i],
                        "motor_argmax": int(fold.motor_argmax[i]),
                    }
                )
        for method in ("lrt_pooled", "mahalanobis", "autoencoder"):
            values = fold.scores.get(method)
            if values is None:
                continue
            for i, value in enumerate(values):
                rows.append(
                    {
                        "method": method,
                        "flight_id": fold.flight_id,
                        "window_index": i,
                        "q": value,
                        "q_smoothed": value,
                        "motor_argmax": "",
                    }
                )
    pd.DataFrame(
        rows,
        columns=["method", "flight_id", "window_index", "q", "q_smoothed", "motor_argmax"],
    ).to_csv(path, index=False)


_REQUIRED_TOP_LEVEL = {
    "schema_version": int,
    "config": dict,
    "corpus": dict,
    "methods": dict,
    "per_flight_decisions": list,
    "feature_ranking_top10": list,
}


def validate_report(report: dict):
    """Structural check against the in-repo report schema."""
    for key, kind in _REQUIRED_TOP_LEVEL.items():
        if key not in report:
            raise DataError(f"report missing key '{key}'")
        if not isinstance(report[key], kind):
            raise DataError(f"report key '{key}' must be {kind.__name__}")
    if report["schema_version"] != REPORT_SCHEMA_VERSION:
        raise DataError(
            f"unsupported report schema version {report['schema_version']}"
        )
    for key in ("n_flights", "n_windows"):
        if key not in report["corpus"]:
            raise DataError(f"report corpus missing '{key}'")
    for method, stats in report["methods"].items():
        if not isinstance(stats, dict):
            raise DataError(f"method entry '{method}' must be a dict")
        if "status" in stats or "auc_all" in stats or "per_flight" in stats:
            continue
        raise DataError(f"method entry '{method}' carries no result and no status")
