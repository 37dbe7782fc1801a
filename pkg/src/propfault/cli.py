"""Command-line entry point wiring config, datasets, and pipeline stages.

One subcommand per pipeline stage, composable via on-disk artifacts:
synth, extract, fit, cls, detect, sbi-train, sbi-infer, eval-lofo.

Exit codes: 0 success, 2 config error, 3 data error, 4 model-compatibility
error, 5 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from propfault import cls as cls_mod
from propfault import evaluation, persist, sbi, synth
from propfault.config import RunConfig
from propfault.detector import decide_flight, scan_flight
from propfault.errors import (
    ConfigError,
    DataError,
    ModelCompatibilityError,
    PropfaultError,
)
from propfault.features import FeatureSchema, FeatureTable, extract_corpus, extract_table
from propfault.gaussian import fit_bank
from propfault.ingest import load_corpus, load_flight_csv, make_windows, write_flight_csv, write_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_INTERNAL = 5


def _write_json(doc: dict, path):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2), encoding="utf-8")


def cmd_synth(args, cfg: RunConfig) -> int:
    severities = cfg.severity_list()
    if args.flights is not None:
        groups = 1 + len(severities)
        if args.flights % groups:
            raise ConfigError(
                f"--flights {args.flights} must be divisible by {groups} "
                f"(healthy + one group per severity)"
            )
        n_healthy = n_per_sev = args.flights // groups
    else:
        n_healthy = args.healthy
        n_per_sev = args.per_severity

    records = synth.generate_corpus(
        n_healthy,
        n_per_sev,
        severities,
        cfg.motor_count,
        seed=cfg.seed,
        duration_s=cfg.duration_s,
        sample_rate_hz=cfg.synth_sample_rate_hz,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for record in records:
        name = f"{record.flight_id}.csv"
        write_flight_csv(record, out / name)
        paths.append(name)
    entries = synth.corpus_manifest(records, paths, platform=f"synth_m{cfg.motor_count}")
    write_manifest(entries, out / "manifest.csv")
    print(f"wrote {len(records)} flights + manifest to {out}")
    return EXIT_OK


def cmd_extract(args, cfg: RunConfig) -> int:
    records = load_corpus(args.manifest, sample_rate_hz=cfg.sample_rate_hz)
    table = extract_corpus(
        records, FeatureSchema.default(), cfg.window_length, cfg.stride
    )
    table.to_csv(args.out)
    print(f"extracted {table.n} windows x {table.schema.dim} features -> {args.out}")
    return EXIT_OK


def _healthy_q95(table: FeatureTable, alpha_ema: float, *, motors, pooled) -> float | None:
    """95th percentile of held-out healthy smoothed scores.

    Each healthy flight is scored by a bank fit without it; in-sample healthy
    scores sit systematically lower than fresh-flight scores and would give an
    anti-conservative operating point.
    """
    smoothed = []
    for fid in table.unique_flights():
        rows = table.rows_for_flight(fid)
        if table.motors[rows[0]] != 0:
            continue
        mask = table.flight_ids != fid
        train = FeatureTable(
            schema=table.schema,
            X=table.X[mask],
            flight_ids=table.flight_ids[mask],
            start_indices=table.start_indices[mask],
            severities=table.severities[mask],
            motors=table.motors[mask],
        )
        fold_bank = fit_bank(train, motor_count=motors, pooled=pooled)
        trace = scan_flight(
            fold_bank, fold_bank.standardize(table.X[rows]), fid, alpha_ema=alpha_ema
        )
        smoothed.append(trace.q_smoothed)
    if not smoothed:
        return None
    return float(np.percentile(np.concatenate(smoothed), 95.0))


def cmd_fit(args, cfg: RunConfig) -> int:
    table = FeatureTable.from_csv(args.features)
    bank = fit_bank(
        table,
        motor_count=args.motors,
        pooled=bool(args.pooled),
    )
    try:
        bank.healthy_q95 = _healthy_q95(
            table, cfg.alpha_ema, motors=args.motors, pooled=bool(args.pooled)
        )
    except DataError:
        bank.healthy_q95 = None  # too few flights to calibrate held-out scores
    bank.metadata.update(
        {
            "window_length": cfg.window_length,
            "stride": cfg.stride,
            "alpha_ema": cfg.alpha_ema,
            "sample_rate_hz": cfg.sample_rate_hz,
            "seed": cfg.seed,
        }
    )
    persist.save_bank(bank, table.schema, args.out)
    lams = ", ".join(f"{m.shrinkage:.3f}" for m in bank.h1)
    print(
        f"fitted bank (M={bank.motor_count}, pooled={bank.pooled}) -> {args.out}; "
        f"shrinkage h0={bank.h0.shrinkage:.3f}, h1=[{lams}]"
    )
    return EXIT_OK


def cmd_cls(args, cfg: RunConfig) -> int:
    bank, _ = persist.load_bank(args.bank)
    mixture = None
    if args.mixture:
        mixture = [float(w) for w in args.mixture.split(",")]
    ensemble = cls_mod.build_toy_ensemble(
        bank, n_toys=cfg.n_toys, h1_mixture=mixture, seed=cfg.seed
    )
    persist.save_ensemble(ensemble, args.out)
    print(f"built {ensemble.n_toys}-toy ensemble -> {args.out}")
    return EXIT_OK


def cmd_detect(args, cfg: RunConfig) -> int:
    bank, schema = persist.load_bank(args.bank)
    ensemble = persist.load_ensemble(args.ensemble)
    if ensemble.schema_hash and ensemble.schema_hash != bank.schema_hash:
        raise ModelCompatibilityError("ensemble was built for a different bank schema")

    meta = bank.metadata
    window_length = int(meta.get("window_length", cfg.window_length))
    stride = int(meta.get("stride", cfg.stride))
    alpha = float(meta.get("alpha_ema", cfg.alpha_ema))
    rate = float(meta.get("sample_rate_hz", cfg.sample_rate_hz))

    record = load_flight_csv(args.flight, sample_rate_hz=rate)
    windows = make_windows(record, window_length, stride)
    table = extract_table(windows, schema)
    if table.schema.hash() != bank.schema_hash:
        raise ModelCompatibilityError("feature schema does not match the bank")

    xs = bank.standardize(table.X)
    trace = scan_flight(bank, xs, record.flight_id, alpha_ema=alpha)

    if cfg.threshold_mode == "q95":
        if bank.healthy_q95 is None:
            raise ConfigError("bank has no stored healthy q95 threshold")
        threshold = float(bank.healthy_q95)
    else:
        threshold = cfg.vote_threshold
    decision = decide_flight(trace, threshold)

    cls_source = trace.q_smoothed if cfg.cls_on == "smoothed" else trace.q
    results = [
        cls_mod.cls_detect(ensemble, float(value), cfg.alpha_det)
        for value in cls_source
    ]

    sbi_summaries = []
    if args.sbi_model:
        model = persist.load_posterior_model(args.sbi_model)
        if model.schema_hash and model.schema_hash != bank.schema_hash:
            raise ModelCompatibilityError("posterior model schema does not match bank")
        seeds = np.random.SeedSequence(cfg.seed).spawn(table.n)
        for i in range(table.n):
            if trace.q_smoothed[i] <= threshold:
                continue
            post = sbi.posterior_query(
                model,
                model.standardize(table.X[i]),
                n_samples=cfg.sbi_samples,
                seed=seeds[i],
                level=cfg.credible_level,
            )
            sbi_summaries.append(
                {
                    "window_index": i,
                    "sev_mean": post.sev_mean,
                    "interval": list(post.interval),
                    "level": cfg.credible_level,
                    "p_fault": post.p_fault,
                    "motor_map": post.motor_map,
                }
            )

    report = {
        "flight_id": record.flight_id,
        "config": cfg.as_dict(),
        "threshold": threshold,
        "windows": [
            {
                "window_index": i,
                "start_index": int(table.start_indices[i]),
                "q": float(trace.q[i]),
                "q_smoothed": float(trace.q_smoothed[i]),
                "motor_argmax": int(trace.motor_argmax[i]),
                "p_b": results[i].p_b,
                "p_sb": results[i].p_sb,
                "cls_det": results[i].cls_det,
                "cls_detected": results[i].detected,
            }
            for i in range(table.n)
        ],
        "decision": {
            "fault_declared": decision.fault_declared,
            "positive_fraction": decision.positive_fraction,
            "localized_motor": decision.localized_motor,
        },
        "sbi": sbi_summaries,
    }
    _write_json(report, args.out)
    verdict = "FAULT" if decision.fault_declared else "ok"
    print(
        f"{record.flight_id}: {verdict} "
        f"(positive fraction {decision.positive_fraction:.2f}, "
        f"motor {decision.localized_motor})"
    )
    return EXIT_OK


def cmd_sbi_train(args, cfg: RunConfig) -> int:
    table = FeatureTable.from_csv(args.features)
    pairs = sbi.build_training_pairs(
        table,
        dequant_sigma=cfg.dequant_sigma,
        augment_factor=cfg.augment_factor,
        jitter_frac=cfg.jitter_frac,
        seed=cfg.seed,
        motor_count=args.motors,
    )
    model = sbi.train_posterior(
        pairs,
        hidden=cfg.hidden_sizes(),
        components=cfg.sbi_components,
        epochs=cfg.sbi_epochs,
        batch_size=cfg.sbi_batch_size,
        learning_rate=cfg.sbi_learning_rate,
        seed=cfg.seed,
    )
    persist.save_posterior_model(model, args.out)
    print(
        f"trained posterior on {pairs.n} pairs "
        f"(final loss {model.train_meta['final_loss']:.3f}) -> {args.out}"
    )
    return EXIT_OK


def cmd_sbi_infer(args, cfg: RunConfig) -> int:
    model = persist.load_posterior_model(args.model)
    table = FeatureTable.from_csv(args.features)
    if model.schema_hash and model.schema_hash != table.schema.hash():
        raise ModelCompatibilityError("posterior model schema does not match features")
    seeds = np.random.SeedSequence(cfg.seed).spawn(table.n)
    rows = []
    for i in range(table.n):
        post = sbi.posterior_query(
            model,
            model.standardize(table.X[i]),
            n_samples=cfg.sbi_samples,
            seed=seeds[i],
            level=cfg.credible_level,
        )
        rows.append(
            {
                "flight_id": str(table.flight_ids[i]),
                "start_index": int(table.start_indices[i]),
                "sev_mean": post.sev_mean,
                "interval": list(post.interval),
                "level": cfg.credible_level,
                "p_fault": post.p_fault,
                "motor_map": post.motor_map,
                "n_samples": cfg.sbi_samples,
            }
        )
    _write_json({"config": cfg.as_dict(), "posteriors": rows}, args.out)
    print(f"wrote {len(rows)} posterior summaries -> {args.out}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    records = load_corpus(args.manifest, sample_rate_hz=cfg.sample_rate_hz)
    table = extract_corpus(
        records, FeatureSchema.default(), cfg.window_length, cfg.stride
    )
    lofo_cfg = evaluation.LofoConfig(
        methods=cfg.method_list(),
        motor_count=args.motors,
        alpha_ema=cfg.alpha_ema,
        vote_threshold=cfg.vote_threshold,
        ae_epochs=cfg.ae_epochs,
        page_target_arl=cfg.page_target_arl,
        seed=cfg.seed,
        threads=cfg.resolved_threads(),
    )
    folds = evaluation.run_lofo(table, lofo_cfg)
    report = evaluation.emit_report(
        folds,
        table,
        out_dir=args.out,
        config_echo={"command": "eval-lofo", **cfg.as_dict()},
        n_boot=cfg.n_boot,
        bootstrap_level=cfg.bootstrap_level,
        tpr_targets=cfg.tpr_target_list(),
        bootstrap_by_flight=cfg.bootstrap_by_flight,
        seed=cfg.seed,
    )
    print(f"{'method':<16} {'AUC':>7} {'sd':>7} {'95% CI':>17}")
    for method, stats in report["methods"].items():
        if "auc_all" not in stats:
            status = stats.get("status", "")
            if status:
                print(f"{method:<16} {status}")
            continue
        boot = stats["bootstrap"]
        print(
            f"{method:<16} {stats['auc_all']:>7.3f} {boot['sd']:>7.3f} "
            f"[{boot['lo']:.3f}, {boot['hi']:.3f}]"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propfault",
        description="Statistical fault detection for multirotor propellers",
    )
    parser.add_argument("--config", help="INI config file; flags override it")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--flights", type=int, default=None, help="total flight count")
    p.add_argument("--healthy", type=int, default=6)
    p.add_argument("--per-severity", type=int, default=6)
    p.add_argument("--motors", dest="motor_count", type=int, default=None)
    p.add_argument("--severities", default=None)
    p.add_argument("--duration", dest="duration_s", type=float, default=None)
    p.add_argument(
        "--sample-rate", dest="synth_sample_rate_hz", type=float, default=None
    )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract window features from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window-length", dest="window_length", type=int, default=None)
    p.add_argument("--stride", dest="stride", type=int, default=None)
    p.add_argument("--sample-rate", dest="sample_rate_hz", type=float, default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="fit the hypothesis bank from a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--motors", type=int, default=None)
    p.add_argument("--pooled", action="store_true")
    p.add_argument("--alpha-ema", dest="alpha_ema", type=float, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cls", help="build the toy Monte Carlo ensemble for a bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-toys", dest="n_toys", type=int, default=None)
    p.add_argument("--mixture", default=None, help="comma-separated motor weights")
    p.set_defaults(func=cmd_cls)

    p = sub.add_parser("detect", help="score one flight with a persisted bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--ensemble", required=True)
    p.add_argument("--flight", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sbi-model", default=None)
    p.add_argument("--threshold-mode", dest="threshold_mode", default=None)
    p.add_argument("--alpha-det", dest="alpha_det", type=float, default=None)
    p.add_argument("--cls-on", dest="cls_on", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sbi-train", help="train the severity/motor posterior")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--motors", type=int, default=None)
    p.add_argument("--epochs", dest="sbi_epochs", type=int, default=None)
    p.add_argument("--components", dest="sbi_components", type=int, default=None)
    p.add_argument("--hidden", dest="sbi_hidden", default=None)
    p.set_defaults(func=cmd_sbi_train)

    p = sub.add_parser("sbi-infer", help="posterior summaries for feature rows")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", dest="sbi_samples", type=int, default=None)
    p.add_argument("--level", dest="credible_level", type=float, default=None)
    p.set_defaults(func=cmd_sbi_infer)

    p = sub.add_parser("eval-lofo", help="leave-one-flight-out evaluation + report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", default=None)
    p.add_argument("--motors", type=int, default=None)
    p.add_argument("--n-boot", dest="n_boot", type=int, default=None)
    p.add_argument("--window-length", dest="window_length", type=int, default=None)
    p.add_argument("--stride", dest="stride", type=int, default=None)
    p.add_argument("--ae-epochs", dest="ae_epochs", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    return parser


_CONFIG_KEYS = (
    "seed",
    "threads",
    "motor_count",
    "severities",
    "duration_s",
    "sample_rate_hz",
    "synth_sample_rate_hz",
    "window_length",
    "stride",
    "alpha_ema",
    "n_toys",
    "threshold_mode",
    "alpha_det",
    "cls_on",
    "sbi_epochs",
    "sbi_components",
    "sbi_hidden",
    "sbi_samples",
    "credible_level",
    "methods",
    "n_boot",
    "ae_epochs",
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_ini(args.config) if args.config else RunConfig()
        overrides = {
            key: getattr(args, key)
            for key in _CONFIG_KEYS
            if getattr(args, key, None) is not None
        }
        cfg.override(**overrides)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelCompatibilityError as exc:
        print(f"model compatibility error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except PropfaultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
