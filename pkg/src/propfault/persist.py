"""Versioned JSON persistence for fitted models and toy ensembles.

Floats round-trip bit-faithfully through JSON (shortest-repr encoding), so a
save/load/save cycle reproduces the document byte for byte and loaded models
score identically to the originals.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from propfault.cls import ToyEnsemble
from propfault.errors import ModelCompatibilityError
from propfault.features import FeatureSchema
from propfault.gaussian import GaussianModel, HypothesisBank
from propfault.sbi import PosteriorModel

FORMAT_VERSION = 1


def _write(doc: dict, path):
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def _read(path, kind: str) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelCompatibilityError(f"cannot read {kind} document {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != kind:
        raise ModelCompatibilityError(f"{path} is not a {kind} document")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelCompatibilityError(
            f"{path}: unsupported {kind} version {doc.get('version')}"
        )
    return doc


def _require(doc: dict, keys, kind: str):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ModelCompatibilityError(f"{kind} document missing fields: {missing}")


def _gaussian_doc(model: GaussianModel) -> dict:
    return {
        "mean": model.mean.tolist(),
        "covariance": model.covariance.tolist(),
        "shrinkage": model.shrinkage,
    }


def _gaussian_from(doc: dict) -> GaussianModel:
    _require(doc, ("mean", "covariance", "shrinkage"), "gaussian")
    return GaussianModel(
        mean=np.array(doc["mean"], dtype=float),
        covariance=np.array(doc["covariance"], dtype=float),
        shrinkage=float(doc["shrinkage"]),
    )


def save_bank(bank: HypothesisBank, schema: FeatureSchema, path):
    doc = {
        "format": "bank",
        "version": FORMAT_VERSION,
        "h0": _gaussian_doc(bank.h0),
        "h1": [_gaussian_doc(m) for m in bank.h1],
        "standardize_mean": bank.standardize_mean.tolist(),
        "standardize_std": bank.standardize_std.tolist(),
        "schema": {
            "names": list(schema.names),
            "bands": [list(b) for b in schema.bands],
            "channels": list(schema.channels),
        },
        "schema_hash": bank.schema_hash,
        "pooled": bank.pooled,
        "healthy_q95": bank.healthy_q95,
        "metadata": bank.metadata,
    }
    _write(doc, path)


def load_bank(path) -> tuple[HypothesisBank, FeatureSchema]:
    doc = _read(path, "bank")
    _require(
        doc,
        ("h0", "h1", "standardize_mean", "standardize_std", "schema", "schema_hash"),
        "bank",
    )
    schema = FeatureSchema(
        names=tuple(doc["schema"]["names"]),
        bands=tuple(tuple(b) for b in doc["schema"]["bands"]),
        channels=tuple(doc["schema"]["channels"]),
    )
    if schema.hash() != doc["schema_hash"]:
        raise ModelCompatibilityError(f"{path}: schema hash mismatch (corrupt document)")
    bank = HypothesisBank(
        h0=_gaussian_from(doc["h0"]),
        h1=tuple(_gaussian_from(d) for d in doc["h1"]),
        standardize_mean=np.array(doc["standardize_mean"], dtype=float),
        standardize_std=np.array(doc["standardize_std"], dtype=float),
        schema_hash=doc["schema_hash"],
        pooled=bool(doc.get("pooled", False)),
        healthy_q95=doc.get("healthy_q95"),
        metadata=doc.get("metadata", {}),
    )
    return bank, schema


def save_ensemble(ensemble: ToyEnsemble, path):
    doc = {
        "format": "ensemble",
        "version": FORMAT_VERSION,
        "q_under_h0": ensemble.q_under_h0.tolist(),
        "q_under_h1": ensemble.q_under_h1.tolist(),
        "n_toys": ensemble.n_toys,
        "seed": ensemble.seed,
        "h1_mixture": list(ensemble.h1_mixture),
        "schema_hash": ensemble.schema_hash,
    }
    _write(doc, path)


def load_ensemble(path) -> ToyEnsemble:
    doc = _read(path, "ensemble")
    _require(doc, ("q_under_h0", "q_under_h1", "n_toys", "seed", "h1_mixture"), "ensemble")
    return ToyEnsemble(
        q_under_h0=np.array(doc["q_under_h0"], dtype=float),
        q_under_h1=np.array(doc["q_under_h1"], dtype=float),
        n_toys=int(doc["n_toys"]),
        seed=int(doc["seed"]),
        h1_mixture=tuple(float(w) for w in doc["h1_mixture"]),
        schema_hash=doc.get("schema_hash", ""),
    )


def save_posterior_model(model: PosteriorModel, path):
    doc = {
        "format": "posterior",
        "version": FORMAT_VERSION,
        "x_dim": model.x_dim,
        "theta_dim": model.theta_dim,
        "hidden": list(model.hidden),
        "components": model.components,
        "motor_count": model.motor_count,
        "trunk": [[w.tolist(), b.tolist()] for w, b in model.trunk],
        "heads": {
            "pi": [model.head_pi[0].tolist(), model.head_pi[1].tolist()],
            "mu": [model.head_mu[0].tolist(), model.head_mu[1].tolist()],
            "sig": [model.head_sig[0].tolist(), model.head_sig[1].tolist()],
        },
        "standardize_mean": model.standardize_mean.tolist(),
        "standardize_std": model.standardize_std.tolist(),
        "schema_hash": model.schema_hash,
        "train_meta": model.train_meta,
    }
    _write(doc, path)


def load_posterior_model(path) -> PosteriorModel:
    doc = _read(path, "posterior")
    _require(
        doc,
        ("x_dim", "theta_dim", "hidden", "components", "trunk", "heads"),
        "posterior",
    )
    model = PosteriorModel(
        x_dim=int(doc["x_dim"]),
        theta_dim=int(doc["theta_dim"]),
        hidden=tuple(doc["hidden"]),
        components=int(doc["components"]),
        motor_count=int(doc.get("motor_count", 0)),
        standardize_mean=np.array(doc["standardize_mean"], dtype=float),
        standardize_std=np.array(doc["standardize_std"], dtype=float),
        schema_hash=doc.get("schema_hash", ""),
    )
    model.trunk = [
        [np.array(w, dtype=float), np.array(b, dtype=float)] for w, b in doc["trunk"]
    ]
    model.head_pi = [
        np.array(doc["heads"]["pi"][0], dtype=float),
        np.array(doc["heads"]["pi"][1], dtype=float),
    ]
    model.head_mu = [
        np.array(doc["heads"]["mu"][0], dtype=float),
        np.array(doc["heads"]["mu"][1], dtype=float),
    ]
    model.head_sig = [
        np.array(doc["heads"]["sig"][0], dtype=float),
        np.array(doc["heads"]["sig"][1], dtype=float),
    ]
    model.train_meta = doc.get("train_meta", {})
    return model
