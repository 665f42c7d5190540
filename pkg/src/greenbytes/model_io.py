"""Versioned JSON model files and the trained-model bundle.

Files are canonical JSON (sorted keys, no whitespace, floats in shortest
round-trip decimal form), so identical models produce identical bytes and a
save/load cycle reproduces predictions exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import SchemaError, ShapeError, UnsupportedVersionError, ValidationError
from .gbt import GradientBoostedTrees, RegressionTree
from .lstm import GATE_ORDER, LstmParams, LstmRegressor
from .preprocess import MinMaxScaler
from .types import FEATURE_NAMES, Dataset
from .validation import check_windows

FORMAT_VERSION = 1
MODEL_KINDS = ("lstm", "gbt")

_GATE_KEYS = {"input": "i", "forget": "f", "output": "o", "candidate": "g"}


@dataclass
class EnergyModel:
    """A trained estimator plus everything inference needs: the feature
    projection, the window length, and the training node's scaler."""

    kind: str
    feature_names: tuple[str, ...]
    window_len: int
    scaler: MinMaxScaler
    estimator: object
    metadata: dict = field(default_factory=dict)

    def predict_normalized(self, x_norm: np.ndarray) -> np.ndarray:
        """Predict normalized targets from normalized windows [n x W x F].

        The boosted-tree model reads the most recent row of each window;
        the recurrent model consumes the whole window.
        """
        x_norm = check_windows(
            x_norm, "windows", n_features=len(self.feature_names), window_len=self.window_len
        )
        if self.kind == "gbt":
            return self.estimator.predict(x_norm[:, -1, :])
        return self.estimator.predict(x_norm)

    def predict_window(self, window) -> float:
        """kWh estimate for one raw-unit window of shape [window_len x features]."""
        arr = np.asarray(window, dtype=float)
        if arr.ndim != 2 or arr.shape != (self.window_len, len(self.feature_names)):
            raise ShapeError(
                f"window must have shape [{self.window_len} x {len(self.feature_names)}], "
                f"got {arr.shape}"
            )
        x_norm = self.scaler.transform_windows(arr[np.newaxis, :, :])
        pred_norm = self.predict_normalized(x_norm)
        return float(self.scaler.inverse_target(pred_norm)[0])


def data_fingerprint(path: str | Path) -> str:
    """sha256 of a dataset file's bytes, recorded in training metadata."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dataset_timestamp_iso(dataset: Dataset) -> str:
    """UTC time of the newest sample; used as the model's created_at so that
    retraining on identical data yields identical bytes."""
    ts = dataset.samples[-1].timestamp_ms if len(dataset) else 0
    return datetime.fromtimestamp(ts / 1000.0, tz=timezone.utc).isoformat(timespec="milliseconds")


def _lstm_parameters(est: LstmRegressor) -> dict:
    p = est.params_
    out: dict = {"hidden_size": p.hidden_size}
    for gate in GATE_ORDER:
        key = _GATE_KEYS[gate]
        out[f"w_{key}"] = p.gate(p.w_in, gate).tolist()
        out[f"u_{key}"] = p.gate(p.w_rec, gate).tolist()
        out[f"b_{key}"] = p.gate(p.bias, gate).tolist()
    out["w_out"] = p.w_out.tolist()
    out["b_out"] = p.b_out
    return out


def _tree_to_doc(tree: RegressionTree) -> dict:
    leaf = tree.feature == -1
    return {
        "feature": tree.feature.tolist(),
        "threshold": [None if is_leaf else t for is_leaf, t in zip(leaf, tree.threshold.tolist())],
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": [v if is_leaf else None for is_leaf, v in zip(leaf, tree.value.tolist())],
    }


def _gbt_parameters(est: GradientBoostedTrees) -> dict:
    return {
        "base_prediction": est.base_prediction_,
        "trees": [_tree_to_doc(t) for t in est.trees_],
        "importances": est.feature_importances_.tolist(),
        "no_splits": bool(est.no_splits_),
        "staged_train_mse": list(est.staged_train_mse_),
    }


def model_to_doc(model: EnergyModel) -> dict:
    if model.kind not in MODEL_KINDS:
        raise ValidationError(f"model kind must be one of {MODEL_KINDS}, got {model.kind!r}")
    parameters = (
        _lstm_parameters(model.estimator) if model.kind == "lstm"
        else _gbt_parameters(model.estimator)
    )
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "feature_names": list(model.feature_names),
        "window_len": model.window_len,
        "scaler": model.scaler.to_dict(),
        "hyperparameters": model.estimator.get_params(),
        "parameters": parameters,
        "training_metadata": model.metadata,
    }


def save_model(model: EnergyModel, path: str | Path) -> None:
    """Write the model as canonical JSON (byte-stable for identical models)."""
    doc = model_to_doc(model)
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _require(doc: dict, key: str):
    if key not in doc:
        raise SchemaError(f"model file missing required field {key!r}")
    return doc[key]


def _float_matrix(obj, name: str, shape: tuple[int, int]) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{name} is not a numeric array") from exc
    if arr.shape != shape:
        raise SchemaError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{name} contains non-finite values")
    return arr


def _load_lstm(doc: dict, n_features: int) -> LstmRegressor:
    params_doc = _require(doc, "parameters")
    hidden = params_doc.get("hidden_size")
    if not isinstance(hidden, int) or hidden < 1:
        raise SchemaError("parameters.hidden_size must be a positive integer")
    w_in = np.empty((4 * hidden, n_features))
    w_rec = np.empty((4 * hidden, hidden))
    bias = np.empty(4 * hidden)
    for g, gate in enumerate(GATE_ORDER):
        key = _GATE_KEYS[gate]
        rows = slice(g * hidden, (g + 1) * hidden)
        w_in[rows] = _float_matrix(_require(params_doc, f"w_{key}"), f"w_{key}", (hidden, n_features))
        w_rec[rows] = _float_matrix(_require(params_doc, f"u_{key}"), f"u_{key}", (hidden, hidden))
        bias[rows] = _float_matrix([_require(params_doc, f"b_{key}")], f"b_{key}", (1, hidden))[0]
    w_out = _float_matrix([_require(params_doc, "w_out")], "w_out", (1, hidden))[0]
    b_out = _require(params_doc, "b_out")
    if not isinstance(b_out, (int, float)) or not math.isfinite(b_out):
        raise SchemaError("parameters.b_out must be a finite number")
    est = LstmRegressor(**_require(doc, "hyperparameters"))
    est.params_ = LstmParams(w_in=w_in, w_rec=w_rec, bias=bias, w_out=w_out, b_out=float(b_out))
    est.n_features_in_ = n_features
    est.window_len_ = int(_require(doc, "window_len"))
    return est


def _load_tree(tree_doc: dict, index: int, n_features: int) -> RegressionTree:
    name = f"trees[{index}]"
    cols = {}
    for key in ("feature", "threshold", "left", "right", "value"):
        cols[key] = _require(tree_doc, key) if isinstance(tree_doc, dict) else None
        if not isinstance(cols[key], list):
            raise SchemaError(f"{name}.{key} must be a list")
    n = len(cols["feature"])
    if n == 0 or any(len(cols[k]) != n for k in cols):
        raise SchemaError(f"{name} node arrays must be non-empty and equal-length")
    feature = np.array(cols["feature"], dtype=int)
    left = np.array(cols["left"], dtype=int)
    right = np.array(cols["right"], dtype=int)
    threshold = np.array([math.nan if t is None else float(t) for t in cols["threshold"]])
    value = np.array([math.nan if v is None else float(v) for v in cols["value"]])
    for k in range(n):
        if feature[k] == -1:
            if not math.isfinite(value[k]):
                raise SchemaError(f"{name}: leaf {k} has no finite value")
        else:
            if not (0 <= feature[k] < n_features):
                raise SchemaError(f"{name}: node {k} splits unknown feature {feature[k]}")
            if not math.isfinite(threshold[k]):
                raise SchemaError(f"{name}: node {k} has no finite threshold")
            for child in (left[k], right[k]):
                if not (k < child < n):
                    raise SchemaError(f"{name}: node {k} has invalid child {child}")
    # Every node must be reached exactly once from the root.
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    while stack:
        k = stack.pop()
        if seen[k]:
            raise SchemaError(f"{name}: node {k} reachable twice")
        seen[k] = True
        if feature[k] != -1:
            stack += [int(left[k]), int(right[k])]
    if not seen.all():
        raise SchemaError(f"{name}: unreachable nodes present")
    return RegressionTree(feature=feature, threshold=threshold, left=left, right=right, value=value)


def _load_gbt(doc: dict, n_features: int) -> GradientBoostedTrees:
    params_doc = _require(doc, "parameters")
    est = GradientBoostedTrees(**_require(doc, "hyperparameters"))
    base = _require(params_doc, "base_prediction")
    if not isinstance(base, (int, float)) or not math.isfinite(base):
        raise SchemaError("parameters.base_prediction must be a finite number")
    trees_doc = _require(params_doc, "trees")
    if not isinstance(trees_doc, list):
        raise SchemaError("parameters.trees must be a list")
    if len(trees_doc) != est.n_estimators:
        raise SchemaError(
            f"tree count {len(trees_doc)} does not match configured "
            f"n_estimators {est.n_estimators}"
        )
    importances = _float_matrix(
        [_require(params_doc, "importances")], "importances", (1, n_features)
    )[0]
    if np.any(importances < 0):
        raise SchemaError("importances must be non-negative")
    total = float(importances.sum())
    no_splits = bool(params_doc.get("no_splits", total == 0.0))
    if not no_splits and abs(total - 1.0) > 1e-9:
        raise SchemaError(f"importances must sum to 1, got {total}")
    est.base_prediction_ = float(base)
    est.trees_ = [_load_tree(t, i, n_features) for i, t in enumerate(trees_doc)]
    est.feature_importances_ = importances
    est.no_splits_ = no_splits
    est.staged_train_mse_ = [float(v) for v in params_doc.get("staged_train_mse", [])]
    est.n_features_in_ = n_features
    return est


def load_model(path: str | Path) -> EnergyModel:
    """Load and validate a model file; raises SchemaError on any malformation."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("model file must contain a JSON object")
    version = _require(doc, "format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"format_version {version!r} not supported (this build reads {FORMAT_VERSION})"
        )
    kind = _require(doc, "model_kind")
    if kind not in MODEL_KINDS:
        raise SchemaError(f"model_kind must be one of {MODEL_KINDS}, got {kind!r}")
    feature_names = _require(doc, "feature_names")
    if (
        not isinstance(feature_names, list)
        or not feature_names
        or any(f not in FEATURE_NAMES for f in feature_names)
    ):
        raise SchemaError(f"feature_names must be a non-empty subset of {FEATURE_NAMES}")
    window_len = _require(doc, "window_len")
    if not isinstance(window_len, int) or window_len < 1:
        raise SchemaError("window_len must be a positive integer")
    try:
        scaler = MinMaxScaler.from_dict(_require(doc, "scaler"))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad scaler block: {exc}") from exc
    if len(scaler.feature_ranges_) != len(feature_names):
        raise SchemaError("scaler ranges do not match feature_names")
    try:
        if kind == "lstm":
            estimator = _load_lstm(doc, len(feature_names))
        else:
            estimator = _load_gbt(doc, len(feature_names))
    except TypeError as exc:
        raise SchemaError(f"bad hyperparameters block: {exc}") from exc
    metadata = doc.get("training_metadata", {})
    if not isinstance(metadata, dict):
        raise SchemaError("training_metadata must be an object")
    return EnergyModel(
        kind=kind,
        feature_names=tuple(feature_names),
        window_len=window_len,
        scaler=scaler,
        estimator=estimator,
        metadata=metadata,
    )
