"""End-to-end training composition: project, split, scale, window, fit.

This is the one place the full recipe lives, shared by the CLI and tests:
features are projected and chronologically split, the scaler is fitted on
the training portion only, and both model kinds are trained on normalized
windows that predict the next interval's energy. The boosted-tree model uses
single-row windows (the latest snapshot); the recurrent model uses
``window_len`` rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .gbt import GradientBoostedTrees
from .lstm import LstmRegressor
from .model_io import EnergyModel, dataset_timestamp_iso
from .preprocess import fit_scaler, make_windows, select_features, split_chronological
from .types import FEATURE_NAMES, Dataset

DEFAULT_TRAIN_FRACTION = 0.8
DEFAULT_WINDOW_LEN = 16


@dataclass
class TrainResult:
    model: EnergyModel
    loss_history: list[tuple[float, float]]  # per epoch (lstm) or per stage (gbt)
    train_mse: float  # normalized scale, final
    val_mse: float    # normalized scale, final; NaN when no validation windows


def train_energy_model(
    dataset: Dataset,
    kind: str,
    feature_names: Sequence[str] = FEATURE_NAMES,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    window_len: int = DEFAULT_WINDOW_LEN,
    lstm_params: Optional[dict] = None,
    gbt_params: Optional[dict] = None,
    data_sha256: Optional[str] = None,
) -> TrainResult:
    if kind not in ("lstm", "gbt"):
        raise ValidationError(f"model kind must be 'lstm' or 'gbt', got {kind!r}")
    projected = select_features(dataset, feature_names)
    train, val = split_chronological(projected, train_fraction)
    if len(train) == 0:
        raise InsufficientDataError("train_fraction leaves no training samples")
    scaler = fit_scaler(train)
    w = window_len if kind == "lstm" else 1
    wtrain = make_windows(train, w)
    x_train = scaler.transform_windows(wtrain.inputs)
    y_train = scaler.transform_target(wtrain.targets)
    if len(val) > w:
        wval = make_windows(val, w)
        x_val = scaler.transform_windows(wval.inputs)
        y_val = scaler.transform_target(wval.targets)
    else:
        x_val = y_val = None

    if kind == "lstm":
        estimator = LstmRegressor(**(lstm_params or {}))
        estimator.fit(x_train, y_train, x_val, y_val)
        history = list(estimator.loss_history_)
        extra = {"seed": estimator.seed, "epochs": estimator.epochs}
    else:
        estimator = GradientBoostedTrees(**(gbt_params or {}))
        estimator.fit(x_train[:, -1, :], y_train)
        history = _gbt_history(estimator, x_val, y_val)
        extra = {"n_estimators": estimator.n_estimators}

    metadata = {
        "node": str(dataset.node),
        "created_at": dataset_timestamp_iso(dataset),
        "data_sha256": data_sha256,
        "train_samples": len(train),
        "val_samples": len(val),
        **extra,
    }
    model = EnergyModel(
        kind=kind,
        feature_names=tuple(feature_names),
        window_len=w,
        scaler=scaler,
        estimator=estimator,
        metadata=metadata,
    )
    if history:
        train_mse, val_mse = history[-1]
    else:  # zero boosting stages: score the constant base prediction
        train_mse = float(np.mean((y_train - estimator.base_prediction_) ** 2))
        val_mse = (
            float(np.mean((y_val - estimator.base_prediction_) ** 2))
            if y_val is not None else math.nan
        )
    return TrainResult(model=model, loss_history=history, train_mse=train_mse, val_mse=val_mse)


def _gbt_history(
    estimator: GradientBoostedTrees, x_val, y_val
) -> list[tuple[float, float]]:
    """Pair the recorded per-stage training MSE with incremental validation MSE."""
    if x_val is None or x_val.shape[0] == 0:
        return [(train, math.nan) for train in estimator.staged_train_mse_]
    rows = x_val[:, -1, :]
    pred = np.full(rows.shape[0], estimator.base_prediction_)
    history = []
    for tree, train in zip(estimator.trees_, estimator.staged_train_mse_):
        pred = pred + estimator.learning_rate * tree.predict(rows)
        history.append((train, float(np.mean((y_val - pred) ** 2))))
    return history
