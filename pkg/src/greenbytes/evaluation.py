"""Metrics, the master-to-worker transfer experiment, and figure-data export.

Metric values reported in model summaries are computed on normalized
targets (the scale training optimizes); raw-kWh counterparts are emitted
alongside, clearly labeled, since the two differ by the square of the
target range. CSV output is byte-stable: fixed 9-significant-digit floats,
LF line endings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ShapeError
from .preprocess import make_windows
from .types import Dataset, NodeRole
from .validation import as_float_array, check_same_length

if TYPE_CHECKING:  # pragma: no cover
    from .model_io import EnergyModel


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = as_float_array(actual, "actual")
    p = as_float_array(predicted, "predicted")
    if a.ndim != 1 or p.ndim != 1:
        raise ShapeError("metric inputs must be 1-D")
    if a.shape[0] == 0:
        raise ShapeError("metric inputs must be non-empty")
    check_same_length(a, p, "actual and predicted")
    return a, p


def mse(actual, predicted) -> float:
    """Mean squared error."""
    a, p = _pair(actual, predicted)
    return float(np.mean((a - p) ** 2))


def mae(actual, predicted) -> float:
    """Mean absolute error."""
    a, p = _pair(actual, predicted)
    return float(np.mean(np.abs(a - p)))


def r2(actual, predicted) -> float:
    """Coefficient of determination.

    For a constant actual series the statistic is undefined unless the
    residual is exactly zero; that case reports 1.0 and any other constant
    case reports -inf as a sentinel (check ``math.isfinite``).
    """
    a, p = _pair(actual, predicted)
    ss_res = float(np.sum((a - p) ** 2))
    if np.all(a == a[0]):
        return 1.0 if ss_res == 0.0 else -math.inf
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class EvalReport:
    """Scores plus the aligned actual/predicted series for one node."""

    node: NodeRole
    model_kind: str
    mse: float        # normalized-target scale
    mae: float        # normalized-target scale
    r2: float
    mse_kwh: float    # raw kWh scale
    mae_kwh: float
    n_points: int
    series: tuple[tuple[int, float, float], ...]  # (timestamp_ms, actual, predicted)

    def __post_init__(self):
        if self.mse < 0 or self.mse_kwh < 0:
            raise ShapeError("mse cannot be negative")
        if self.r2 > 1.0:
            raise ShapeError(f"r2 cannot exceed 1, got {self.r2}")
        if self.n_points != len(self.series):
            raise ShapeError("n_points must equal the series length")

    @property
    def r2_defined(self) -> bool:
        return math.isfinite(self.r2)

    def to_dict(self) -> dict:
        return {
            "node": str(self.node),
            "model_kind": self.model_kind,
            "mse": self.mse,
            "mae": self.mae,
            "r2": None if not math.isfinite(self.r2) else self.r2,
            "r2_defined": self.r2_defined,
            "mse_kwh": self.mse_kwh,
            "mae_kwh": self.mae_kwh,
            "n_points": self.n_points,
            "series": [[ts, a, p] for ts, a, p in self.series],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        r2_val = data["r2"]
        return cls(
            node=NodeRole.parse(data["node"]),
            model_kind=data["model_kind"],
            mse=float(data["mse"]),
            mae=float(data["mae"]),
            r2=-math.inf if r2_val is None else float(r2_val),
            mse_kwh=float(data["mse_kwh"]),
            mae_kwh=float(data["mae_kwh"]),
            n_points=int(data["n_points"]),
            series=tuple((int(ts), float(a), float(p)) for ts, a, p in data["series"]),
        )


def evaluate_model(model: "EnergyModel", dataset: Dataset) -> EvalReport:
    """Score a trained model on one node's dataset using the model's own scaler.

    The dataset must be projected to exactly the model's feature columns;
    the scaler travels with the model and is never refitted here.
    """
    if dataset.feature_names != model.feature_names:
        raise ConfigurationError(
            f"dataset features {dataset.feature_names} do not match "
            f"model features {model.feature_names}"
        )
    windows = make_windows(dataset, model.window_len)
    x_norm = model.scaler.transform_windows(windows.inputs)
    y_norm = model.scaler.transform_target(windows.targets)
    pred_norm = model.predict_normalized(x_norm)
    pred_kwh = model.scaler.inverse_target(pred_norm)
    series = tuple(
        (ts, float(a), float(p))
        for ts, a, p in zip(windows.timestamps_ms, windows.targets, pred_kwh)
    )
    return EvalReport(
        node=dataset.node,
        model_kind=model.kind,
        mse=mse(y_norm, pred_norm),
        mae=mae(y_norm, pred_norm),
        r2=r2(y_norm, pred_norm),
        mse_kwh=mse(windows.targets, pred_kwh),
        mae_kwh=mae(windows.targets, pred_kwh),
        n_points=len(series),
        series=series,
    )


def transfer_eval(model: "EnergyModel", worker_datasets: Sequence[Dataset]) -> list[EvalReport]:
    """Score a master-trained model on each worker's data, master scaler reused."""
    return [evaluate_model(model, ds) for ds in worker_datasets]


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def export_series(report: EvalReport, path: str | Path, svg_path: str | Path | None = None) -> None:
    """Write the actual-vs-predicted series as CSV (and optionally an SVG chart)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["timestamp,actual_kwh,predicted_kwh"]
    lines += [f"{ts},{_fmt(a)},{_fmt(p)}" for ts, a, p in report.series]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    if svg_path is not None:
        Path(svg_path).write_text(render_series_svg(report), encoding="utf-8", newline="\n")


def export_loss_history(history: Iterable[tuple[float, float]], path: str | Path) -> None:
    """Write per-epoch (train_mse, val_mse) pairs as CSV, epochs numbered from 1."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,train_mse,val_mse"]
    for epoch, (train_mse, val_mse) in enumerate(history, start=1):
        val = _fmt(val_mse) if math.isfinite(val_mse) else ""
        lines.append(f"{epoch},{_fmt(train_mse)},{val}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


_SVG_W, _SVG_H = 800, 400
_MARGIN = 50


def _polyline(xs: np.ndarray, ys: np.ndarray, color: str) -> str:
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'


def render_series_svg(report: EvalReport, title: str | None = None) -> str:
    """Minimal dependency-free line chart: two polylines over labeled axes."""
    if title is None:
        title = f"Actual vs predicted energy ({report.model_kind}, {report.node})"
    inner_w = _SVG_W - 2 * _MARGIN
    inner_h = _SVG_H - 2 * _MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN}" y1="{_SVG_H - _MARGIN}" x2="{_SVG_W - _MARGIN}" '
        f'y2="{_SVG_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_SVG_H - _MARGIN}" stroke="black"/>',
    ]
    if report.series:
        ts = np.array([row[0] for row in report.series], dtype=float)
        actual = np.array([row[1] for row in report.series])
        predicted = np.array([row[2] for row in report.series])
        t_span = ts.max() - ts.min() or 1.0
        lo = min(actual.min(), predicted.min())
        hi = max(actual.max(), predicted.max())
        span = hi - lo or 1.0
        xs = _MARGIN + (ts - ts.min()) / t_span * inner_w
        def to_y(v):
            return _SVG_H - _MARGIN - (v - lo) / span * inner_h
        parts.append(_polyline(xs, to_y(actual), "#1f77b4"))
        parts.append(_polyline(xs, to_y(predicted), "#d62728"))
        parts.append(
            f'<text x="{_MARGIN}" y="{_MARGIN - 10}" font-size="11" fill="#444">'
            f"kWh range [{_fmt(lo)}, {_fmt(hi)}]</text>"
        )
    parts.append(
        f'<text x="{_SVG_W - _MARGIN}" y="{_MARGIN - 10}" text-anchor="end" font-size="11">'
        '<tspan fill="#1f77b4">actual</tspan> <tspan fill="#d62728">predicted</tspan></text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
