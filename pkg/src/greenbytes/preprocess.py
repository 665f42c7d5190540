"""Dataset preparation: cleaning, normalization, projection, split, windows.

All functions are pure (they return new datasets) and operate on raw-unit
samples. Normalized values only ever live in arrays produced from a
:class:`WindowedSet`, so domain invariants on :class:`FeatureVector` are
never bent by scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import (
    ConfigurationError,
    EmptyDatasetError,
    InsufficientDataError,
    ShapeError,
    ValidationError,
)
from .types import FEATURE_NAMES, Dataset, Sample
from .validation import check_matrix, check_vector, check_windows

GAP_POLICIES = ("interpolate", "drop")


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Per-feature and target min-max normalization to [0, 1].

    Fitted on the training split only; applying it to validation data may
    produce values outside [0, 1], which are deliberately not clamped.
    A constant feature (max == min) maps to 0.0 and inverts back to that
    constant.
    """

    def fit(self, X, y=None):
        """Fit ranges from a Dataset (using its feature_names) or from X[, y] arrays."""
        if isinstance(X, Dataset):
            if len(X) == 0:
                raise EmptyDatasetError("cannot fit scaler on an empty dataset")
            self.feature_names_ = X.feature_names
            mat = check_matrix(X.feature_matrix(), "features")
            target = X.targets()
        else:
            mat = check_matrix(X, "X")
            if mat.shape[0] == 0:
                raise EmptyDatasetError("cannot fit scaler on zero samples")
            self.feature_names_ = tuple(f"x{i}" for i in range(mat.shape[1]))
            target = check_vector(y, "y", length=mat.shape[0]) if y is not None else np.zeros(0)
        self.feature_ranges_ = [(float(c.min()), float(c.max())) for c in mat.T]
        if target.size:
            self.target_range_ = (float(target.min()), float(target.max()))
        else:
            self.target_range_ = (0.0, 0.0)
        return self

    def _require_fitted(self):
        if not hasattr(self, "feature_ranges_"):
            raise ValidationError("scaler is not fitted")

    @staticmethod
    def _fwd(col: np.ndarray, lo: float, hi: float) -> np.ndarray:
        if hi == lo:
            return np.zeros_like(col)
        return (col - lo) / (hi - lo)

    @staticmethod
    def _inv(col: np.ndarray, lo: float, hi: float) -> np.ndarray:
        if hi == lo:
            return np.full_like(col, lo)
        return col * (hi - lo) + lo

    def transform(self, X) -> np.ndarray:
        self._require_fitted()
        mat = check_matrix(X, "X", n_features=len(self.feature_ranges_))
        out = np.empty_like(mat)
        for j, (lo, hi) in enumerate(self.feature_ranges_):
            out[:, j] = self._fwd(mat[:, j], lo, hi)
        return out

    def inverse_transform(self, X) -> np.ndarray:
        self._require_fitted()
        mat = check_matrix(X, "X", n_features=len(self.feature_ranges_))
        out = np.empty_like(mat)
        for j, (lo, hi) in enumerate(self.feature_ranges_):
            out[:, j] = self._inv(mat[:, j], lo, hi)
        return out

    def transform_windows(self, X) -> np.ndarray:
        """Scale a [n x window x features] stack with the per-feature ranges."""
        self._require_fitted()
        arr = check_windows(X, "X", n_features=len(self.feature_ranges_))
        out = np.empty_like(arr)
        for j, (lo, hi) in enumerate(self.feature_ranges_):
            out[:, :, j] = self._fwd(arr[:, :, j], lo, hi)
        return out

    def transform_target(self, y) -> np.ndarray:
        self._require_fitted()
        return self._fwd(check_vector(y, "y"), *self.target_range_)

    def inverse_target(self, y) -> np.ndarray:
        self._require_fitted()
        return self._inv(check_vector(y, "y"), *self.target_range_)

    def to_dict(self) -> dict:
        self._require_fitted()
        return {
            "feature_names": list(self.feature_names_),
            "feature_ranges": [[lo, hi] for lo, hi in self.feature_ranges_],
            "target_range": list(self.target_range_),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MinMaxScaler":
        scaler = cls()
        scaler.feature_names_ = tuple(data["feature_names"])
        ranges = [(float(lo), float(hi)) for lo, hi in data["feature_ranges"]]
        for lo, hi in ranges:
            if hi < lo or not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"bad scaler range ({lo}, {hi})")
        scaler.feature_ranges_ = ranges
        lo, hi = (float(v) for v in data["target_range"])
        if hi < lo or not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValidationError(f"bad target range ({lo}, {hi})")
        scaler.target_range_ = (lo, hi)
        return scaler


def fit_scaler(train: Dataset) -> MinMaxScaler:
    """Fit min-max ranges on the training portion only (no leakage)."""
    return MinMaxScaler().fit(train)


def _interpolate_missing(dataset: Dataset) -> Dataset:
    """Fill NaN feature values by linear interpolation over time.

    Samples whose gap touches the boundary (no valid neighbor on one side)
    are dropped.
    """
    n = len(dataset)
    mat = dataset.feature_matrix()
    ts = np.array(dataset.timestamps(), dtype=float)
    names = dataset.feature_names
    keep = np.ones(n, dtype=bool)
    for j in range(mat.shape[1]):
        col = mat[:, j]
        missing = np.isnan(col)
        if not missing.any():
            continue
        valid = np.flatnonzero(~missing)
        if valid.size == 0:
            keep[:] = False
            break
        for i in np.flatnonzero(missing):
            before = valid[valid < i]
            after = valid[valid > i]
            if before.size == 0 or after.size == 0:
                keep[i] = False
                continue
            lo, hi = before[-1], after[0]
            frac = (ts[i] - ts[lo]) / (ts[hi] - ts[lo])
            col[i] = mat[lo, j] + frac * (mat[hi, j] - mat[lo, j])
    samples = []
    for i, sample in enumerate(dataset.samples):
        if not keep[i]:
            continue
        if sample.features.has_missing:
            fv = sample.features.replace_values(
                **{name: float(mat[i, k]) for k, name in enumerate(names)}
            )
            sample = Sample(features=fv, energy_kwh=sample.energy_kwh)
        samples.append(sample)
    return dataset.replace(samples=tuple(samples))


def clean(dataset: Dataset, z_threshold: float = 3.0, gap_policy: str = "interpolate") -> Dataset:
    """Repair missing feature values and trim target outliers.

    Missing values (NaN) are linearly interpolated between their
    chronological neighbors (``gap_policy="interpolate"``) or their samples
    dropped outright (``"drop"``); boundary gaps are always dropped. Samples
    whose energy z-score, with population standard deviation, reaches
    ``z_threshold`` are then removed, re-checking until none remain so the
    operation is idempotent. A zero-variance target keeps everything.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("clean requires a non-empty dataset")
    if not math.isfinite(z_threshold) or z_threshold <= 0:
        raise ValidationError("z_threshold must be positive")
    if gap_policy not in GAP_POLICIES:
        raise ConfigurationError(f"gap_policy must be one of {GAP_POLICIES}, got {gap_policy!r}")

    if gap_policy == "drop":
        samples = tuple(s for s in dataset.samples if not s.features.has_missing)
        working = dataset.replace(samples=samples)
    else:
        working = _interpolate_missing(dataset)
    if len(working) == 0:
        raise EmptyDatasetError("no samples left after missing-value handling")

    samples = list(working.samples)
    while samples:
        y = np.array([s.energy_kwh for s in samples])
        sigma = float(y.std())
        if sigma == 0.0:
            break
        z = np.abs(y - y.mean()) / sigma
        kept = [s for s, zi in zip(samples, z) if zi < z_threshold]
        if len(kept) == len(samples):
            break
        samples = kept
    if not samples:
        raise EmptyDatasetError(f"z_threshold={z_threshold} removed every sample")
    return working.replace(samples=tuple(samples))


def select_features(dataset: Dataset, names) -> Dataset:
    """Project the dataset onto the named feature columns, in the given order."""
    names = tuple(names)
    if not names:
        raise ConfigurationError("feature selection needs at least one name")
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate feature names in {names}")
    for name in names:
        if name not in FEATURE_NAMES:
            raise ConfigurationError(f"unknown feature {name!r}; available: {FEATURE_NAMES}")
    return dataset.replace(feature_names=names)


def split_chronological(dataset: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    """First ``floor(n * train_fraction)`` samples train, the rest validate.

    Never shuffles: the data is a time series.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ConfigurationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples to split, have {n}")
    k = int(math.floor(n * train_fraction))
    return (
        dataset.replace(samples=dataset.samples[:k]),
        dataset.replace(samples=dataset.samples[k:]),
    )


@dataclass(frozen=True)
class WindowedSet:
    """Sliding-window supervision pairs in raw units.

    ``inputs[i]`` holds the ``window_len`` feature rows preceding the target
    sample; ``targets[i]`` is that sample's energy and ``timestamps_ms[i]``
    its timestamp.
    """

    inputs: np.ndarray
    targets: np.ndarray
    window_len: int
    feature_names: tuple[str, ...]
    timestamps_ms: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.inputs.ndim != 3:
            raise ShapeError(f"inputs must be 3-D, got shape {self.inputs.shape}")
        n = self.inputs.shape[0]
        if self.targets.shape != (n,):
            raise ShapeError("inputs and targets must have equal length")
        if self.timestamps_ms and len(self.timestamps_ms) != n:
            raise ShapeError("timestamps must match targets")
        if self.inputs.shape[1] != self.window_len or self.inputs.shape[2] != len(self.feature_names):
            raise ShapeError(
                f"inputs shape {self.inputs.shape} inconsistent with window_len="
                f"{self.window_len} and {len(self.feature_names)} features"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]


def make_windows(dataset: Dataset, window_len: int) -> WindowedSet:
    """Build the n - window_len supervision pairs for next-interval prediction."""
    if window_len < 1:
        raise ValidationError("window_len must be >= 1")
    n = len(dataset)
    if n <= window_len:
        raise InsufficientDataError(
            f"need more than window_len={window_len} samples, have {n}"
        )
    mat = dataset.feature_matrix()
    y = dataset.targets()
    ts = dataset.timestamps()
    inputs = np.stack([mat[t - window_len:t] for t in range(window_len, n)])
    return WindowedSet(
        inputs=inputs,
        targets=y[window_len:],
        window_len=window_len,
        feature_names=dataset.feature_names,
        timestamps_ms=tuple(ts[window_len:]),
    )
