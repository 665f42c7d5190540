"""Core domain types and unit conversions.

Everything here is an immutable value object, validated at construction and
safe to share across threads. Timestamps are integer milliseconds since the
epoch; energy targets are per-interval deltas in kWh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator, Optional

from .errors import ConfigurationError, OrderingError, ValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .preprocess import MinMaxScaler

#: Canonical feature order used by models and serialization.
FEATURE_NAMES = (
    "cpu_user",
    "cpu_system",
    "ctx_switches_per_sec",
    "irq_rate",
    "idle_pct",
    "cpu_freq_mhz",
)

#: Slack allowed on the cpu_user + cpu_system + idle_pct <= 100 check,
#: absorbing the rounding in two-decimal telemetry sources.
PERCENT_SUM_EPSILON = 0.5

JOULES_PER_KWH = 3_600_000.0


@dataclass(frozen=True)
class NodeRole:
    """Identity of a node in the experiment: the master or a numbered worker."""

    kind: str
    index: Optional[int] = None

    def __post_init__(self):
        if self.kind == "master":
            if self.index is not None:
                raise ValidationError("master role takes no index")
        elif self.kind == "worker":
            if not isinstance(self.index, int) or self.index < 1:
                raise ValidationError("worker index must be an integer >= 1")
        else:
            raise ValidationError(f"unknown node kind {self.kind!r}")

    @classmethod
    def master(cls) -> "NodeRole":
        return cls("master")

    @classmethod
    def worker(cls, index: int) -> "NodeRole":
        return cls("worker", index)

    @classmethod
    def parse(cls, text: str) -> "NodeRole":
        """Parse ``"master"`` or ``"worker-<i>"`` (also accepts ``worker:<i>``)."""
        text = text.strip().lower()
        if text == "master":
            return cls.master()
        for sep in ("-", ":"):
            prefix = f"worker{sep}"
            if text.startswith(prefix):
                try:
                    return cls.worker(int(text[len(prefix):]))
                except ValueError as exc:
                    raise ValidationError(f"bad worker index in {text!r}") from exc
        raise ValidationError(f"cannot parse node role {text!r}")

    def __str__(self) -> str:
        return "master" if self.kind == "master" else f"worker-{self.index}"


def _check_percent(name: str, value: float) -> None:
    if math.isnan(value):
        return  # explicit missing marker, repaired by preprocess.clean
    if math.isinf(value) or not (0.0 <= value <= 100.0):
        raise ValidationError(f"{name} must be a percent in [0, 100], got {value!r}")


def _check_rate(name: str, value: float) -> None:
    if math.isnan(value):
        return
    if math.isinf(value) or value < 0.0:
        raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class FeatureVector:
    """One timestamped snapshot of the selected CPU metrics for one node.

    A ``NaN`` field is an explicit missing measurement (a ``null`` in the
    on-disk record) awaiting interpolation; every other invariant violation
    is rejected here, never clamped.
    """

    timestamp_ms: int
    cpu_user: float
    cpu_system: float
    ctx_switches_per_sec: float
    irq_rate: float
    cpu_freq_mhz: float
    idle_pct: float

    def __post_init__(self):
        if not isinstance(self.timestamp_ms, int):
            raise ValidationError("timestamp_ms must be an integer")
        _check_percent("cpu_user", self.cpu_user)
        _check_percent("cpu_system", self.cpu_system)
        _check_percent("idle_pct", self.idle_pct)
        _check_rate("ctx_switches_per_sec", self.ctx_switches_per_sec)
        _check_rate("irq_rate", self.irq_rate)
        freq = self.cpu_freq_mhz
        if not math.isnan(freq) and (math.isinf(freq) or freq <= 0.0):
            raise ValidationError(f"cpu_freq_mhz must be finite and > 0, got {freq!r}")
        parts = (self.cpu_user, self.cpu_system, self.idle_pct)
        if not any(math.isnan(p) for p in parts):
            total = sum(parts)
            if total > 100.0 + PERCENT_SUM_EPSILON:
                raise ValidationError(
                    f"cpu_user + cpu_system + idle_pct = {total:.3f} exceeds 100"
                )

    def value(self, name: str) -> float:
        if name not in FEATURE_NAMES:
            raise ConfigurationError(f"unknown feature {name!r}")
        return getattr(self, name)

    @property
    def has_missing(self) -> bool:
        return any(math.isnan(self.value(n)) for n in FEATURE_NAMES)

    def replace_values(self, **updates: float) -> "FeatureVector":
        fields = {n: self.value(n) for n in FEATURE_NAMES}
        fields.update(updates)
        return FeatureVector(timestamp_ms=self.timestamp_ms, **fields)


@dataclass(frozen=True)
class EnergyReading:
    """Cumulative energy-counter sample in micro-joules (RAPL style).

    Counters are modular: the value wraps to zero at ``max_range_uj``.
    """

    timestamp_ms: int
    cumulative_uj: int
    max_range_uj: int

    def __post_init__(self):
        if not isinstance(self.cumulative_uj, int) or not isinstance(self.max_range_uj, int):
            raise ValidationError("counter values must be integers (micro-joules)")
        if self.max_range_uj <= 0:
            raise ValidationError("max_range_uj must be positive")
        if not (0 <= self.cumulative_uj < self.max_range_uj):
            raise ValidationError(
                f"cumulative_uj {self.cumulative_uj} outside [0, {self.max_range_uj})"
            )


@dataclass(frozen=True)
class Sample:
    """A feature snapshot paired with the energy consumed over its interval."""

    features: FeatureVector
    energy_kwh: float

    def __post_init__(self):
        if not math.isfinite(self.energy_kwh) or self.energy_kwh < 0.0:
            raise ValidationError(f"energy_kwh must be finite and >= 0, got {self.energy_kwh!r}")

    @property
    def timestamp_ms(self) -> int:
        return self.features.timestamp_ms


@dataclass(frozen=True)
class Dataset:
    """Chronologically ordered samples for one node, plus optional scaler.

    ``feature_names`` records which columns (and in what order) downstream
    models should read; projection never drops data from the samples.
    """

    node: NodeRole
    samples: tuple[Sample, ...]
    scaler: Optional["MinMaxScaler"] = None
    feature_names: tuple[str, ...] = field(default=FEATURE_NAMES)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        for name in self.feature_names:
            if name not in FEATURE_NAMES:
                raise ConfigurationError(f"unknown feature {name!r}")
        last = None
        for s in self.samples:
            if last is not None and s.timestamp_ms <= last:
                raise OrderingError(
                    f"sample timestamps must strictly increase ({s.timestamp_ms} after {last})"
                )
            last = s.timestamp_ms

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def replace(self, **kwargs) -> "Dataset":
        vals = {
            "node": self.node,
            "samples": self.samples,
            "scaler": self.scaler,
            "feature_names": self.feature_names,
        }
        vals.update(kwargs)
        return Dataset(**vals)

    def feature_matrix(self):
        """Samples as a float matrix [n x len(feature_names)], NaN = missing."""
        import numpy as np

        return np.array(
            [[s.features.value(n) for n in self.feature_names] for s in self.samples],
            dtype=float,
        ).reshape(len(self.samples), len(self.feature_names))

    def targets(self):
        import numpy as np

        return np.array([s.energy_kwh for s in self.samples], dtype=float)

    def timestamps(self) -> list[int]:
        return [s.timestamp_ms for s in self.samples]


def joules_to_kwh(joules: float) -> float:
    """Convert joules to kilowatt-hours (1 kWh = 3,600,000 J)."""
    if not math.isfinite(joules) or joules < 0.0:
        raise ValidationError(f"joules must be finite and >= 0, got {joules!r}")
    return joules / JOULES_PER_KWH


def counter_delta(prev: EnergyReading, curr: EnergyReading) -> int:
    """Energy consumed between two cumulative counter reads, in micro-joules.

    Handles a single wrap of the modular counter; the result is always in
    ``[0, max_range_uj)``.
    """
    if prev.max_range_uj != curr.max_range_uj:
        raise ConfigurationError(
            f"counter max ranges differ: {prev.max_range_uj} vs {curr.max_range_uj}"
        )
    if curr.timestamp_ms <= prev.timestamp_ms:
        raise OrderingError(
            f"readings out of order: {curr.timestamp_ms} not after {prev.timestamp_ms}"
        )
    if curr.cumulative_uj >= prev.cumulative_uj:
        return curr.cumulative_uj - prev.cumulative_uj
    return curr.cumulative_uj + (curr.max_range_uj - prev.cumulative_uj)
