"""Produce per-node sample streams.

Three sources are supported:

* parsing text captured from ``mpstat`` (the ``all`` aggregate rows) with
  interleaved procfs-style ``ctxt <n>`` counter lines and optional
  ``freq <mhz>`` lines,
* reading RAPL-style cumulative energy counters from the two-file
  ``energy_uj`` / ``max_energy_range_uj`` layout,
* a deterministic synthetic workload simulator for desk-scale experiments.

Datasets persist as JSON lines, one object per sample.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import (
    ConfigurationError,
    EmptyDatasetError,
    OrderingError,
    ParseError,
    ValidationError,
)
from .rng import SplitMix64
from .types import (
    FEATURE_NAMES,
    Dataset,
    EnergyReading,
    FeatureVector,
    NodeRole,
    Sample,
    joules_to_kwh,
)

#: Epoch of synthetic streams: 2024-01-01T00:00:00Z.
SIM_START_MS = 1_704_067_200_000

#: Fallback CPU frequency when a capture carries no ``freq`` line.
DEFAULT_FREQ_MHZ = 2000.0

WORKLOAD_PROFILES = ("idle", "ramp", "bursty", "diurnal")

# Mixed into the seed for the energy-noise stream so the workload trajectory
# does not depend on how many noise deviates are drawn.
_NOISE_STREAM_SALT = 0x656E6572_67790000


# ---------------------------------------------------------------------------
# mpstat capture parsing


@dataclass(frozen=True)
class MpstatRow:
    """One ``all`` aggregate row from an mpstat report."""

    seconds_of_day: float
    pct_usr: float
    pct_nice: float
    pct_sys: float
    pct_iowait: float
    pct_irq: float
    pct_soft: float
    pct_steal: float
    pct_guest: float
    pct_gnice: float
    pct_idle: float
    line: int = 0

    def __post_init__(self):
        for name in (
            "pct_usr", "pct_nice", "pct_sys", "pct_iowait", "pct_irq",
            "pct_soft", "pct_steal", "pct_guest", "pct_gnice", "pct_idle",
        ):
            v = getattr(self, name)
            if not math.isfinite(v) or not (0.0 <= v <= 100.0):
                raise ParseError(f"{name}={v!r} outside [0, 100]", line=self.line)


@dataclass
class _Block:
    row: MpstatRow
    ctxt: Optional[int] = None
    ctxt_line: int = 0
    freq_mhz: Optional[float] = None


def _parse_clock(token: str, ampm: Optional[str], line: int) -> float:
    parts = token.split(":")
    if len(parts) != 3:
        raise ParseError(f"bad clock time {token!r}", line=line)
    try:
        h, m, s = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError as exc:
        raise ParseError(f"bad clock time {token!r}", line=line) from exc
    if ampm is not None:
        if h == 12:
            h = 0
        if ampm.upper() == "PM":
            h += 12
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ParseError(f"clock time {token!r} out of range", line=line)
    return h * 3600.0 + m * 60.0 + s


def _scan_blocks(text: str) -> list[_Block]:
    """Walk a capture and group ``all`` rows with their adjacent counter lines."""
    blocks: list[_Block] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("Linux") or line.startswith("Average"):
            continue
        tokens = line.split()
        if tokens[0] == "ctxt":
            if len(tokens) != 2:
                raise ParseError("counters line must be 'ctxt <n>'", line=lineno)
            try:
                count = int(tokens[1])
            except ValueError as exc:
                raise ParseError(f"ctxt count {tokens[1]!r} is not an integer", line=lineno) from exc
            if count < 0:
                raise ParseError("ctxt count must be >= 0", line=lineno)
            if not blocks:
                raise ParseError("counters line before any mpstat 'all' row", line=lineno)
            blocks[-1].ctxt = count
            blocks[-1].ctxt_line = lineno
            continue
        if tokens[0] == "freq":
            if len(tokens) != 2:
                raise ParseError("frequency line must be 'freq <mhz>'", line=lineno)
            try:
                mhz = float(tokens[1])
            except ValueError as exc:
                raise ParseError(f"frequency {tokens[1]!r} is not a number", line=lineno) from exc
            if not blocks:
                raise ParseError("frequency line before any mpstat 'all' row", line=lineno)
            blocks[-1].freq_mhz = mhz
            continue
        if "CPU" in tokens or "%usr" in tokens:
            continue  # column header row
        if "all" not in tokens:
            continue  # per-core rows and anything else are ignored
        idx = tokens.index("all")
        ampm = None
        if idx == 2 and tokens[1].upper() in ("AM", "PM"):
            ampm = tokens[1]
        elif idx != 1:
            raise ParseError("unrecognized mpstat row layout", line=lineno)
        seconds = _parse_clock(tokens[0], ampm, lineno)
        fields = tokens[idx + 1:]
        if len(fields) != 10:
            raise ParseError(
                f"expected 10 percent columns after 'all', found {len(fields)}", line=lineno
            )
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError("non-numeric percent column", line=lineno) from exc
        blocks.append(_Block(row=MpstatRow(seconds, *values, line=lineno)))
    return blocks


def parse_mpstat_interval(text: str, default_freq_mhz: float = DEFAULT_FREQ_MHZ) -> FeatureVector:
    """Turn the first two consecutive report blocks of a capture into features.

    Utilization percentages come from the second block's ``all`` row; the
    context-switch rate is the counter delta between the blocks divided by
    their time separation. Missing counter lines yield a NaN rate (an
    explicit missing value, repairable by cleaning).
    """
    blocks = _scan_blocks(text)
    if len(blocks) < 2:
        raise ParseError("capture must contain at least two mpstat 'all' rows")
    return _interval_features(blocks[0], blocks[1], default_freq_mhz)


def _interval_features(first: _Block, second: _Block, default_freq_mhz: float) -> FeatureVector:
    dt = second.row.seconds_of_day - first.row.seconds_of_day
    if dt < 0:
        dt += 86_400.0  # capture crossed midnight
    if dt <= 0:
        raise ParseError("consecutive blocks are not separated in time", line=second.row.line)
    if first.ctxt is not None and second.ctxt is not None:
        delta = second.ctxt - first.ctxt
        if delta < 0:
            raise ParseError("ctxt counter decreased between blocks", line=second.ctxt_line)
        ctx_rate = delta / dt
    else:
        ctx_rate = math.nan
    row = second.row
    try:
        return FeatureVector(
            timestamp_ms=int(round(row.seconds_of_day * 1000.0)),
            cpu_user=row.pct_usr,
            cpu_system=row.pct_sys,
            ctx_switches_per_sec=ctx_rate,
            irq_rate=row.pct_irq + row.pct_soft,
            cpu_freq_mhz=second.freq_mhz if second.freq_mhz is not None else default_freq_mhz,
            idle_pct=row.pct_idle,
        )
    except ValidationError as exc:
        raise ParseError(str(exc), line=row.line) from exc


# ---------------------------------------------------------------------------
# energy counters


def _read_counter_file(path: Path) -> int:
    text = path.read_text().strip()
    if not text:
        raise ParseError(f"{path}: counter file is empty")
    try:
        return int(text)
    except ValueError as exc:
        raise ParseError(f"{path}: counter must be an integer number of micro-joules") from exc


def read_energy_counter(source, now_ms: Optional[int] = None) -> EnergyReading:
    """Read a cumulative energy counter from the two-file layout.

    ``source`` is either a directory holding ``energy_uj`` and
    ``max_energy_range_uj`` files, or a pair of paths (value file, max-range
    file). The reading is stamped with the current wall clock unless
    ``now_ms`` is given.
    """
    if isinstance(source, (tuple, list)):
        value_path, range_path = Path(source[0]), Path(source[1])
    else:
        base = Path(source)
        value_path = base / "energy_uj"
        range_path = base / "max_energy_range_uj"
    cumulative = _read_counter_file(value_path)
    max_range = _read_counter_file(range_path)
    if now_ms is None:
        now_ms = time.time_ns() // 1_000_000
    return EnergyReading(timestamp_ms=int(now_ms), cumulative_uj=cumulative, max_range_uj=max_range)


def parse_energy_log(text: str, max_range_uj: int) -> list[EnergyReading]:
    """Parse an offline counter log: one ``<timestamp_ms> <cumulative_uj>`` pair per line."""
    readings = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError("expected '<timestamp_ms> <cumulative_uj>'", line=lineno)
        try:
            ts, uj = int(tokens[0]), int(tokens[1])
        except ValueError as exc:
            raise ParseError("timestamp and counter must be integers", line=lineno) from exc
        try:
            readings.append(EnergyReading(timestamp_ms=ts, cumulative_uj=uj, max_range_uj=max_range_uj))
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return readings


def collect_from_capture(
    mpstat_text: str,
    energy_log_text: str,
    max_range_uj: int,
    node: NodeRole = NodeRole.master(),
    default_freq_mhz: float = DEFAULT_FREQ_MHZ,
) -> Dataset:
    """Pair an mpstat capture with a counter log into a dataset.

    The capture must hold one counter-log line per mpstat block (reading k
    taken at block k); each consecutive pair becomes one sample, timestamped
    from the energy log and carrying the counter delta as its target.
    """
    from dataclasses import replace

    from .types import counter_delta

    blocks = _scan_blocks(mpstat_text)
    if len(blocks) < 2:
        raise ParseError("capture must contain at least two mpstat 'all' rows")
    readings = parse_energy_log(energy_log_text, max_range_uj)
    if len(readings) != len(blocks):
        raise ConfigurationError(
            f"capture has {len(blocks)} mpstat blocks but the energy log has "
            f"{len(readings)} readings; they must pair one-to-one"
        )
    samples = []
    for k in range(1, len(blocks)):
        features = _interval_features(blocks[k - 1], blocks[k], default_freq_mhz)
        features = replace(features, timestamp_ms=readings[k].timestamp_ms)
        delta_uj = counter_delta(readings[k - 1], readings[k])
        samples.append(
            Sample(features=features, energy_kwh=joules_to_kwh(delta_uj / 1e6))
        )
    return Dataset(node=node, samples=tuple(samples))


# ---------------------------------------------------------------------------
# synthetic workloads


@dataclass(frozen=True)
class EnergyCoeffs:
    """Linear per-step energy model, joules per unit of each driver."""

    a_user: float = 1.2
    a_sys: float = 1.8
    a_ctx: float = 0.004
    base: float = 20.0

    def __post_init__(self):
        for name in ("a_user", "a_sys", "a_ctx", "base"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v!r}")

    def joules(self, cpu_user: float, cpu_system: float, ctx_rate: float) -> float:
        return self.base + self.a_user * cpu_user + self.a_sys * cpu_system + self.a_ctx * ctx_rate


@dataclass(frozen=True)
class SynthConfig:
    """Configuration of one simulated node trace."""

    seed: int
    duration_steps: int
    coeffs: EnergyCoeffs = EnergyCoeffs()
    noise_std: float = 0.0
    workload_profile: str = "bursty"

    def __post_init__(self):
        if self.duration_steps < 2:
            raise ValidationError("duration_steps must be >= 2")
        if not math.isfinite(self.noise_std) or self.noise_std < 0.0:
            raise ValidationError("noise_std must be finite and >= 0")
        if self.workload_profile not in WORKLOAD_PROFILES:
            raise ValidationError(
                f"workload_profile must be one of {WORKLOAD_PROFILES}, got {self.workload_profile!r}"
            )


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


class _Workload:
    """Per-profile trajectory generator with a fixed draw order.

    The user-CPU level follows the profile; the remaining metrics track it
    loosely but each carries its own autoregressive component, the way real
    telemetry correlates without being a function of one driver. Per step the
    draws are: profile level (profile-specific count), then the system-CPU,
    context-switch, IRQ and frequency innovations, in that order.
    """

    def __init__(self, profile: str, steps: int, rng: SplitMix64):
        self.profile = profile
        self.steps = steps
        self.rng = rng
        self.in_burst = False
        self.burst_target = 6.0
        self.level = 6.0
        self.sys_ar = 0.0
        self.ctx_ar = 0.0
        self.other_ar = 0.0
        self.freq_ar = 0.0

    def _user_level(self, i: int) -> float:
        rng = self.rng
        if self.profile == "idle":
            return rng.uniform(0.5, 4.5)
        if self.profile == "ramp":
            frac = i / (self.steps - 1)
            return _clamp(5.0 + 80.0 * frac + rng.uniform(-1.0, 1.0), 0.0, 97.0)
        if self.profile == "bursty":
            flip = rng.uniform()
            if self.in_burst:
                if flip < 0.085:
                    self.in_burst = False
                    self.burst_target = 6.0
            else:
                if flip < 0.06:
                    self.in_burst = True
                    self.burst_target = rng.uniform(55.0, 90.0)
            self.level = 0.75 * self.level + 0.25 * self.burst_target + rng.uniform(-1.5, 1.5)
            return _clamp(self.level, 0.0, 97.0)
        # diurnal
        wave = 45.0 - 35.0 * math.cos(2.0 * math.pi * i / 300.0)
        return _clamp(wave + self.rng.uniform(-0.75, 0.75), 0.0, 97.0)

    def step(self, i: int) -> tuple[float, float, float, float, float, float]:
        rng = self.rng
        u = self._user_level(i)
        self.sys_ar = 0.8 * self.sys_ar + rng.uniform(-1.5, 1.5)
        s = _clamp(1.0 + 0.08 * u + self.sys_ar, 0.0, 100.0 - u)
        self.ctx_ar = 0.8 * self.ctx_ar + rng.uniform(-400.0, 400.0)
        ctx = max(60.0 + 22.0 * u + self.ctx_ar, 0.0)
        # time not accounted to user/system/idle: iowait, steal and friends
        self.other_ar = 0.85 * self.other_ar + rng.uniform(-7.0, 7.0)
        other = _clamp(8.0 + self.other_ar, 0.0, 30.0)
        idle = _clamp(100.0 - u - s - other, 0.0, 100.0)
        irq = _clamp(0.05 + ctx / 4000.0 + rng.uniform(0.0, 0.05), 0.0, 100.0)
        self.freq_ar = 0.8 * self.freq_ar + rng.uniform(-120.0, 120.0)
        freq = _clamp(1100.0 + 8.0 * u + self.freq_ar, 400.0, 5500.0)
        return u, s, ctx, irq, freq, idle


def simulate(
    config: SynthConfig,
    node: NodeRole = NodeRole.master(),
    interval_s: float = 1.0,
    start_ms: int = SIM_START_MS,
) -> Dataset:
    """Generate a deterministic synthetic node trace.

    Per step the workload profile drives the CPU metrics and the energy is
    ``base + a_user*cpu_user + a_sys*cpu_system + a_ctx*ctx_rate`` joules plus
    Gaussian noise. The noise stream is seeded separately from the workload
    stream, so traces with different ``noise_std`` share identical features.
    Identical configs yield byte-identical serialized datasets.
    """
    if interval_s <= 0:
        raise ValidationError("interval_s must be positive")
    workload_rng = SplitMix64(config.seed)
    noise_rng = SplitMix64(config.seed ^ _NOISE_STREAM_SALT)
    workload = _Workload(config.workload_profile, config.duration_steps, workload_rng)
    samples = []
    for i in range(config.duration_steps):
        u, s, ctx, irq, freq, idle = workload.step(i)
        features = FeatureVector(
            timestamp_ms=start_ms + int(round(i * interval_s * 1000.0)),
            cpu_user=u,
            cpu_system=s,
            ctx_switches_per_sec=ctx,
            irq_rate=irq,
            cpu_freq_mhz=freq,
            idle_pct=idle,
        )
        joules = config.coeffs.joules(u, s, ctx)
        if config.noise_std > 0.0:
            joules += noise_rng.gauss(0.0, config.noise_std)
        samples.append(Sample(features=features, energy_kwh=joules_to_kwh(max(joules, 0.0))))
    return Dataset(node=node, samples=tuple(samples))


# ---------------------------------------------------------------------------
# record store and JSON-lines persistence


def _sample_to_record(sample: Sample) -> dict:
    def opt(v: float):
        return None if math.isnan(v) else v

    return {
        "features": {
            "timestamp_ms": sample.features.timestamp_ms,
            "cpu_user": opt(sample.features.cpu_user),
            "cpu_system": opt(sample.features.cpu_system),
            "ctx_switches_per_sec": opt(sample.features.ctx_switches_per_sec),
            "irq_rate": opt(sample.features.irq_rate),
            "cpu_freq_mhz": opt(sample.features.cpu_freq_mhz),
            "idle_pct": opt(sample.features.idle_pct),
        },
        "energy_kwh": sample.energy_kwh,
    }


def sample_to_json(sample: Sample) -> str:
    """Canonical single-line JSON form of one sample (sorted keys, no spaces)."""
    return json.dumps(_sample_to_record(sample), sort_keys=True, separators=(",", ":"))


def sample_from_record(record: dict, line: Optional[int] = None) -> Sample:
    try:
        feats = record["features"]
        values = {}
        for name in FEATURE_NAMES:
            v = feats[name]
            values[name] = math.nan if v is None else float(v)
        fv = FeatureVector(timestamp_ms=int(feats["timestamp_ms"]), **values)
        return Sample(features=fv, energy_kwh=float(record["energy_kwh"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise ParseError(str(exc), line=line) from exc
        raise ParseError(f"bad sample record: {exc}", line=line) from exc


class RecordStore:
    """Timestamp-keyed, ordered store of one node's samples.

    Appends must be strictly newer than the stored tail; when a path is
    configured every append is also persisted as one JSON line. Readers get
    immutable snapshots and may iterate concurrently with the single writer.
    """

    def __init__(self, node: NodeRole, path: Optional[str | Path] = None):
        self.node = node
        self.path = Path(path) if path is not None else None
        self._samples: list[Sample] = []
        if self.path is not None and not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()

    def append(self, sample: Sample) -> None:
        if self._samples and sample.timestamp_ms <= self._samples[-1].timestamp_ms:
            raise OrderingError(
                f"sample at {sample.timestamp_ms} not after stored tail "
                f"{self._samples[-1].timestamp_ms}"
            )
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(sample_to_json(sample) + "\n")
        self._samples.append(sample)

    @property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(self._samples)

    def __len__(self) -> int:
        return len(self._samples)

    def to_dataset(self) -> Dataset:
        return Dataset(node=self.node, samples=tuple(self._samples))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset as JSON lines, one sample per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for sample in dataset:
            fh.write(sample_to_json(sample) + "\n")


def load_dataset(path: str | Path, node: NodeRole = NodeRole.master()) -> Dataset:
    """Read a JSON-lines dataset written by :func:`save_dataset`."""
    samples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            samples.append(sample_from_record(record, line=lineno))
    if not samples:
        raise EmptyDatasetError(f"{path}: no samples")
    return Dataset(node=node, samples=tuple(samples))
