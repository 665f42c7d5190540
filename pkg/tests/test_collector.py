import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from greenbytes import (
    ConfigurationError,
    EnergyCoeffs,
    NodeRole,
    OrderingError,
    ParseError,
    RecordStore,
    Sample,
    SynthConfig,
    ValidationError,
    collect_from_capture,
    joules_to_kwh,
    load_dataset,
    parse_mpstat_interval,
    read_energy_counter,
    sample_from_record,
    sample_to_json,
    save_dataset,
    simulate,
)
from greenbytes.collector import parse_energy_log

MPSTAT_HEADER = (
    "Linux 5.15.0-86-generic (node1) \t01/01/24 \t_x86_64_\t(8 CPU)\n\n"
    "10:00:01 AM  CPU    %usr   %nice    %sys %iowait    %irq   %soft  "
    "%steal  %guest  %gnice   %idle\n"
)


def mpstat_row(clock, usr, sys_, irq, soft, idle, nice=0.0):
    rest = 100.0 - usr - nice - sys_ - irq - soft - idle
    iowait = max(rest, 0.0)
    return (
        f"{clock}  all  {usr:7.2f} {nice:7.2f} {sys_:7.2f} {iowait:7.2f} "
        f"{irq:7.2f} {soft:7.2f}    0.00    0.00    0.00 {idle:7.2f}\n"
    )


class TestMpstatParsing:
    def test_field_mapping(self):
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + mpstat_row("10:00:02 AM", 10.0, 5.0, 0.0, 0.0, 85.0)
        )
        fv = parse_mpstat_interval(text)
        assert fv.cpu_user == 10.0
        assert fv.cpu_system == 5.0
        assert fv.idle_pct == 85.0

    def test_ctx_rate_from_counter_delta(self):
        # 1,000 -> 3,000 counts over 2 s gives 1,000 switches/s
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + "ctxt 1000\n"
            + mpstat_row("10:00:03 AM", 10.0, 5.0, 0.0, 0.0, 85.0)
            + "ctxt 3000\n"
        )
        fv = parse_mpstat_interval(text)
        assert fv.ctx_switches_per_sec == 1000.0

    def test_missing_counters_yield_nan(self):
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + mpstat_row("10:00:02 AM", 10.0, 5.0, 0.0, 0.0, 85.0)
        )
        assert math.isnan(parse_mpstat_interval(text).ctx_switches_per_sec)

    def test_irq_rate_sums_hard_and_soft(self):
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + mpstat_row("10:00:02 AM", 10.0, 5.0, 0.75, 0.25, 84.0)
        )
        assert parse_mpstat_interval(text).irq_rate == 1.0

    def test_freq_line_and_default(self):
        base = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + mpstat_row("10:00:02 AM", 10.0, 5.0, 0.0, 0.0, 85.0)
        )
        assert parse_mpstat_interval(base, default_freq_mhz=1234.0).cpu_freq_mhz == 1234.0
        assert parse_mpstat_interval(base + "freq 2900.5\n").cpu_freq_mhz == 2900.5

    def test_range_violation_is_parse_error_with_line(self):
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + "10:00:02 AM  all  101.00 0.00 0.00 0.00 0.00 0.00 0.00 0.00 0.00 0.00\n"
        )
        with pytest.raises(ParseError) as err:
            parse_mpstat_interval(text)
        assert err.value.line is not None

    def test_missing_all_row(self):
        with pytest.raises(ParseError):
            parse_mpstat_interval(MPSTAT_HEADER + mpstat_row("10:00:01 AM", 1, 1, 0, 0, 98))

    def test_wrong_column_count(self):
        text = MPSTAT_HEADER + "10:00:01 AM  all  1.0 2.0 3.0\n"
        with pytest.raises(ParseError):
            parse_mpstat_interval(text)

    def test_24h_clock_supported(self):
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01", 3.0, 1.0, 0.0, 0.0, 96.0)
            + "ctxt 0\n"
            + mpstat_row("10:00:02", 10.0, 5.0, 0.0, 0.0, 85.0)
            + "ctxt 500\n"
        )
        assert parse_mpstat_interval(text).ctx_switches_per_sec == 500.0

    def test_average_rows_ignored(self):
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + "Average:     all    5.00 0.00 2.00 0.00 0.00 0.00 0.00 0.00 0.00 93.00\n"
            + mpstat_row("10:00:02 AM", 10.0, 5.0, 0.0, 0.0, 85.0)
        )
        assert parse_mpstat_interval(text).cpu_user == 10.0


class TestEnergyCounter:
    def test_two_file_read(self, tmp_path):
        (tmp_path / "energy_uj").write_text("123456")
        (tmp_path / "max_energy_range_uj").write_text("262143328850")
        r = read_energy_counter(tmp_path, now_ms=42)
        assert (r.cumulative_uj, r.max_range_uj, r.timestamp_ms) == (123456, 262143328850, 42)

    def test_pair_of_paths(self, tmp_path):
        v = tmp_path / "v.txt"
        m = tmp_path / "m.txt"
        v.write_text("7\n")
        m.write_text("100\n")
        assert read_energy_counter((v, m), now_ms=0).cumulative_uj == 7

    def test_empty_file_is_parse_error(self, tmp_path):
        (tmp_path / "energy_uj").write_text("")
        (tmp_path / "max_energy_range_uj").write_text("100")
        with pytest.raises(ParseError):
            read_energy_counter(tmp_path)

    def test_fractional_value_is_parse_error(self, tmp_path):
        (tmp_path / "energy_uj").write_text("12.5")
        (tmp_path / "max_energy_range_uj").write_text("100")
        with pytest.raises(ParseError):
            read_energy_counter(tmp_path)

    def test_missing_file_is_os_error(self, tmp_path):
        with pytest.raises(OSError):
            read_energy_counter(tmp_path / "nope")

    def test_energy_log(self):
        logs = parse_energy_log("1000 5\n2000 15\n", max_range_uj=100)
        assert [(r.timestamp_ms, r.cumulative_uj) for r in logs] == [(1000, 5), (2000, 15)]
        with pytest.raises(ParseError):
            parse_energy_log("1000\n", max_range_uj=100)


class TestSimulate:
    def test_linear_energy_model_closed_form(self):
        # noiseless: energy is exactly the stated linear function of features
        coeffs = EnergyCoeffs(a_user=1.0, a_sys=0.0, a_ctx=0.0, base=0.0)
        for profile in ("ramp", "bursty", "diurnal"):
            ds = simulate(SynthConfig(seed=3, duration_steps=50, coeffs=coeffs,
                                      noise_std=0.0, workload_profile=profile))
            for s in ds:
                assert s.energy_kwh == joules_to_kwh(s.features.cpu_user)

    def test_idle_profile_stays_idle(self):
        ds = simulate(SynthConfig(seed=1, duration_steps=2, workload_profile="idle"))
        assert len(ds) == 2
        assert all(s.features.cpu_user <= 5.0 for s in ds)

    def test_same_seed_identical_bytes(self, tmp_path):
        cfg = SynthConfig(seed=99, duration_steps=64, noise_std=2.0, workload_profile="bursty")
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(simulate(cfg), a)
        save_dataset(simulate(cfg), b)
        assert a.read_bytes() == b.read_bytes()

    def test_noise_does_not_change_features(self):
        quiet = simulate(SynthConfig(seed=5, duration_steps=30, workload_profile="ramp"))
        noisy = simulate(SynthConfig(seed=5, duration_steps=30, noise_std=3.0,
                                     workload_profile="ramp"))
        assert [s.features for s in quiet] == [s.features for s in noisy]

    def test_least_squares_recovers_coefficients(self):
        coeffs = EnergyCoeffs(a_user=1.2, a_sys=1.8, a_ctx=0.004, base=20.0)
        ds = simulate(SynthConfig(seed=17, duration_steps=400, coeffs=coeffs,
                                  noise_std=0.0, workload_profile="bursty"))
        u = np.array([s.features.cpu_user for s in ds])
        sy = np.array([s.features.cpu_system for s in ds])
        ctx = np.array([s.features.ctx_switches_per_sec for s in ds])
        joules = np.array([s.energy_kwh for s in ds]) * 3_600_000.0
        design = np.column_stack([u, sy, ctx, np.ones_like(u)])
        fitted, *_ = np.linalg.lstsq(design, joules, rcond=None)
        expected = np.array([coeffs.a_user, coeffs.a_sys, coeffs.a_ctx, coeffs.base])
        assert np.max(np.abs(fitted - expected) / expected) < 1e-9

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SynthConfig(seed=0, duration_steps=1)
        with pytest.raises(ValidationError):
            SynthConfig(seed=0, duration_steps=10, noise_std=-1.0)
        with pytest.raises(ValidationError):
            SynthConfig(seed=0, duration_steps=10, workload_profile="chaotic")
        with pytest.raises(ValidationError):
            EnergyCoeffs(a_user=-1.0)

    def test_feature_invariants_hold_across_profiles_and_seeds(self):
        for profile in ("idle", "ramp", "bursty", "diurnal"):
            for seed in (0, 1, 2):
                ds = simulate(SynthConfig(seed=seed, duration_steps=200,
                                          workload_profile=profile))
                assert len(ds) == 200  # construction validated every sample


def make_sample(ts, energy=0.001):
    from tests.test_types import make_fv

    return Sample(features=make_fv(ts=ts), energy_kwh=energy)


class TestRecordStore:
    def test_append_and_iterate(self):
        store = RecordStore(NodeRole.master())
        store.append(make_sample(1))
        assert len(store) == 1

    def test_duplicate_timestamp_rejected(self):
        store = RecordStore(NodeRole.master())
        store.append(make_sample(1))
        with pytest.raises(OrderingError):
            store.append(make_sample(1))

    def test_hundred_appends_stay_ordered(self):
        store = RecordStore(NodeRole.master())
        for ts in range(1, 101):
            store.append(make_sample(ts))
        got = [s.timestamp_ms for s in store.samples]
        assert got == list(range(1, 101))

    def test_persistence_matches_save_dataset(self, tmp_path):
        path = tmp_path / "node.jsonl"
        store = RecordStore(NodeRole.master(), path=path)
        for ts in range(1, 6):
            store.append(make_sample(ts, energy=ts * 1e-4))
        reloaded = load_dataset(path)
        assert reloaded.samples == store.samples


finite_pct = st.floats(min_value=0.0, max_value=33.0, allow_nan=False)


class TestJsonRoundTrip:
    @given(
        st.integers(min_value=0, max_value=2**53),
        finite_pct, finite_pct, finite_pct,
        st.floats(min_value=0, max_value=1e6, allow_nan=False),
        st.floats(min_value=0, max_value=100.0, allow_nan=False),
        st.floats(min_value=1e-3, max_value=6000.0, allow_nan=False),
        st.floats(min_value=0, max_value=10.0, allow_nan=False),
    )
    def test_parse_serialize_parse_exact(self, ts, usr, sys_, idle, ctx, irq, freq, kwh):
        from greenbytes import FeatureVector

        sample = Sample(
            features=FeatureVector(
                timestamp_ms=ts, cpu_user=usr, cpu_system=sys_,
                ctx_switches_per_sec=ctx, irq_rate=irq,
                cpu_freq_mhz=freq, idle_pct=idle,
            ),
            energy_kwh=kwh,
        )
        again = sample_from_record(json.loads(sample_to_json(sample)))
        assert again == sample

    def test_null_becomes_nan(self):
        record = json.loads(sample_to_json(make_sample(5)))
        record["features"]["ctx_switches_per_sec"] = None
        assert math.isnan(sample_from_record(record).features.ctx_switches_per_sec)

    def test_load_dataset_reports_line_numbers(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(sample_to_json(make_sample(1)) + "\n{not json}\n")
        with pytest.raises(ParseError) as err:
            load_dataset(path)
        assert err.value.line == 2


ENERGY_LOG = "\n".join(f"{1000 * (k + 1)} {2_000 * k}" for k in range(4)) + "\n"


def capture_text():
    rows = [
        (3.0, 1.0, 96.0, 1_000),
        (10.0, 5.0, 85.0, 2_000),
        (20.0, 8.0, 72.0, 4_000),
        (15.0, 6.0, 79.0, 5_500),
    ]
    out = MPSTAT_HEADER
    for k, (usr, sys_, idle, ctxt) in enumerate(rows):
        out += mpstat_row(f"10:00:0{k + 1} AM", usr, sys_, 0.0, 0.0, idle)
        out += f"ctxt {ctxt}\n"
    return out


class TestCollectFromCapture:
    def test_pairs_blocks_with_readings(self):
        ds = collect_from_capture(capture_text(), ENERGY_LOG, max_range_uj=10**9,
                                  node=NodeRole.worker(1))
        assert len(ds) == 3
        # timestamps rebased onto the energy log
        assert ds.samples[0].timestamp_ms == 2000
        # counter delta 2,000 uJ = 0.002 J each interval
        assert ds.samples[0].energy_kwh == joules_to_kwh(2_000 / 1e6)
        assert ds.samples[0].features.cpu_user == 10.0
        assert ds.samples[0].features.ctx_switches_per_sec == 1000.0

    def test_counter_wrap_handled(self):
        log = "1000 900\n2000 100\n"
        text = (
            MPSTAT_HEADER
            + mpstat_row("10:00:01 AM", 3.0, 1.0, 0.0, 0.0, 96.0)
            + mpstat_row("10:00:02 AM", 10.0, 5.0, 0.0, 0.0, 85.0)
        )
        ds = collect_from_capture(text, log, max_range_uj=1000)
        assert ds.samples[0].energy_kwh == joules_to_kwh(200 / 1e6)

    def test_count_mismatch_is_configuration_error(self):
        with pytest.raises(ConfigurationError):
            collect_from_capture(capture_text(), "1000 0\n2000 10\n", max_range_uj=10**9)
