import math

import numpy as np
import pytest

from greenbytes import (
    ConfigurationError,
    EvalReport,
    NodeRole,
    ShapeError,
    evaluate_model,
    export_loss_history,
    export_series,
    mae,
    mse,
    r2,
    render_series_svg,
    select_features,
    transfer_eval,
)


class TestMetrics:
    def test_mse_identical_is_zero(self):
        assert mse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_mse_unit_offset(self):
        assert mse([0.0, 0.0], [1.0, 1.0]) == 1.0

    def test_mse_hand_value(self):
        assert mse([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_mse_symmetric(self):
        a = np.array([0.4, 1.2, 5.0])
        p = np.array([0.1, 2.0, 4.5])
        assert mse(a, p) == mse(p, a)

    def test_mae_hand_value(self):
        assert mae([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            mse([1.0], [1.0, 2.0])
        with pytest.raises(ShapeError):
            mae([1.0], [1.0, 2.0])
        with pytest.raises(ShapeError):
            r2([1.0], [1.0, 2.0])

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            mse([], [])

    def test_r2_identical_is_one(self):
        assert r2([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_r2_mean_predictor_is_zero(self):
        actual = np.array([1.0, 2.0, 3.0])
        assert r2(actual, np.full(3, actual.mean())) == pytest.approx(0.0, abs=1e-15)

    def test_r2_constant_actual_zero_residual(self):
        assert r2([2.0, 2.0], [2.0, 2.0]) == 1.0

    def test_r2_constant_actual_nonzero_residual_is_sentinel(self):
        value = r2([2.0, 2.0], [2.0, 2.1])
        assert value == -math.inf


class TestEvalReport:
    def make(self, **overrides):
        fields = dict(
            node=NodeRole.worker(1),
            model_kind="gbt",
            mse=0.01, mae=0.05, r2=0.9,
            mse_kwh=1e-9, mae_kwh=1e-5,
            n_points=2,
            series=((1000, 0.001, 0.0011), (2000, 0.002, 0.0019)),
        )
        fields.update(overrides)
        return EvalReport(**fields)

    def test_round_trip_dict(self):
        report = self.make()
        assert EvalReport.from_dict(report.to_dict()) == report

    def test_round_trip_with_undefined_r2(self):
        report = self.make(r2=-math.inf)
        again = EvalReport.from_dict(report.to_dict())
        assert not again.r2_defined

    def test_invariants(self):
        with pytest.raises(ShapeError):
            self.make(mse=-0.1)
        with pytest.raises(ShapeError):
            self.make(r2=1.1)
        with pytest.raises(ShapeError):
            self.make(n_points=5)


class TestEvaluateModel:
    def test_report_matches_manual_pipeline(self, lstm_result, master_dataset):
        from greenbytes import make_windows

        model = lstm_result.model
        ds = select_features(master_dataset, model.feature_names)
        report = evaluate_model(model, ds)
        windows = make_windows(ds, model.window_len)
        x = model.scaler.transform_windows(windows.inputs)
        y = model.scaler.transform_target(windows.targets)
        pred = model.predict_normalized(x)
        assert report.mse == pytest.approx(mse(y, pred), rel=1e-15)
        assert report.n_points == len(windows)
        assert report.series[0][0] == windows.timestamps_ms[0]

    def test_transfer_equals_direct_evaluation(self, gbt_result, master_dataset):
        model = gbt_result.model
        ds = select_features(master_dataset, model.feature_names)
        direct = evaluate_model(model, ds)
        via_transfer, = transfer_eval(model, [ds])
        assert via_transfer == direct

    def test_feature_mismatch_rejected(self, gbt_result, worker_dataset):
        projected = select_features(worker_dataset, ("cpu_user", "cpu_system"))
        with pytest.raises(ConfigurationError):
            evaluate_model(gbt_result.model, projected)

    def test_scaler_never_refitted(self, gbt_result, worker_dataset):
        model = gbt_result.model
        ranges_before = list(model.scaler.feature_ranges_)
        target_before = model.scaler.target_range_
        transfer_eval(model, [select_features(worker_dataset, model.feature_names)])
        assert model.scaler.feature_ranges_ == ranges_before
        assert model.scaler.target_range_ == target_before

    def test_series_is_raw_kwh(self, gbt_result, worker_dataset):
        model = gbt_result.model
        report, = transfer_eval(model, [select_features(worker_dataset, model.feature_names)])
        actuals = [row[1] for row in report.series]
        expected = [s.energy_kwh for s in worker_dataset][model.window_len:]
        assert actuals == expected


SERIES_REPORT = EvalReport(
    node=NodeRole.master(),
    model_kind="lstm",
    mse=0.0, mae=0.0, r2=1.0, mse_kwh=0.0, mae_kwh=0.0,
    n_points=3,
    series=(
        (1704067200000, 2.5e-05, 2.4999e-05),
        (1704067201000, 2.6e-05, 2.62e-05),
        (1704067202000, 2.7e-05, 2.67e-05),
    ),
)


class TestExports:
    def test_series_csv_layout(self, tmp_path):
        path = tmp_path / "series.csv"
        export_series(SERIES_REPORT, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "timestamp,actual_kwh,predicted_kwh"
        assert len(lines) == 4
        assert lines[1] == "1704067200000,2.5e-05,2.4999e-05"

    def test_reexport_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        export_series(SERIES_REPORT, a)
        export_series(SERIES_REPORT, b)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_series_header_only(self, tmp_path):
        report = EvalReport(node=NodeRole.master(), model_kind="gbt",
                            mse=0.0, mae=0.0, r2=1.0, mse_kwh=0.0, mae_kwh=0.0,
                            n_points=0, series=())
        path = tmp_path / "empty.csv"
        export_series(report, path)
        assert path.read_text() == "timestamp,actual_kwh,predicted_kwh\n"

    def test_lf_line_endings(self, tmp_path):
        path = tmp_path / "series.csv"
        export_series(SERIES_REPORT, path)
        assert b"\r" not in path.read_bytes()

    def test_loss_history_line_counts(self, tmp_path):
        path = tmp_path / "loss.csv"
        export_loss_history([(0.5, 0.6)], path)
        assert len(path.read_text().splitlines()) == 2
        export_loss_history([(0.5, 0.6)] * 100, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 101
        assert lines[0] == "epoch,train_mse,val_mse"
        assert lines[1].startswith("1,")
        assert lines[100].startswith("100,")

    def test_loss_history_empty(self, tmp_path):
        path = tmp_path / "loss.csv"
        export_loss_history([], path)
        assert path.read_text() == "epoch,train_mse,val_mse\n"

    def test_loss_history_nan_val_left_blank(self, tmp_path):
        path = tmp_path / "loss.csv"
        export_loss_history([(0.5, math.nan)], path)
        assert path.read_text().splitlines()[1] == "1,0.5,"

    def test_svg_contains_two_polylines(self, tmp_path):
        svg = render_series_svg(SERIES_REPORT)
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2
        path = tmp_path / "chart.svg"
        export_series(SERIES_REPORT, tmp_path / "s.csv", svg_path=path)
        assert path.read_text() == svg

    def test_svg_empty_series_still_valid(self):
        report = EvalReport(node=NodeRole.master(), model_kind="gbt",
                            mse=0.0, mae=0.0, r2=1.0, mse_kwh=0.0, mae_kwh=0.0,
                            n_points=0, series=())
        svg = render_series_svg(report)
        assert svg.startswith("<svg")
        assert "</svg>" in svg
