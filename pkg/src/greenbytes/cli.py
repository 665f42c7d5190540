"""Command-line entry point.

Subcommands compose the library: ``simulate``, ``collect``, ``preprocess``,
``train``, ``evaluate``, ``transfer-eval``, ``serve``, ``export``. Exit codes:
0 success, 1 validation/usage error, 2 I/O or numeric error. Every run with
identical inputs, flags, and seeds produces byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .collector import (
    DEFAULT_FREQ_MHZ,
    WORKLOAD_PROFILES,
    EnergyCoeffs,
    SynthConfig,
    collect_from_capture,
    load_dataset,
    save_dataset,
    simulate,
)
from .errors import GreenBytesError, NumericError, ValidationError
from .evaluation import EvalReport, evaluate_model, export_loss_history, export_series, transfer_eval
from .model_io import data_fingerprint, load_model, save_model
from .pipeline import DEFAULT_TRAIN_FRACTION, DEFAULT_WINDOW_LEN, train_energy_model
from .preprocess import GAP_POLICIES, clean, select_features
from .service import serve
from .types import FEATURE_NAMES, NodeRole

DATA_DIR_ENV = "GREENBYTES_DATA_DIR"


@dataclass
class AppConfig:
    """Cross-command settings, validated before any subcommand runs."""

    data_dir: Path
    node: NodeRole = NodeRole.master()
    sampling_interval_s: float = 1.0
    train_fraction: float = DEFAULT_TRAIN_FRACTION
    window_len: int = DEFAULT_WINDOW_LEN
    service_port: int = 8337

    def __post_init__(self):
        if self.sampling_interval_s <= 0:
            raise ValidationError("sampling interval must be positive")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValidationError("train fraction must be in (0, 1)")
        if self.window_len < 1:
            raise ValidationError("window length must be >= 1")
        if not (0 <= self.service_port <= 65535):
            raise ValidationError("port must be in [0, 65535]")

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.data_dir / p


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise _UsageError(f"{self.format_usage()}error: {message}")


def _config(args) -> AppConfig:
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV) or "."
    return AppConfig(
        data_dir=Path(data_dir),
        node=NodeRole.parse(getattr(args, "node", "master")),
        sampling_interval_s=getattr(args, "interval", 1.0),
        train_fraction=getattr(args, "train_fraction", DEFAULT_TRAIN_FRACTION),
        window_len=getattr(args, "window", DEFAULT_WINDOW_LEN),
        service_port=getattr(args, "port", 8337),
    )


def _read_text(cfg: AppConfig, path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return cfg.resolve(path).read_text(encoding="utf-8")


def _fmt(value: float) -> str:
    return f"{value:.9g}"


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    cfg = _config(args)
    synth = SynthConfig(
        seed=args.seed,
        duration_steps=args.steps,
        coeffs=EnergyCoeffs(a_user=args.a_user, a_sys=args.a_sys, a_ctx=args.a_ctx, base=args.base),
        noise_std=args.noise_std,
        workload_profile=args.profile,
    )
    dataset = simulate(synth, node=cfg.node, interval_s=cfg.sampling_interval_s)
    out = cfg.resolve(args.out)
    save_dataset(dataset, out)
    print(f"wrote {len(dataset)} samples to {out}")
    return 0


def _cmd_collect(args) -> int:
    cfg = _config(args)
    dataset = collect_from_capture(
        mpstat_text=_read_text(cfg, args.mpstat),
        energy_log_text=_read_text(cfg, args.energy_log),
        max_range_uj=args.max_range_uj,
        node=cfg.node,
        default_freq_mhz=args.freq_default,
    )
    out = cfg.resolve(args.out)
    save_dataset(dataset, out)
    print(f"collected {len(dataset)} samples to {out}")
    return 0


def _cmd_preprocess(args) -> int:
    cfg = _config(args)
    dataset = load_dataset(cfg.resolve(args.input), node=cfg.node)
    cleaned = clean(dataset, z_threshold=args.z_threshold, gap_policy=args.gap_policy)
    out = cfg.resolve(args.out)
    save_dataset(cleaned, out)
    print(f"kept {len(cleaned)} of {len(dataset)} samples -> {out}")
    return 0


def _parse_features(text: str) -> tuple[str, ...]:
    return tuple(name.strip() for name in text.split(",") if name.strip())


def _cmd_train(args) -> int:
    cfg = _config(args)
    input_path = cfg.resolve(args.input)
    dataset = load_dataset(input_path, node=cfg.node)
    result = train_energy_model(
        dataset,
        kind=args.model,
        feature_names=_parse_features(args.features),
        train_fraction=cfg.train_fraction,
        window_len=cfg.window_len,
        lstm_params={
            "hidden_size": args.hidden,
            "epochs": args.epochs,
            "learning_rate": args.lr,
            "grad_clip_norm": args.clip,
            "seed": args.seed,
        },
        gbt_params={
            "n_estimators": args.n_estimators,
            "learning_rate": args.gbt_lr,
            "max_depth": args.max_depth,
            "min_samples_leaf": args.min_samples_leaf,
        },
        data_sha256=data_fingerprint(input_path),
    )
    out = cfg.resolve(args.out)
    save_model(result.model, out)
    if args.loss_out:
        export_loss_history(result.loss_history, cfg.resolve(args.loss_out))
    print(
        f"model={args.model} saved={out} "
        f"final_train_mse_normalized={_fmt(result.train_mse)} "
        f"final_val_mse_normalized={_fmt(result.val_mse)}"
    )
    return 0


def _report_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def _print_report(report: EvalReport) -> None:
    r2_text = _fmt(report.r2) if report.r2_defined else "undefined"
    print(
        f"node={report.node} kind={report.model_kind} n={report.n_points} "
        f"mse_normalized={_fmt(report.mse)} mae_normalized={_fmt(report.mae)} "
        f"r2={r2_text} mse_kwh={_fmt(report.mse_kwh)} mae_kwh={_fmt(report.mae_kwh)}"
    )


def _cmd_evaluate(args) -> int:
    cfg = _config(args)
    model = load_model(cfg.resolve(args.model))
    dataset = load_dataset(cfg.resolve(args.data), node=cfg.node)
    dataset = select_features(dataset, model.feature_names)
    report = evaluate_model(model, dataset)
    _print_report(report)
    if args.out_series:
        export_series(report, cfg.resolve(args.out_series),
                      svg_path=cfg.resolve(args.svg) if args.svg else None)
    if args.report:
        cfg.resolve(args.report).write_text(_report_json(report), encoding="utf-8", newline="\n")
    return 0


def _cmd_transfer_eval(args) -> int:
    cfg = _config(args)
    model = load_model(cfg.resolve(args.model))
    paths = [p.strip() for p in args.workers.split(",") if p.strip()]
    if not paths:
        raise ValidationError("--workers needs at least one dataset path")
    datasets = []
    for i, p in enumerate(paths, start=1):
        ds = load_dataset(cfg.resolve(p), node=NodeRole.worker(i))
        datasets.append(select_features(ds, model.feature_names))
    out_dir = cfg.resolve(args.out_dir)
    reports = transfer_eval(model, datasets)
    for path, report in zip(paths, reports):
        stem = Path(path).stem
        csv_path = out_dir / f"{stem}.csv"
        export_series(report, csv_path, svg_path=out_dir / f"{stem}.svg" if args.svg else None)
        _print_report(report)
        print(f"  series -> {csv_path}")
    return 0


def _cmd_serve(args) -> int:
    cfg = _config(args)
    serve(cfg.resolve(args.model), host=args.host, port=cfg.service_port)
    return 0


def _cmd_export(args) -> int:
    cfg = _config(args)
    try:
        doc = json.loads(cfg.resolve(args.report).read_text(encoding="utf-8"))
        report = EvalReport.from_dict(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"bad report file: {exc}") from exc
    export_series(report, cfg.resolve(args.out),
                  svg_path=cfg.resolve(args.svg) if args.svg else None)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="greenbytes", description=__doc__)
    parser.add_argument("--data-dir", default=None,
                        help=f"base directory for relative paths (or ${DATA_DIR_ENV})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a deterministic synthetic node trace")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=WORKLOAD_PROFILES, default="bursty")
    p.add_argument("--node", default="master")
    p.add_argument("--a-user", type=float, default=EnergyCoeffs().a_user)
    p.add_argument("--a-sys", type=float, default=EnergyCoeffs().a_sys)
    p.add_argument("--a-ctx", type=float, default=EnergyCoeffs().a_ctx)
    p.add_argument("--base", type=float, default=EnergyCoeffs().base)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--interval", type=float, default=1.0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("collect", help="build a dataset from an mpstat capture and an energy-counter log")
    p.add_argument("--mpstat", required=True, help="capture file with mpstat blocks ('-' = stdin)")
    p.add_argument("--energy-log", required=True,
                   help="counter log: one '<timestamp_ms> <cumulative_uj>' line per mpstat block")
    p.add_argument("--max-range-uj", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--node", default="master")
    p.add_argument("--freq-default", type=float, default=DEFAULT_FREQ_MHZ)
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("preprocess", help="interpolate missing values and trim target outliers")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--z-threshold", type=float, default=3.0)
    p.add_argument("--gap-policy", choices=GAP_POLICIES, default="interpolate")
    p.add_argument("--node", default="master")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train a model and save it as a JSON model file")
    p.add_argument("--model", choices=("lstm", "gbt"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features", default=",".join(FEATURE_NAMES))
    p.add_argument("--train-fraction", type=float, default=DEFAULT_TRAIN_FRACTION)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW_LEN,
                   help="window length for the lstm model (gbt always uses the latest row)")
    p.add_argument("--node", default="master")
    p.add_argument("--loss-out", default=None, help="write per-epoch/per-stage loss CSV here")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-estimators", type=int, default=200)
    p.add_argument("--gbt-lr", type=float, default=0.1)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--min-samples-leaf", type=int, default=2)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a model on one dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--node", default="master")
    p.add_argument("--out-series", default=None, help="write timestamp,actual,predicted CSV here")
    p.add_argument("--svg", default=None, help="write a line chart here (requires --out-series)")
    p.add_argument("--report", default=None, help="write the full report as JSON here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("transfer-eval",
                       help="score a master-trained model on worker datasets (master scaler reused)")
    p.add_argument("--model", required=True)
    p.add_argument("--workers", required=True, help="comma-separated worker dataset paths")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svg", action="store_true", help="also write one chart per worker")
    p.set_defaults(func=_cmd_transfer_eval)

    p = sub.add_parser("serve", help="serve a model over HTTP")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8337)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("export", help="render a stored evaluation report to CSV/SVG")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=_cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GreenBytesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
