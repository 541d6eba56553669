"""Command-line front end.

Subcommands: synth (generate synthetic data), ingest (normalize a raw CSV),
backtest (full experiment, emits a report bundle + manifest), single (one
fixed model or the benchmark), report (summarize a report bundle).

Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys

from . import __version__, backtest_engine, bess_trading, market_data
from .backtest_engine import BacktestConfig
from .errors import ConfigError, QuantbessError

REPORT_DIR_ENV = "QUANTBESS_REPORT_DIR"
MANIFEST_FILE = "run_manifest.json"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Config file parsing (flat key = value lines, '#' comments)
# ---------------------------------------------------------------------------

_LIST_FIELDS = {"alphas", "model_registry", "pool_window_lengths"}
_INT_FIELDS = {"point_window", "prob_window", "metric_window", "seed", "recalibrate_every"}
_BOOL_FIELDS = {"keep_forecasts"}


def read_config_file(path) -> dict:
    values = {}
    problems = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                problems.append(f"line {line_no}: expected key = value")
                continue
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    if problems:
        raise ConfigError(problems)
    return values


def build_config(values: dict, seed_override=None) -> BacktestConfig:
    """Typed BacktestConfig from string key-values; reports all problems at once."""
    kwargs = {}
    problems = []
    known = {f.name for f in BacktestConfig.__dataclass_fields__.values()}
    for key, value in values.items():
        if key not in known:
            problems.append(f"unknown config key {key!r}")
            continue
        try:
            if key in _INT_FIELDS:
                kwargs[key] = int(value)
            elif key in _BOOL_FIELDS:
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"not a boolean: {value!r}")
                kwargs[key] = value.lower() in ("true", "1", "yes")
            elif key == "bandwidth":
                kwargs[key] = None if value.lower() in ("auto", "none", "") else float(value)
            elif key in _LIST_FIELDS:
                parts = [p.strip() for p in value.split(",") if p.strip()]
                if key == "alphas":
                    kwargs[key] = tuple(float(p) for p in parts)
                elif key == "pool_window_lengths":
                    kwargs[key] = tuple(int(p) for p in parts)
                else:
                    kwargs[key] = tuple(parts)
            else:
                kwargs[key] = value
        except ValueError as exc:
            problems.append(f"config key {key!r}: {exc}")
    if problems:
        raise ConfigError(problems)
    if seed_override is not None:
        kwargs["seed"] = seed_override
    config = BacktestConfig(**kwargs)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    series = market_data.synth_generate(args.days, args.seed, args.regime)
    market_data.export_csv(series, args.output)
    print(f"wrote {args.output}: {series.n_days} days, regime={args.regime}, seed={args.seed}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    if not os.path.exists(args.input):
        raise UsageError(f"input file not found: {args.input}")
    schema = {
        "timestamp": args.timestamp_col,
        "price": args.price_col,
        "load": args.load_col,
    }
    series = market_data.ingest_csv(
        args.input, schema=schema, delimiter=args.delimiter, min_days=args.min_days
    )
    market_data.export_csv(series, args.output)
    print(f"wrote {args.output}: {series.n_days} days "
          f"({series.n_days * 24} hourly records)")
    return EXIT_OK


def _load_dataset(path) -> market_data.MarketSeries:
    if not os.path.exists(path):
        raise UsageError(f"dataset not found: {path}")
    return market_data.ingest_csv(path)


def _resolve_outdir(args) -> str:
    return os.environ.get(REPORT_DIR_ENV) or args.output


def cmd_backtest(args) -> int:
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    values = read_config_file(args.config) if args.config else {}
    config = build_config(values, seed_override=args.seed)
    series = _load_dataset(args.data)
    config.validate(series.n_days)

    report = backtest_engine.run_backtest(series, config)
    outdir = _resolve_outdir(args)
    paths = backtest_engine.write_report(report, outdir)

    manifest = {
        "tool_version": __version__,
        "seed": config.seed,
        "created_utc": started,
        "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "dataset_path": os.path.abspath(args.data),
        "dataset_sha256": _sha256(args.data),
        "config": config.as_dict(),
        "files": {os.path.basename(p): _sha256(p) for p in paths},
    }
    with open(os.path.join(outdir, MANIFEST_FILE), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    n_trading = len(report.trading_days)
    print(f"report written to {outdir}: {n_trading} trading days, "
          f"{len(config.alphas)} alphas x {len(backtest_engine.METRICS)} metrics")
    return EXIT_OK


def cmd_single(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    config = build_config(values, seed_override=args.seed)
    series = _load_dataset(args.data)
    ledger = backtest_engine.run_single_model(series, config, args.model, args.alpha)
    if args.output:
        bess_trading.export_ledger(
            ledger, args.output, extra={"model": args.model, "alpha": args.alpha}
        )
        print(f"ledger written to {args.output}")
    profit = bess_trading.profit_per_mwh(ledger)
    print(f"model={args.model} alpha={args.alpha} days={len(ledger.entries)} "
          f"profit_per_mwh={profit:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    outdir = args.report_dir
    profits_path = os.path.join(outdir, backtest_engine.PROFITS_FILE)
    if not os.path.isdir(outdir):
        raise UsageError(f"report directory not found: {outdir}")
    if not os.path.exists(profits_path):
        raise UsageError(f"no {backtest_engine.PROFITS_FILE} in {outdir}")

    manifest_path = os.path.join(outdir, MANIFEST_FILE)
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        for name, digest in manifest.get("files", {}).items():
            path = os.path.join(outdir, name)
            if not os.path.exists(path) or _sha256(path) != digest:
                print(f"warning: checksum mismatch for {name}", file=sys.stderr)

    import csv as _csv

    best = {}  # alpha -> (profit, metric)
    with open(profits_path, newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            alpha = float(row["alpha"])
            profit = float(row["profit_per_mwh"])
            if alpha not in best or profit > best[alpha][0]:
                best[alpha] = (profit, row["metric"])
    if not best:
        raise QuantbessError(f"{profits_path} holds no rows")

    print(f"{'alpha':>6}  {'best metric':<18} {'profit/MWh':>12}")
    for alpha in sorted(best):
        profit, metric = best[alpha]
        print(f"{alpha:>6.2f}  {metric:<18} {profit:>12.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantbess",
        description="Probabilistic electricity-price forecasting and "
                    "battery-storage trading backtests.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic hourly dataset")
    p.add_argument("output", help="output CSV path")
    p.add_argument("--days", type=int, default=700)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--regime", choices=market_data.REGIMES, default="low")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="normalize a raw hourly CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--timestamp-col", default="timestamp")
    p.add_argument("--price-col", default="price")
    p.add_argument("--load-col", default="load_forecast")
    p.add_argument("--min-days", type=int, default=0,
                   help="minimum complete days required "
                        f"({market_data.DEFAULT_MIN_BACKTEST_DAYS} for a default backtest)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("backtest", help="run the full rolling backtest")
    p.add_argument("--data", required=True, help="normalized dataset CSV")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--output", default="report",
                   help=f"report directory (overridden by ${REPORT_DIR_ENV})")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("single", help="trade one fixed model (or 'benchmark')")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="hs")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="optional ledger CSV path")
    p.set_defaults(func=cmd_single)

    p = sub.add_parser("report", help="summarize a report bundle")
    p.add_argument("report_dir")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuantbessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
