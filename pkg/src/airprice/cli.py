"""Command-line entry point: ``airprice <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from filelock import FileLock, Timeout

from airprice.balance import balance_dataset
from airprice.config import DEFAULT_SEED, RunConfig
from airprice.errors import (
    DegenerateDataError,
    DomainError,
    ParseError,
    SchemaError,
    StageError,
)
from airprice.features import encode, filter_outliers, fit_encoding
from airprice.ingest import load_calendar, load_listings, write_listings
from airprice.pipelines import (
    LEAKAGE_WARNING,
    PricePipelineModel,
    baseline_stage,
    config_echo,
    eda_stage,
    hypothesis1_run,
    hypothesis2_run,
    label_easy_hard,
    likelihood_table,
    load_model,
    predict_price,
    save_model,
    to_usd,
    train_gate,
)
from airprice.report import RunReport, Table, emit_report, error_buckets, write_table
from airprice.select import format_top_k, randomized_search, trees_curve, write_search_results

log = logging.getLogger("airprice")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SCHEMA, EXIT_NUMERIC = 0, 2, 3, 4, 5
ORDER_FLAGS = {"farthest": "farthest_from_median", "nearest": "nearest_to_median"}
COMMANDS = ("ingest", "eda", "baseline", "gate", "balance", "tune", "train", "predict",
            "availability", "trees-curve")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None, help="JSON run config (default: none, built-in values)")
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: {DEFAULT_SEED})")
    common.add_argument("--listings", metavar="PATH", default=None, help="listings CSV (default: from config)")
    common.add_argument("--calendar", metavar="PATH", default=None, help="calendar CSV (default: from config, optional)")
    common.add_argument("--out", metavar="DIR", default=None,
                        help=f"output directory (default: {d.out})")
    common.add_argument("--target-per-listing", type=int, default=None,
                        help=f"rows per listing after balancing (default: {d.target_per_listing})")
    common.add_argument("--gate-threshold", type=float, default=None, metavar="USD",
                        help=f"easy/hard error threshold (default: {d.gate_threshold:g})")
    common.add_argument("--n-iter", type=int, default=None,
                        help=f"randomized search iterations (default: {d.n_iter})")
    common.add_argument("--folds", type=int, default=None,
                        help=f"cross-validation folds (default: {d.folds})")
    common.add_argument("--fold-mode", choices=("row", "group"), default=None,
                        help=f"row folds or listing-grouped folds (default: {d.fold_mode})")
    common.add_argument("--window", type=int, choices=(30, 60, 90, 365), default=None,
                        help=f"availability window in days (default: {d.window})")
    common.add_argument("--downsample-order", choices=tuple(ORDER_FLAGS), default=None,
                        help="which rows survive downsampling (default: farthest)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")

    parser = argparse.ArgumentParser(prog="airprice", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    helps = {
        "ingest": "validate and clean listings, write cleaned CSV and drop counts",
        "eda": "histograms, weekday/weekend medians, correlations, price heatmap",
        "baseline": "linear baseline with out-of-fold USD errors",
        "gate": "easy/hard labels and the gate classifier",
        "balance": "per-listing balanced dataset and summary",
        "tune": "randomized hyperparameter search",
        "train": "full price workflow; writes model.json and report",
        "predict": "price and easy/hard verdict per input row",
        "availability": "low/high availability clusters and Naive Bayes likelihoods",
        "trees-curve": "train/held-out RMSE against number of trees",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        if name == "predict":
            p.add_argument("--model", metavar="PATH", required=True, help="model.json from train")
            p.add_argument("--input", metavar="PATH", required=True, help="listings CSV to price")
    return parser


def resolve_config(args) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "listings": args.listings,
        "calendar": args.calendar,
        "out": args.out,
        "target_per_listing": args.target_per_listing,
        "gate_threshold": args.gate_threshold,
        "n_iter": args.n_iter,
        "folds": args.folds,
        "fold_mode": args.fold_mode,
        "window": args.window,
        "downsample_order": ORDER_FLAGS.get(args.downsample_order),
    }
    if args.config is not None and not Path(args.config).is_file():
        raise FileNotFoundError(f"config file not found: {args.config}")
    return RunConfig.load(args.config, overrides)


def _records(cfg: RunConfig):
    if not cfg.listings:
        raise UsageError("no listings file: pass --listings or set it in the config")
    records, drops = load_listings(cfg.listings, cfg.schema or None)
    if not records:
        raise DegenerateDataError(f"{cfg.listings}: no usable rows")
    return records, drops


def _calendar(cfg: RunConfig):
    if not cfg.calendar:
        return None
    return load_calendar(cfg.calendar)[0]


def _matrix(cfg: RunConfig, records):
    kept, _ = filter_outliers(records, cfg.outlier_rules())
    if not kept:
        raise DegenerateDataError("no rows left after outlier filtering")
    return encode(kept, fit_encoding(kept, rules=cfg.outlier_rules()))


def _new_report(cfg: RunConfig) -> RunReport:
    from airprice import __version__

    return RunReport(meta={"version": __version__, "seed": cfg.seed, "config": config_echo(cfg)})


def cmd_ingest(cfg, args, out: Path) -> None:
    records, drops = _records(cfg)
    write_listings(records, out / "listings_clean.csv")
    report = _new_report(cfg)
    report.add_section("eda", {"ingest": drops.to_dict()})
    emit_report(report, out)
    print(f"kept {drops.n_kept} of {drops.n_input} rows -> {out / 'listings_clean.csv'}")


def cmd_eda(cfg, args, out: Path) -> None:
    records, drops = _records(cfg)
    report = _new_report(cfg)
    section = eda_stage(records, report, cfg, _calendar(cfg))
    section["ingest"] = drops.to_dict()
    report.add_section("eda", section)
    emit_report(report, out)
    print(f"eda tables written to {out}")


def cmd_baseline(cfg, args, out: Path) -> None:
    records, _ = _records(cfg)
    m = _matrix(cfg, records)
    base = baseline_stage(m, cfg.folds, cfg.seed, cfg.fold_mode)
    report = _new_report(cfg)
    buckets = error_buckets(base.oof_errors_usd, cfg.bucket_thresholds)
    report.add_section("baseline", {"rmse_usd": base.rmse_usd, "mape_pct": base.mape_pct,
                                    "buckets": buckets.to_dict(), "n_rows": m.n_rows})
    report.tables["baseline_buckets"] = Table(["threshold_usd", "percentage"],
                                              list(zip(buckets.thresholds,
                                                       buckets.cumulative_percentages)))
    report.tables["baseline_oof"] = Table(
        ["listing_id", "price_usd", "predicted_usd", "abs_error_usd"],
        list(zip(m.listing_ids.tolist(), to_usd(m.target), to_usd(base.oof_pred),
                 base.oof_errors_usd)))
    emit_report(report, out)
    print(f"baseline RMSE {base.rmse_usd:.2f} USD, MAPE {base.mape_pct:.2f}%")


def cmd_gate(cfg, args, out: Path) -> None:
    records, _ = _records(cfg)
    m = _matrix(cfg, records)
    base = baseline_stage(m, cfg.folds, cfg.seed, cfg.fold_mode)
    labels = label_easy_hard(m.listing_ids, base.oof_errors_usd, cfg.gate_threshold)
    gate = train_gate(m, labels, cfg.gate_hyperparams(), cfg.seed, cfg.gate_holdout_fraction)
    report = _new_report(cfg)
    report.add_section("gate", {"threshold_usd": cfg.gate_threshold,
                                "n_listings": len(labels),
                                "n_easy": sum(g.easy for g in labels),
                                "holdout_accuracy": gate.holdout_accuracy,
                                "distributions": gate.distributions})
    report.tables["gate_labels"] = Table(
        ["listing_id", "oof_abs_error_usd", "easy", "threshold_usd"],
        [(g.listing_id, g.oof_abs_error, g.easy, g.threshold) for g in labels])
    rows = []
    for name, dist in gate.distributions.items():
        e = dist["edges"]
        rows += [(name, e[i], e[i + 1], dist["easy"][i], dist["hard"][i])
                 for i in range(len(e) - 1)]
    report.tables["gate_distributions"] = Table(
        ["feature", "bin_left", "bin_right", "easy", "hard"], rows)
    emit_report(report, out)
    print(f"{sum(g.easy for g in labels)} of {len(labels)} listings easy; "
          f"gate holdout accuracy {gate.holdout_accuracy:.3f}")


def cmd_balance(cfg, args, out: Path) -> None:
    records, _ = _records(cfg)
    m = _matrix(cfg, records)
    balanced, summary = balance_dataset(m, cfg.balance_config())
    write_table(Table(["listing_id", "target"] + m.column_names,
                      [[int(i), t] + list(row) for i, t, row in
                       zip(balanced.listing_ids, balanced.target, balanced.values)]),
                out / "balanced.csv")
    report = _new_report(cfg)
    report.add_section("balance", summary.to_dict())
    emit_report(report, out)
    print(f"{summary.n_listings} listings -> {summary.rows_out} rows")


def cmd_tune(cfg, args, out: Path) -> None:
    records, _ = _records(cfg)
    m = _matrix(cfg, records)
    balanced, _ = balance_dataset(m, cfg.balance_config())
    trials = randomized_search(balanced.values, balanced.target, cfg.space(), cfg.n_iter,
                               cfg.folds, cfg.seed, balanced.listing_ids, cfg.fold_mode)
    write_search_results(trials, out / "search.json", out / "search.csv")
    top = format_top_k(trials, 3)
    report = _new_report(cfg)
    report.add_section("search", {"n_iter": cfg.n_iter, "folds": cfg.folds,
                                  "fold_mode": cfg.fold_mode,
                                  "trials": [t.to_dict() for t in trials], "top3": top})
    if cfg.fold_mode == "row":
        report.warn(LEAKAGE_WARNING)
    emit_report(report, out)
    (out / "top3.txt").write_text(top, encoding="utf-8")
    print(top, end="")


def cmd_train(cfg, args, out: Path) -> None:
    records, drops = _records(cfg)
    model, report = hypothesis1_run(records, cfg, _calendar(cfg))
    report.sections["eda"]["ingest"] = drops.to_dict()
    save_model(model, out / "model.json")
    emit_report(report, out)
    (out / "top3.txt").write_text(report.sections["search"]["top3"], encoding="utf-8")
    fin = report.sections["final"]["group_folds"]
    print(f"model -> {out / 'model.json'}; held-out RMSE {fin['rmse_usd']:.2f} USD")


def cmd_predict(cfg, args, out: Path) -> None:
    model = load_model(args.model)
    if not isinstance(model, PricePipelineModel):
        raise SchemaError(f"{args.model} is not a price model")
    records, _ = load_listings(args.input, cfg.schema or None, require_price=False)
    preds = predict_price(model, records)
    path = out / "predictions.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["listing_id", "price_usd", "verdict", "note"])
        for p in preds:
            w.writerow([p.listing_id, repr(p.price), p.verdict, p.note])
    print(f"{len(preds)} predictions -> {path}")


def cmd_availability(cfg, args, out: Path) -> None:
    records, _ = _records(cfg)
    model, report = hypothesis2_run(records, cfg.window, cfg)
    save_model(model, out / "availability_model.json")
    report.tables["likelihood"] = likelihood_table(model, records)
    emit_report(report, out)
    sec = report.sections["availability"]
    print(f"NB accuracy {sec['nb_accuracy']:.3f} vs majority {sec['majority_accuracy']:.3f}")


def cmd_trees_curve(cfg, args, out: Path) -> None:
    records, _ = _records(cfg)
    m = _matrix(cfg, records)
    balanced, _ = balance_dataset(m, cfg.balance_config())
    curve = trees_curve(balanced.values, balanced.target, cfg.curve_hyperparams(),
                        cfg.trees_curve_n_list, cfg.folds, cfg.seed, balanced.listing_ids,
                        cfg.fold_mode, inverse=to_usd)
    report = _new_report(cfg)
    report.add_section("final", {"trees_curve": {
        "params": cfg.curve_hyperparams().to_dict(), "fold_mode": cfg.fold_mode,
        "points": [{"n_trees": n, "train_rmse_usd": tr, "heldout_rmse_usd": te}
                   for n, tr, te in curve]}})
    report.tables["trees_curve"] = Table(["n_trees", "train_rmse_usd", "heldout_rmse_usd"], curve)
    emit_report(report, out)
    for n, tr, te in curve:
        print(f"{n:4d} trees: train {tr:.2f}  held-out {te:.2f}")


HANDLERS = {
    "ingest": cmd_ingest, "eda": cmd_eda, "baseline": cmd_baseline, "gate": cmd_gate,
    "balance": cmd_balance, "tune": cmd_tune, "train": cmd_train, "predict": cmd_predict,
    "availability": cmd_availability, "trees-curve": cmd_trees_curve,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ParseError, SchemaError, KeyError)):
        return EXIT_SCHEMA
    if isinstance(exc, (DegenerateDataError, DomainError, ArithmeticError, ValueError)):
        return EXIT_NUMERIC
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command != "predict" and not cfg.listings:
            raise UsageError("no listings file: pass --listings or set it in the config")
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with FileLock(str(out / ".airprice.lock"), timeout=0):
            HANDLERS[args.command](cfg, args, out)
    except Timeout:
        print(f"airprice {args.command}: output directory is in use by another run",
              file=sys.stderr)
        return EXIT_IO
    except Exception as exc:
        stage = exc.stage if isinstance(exc, StageError) else args.command
        print(f"airprice {args.command}: [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
