"""Command-line entry point: ``fognow {synth,prepare,train,evaluate,report}``.

Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .errors import ConfigError, DataError
from .evaluation import format_report, read_report

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _methods(text: str) -> list[str]:
    return [m.strip().lower() for m in text.split(",") if m.strip()]


def _common(parser: argparse.ArgumentParser) -> None:
    # defaults are None so that only flags actually given override the config file
    parser.add_argument("--config", metavar="PATH", help="JSON run config; flags override its values")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--vis-max", type=float, choices=(1.0, 10.0), dest="vis_max", help="1 or 10 (km)")
    parser.add_argument("--lead", type=int, choices=(30, 60), help="lead time in minutes")
    parser.add_argument("--lag", type=int, help="lag window in minutes (default 120)")
    parser.add_argument("--out", metavar="DIR", help="output directory (default: current directory)")
    parser.add_argument("--input", metavar="CSV", action="append",
                        help="observation CSV; repeat for several files (default: DIR/observations.csv)")
    parser.add_argument("--methods", type=_methods, metavar="LIST", help="comma list from cgan,xgb,per,perw")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fognow", description="Marine-fog visibility nowcasting pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="write a seeded synthetic observation CSV")
    _common(p)
    p.add_argument("--minutes", type=int, help="series length in minutes (default 200000)")
    p = sub.add_parser("prepare", help="filter, lag and split observations into train/test sets")
    _common(p)
    p = sub.add_parser("train", help="train the learned methods on the prepared training set")
    _common(p)
    p = sub.add_parser("evaluate", help="score all methods on the test set and write the report")
    _common(p)
    p = sub.add_parser("report", help="print a stored report as a table")
    _common(p)
    p.add_argument("report", nargs="?", metavar="REPORT", help="report JSON (default: from --out/--vis-max/--lead)")
    return parser


def resolve_config(args: argparse.Namespace) -> pipeline.RunConfig:
    values = pipeline.load_config(args.config) if args.config else {}
    flags = {"seed": args.seed, "vis_max": args.vis_max, "lead": args.lead, "lag": args.lag, "out": args.out,
             "methods": args.methods, "synth_minutes": getattr(args, "minutes", None)}
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.input:
        values["input"] = [str(Path(p).resolve()) for p in args.input]
    return pipeline.RunConfig.from_dict(values)


def _print_counts(counts: dict) -> None:
    for key, label in (("raw", "raw rows"), ("precipitation_filtered", "after precipitation filter"),
                       ("visibility_thresholded", "after visibility threshold"), ("segments", "segments"),
                       ("supervised_rows", "supervised rows"), ("train", "train"), ("purged", "purged"),
                       ("test", "test")):
        print(f"{label:<28}{counts[key]:>10}")


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.command == "synth":
        paths = pipeline.run_synth(config)
        print(f"wrote {paths['csv']} ({config.synth_minutes} minutes, seed {config.seed})")
    elif args.command == "prepare":
        prep = pipeline.run_prepare(config)
        _print_counts(prep.counts)
    elif args.command == "train":
        models = pipeline.run_train(config)
        for method, model in models.items():
            detail = (f"best round {model.best_round}" if method == "xgb"
                      else f"best epoch {model.best_epoch} of {len(model.training_log)}")
            print(f"{method}: {detail} -> {pipeline.model_path(config, method)}")
        if not models:
            print("no learned methods requested")
    elif args.command == "evaluate":
        report = pipeline.run_evaluate(config)
        sys.stdout.write(format_report(report))
        print(f"wrote {config.out_dir / config.report_name}")
    elif args.command == "report":
        path = Path(args.report) if args.report else config.out_dir / config.report_name
        if not path.is_file():
            raise pipeline.MissingInput(f"report {path} not found")
        sys.stdout.write(format_report(read_report(path)))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"fognow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"fognow: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
