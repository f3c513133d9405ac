"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
The output directory defaults to ``run.output_dir`` resolved against
``$SIGMOIDF1_OUTPUT_ROOT`` when that variable is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from filelock import FileLock, Timeout

from . import config as config_mod
from .config import ConfigError
from .data import DatasetFormatError, generate_synthetic, save_multilabel_file
from .experiments import (
    ReportIntegrityError,
    evaluate_runs,
    grid_search,
    load_report,
    render_table,
    train_runs,
    write_report,
)
from .model import CheckpointError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
ENV_OUTPUT_ROOT = "SIGMOIDF1_OUTPUT_ROOT"

log = logging.getLogger("sigmoidf1")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigmoidf1", description="sigmoidF1 experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-data": "write a synthetic dataset file and its summary",
        "train": "train every (loss, seed) run and write checkpoints",
        "eval": "evaluate checkpoints at every configured threshold",
        "run": "train, evaluate and report in one go",
        "grid": "(beta, eta) sensitivity grid for sigmoidF1",
        "report": "render the comparison table of a finished run directory",
    }
    for name, help_text in helps.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", type=Path, help="INI config file (defaults apply when omitted)")
        p.add_argument("-s", "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted config key, e.g. train.epochs=10 (repeatable)")
        p.add_argument("-o", "--out", type=Path, help="output directory (overrides run.output_dir)")
    return parser


def resolve_output(cfg, out_arg) -> Path:
    if out_arg is not None:
        return out_arg
    root = os.environ.get(ENV_OUTPUT_ROOT)
    out = Path(cfg.run.output_dir)
    return Path(root) / out if root and not out.is_absolute() else out


def _gen_data(cfg, out: Path) -> int:
    if cfg.data.path:
        raise UsageError("gen-data writes synthetic data; unset data.path")
    ds = generate_synthetic(cfg.data.synth())
    save_multilabel_file(ds, out / "dataset.txt")
    summary = {"n": ds.n, "C": ds.n_classes, "d": ds.n_features, "mean_label_count": ds.mean_label_count(),
               "label_frequency": [float(v) for v in ds.Y.mean(axis=0)], "path": "dataset.txt"}
    text = json.dumps(summary, sort_keys=True)
    (out / "summary.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def _report(out: Path) -> int:
    report = load_report(out)
    table = render_table(report.aggregates)
    (out / "table.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def dispatch(args) -> int:
    try:
        cfg = config_mod.load(args.config, config_mod.parse_overrides(args.overrides))
    except (ConfigError, OSError) as err:
        raise UsageError(str(err)) from None
    out = resolve_output(cfg, args.out)
    if args.command == "report":
        if not (out / "runs.jsonl").exists():
            raise FileNotFoundError(f"no runs found: searched {out.resolve()} for runs.jsonl")
        return _report(out)
    out.mkdir(parents=True, exist_ok=True)
    config_mod.save(cfg, out / "config.ini")
    try:
        with FileLock(str(out / ".lock"), timeout=0):
            if args.command == "gen-data":
                return _gen_data(cfg, out)
            if args.command == "train":
                status = train_runs(cfg, out)
                for name, state in status.items():
                    print(f"{name}: {state}")
                return EXIT_OK
            if args.command == "eval":
                records = evaluate_runs(cfg, out)
                write_report(records, out)
                for rec in records:
                    if rec["status"] == "ok" and rec["split"] == "test":
                        print(json.dumps({k: rec[k] for k in ("loss", "seed", "threshold", "weightedF1",
                                                               "microF1", "macroF1", "precision", "mAP")}))
                return EXIT_OK
            if args.command == "run":
                train_runs(cfg, out)
                write_report(evaluate_runs(cfg, out), out)
                return _report(out)
            if args.command == "grid":
                grid = grid_search(cfg, out=out)
                print(grid.to_csv("val"), end="")
                print(f"best: beta={grid.best[0]!r} eta={grid.best[1]!r}" if grid.best else "best: none")
                return EXIT_OK
    except Timeout:
        raise UsageError(f"output directory {out} is locked by another invocation") from None
    raise UsageError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except UsageError as err:
        print(f"sigmoidf1: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NotImplementedError as err:
        print(f"sigmoidf1: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, DatasetFormatError, ReportIntegrityError, FileNotFoundError, RuntimeError) as err:
        print(f"sigmoidf1: error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
