"""Command-line entry point: ``chd <verb> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import __version__
from . import pipeline as pl
from .errors import ChdError, ConfigError

log = logging.getLogger("chd")

VERBS = {
    "eda": "load, clean and summarise the dataset",
    "select": "rank features with ReliefF on the training partition",
    "train": "fit the classifier roster and save the models",
    "evaluate": "score previously saved models on the held-out partition",
    "run": "full pipeline: eda, selection, training, evaluation and report",
    "demo-imaging": "exercise the imaging math on synthetic data",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chd", description="Coronary heart disease prediction pipeline.")
    parser.add_argument("--version", action="version", version=f"chd {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    for verb, help_text in VERBS.items():
        p = sub.add_parser(verb, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if verb == "demo-imaging":
            p.add_argument("--k", type=int, dest="img_k", help="OMP sparsity per patch")
            p.add_argument("--tau", type=float, help="coefficient threshold")
            continue
        p.add_argument("--input", help="CSV file (default: the bundled 500-record fixture)")
        p.add_argument("--ratio", type=float, help="training fraction of each class")
        if verb != "eda":
            p.add_argument("--select", choices=("knn", "literal"))
            p.add_argument("--top", type=int, help="keep the N highest-weighted features")
            p.add_argument("--m", type=int, help="number of focal samples")
            p.add_argument("--k", type=int, help="nearest hits and misses per focal sample")
        if verb in ("train", "evaluate", "run"):
            p.add_argument("--classifiers", help="comma-separated classifier names")
            p.add_argument("--threshold", type=float, help="probability cut for label 1")
        if verb in ("train", "run"):
            p.add_argument("--timings", help="write per-stage wall-clock seconds to this JSON file")
        if verb == "evaluate":
            p.add_argument("--models", dest="model_dir", help="directory written by 'chd train'")
    return parser


def _overrides(args) -> dict:
    keys = ("input", "ratio", "seed", "select", "top", "m", "k", "threshold", "out", "timings")
    values = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "classifiers", None):
        values["classifiers"] = [c.strip() for c in args.classifiers.split(",") if c.strip()]
    return values


def _print_lines(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _run_verb(args) -> int:
    try:
        cfg = pl.load_config(args.config, **_overrides(args))
    except ConfigError as exc:
        raise pl.StageError("config", exc) from exc

    if args.verb == "demo-imaging":
        img = cfg.imaging
        if args.seed is not None:
            img = replace(img, seed=args.seed)
        if args.img_k is not None:
            img = replace(img, k=args.img_k)
        if args.tau is not None:
            img = replace(img, tau=args.tau)
        try:
            result = pl.demo_imaging(img, cfg.out)
        except (ChdError, ValueError, OSError) as exc:
            raise pl.StageError("imaging", exc) from exc
        _print_lines("\n".join(result["lines"]))
        return 0

    report = pl.RunReport(threshold=cfg.threshold)
    stages = pl._Stages(report)
    if args.verb == "eda":
        data = stages("clean", pl.dc.clean, stages("load", pl._load, cfg), cfg.clean_policy)
        report.eda = stages("eda", pl.dc.eda_report, data)
        files = pl.eda_files(report.eda)
        _emit(files, cfg.out)
        _print_lines(report.eda.to_text())
        return 0

    if args.verb == "select":
        pl.prepare(cfg, report, stages)
        _emit(pl.selection_files(report.weights, report.selected), cfg.out)
        _print_lines(report.weights.to_text())
        return 0

    if args.verb == "evaluate":
        model_dir = args.model_dir or cfg.out
        report = pl.evaluate_saved(cfg, model_dir)
        _emit(pl.metric_files(report.rows), cfg.out)
        _print_lines(pl.metric_files(report.rows)["metrics.csv"])
        return 0

    # train and run share the same work; train skips evaluation output.
    if args.verb == "train":
        _, split, selected = pl.prepare(cfg, report, stages)
        report.models = stages("train", pl.train_models, cfg, split.train.select(selected))
        report.traces = {n: list(m.loss_trace) for n, m in report.models.items()
                         if getattr(m, "loss_trace", None)}
        files = {f"loss_{n}.txt": pl.format_trace(t) for n, t in report.traces.items()}
        files["manifest.json"] = pl.manifest(report)
        files.update(pl.selection_files(report.weights, report.selected))
        _emit(files, cfg.out, report.models)
        _print_lines(f"trained {len(report.models)} models on {len(selected)} features into {cfg.out}")
    else:
        report = pl.run_pipeline(cfg)
        try:
            pl.emit_report(report, cfg.out)
        except OSError as exc:
            raise pl.StageError("report", exc) from exc
        _print_lines(pl._summary(report))
    if cfg.timings:
        pl.write_timings(report, cfg.timings)
    return 0


def _emit(files, out, models=None):
    try:
        pl.write_files(files, out, models)
    except OSError as exc:
        raise pl.StageError("report", exc) from exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run_verb(args)
    except pl.StageError as exc:
        print(f"chd: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
