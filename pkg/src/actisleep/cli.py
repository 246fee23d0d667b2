"""Batch command line: synth | ingest | segment | dataset | train | grid | eval | roc.

Every command writes exactly one JSON run manifest recording the resolved
configuration, the seeds, and SHA-256 digests of its inputs and outputs.
Exit status is 0 on success, 2 on a usage error and 1 on a runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._random import derive_seed
from .dataset import (DEFAULT_CUTPOINTS, PARTITIONS, DatasetSplit, records_from_csv,
                      records_to_csv, subject_split, build_records)
from .estimator import SleepQualityClassifier
from .evaluation import emit_report, evaluate, plot_roc, roc_csv
from .ingest import aggregate_to_minutes, parse_epoch_csv, serialize_epoch_csv
from .models import ARCHS, REPRS, ModelSpec, paper_best_spec
from .pipeline import fit_model, prepare, representation
from .segmentation import (SegmentationConfig, detect_sleep_periods, periods_from_csv,
                           periods_to_csv)
from .synth import SIGNALS, CohortSpec, generate
from .training import GridSpec, grid_search, paper_grid, TrainConfig

log = logging.getLogger("actisleep")


class UsageError(Exception):
    """Bad combination of options that argparse cannot catch."""


# -- helpers -----------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
        for f in files:
            out[str(f)] = _sha256(f)
    return out


def _load_series(path, vertical_axis: str):
    data = Path(path).read_bytes()
    return [aggregate_to_minutes(s) for s in parse_epoch_csv(data, vertical_axis)]


def _write(path: Path, text: str | bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, str):
        text = text.encode("utf-8")
    path.write_bytes(text)
    return path


def _load_partitions(data_dir: Path, seed: int) -> DatasetSplit:
    parts = {}
    for name in PARTITIONS:
        path = data_dir / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; run the dataset command first")
        parts[name] = records_from_csv(path.read_text())
    assignment = {r.subject_id: name for name in PARTITIONS for r in parts[name]}
    return DatasetSplit(parts["train"], parts["validation"], parts["test"], seed, assignment)


def _spec_from_args(args, arch: str) -> ModelSpec:
    overrides = {k: getattr(args, k) for k in
                 ("hidden", "filters", "filter_length", "pool_length", "slots",
                  "dropout", "minibatch") if getattr(args, k, None) is not None}
    if args.input_repr:
        overrides["input_repr"] = args.input_repr
    if arch == "lstm" and args.hard_tanh:
        overrides["hard_tanh"] = True
    if arch == "cnn" and args.conv_bias:
        overrides["conv_bias"] = True
    return paper_best_spec(arch, **overrides)


def _train_kwargs(args) -> dict:
    return {"max_epochs": args.max_epochs, "patience": args.patience,
            "learning_rate": args.learning_rate}


def _scores_csv(ids, labels, scores) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("subject_id", "label", "score"))
    for i, y, s in zip(ids, labels, scores):
        writer.writerow([i, int(y), repr(float(s))])
    return buf.getvalue()


def _read_column(path, column: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValueError(f"{path}: no {column!r} column")
        return np.array([float(row[column]) for row in reader])


# -- commands ----------------------------------------------------------------
# Each returns (inputs, outputs, seeds) for the manifest.

def cmd_synth(args):
    spec = CohortSpec(n_subjects=args.subjects, days=args.days, seed=args.seed,
                      signal=args.signal, noise_level=args.noise_level,
                      vertical_axis=args.vertical_axis)
    cohort = generate(spec)
    out = Path(args.out_dir)
    files = [_write(out / "cohort.csv", serialize_epoch_csv(cohort.series)),
             _write(out / "ground_truth.csv", cohort.truth_csv())]
    return [], files, {"cohort": args.seed}


def cmd_ingest(args):
    series = parse_epoch_csv(Path(args.input).read_bytes(), args.vertical_axis,
                             args.gap_limit)
    minutes = [aggregate_to_minutes(s) for s in series]
    out = _write(Path(args.out), serialize_epoch_csv(minutes))
    log.info("%d series, %d minutes", len(minutes), sum(len(s) for s in minutes))
    return [args.input], [out], {}


def cmd_segment(args):
    cfg = SegmentationConfig(sleep_count_threshold=args.sleep_threshold)
    rows = []
    for s in _load_series(args.input, args.vertical_axis):
        rows.extend((s.subject_id, p) for p in detect_sleep_periods(s, cfg))
    out = _write(Path(args.out), periods_to_csv(rows))
    return [args.input], [out], {}


def cmd_dataset(args):
    series = _load_series(args.input, args.vertical_axis)
    inputs = [args.input]
    if args.periods:
        inputs.append(args.periods)
        given: dict[str, list] = {}
        for subject, p in periods_from_csv(Path(args.periods).read_text()):
            given.setdefault(subject, []).append(p)
        if len({s.subject_id for s in series}) != len(series):
            raise ValueError("--periods needs one contiguous block per subject")
        records = [r for s in series for r in build_records(s, given.get(s.subject_id, []))]
    else:
        cfg = SegmentationConfig(sleep_count_threshold=args.sleep_threshold)
        records = [r for s in series for r in build_records(s, detect_sleep_periods(s, cfg))]
    seed = derive_seed(args.seed, "split")
    split = subject_split(records, seed)
    out = Path(args.out_dir)
    files = [_write(out / f"{name}.csv", records_to_csv(split.partition(name)))
             for name in PARTITIONS]
    return inputs, files, {"split": seed}


def cmd_train(args):
    data_dir = Path(args.data)
    partitions = _load_partitions(data_dir, args.seed)
    spec = _spec_from_args(args, args.arch)
    data = prepare([], args.seed, spec.input_repr, args.max_len, not args.no_smote,
                   args.k_neighbors, partitions=partitions)
    est = fit_model(spec, data, args.seed, **_train_kwargs(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "model.ckpt"
    est.save(model_path, {"input_repr": spec.input_repr, "max_len": data.max_len})
    history = io.StringIO()
    writer = csv.writer(history, lineterminator="\n")
    writer.writerow(("epoch", "train_loss", "val_loss"))
    for h in est.history_:
        writer.writerow([h["epoch"], repr(h["train_loss"]), repr(h["val_loss"])])
    test = partitions.test
    scores = est.predict_proba(data.split.X_test)[:, 1]
    files = [model_path, _write(out / "history.csv", history.getvalue()),
             _write(out / "scores.csv", _scores_csv([r.subject_id for r in test],
                                                    data.split.y_test, scores))]
    args.summary = {"spec": spec.to_dict(), "epochs_run": est.n_epochs_,
                    "best_epoch": est.best_epoch_, "max_len": data.max_len,
                    "n_synthetic": data.n_synthetic,
                    "test_metrics": evaluate(scores, data.split.y_test).row()}
    return [data_dir], files, {"smote": derive_seed(args.seed, "smote"),
                               "train": derive_seed(args.seed, f"train-{args.arch}")}


def _grid_from_args(args) -> GridSpec:
    if args.grid in (None, "paper"):
        return paper_grid(args.arch)
    axes = json.loads(Path(args.grid).read_text())
    if not isinstance(axes, dict):
        raise ValueError("grid file must hold an object of axis -> list of values")
    return GridSpec({k: tuple(v) for k, v in axes.items()})


def cmd_grid(args):
    data_dir = Path(args.data)
    partitions = _load_partitions(data_dir, args.seed)
    base = {k: v for k, v in _spec_from_args(args, args.arch).to_dict().items()
            if k not in ("arch",)}
    grid = _grid_from_args(args)
    base = {k: v for k, v in base.items() if k not in grid.axes}
    data = prepare([], args.seed, base["input_repr"], args.max_len, not args.no_smote,
                   args.k_neighbors, partitions=partitions)
    split = data.split
    scale = float(np.sqrt(np.mean(split.X_train ** 2))) or 1.0
    scaled = type(split)(split.X_train / scale, split.y_train, split.X_val / scale,
                         split.y_val, split.X_test / scale, split.y_test)
    seed = derive_seed(args.seed, f"grid-{args.arch}")
    cfg = TrainConfig(args.max_epochs, args.patience, seed,
                      learning_rate=args.learning_rate)
    result = grid_search(args.arch, grid, scaled, cfg, base, jobs=args.jobs)
    out = Path(args.out_dir)
    buf = io.StringIO()
    columns = list(result.rows[0])
    writer = csv.DictWriter(buf, columns, lineterminator="\n")
    writer.writeheader()
    for row in result.rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    files = [_write(out / "grid.csv", buf.getvalue())]
    est = SleepQualityClassifier(**result.best.spec.to_dict())
    est.network_, est.scale_, est.classes_ = result.best.model, scale, np.array([0, 1])
    est.n_features_in_ = split.X_train.shape[1]
    est.save(out / "best.ckpt", {"input_repr": base["input_repr"], "max_len": data.max_len})
    files.append(out / "best.ckpt")
    if result.test_report is not None:
        files += list(emit_report(result.test_report, out, args.arch).values())
    args.summary = {"best": result.best.spec.to_dict(), "points": len(grid)}
    return [data_dir], files, {"grid": seed}


def _eval_inputs(args):
    if args.model:
        if not args.data:
            raise UsageError("--model needs --data")
        est = SleepQualityClassifier.load(args.model)
        partitions = _load_partitions(Path(args.data), args.seed)
        test = partitions.partition(args.partition)
        X = representation(test, est.meta_.get("input_repr", "raw_padded"),
                           est.meta_.get("max_len", est.n_features_in_), DEFAULT_CUTPOINTS)
        return ([args.model, args.data], est.predict_proba(X)[:, 1],
                np.array([r.label for r in test]))
    if not args.scores:
        raise UsageError("give --scores (and optionally --labels) or --model with --data")
    scores = _read_column(args.scores, "score")
    labels = _read_column(args.labels or args.scores, "label")
    inputs = [args.scores] + ([args.labels] if args.labels else [])
    return inputs, scores, labels.astype(int)


def cmd_eval(args):
    inputs, scores, labels = _eval_inputs(args)
    report = evaluate(scores, labels, args.threshold)
    files = emit_report(report, Path(args.out_dir), args.name, plot=args.plot)
    args.summary = report.row()
    return inputs, list(files.values()), {}


def cmd_roc(args):
    inputs, scores, labels = _eval_inputs(args)
    report = evaluate(scores, labels)
    out = Path(args.out_dir)
    files = [_write(out / "roc.csv", roc_csv(report))]
    if args.plot:
        plot_roc(report, out / "roc.svg", f"ROC: {args.name}")
        files.append(out / "roc.svg")
    args.summary = {"au_roc": report.auc}
    return inputs, files, {}


# -- parser ------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="root seed for every random stage")
    p.add_argument("--config", help="JSON object of option values; flags override it")
    p.add_argument("--manifest", help="manifest path (default: next to the outputs)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _model_options(p: argparse.ArgumentParser, grid: bool = False):
    p.add_argument("--data", required=True, help="directory written by the dataset command")
    p.add_argument("--arch", required=True, choices=ARCHS)
    p.add_argument("--repr", dest="input_repr", choices=REPRS)
    p.add_argument("--max-len", type=int, help="fixed input length (default: longest training record)")
    p.add_argument("--hidden", type=int)
    p.add_argument("--filters", type=int)
    p.add_argument("--filter-length", type=int)
    p.add_argument("--pool-length", type=int)
    p.add_argument("--slots", type=int, help="pseudo-sequence width S")
    p.add_argument("--dropout", type=float)
    p.add_argument("--minibatch", type=int)
    p.add_argument("--hard-tanh", action="store_true", help="LSTM cell activation hard_tanh")
    p.add_argument("--conv-bias", action="store_true", help="CNN filters get a bias")
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--no-smote", action="store_true")
    p.add_argument("--k-neighbors", type=int, default=5)
    p.add_argument("--out-dir", required=True)
    if grid:
        p.add_argument("--grid", help="'paper' (default) or a JSON file of axis -> values")
        p.add_argument("--jobs", type=int, default=1, help="parallel grid points")


def _eval_options(p: argparse.ArgumentParser):
    p.add_argument("--scores", help="CSV with a 'score' column (and 'label' unless --labels)")
    p.add_argument("--labels", help="CSV with a 'label' column")
    p.add_argument("--model", help="checkpoint written by train or grid")
    p.add_argument("--data", help="dataset directory, used with --model")
    p.add_argument("--partition", choices=PARTITIONS, default="test")
    p.add_argument("--name", default="model", help="row name in metrics.csv")
    p.add_argument("--plot", action="store_true", help="also write roc.svg")
    p.add_argument("--out-dir", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actisleep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic cohort with ground truth")
    _common(p)
    p.add_argument("--subjects", type=int, default=92)
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--signal", choices=SIGNALS, default="nonlinear")
    p.add_argument("--noise-level", type=float, default=0.5)
    p.add_argument("--vertical-axis", choices=("x", "y", "z"), default="y")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate an epoch CSV and aggregate it to minutes")
    _common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vertical-axis", choices=("x", "y", "z"), default="y")
    p.add_argument("--gap-limit", type=float, default=5.0, help="longest imputed gap in minutes")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="detect sleep periods and label their quality")
    _common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vertical-axis", choices=("x", "y", "z"), default="y")
    p.add_argument("--sleep-threshold", type=int, default=0)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("dataset", help="build awake-segment records and a subject split")
    _common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--periods", help="periods CSV from segment (default: segment again)")
    p.add_argument("--vertical-axis", choices=("x", "y", "z"), default="y")
    p.add_argument("--sleep-threshold", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train one architecture")
    _common(p)
    _model_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="grid search one architecture")
    _common(p)
    _model_options(p, grid=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="metrics.csv and roc.csv from scores or a model")
    _common(p)
    _eval_options(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("roc", help="ROC curve points only")
    _common(p)
    _eval_options(p)
    p.set_defaults(func=cmd_roc)
    return parser


def _apply_config(parser: argparse.ArgumentParser, args, argv) -> argparse.Namespace:
    """Reparse with values from ``--config`` as defaults so explicit flags win."""
    if not getattr(args, "config", None):
        return args
    try:
        values = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(values, dict):
        parser.error("config must be a flat JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(values) - known - {"config"})
    if unknown:
        sub.error(f"unknown config keys: {', '.join(unknown)}")
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})
    return parser.parse_args(argv)


def _manifest_path(args, outputs) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out_dir = getattr(args, "out_dir", None)
    if out_dir:
        return Path(out_dir) / "manifest.json"
    return Path(str(outputs[0]) + ".manifest.json")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, args, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            inputs, outputs, seeds = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"actisleep {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"actisleep {args.command}: error: {exc}", file=sys.stderr)
        return 1
    config = {k: v for k, v in vars(args).items() if k not in ("func", "summary")}
    manifest = {
        "command": args.command,
        "argv": argv,
        "version": __version__,
        "config": config,
        "seeds": {"root": args.seed, **seeds},
        "inputs": _digests(inputs),
        "outputs": _digests(outputs),
        "summary": getattr(args, "summary", None),
        "started": started.isoformat(),
        "duration_s": time.perf_counter() - t0,
    }
    path = _manifest_path(args, outputs)
    _write(path, json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
