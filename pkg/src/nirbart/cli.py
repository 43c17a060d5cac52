"""Command-line pipeline: train, predict, cv, select, interact, pca, report.

Every subcommand reads a config plus data paths and writes its artifacts and
reports (delimited files, JSON, and rendered figures) into ``--out``. One
master seed governs every randomized stage. Exit codes: 0 ok, 2 usage error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import dataio, figures, interaction, metrics, preprocess, selection, tuning
from .errors import ConfigError, DataError, NirbartError, NumericError
from .sampler import (
    BartConfig,
    ClassifierDraws,
    fit_multinomial,
    predict_class_probs,
    predict_labels,
)

log = logging.getLogger("nirbart")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(doc) - {"bart", "grid"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)} (expected 'bart'/'grid')")
    return doc


def _bart_config(args, doc: dict) -> BartConfig:
    cfg = BartConfig.from_jsonable(doc.get("bart", {}))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "sparse", False):
        cfg.sparse = True
    cfg.validate()
    return cfg


def _load_dataset(args, need_labels: bool) -> dataio.Dataset:
    if args.data is None:
        raise ConfigError("--data is required")
    dataset = dataio.load_csv(args.data, label_col=args.label_col,
                              adulteration_col=args.adulteration_col)
    if need_labels and dataset.y is None:
        raise ConfigError("this command needs labels: pass --label-col or --adulteration-col")
    return dataset


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _path(out: str, name: str) -> str:
    return os.path.join(out, name)


def _write_predictions(out, probs, labels_pred, columns_labels):
    header = ["row"] + [f"prob_{lab}" for lab in columns_labels] + ["predicted"]
    rows = []
    for i in range(probs.shape[0]):
        rows.append([i + 1] + [float(v) for v in probs[i]] + [int(labels_pred[i])])
    dataio.write_csv(_path(out, "predictions.csv"), header, rows)


def _evaluate(out, draws: ClassifierDraws, X, y, model_name="BART"):
    probs = predict_class_probs(draws, X)
    predicted = predict_labels(probs)
    _write_predictions(out, probs.probs, predicted, probs.labels)
    cm = metrics.confusion(y, predicted, labels=probs.labels)
    report = metrics.multiclass_report(cm)
    report.log_loss = metrics.log_loss(probs.probs, y, labels=probs.labels)
    dataio.write_metrics_csv(report, _path(out, "metrics.csv"), model_name=model_name)
    dataio.atomic_write_json(_path(out, "metrics.json"), report.to_jsonable())
    dataio.write_confusion_csv(cm.counts, cm.labels, _path(out, "confusion.csv"))
    figures.confusion_heatmap(cm, _path(out, "confusion.png"))
    log.info("macro accuracy %.4f, overall accuracy %.4f",
             report.macro["accuracy"], report.overall_accuracy)
    return report


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    out = _outdir(args)
    doc = _read_config(args.config)
    cfg = _bart_config(args, doc)
    dataset = _load_dataset(args, need_labels=True)
    log.info("loaded %d rows x %d predictors from %s", dataset.n, dataset.p, dataset.source)

    counts = dataset.class_counts()
    log.info("class histogram: %s", ", ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
    dataio.write_csv(_path(out, "class_histogram.csv"), ["class", "count"],
                     [[lab, counts[lab]] for lab in sorted(counts)])
    figures.class_histogram(counts, _path(out, "class_histogram.png"))

    X, y = dataset.X, dataset.y
    train_rows = np.arange(dataset.n)
    test_rows = np.array([], dtype=int)
    if args.test_frac > 0:
        plan = preprocess.stratified_split(y, args.test_frac, k_folds=1, seed=cfg.seed)
        train_rows, test_rows = plan.calibration, plan.test
        dataio.atomic_write_json(_path(out, "split.json"), {
            "seed": cfg.seed, "test_frac": args.test_frac,
            "calibration": train_rows.tolist(), "test": test_rows.tolist(),
        })
    X_train, y_train = X[train_rows], y[train_rows]
    if args.smote:
        X_train, y_train = preprocess.smote(X_train, y_train, seed=cfg.seed)
        log.info("SMOTE expanded training set to %d rows", X_train.shape[0])

    log.info("fitting stacked probit model: m=%d ndpost=%d nskip=%d sparse=%s",
             cfg.m, cfg.ndpost, cfg.nskip, cfg.sparse)
    draws = fit_multinomial(X_train, y_train, cfg)
    artifact = dataio.ModelArtifact(kind="multinomial", draws=draws,
                                    columns=dataset.columns, config=cfg)
    dataio.save_model(artifact, _path(out, "model.json"))
    log.info("model saved to %s", _path(out, "model.json"))

    if test_rows.size:
        _evaluate(out, draws, X[test_rows], y[test_rows])
    return EXIT_OK


def cmd_predict(args) -> int:
    out = _outdir(args)
    artifact = dataio.load_model(args.model)
    if artifact.kind != "multinomial":
        raise DataError(f"predict expects a multinomial model, got {artifact.kind!r}")
    dataset = _load_dataset(args, need_labels=False)
    dataset = dataset.subset_columns(artifact.columns)
    if dataset.y is not None:
        _evaluate(out, artifact.draws, dataset.X, dataset.y)
    else:
        probs = predict_class_probs(artifact.draws, dataset.X)
        _write_predictions(out, probs.probs, predict_labels(probs), probs.labels)
    return EXIT_OK


def cmd_cv(args) -> int:
    out = _outdir(args)
    doc = _read_config(args.config)
    cfg = _bart_config(args, doc)
    grid = tuning.Grid.from_jsonable(doc.get("grid", {}))
    if args.folds is not None:
        grid.folds = args.folds
    if args.seed is not None:
        grid.seed = args.seed
    grid.validate()
    dataset = _load_dataset(args, need_labels=True)

    def progress(index, total, cell):
        log.info("cell %d/%d done: mean log-loss %.5f", index + 1, total, cell.mean_loss)

    result = tuning.grid_search(dataset.X, dataset.y, grid, base_config=cfg,
                                apply_smote=args.smote, n_jobs=args.jobs,
                                progress=progress)

    header = ["m", "k", "power", "base", "mean_log_loss"] + [
        f"fold{f + 1}" for f in range(grid.folds)
    ] + ["winner"]
    rows = []
    detail = []
    timings = []
    for i, cell in enumerate(result.cells):
        c = cell.config
        rows.append([c.m, float(c.k), float(c.power), float(c.base),
                     float(cell.mean_loss)] + [float(v) for v in cell.fold_losses]
                    + [int(i == result.winner_index)])
        detail.append({
            "m": c.m, "k": c.k, "power": c.power, "base": c.base,
            "fold_log_loss": [float(v) for v in cell.fold_losses],
            "mean_log_loss": float(cell.mean_loss),
            "winner": i == result.winner_index,
        })
        timings.append({"cell": i, "elapsed_seconds": cell.elapsed_seconds})
    dataio.write_csv(_path(out, "tune_results.csv"), header, rows)
    dataio.atomic_write_json(_path(out, "tune_results.json"), detail)
    # wall-clock timings are inherently non-deterministic, so they live in a
    # sidecar rather than the result files
    dataio.atomic_write_json(_path(out, "timings.json"), timings)
    best = result.winner.config
    dataio.atomic_write_json(_path(out, "best_config.json"), {"bart": best.to_jsonable()})
    log.info("winner: m=%d k=%g power=%g base=%g (mean log-loss %.5f)",
             best.m, best.k, best.power, best.base, result.winner.mean_loss)
    return EXIT_OK


def cmd_select(args) -> int:
    out = _outdir(args)
    artifact = dataio.load_model(args.model)
    draws = artifact.draws
    if artifact.kind != "multinomial":
        raise DataError(f"select expects a multinomial model, got {artifact.kind!r}")
    columns = artifact.columns

    if args.method == "usage":
        summary = selection.usage_frequencies(draws.varcount_total())
        chosen, cumulative = selection.select_top(summary, args.top)
        dataio.write_usage_csv(summary, columns, _path(out, "selection.csv"),
                               selected=set(chosen.tolist()))
        figures.usage_scatter(summary, _path(out, "usage.png"))
        selected_names = [columns[j] for j in chosen.tolist()]
        dataio.atomic_write_json(_path(out, "selected_variables.json"), {
            "method": "usage", "top": args.top, "variables": selected_names,
            "cumulative_proportion": cumulative,
            "skipped_zero_split_draws": summary.n_draws_skipped,
        })
        log.info("top %d variables cover %.4f of total usage", args.top, cumulative)
    elif args.method == "sparse":
        summary = selection.sparse_selection(draws)
        if not 1 <= args.stage <= summary.n_stages:
            raise ConfigError(f"--stage must be in 1..{summary.n_stages}")
        dataio.write_sparse_csv(summary, columns, _path(out, "selection.csv"))
        chosen = summary.selected[args.stage - 1]
        selected_names = [columns[j] for j in chosen.tolist()]
        dataio.atomic_write_json(_path(out, "selected_variables.json"), {
            "method": "sparse", "stage": args.stage,
            "threshold": summary.threshold, "variables": selected_names,
            "flag": summary.flags[args.stage - 1],
        })
        log.info("stage %d selects %d variables above 1/p = %.6f",
                 args.stage, len(selected_names), summary.threshold)
    else:
        raise ConfigError(f"unknown selection method {args.method!r}")

    if args.data:
        dataset = _load_dataset(args, need_labels=False)
        reduced = dataset.subset_columns(selected_names)
        dataio.write_dataset_csv(reduced, _path(out, "reduced_dataset.csv"))
        log.info("reduced dataset with %d columns written", reduced.p)
    return EXIT_OK


def cmd_interact(args) -> int:
    out = _outdir(args)
    artifact = dataio.load_model(args.model)
    draws = artifact.draws
    grid = draws.stages[0].grid if artifact.kind == "multinomial" else draws.grid
    matrix = interaction.co_occurrence(draws, grid)
    if matrix.is_empty:
        log.warning("all-leaf posterior: no branch pairs to report")
    net = interaction.build_network(matrix, threshold=args.threshold,
                                    names=artifact.columns)
    dataio.write_interaction_csv(matrix.weights, artifact.columns,
                                 _path(out, "interaction_matrix.csv"))
    interaction.export_network(net, _path(out, "network.dot"), fmt="dot")
    interaction.export_network(net, _path(out, "network.json"), fmt="json")
    figures.network_diagram(net, _path(out, "network.png"))
    log.info("network: %d nodes, %d edges at threshold %g",
             net.n_nodes, len(net.edges), args.threshold)
    return EXIT_OK


def cmd_pca(args) -> int:
    out = _outdir(args)
    dataset = _load_dataset(args, need_labels=False)
    model = preprocess.fit_pca(dataset.X, standardize=args.standardize)
    q = min(args.components, model.q)
    scores = preprocess.transform_pca(model, dataset.X, q)

    header = ["component", "explained_fraction", "cumulative_fraction"]
    cum = np.cumsum(model.explained)
    rows = [[i + 1, float(model.explained[i]), float(cum[i])] for i in range(model.q)]
    dataio.write_csv(_path(out, "pca_variance.csv"), header, rows)
    score_header = [f"PC{i + 1}" for i in range(q)]
    score_rows = [[float(v) for v in scores[i]] for i in range(scores.shape[0])]
    if dataset.y is not None:
        score_header.append(dataset.label_column or "class")
        for i in range(len(score_rows)):
            score_rows[i].append(int(dataset.y[i]))
    dataio.write_csv(_path(out, "pca_scores.csv"), score_header, score_rows)
    figures.pca_variance(model.explained, _path(out, "pca_variance.png"))
    log.info("PC1..PC3 explain %s%%",
             ", ".join(f"{100 * v:.2f}" for v in model.explained[:3]))
    return EXIT_OK


def cmd_report(args) -> int:
    out = _outdir(args)
    artifact = dataio.load_model(args.model)
    if artifact.kind != "multinomial":
        raise DataError(f"report expects a multinomial model, got {artifact.kind!r}")
    dataset = _load_dataset(args, need_labels=True)
    dataset = dataset.subset_columns(artifact.columns)
    _evaluate(out, artifact.draws, dataset.X, dataset.y)

    counts = dataset.class_counts()
    dataio.write_csv(_path(out, "class_histogram.csv"), ["class", "count"],
                     [[lab, counts[lab]] for lab in sorted(counts)])
    figures.class_histogram(counts, _path(out, "class_histogram.png"))

    classes = sorted(counts)
    spectrum_header = ["variable"] + [f"mean_class_{lab}" for lab in classes]
    class_means = {lab: dataset.X[dataset.y == lab].mean(axis=0) for lab in classes}
    spectrum_rows = [
        [name] + [float(class_means[lab][j]) for lab in classes]
        for j, name in enumerate(dataset.columns)
    ]
    dataio.write_csv(_path(out, "mean_spectra.csv"), spectrum_header, spectrum_rows)
    figures.mean_spectra(dataset.X, dataset.y, dataset.columns,
                         _path(out, "mean_spectra.png"))

    summary = selection.usage_frequencies(artifact.draws.varcount_total())
    top, cumulative = selection.select_top(summary, min(5, summary.p))
    dataio.write_csv(
        _path(out, "usage_top.csv"),
        ["variable", "mean_proportion"],
        [[artifact.columns[j], float(summary.mean[j])] for j in top.tolist()],
    )
    dataio.write_usage_csv(summary, artifact.columns, _path(out, "usage_full.csv"))
    figures.usage_scatter(summary, _path(out, "usage.png"))
    log.info("top variables cover %.4f of split usage", cumulative)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def _add_data_flags(sub, required=True):
    sub.add_argument("--data", required=required, help="CSV data path")
    sub.add_argument("--label-col", help="integer class-label column")
    sub.add_argument("--adulteration-col",
                     help="adulteration-percentage column (collapsed to 3 classes)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nirbart",
        description="Bayesian tree-ensemble classification for spectral data",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a stacked probit model")
    _add_data_flags(p)
    p.add_argument("--config", help="JSON config ({'bart': {...}})")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--sparse", action="store_true", help="activate the sparse split prior")
    p.add_argument("--test-frac", type=float, default=0.0,
                   help="stratified holdout fraction (default 0: train on all rows)")
    p.add_argument("--smote", action="store_true",
                   help="oversample minority classes in the training set")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score new rows with a saved model")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="grid search with stratified cross-validation")
    _add_data_flags(p)
    p.add_argument("--config", help="JSON config ({'bart': {...}, 'grid': {...}})")
    p.add_argument("--seed", type=int)
    p.add_argument("--sparse", action="store_true")
    p.add_argument("--folds", type=int, help="fold count (overrides config)")
    p.add_argument("--smote", action="store_true", help="SMOTE on training folds")
    p.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("select", help="variable selection from a fitted model")
    p.add_argument("--model", required=True)
    _add_data_flags(p, required=False)
    p.add_argument("--method", choices=("usage", "sparse"), default="usage")
    p.add_argument("--top", type=int, default=3, help="usage method: variables to keep")
    p.add_argument("--stage", type=int, default=1, help="sparse method: conditional stage")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("interact", help="variable-interaction matrix and network")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=interaction.DEFAULT_EDGE_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interact)

    p = sub.add_parser("pca", help="principal-component summary of a dataset")
    _add_data_flags(p)
    p.add_argument("--components", type=int, default=7)
    p.add_argument("--standardize", action="store_true",
                   help="scale columns to unit variance first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("report", help="metrics, confusion, and usage summaries")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NirbartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
