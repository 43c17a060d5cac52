"""Dataset ingestion, model persistence, and report file writers.

All writers go through an atomic temp-file-plus-rename so an interrupted run
never leaves a partially written artifact. CSV output is UTF-8 with dot
decimal separators regardless of locale; numeric values are written with 12
significant digits.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError
from .metrics import EvalReport
from .preprocess import aggregate_classes
from .sampler import (
    BartConfig,
    BinaryProbitDraws,
    ClassifierDraws,
    RegressionDraws,
)
from .selection import SparseSummary, UsageSummary
from .trees import CutpointGrid, Ensemble, parse_tree, serialize_tree

MODEL_FORMAT = "nirbart-model"
MODEL_VERSION = 1

_FLOAT_FMT = "%.12g"


# ---------------------------------------------------------------------------
# Atomic writers
# ---------------------------------------------------------------------------

def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def write_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, float):
                cells.append("" if math.isnan(value) else _FLOAT_FMT % value)
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """A numeric design matrix plus optional class labels and provenance."""

    X: np.ndarray
    columns: list[str]
    y: np.ndarray | None
    source: str
    checksum: str
    label_column: str | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> dict:
        if self.y is None:
            return {}
        values, counts = np.unique(self.y, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def subset_columns(self, names: list[str]) -> "Dataset":
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise DataError(f"columns not in dataset: {missing}")
        cols = [self.columns.index(n) for n in names]
        return Dataset(
            X=self.X[:, cols], columns=list(names), y=self.y,
            source=self.source, checksum=self.checksum,
            label_column=self.label_column,
        )


def _numeric_column(raw: pd.Series, name: str) -> np.ndarray:
    """Parse one column to float, naming the first offending cell."""
    stripped = raw.str.strip()
    blank = stripped == ""
    if blank.any():
        row = int(np.flatnonzero(blank.to_numpy())[0])
        raise DataError(f"missing value at row {row + 1}, column {name!r}")
    values = pd.to_numeric(stripped, errors="coerce")
    bad = values.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(
            f"non-numeric cell {stripped.iloc[row]!r} at row {row + 1}, column {name!r}"
        )
    return values.to_numpy(dtype=float)


def load_csv(path, label_col: str | None = None,
             adulteration_col: str | None = None) -> Dataset:
    """Load a delimited spectral table.

    Every non-label column must be fully numeric; offending cells are
    reported with 1-based data-row and column coordinates. With
    ``adulteration_col`` the raw percentages are collapsed onto the three
    purity classes; with ``label_col`` the column is read as integer class
    labels.
    """
    if label_col and adulteration_col:
        raise DataError("pass either label_col or adulteration_col, not both")
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    checksum = hashlib.sha256(payload).hexdigest()
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except Exception as exc:
        raise DataError(f"cannot parse CSV {path}: {exc}") from exc
    if frame.shape[0] == 0:
        raise DataError(f"{path} has no data rows")

    target = label_col or adulteration_col
    if target is not None and target not in frame.columns:
        raise DataError(f"column {target!r} not in {path}")

    feature_names = [c for c in frame.columns if c != target]
    if not feature_names:
        raise DataError("no predictor columns left after removing the label column")
    X = np.column_stack([_numeric_column(frame[c], c) for c in feature_names])

    y = None
    if adulteration_col:
        raw = _numeric_column(frame[adulteration_col], adulteration_col)
        labels = np.empty(raw.shape[0], dtype=int)
        for i, level in enumerate(raw.tolist()):
            try:
                labels[i] = aggregate_classes(level)
            except DataError as exc:
                raise DataError(
                    f"row {i + 1}, column {adulteration_col!r}: {exc}"
                ) from exc
        y = labels
    elif label_col:
        values = _numeric_column(frame[label_col], label_col)
        rounded = np.rint(values)
        if np.any(np.abs(values - rounded) > 0):
            raise DataError(f"column {label_col!r} holds non-integer class labels")
        y = rounded.astype(int)
        if y.min() < 1:
            raise DataError(f"class labels must be >= 1, got {int(y.min())}")

    return Dataset(X=X, columns=feature_names, y=y, source=path,
                   checksum=checksum, label_column=target)


def write_dataset_csv(dataset: Dataset, path) -> None:
    header = list(dataset.columns)
    if dataset.y is not None:
        header.append(dataset.label_column or "class")
    rows = []
    for i in range(dataset.n):
        row = [float(v) for v in dataset.X[i]]
        if dataset.y is not None:
            row.append(int(dataset.y[i]))
        rows.append(row)
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Model persistence
# ---------------------------------------------------------------------------

@dataclass
class ModelArtifact:
    """A persisted fit: the draws plus everything needed to reuse them."""

    kind: str  # regression | binary | multinomial
    draws: RegressionDraws | BinaryProbitDraws | ClassifierDraws
    columns: list[str]
    config: BartConfig


def _ensembles_to_records(ensembles: list[Ensemble]) -> list:
    return [
        [serialize_tree(tree) for tree in ens.trees]
        for ens in ensembles
    ]


def _records_to_ensembles(payload) -> list[Ensemble]:
    return [Ensemble([parse_tree(rec) for rec in draw]) for draw in payload]


def _optional_matrix(arr) -> list | None:
    return None if arr is None else np.asarray(arr).tolist()


def _binary_payload(d: BinaryProbitDraws) -> dict:
    return {
        "grid": d.grid.to_jsonable(),
        "trees": _ensembles_to_records(d.ensembles),
        "varcount": d.varcount.tolist(),
        "varprob": _optional_matrix(d.varprob),
        "proposal_varcount": _optional_matrix(d.proposal_varcount),
        "max_fit_gap": d.max_fit_gap,
    }


def _binary_from_payload(obj: dict, cfg: BartConfig) -> BinaryProbitDraws:
    return BinaryProbitDraws(
        ensembles=_records_to_ensembles(obj["trees"]),
        grid=CutpointGrid.from_jsonable(obj["grid"]),
        config=cfg,
        varcount=np.asarray(obj["varcount"], dtype=np.int64),
        varprob=None if obj["varprob"] is None else np.asarray(obj["varprob"]),
        proposal_varcount=None if obj["proposal_varcount"] is None
        else np.asarray(obj["proposal_varcount"], dtype=np.int64),
        max_fit_gap=obj["max_fit_gap"],
    )


def save_model(artifact: ModelArtifact, path) -> None:
    d = artifact.draws
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": artifact.kind,
        "columns": artifact.columns,
        "config": artifact.config.to_jsonable(),
    }
    if artifact.kind == "regression":
        doc["payload"] = {
            "grid": d.grid.to_jsonable(),
            "trees": _ensembles_to_records(d.ensembles),
            "sigmas": d.sigmas.tolist(),
            "y_center": d.y_center,
            "y_scale": d.y_scale,
            "varcount": d.varcount.tolist(),
            "varprob": _optional_matrix(d.varprob),
            "proposal_varcount": _optional_matrix(d.proposal_varcount),
            "max_fit_gap": d.max_fit_gap,
        }
    elif artifact.kind == "binary":
        doc["payload"] = _binary_payload(d)
    elif artifact.kind == "multinomial":
        doc["payload"] = {
            "labels": [int(lab) for lab in d.labels],
            "stages": [_binary_payload(s) for s in d.stages],
            "stage_rows": [rows.tolist() for rows in d.stage_rows],
        }
    else:
        raise DataError(f"unknown model kind {artifact.kind!r}")
    atomic_write_text(path, json.dumps(doc, separators=(",", ":"), allow_nan=False))


def load_model(path) -> ModelArtifact:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(
            f"unsupported model version {doc.get('version')!r} "
            f"(this build reads version {MODEL_VERSION})"
        )
    kind = doc["kind"]
    cfg = BartConfig.from_jsonable(doc["config"])
    payload = doc["payload"]
    if kind == "regression":
        draws = RegressionDraws(
            ensembles=_records_to_ensembles(payload["trees"]),
            sigmas=np.asarray(payload["sigmas"]),
            grid=CutpointGrid.from_jsonable(payload["grid"]),
            y_center=payload["y_center"],
            y_scale=payload["y_scale"],
            config=cfg,
            varcount=np.asarray(payload["varcount"], dtype=np.int64),
            varprob=None if payload["varprob"] is None else np.asarray(payload["varprob"]),
            proposal_varcount=None if payload["proposal_varcount"] is None
            else np.asarray(payload["proposal_varcount"], dtype=np.int64),
            max_fit_gap=payload["max_fit_gap"],
        )
    elif kind == "binary":
        draws = _binary_from_payload(payload, cfg)
    elif kind == "multinomial":
        draws = ClassifierDraws(
            stages=[_binary_from_payload(s, cfg) for s in payload["stages"]],
            labels=payload["labels"],
            stage_rows=[np.asarray(r, dtype=int) for r in payload["stage_rows"]],
            config=cfg,
        )
    else:
        raise DataError(f"unknown model kind {kind!r}")
    stored = draws.stages[0].ndpost if kind == "multinomial" else draws.ndpost
    if stored != cfg.ndpost:
        raise DataError(
            f"model stores {stored} draws but its config declares {cfg.ndpost}"
        )
    return ModelArtifact(kind=kind, draws=draws, columns=doc["columns"], config=cfg)


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------

#: Column order of the metrics summary table; the headline block first,
#: precision appended for completeness.
_METRIC_ORDER = ("accuracy", "mcc", "sensitivity", "specificity", "f1", "precision")


def write_metrics_csv(report: EvalReport, path, model_name: str = "BART") -> None:
    """Summary-table CSV: one macro row per model plus per-class rows."""
    header = ["model", "class"] + list(_METRIC_ORDER)
    rows = [[model_name, "macro"] + [report.macro[m] for m in _METRIC_ORDER]]
    for label in report.labels:
        rows.append(
            [model_name, label] + [report.per_class[label][m] for m in _METRIC_ORDER]
        )
    write_csv(path, header, rows)


def write_confusion_csv(counts: np.ndarray, labels: list, path) -> None:
    header = ["actual\\predicted"] + [str(lab) for lab in labels]
    rows = [[str(lab)] + [int(v) for v in counts[i]] for i, lab in enumerate(labels)]
    write_csv(path, header, rows)


def write_usage_csv(summary: UsageSummary, columns: list[str], path,
                    selected: set[int] | None = None) -> None:
    header = ["variable", "mean_proportion", "lower95", "upper95", "rank", "selected"]
    rank_of = {int(v): r + 1 for r, v in enumerate(summary.ranking)}
    rows = []
    for j, name in enumerate(columns):
        rows.append([
            name, float(summary.mean[j]), float(summary.lower[j]),
            float(summary.upper[j]), rank_of[j],
            int(selected is not None and j in selected),
        ])
    write_csv(path, header, rows)


def write_sparse_csv(summary: SparseSummary, columns: list[str], path) -> None:
    header = ["stage", "variable", "mean_selection_probability", "threshold",
              "selected", "flag"]
    rows = []
    for h in range(summary.n_stages):
        chosen = set(summary.selected[h].tolist())
        for j, name in enumerate(columns):
            rows.append([
                h + 1, name, float(summary.stage_means[h, j]),
                float(summary.threshold), int(j in chosen), summary.flags[h],
            ])
    write_csv(path, header, rows)


def write_interaction_csv(weights: np.ndarray, columns: list[str], path) -> None:
    header = ["variable"] + list(columns)
    rows = [[name] + [float(w) for w in weights[i]] for i, name in enumerate(columns)]
    write_csv(path, header, rows)
