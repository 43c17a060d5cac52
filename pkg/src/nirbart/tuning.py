"""Stratified cross-validation and hyperparameter grid search.

Grid cells are scored by mean held-out multiclass log-loss over shared
stratified folds. Cell evaluation order never changes the result: every cell
derives its own sampler seed from the grid seed and its cell index, folds are
built once up front, and ties break toward cheaper models (smaller tree
count, then larger shrinkage, then candidate-list order).
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .metrics import log_loss
from .preprocess import smote, stratified_split
from .rng import seed_sequence
from .sampler import BartConfig, fit_multinomial, predict_class_probs

DEFAULT_GRID_M = (50, 100, 200)
DEFAULT_GRID_K = (1.0, 2.0, 3.0)
DEFAULT_GRID_POWER = (1.5, 2.0)
DEFAULT_GRID_BASE = (0.75, 0.95)


@dataclass
class Grid:
    """Candidate hyperparameter lists plus the CV layout."""

    m: tuple = DEFAULT_GRID_M
    k: tuple = DEFAULT_GRID_K
    power: tuple = DEFAULT_GRID_POWER
    base: tuple = DEFAULT_GRID_BASE
    folds: int = 5
    seed: int = 0

    def validate(self) -> None:
        for name in ("m", "k", "power", "base"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"empty candidate list for {name!r}")
        if self.folds < 2:
            raise ConfigError("grid search needs at least 2 folds")
        for m, k, power, base in self.cells():
            BartConfig(m=m, k=k, power=power, base=base).validate()

    def cells(self) -> list[tuple]:
        return list(itertools.product(self.m, self.k, self.power, self.base))

    def to_jsonable(self) -> dict:
        return {
            "m": list(self.m), "k": list(self.k), "power": list(self.power),
            "base": list(self.base), "folds": self.folds, "seed": self.seed,
        }

    @staticmethod
    def from_jsonable(obj: dict) -> "Grid":
        known = {f for f in Grid.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown grid fields: {sorted(unknown)}")
        grid = Grid(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})
        grid.validate()
        return grid


@dataclass
class CellResult:
    config: BartConfig
    fold_losses: np.ndarray
    mean_loss: float
    elapsed_seconds: float


@dataclass
class TuneResult:
    cells: list[CellResult]
    winner_index: int
    fold_assignment: np.ndarray = field(repr=False, default=None)

    @property
    def winner(self) -> CellResult:
        return self.cells[self.winner_index]


def _fold_assignment(y: np.ndarray, folds, seed: int) -> np.ndarray:
    """Fold index per row; accepts a fold count or a precomputed assignment."""
    if np.ndim(folds) == 1:
        assignment = np.asarray(folds, dtype=int)
        if assignment.shape[0] != y.shape[0]:
            raise DataError("fold assignment length does not match y")
        return assignment
    plan = stratified_split(y, test_frac=0.0, k_folds=int(folds), seed=seed)
    assignment = np.empty(y.shape[0], dtype=int)
    assignment[plan.calibration] = plan.folds
    return assignment


def cross_validate(X, y, cfg: BartConfig, folds=5,
                   apply_smote: bool = False) -> np.ndarray:
    """Held-out log-loss per stratified fold.

    ``folds`` is either a fold count (stratified assignment built from the
    config seed) or an explicit per-row fold-index vector. SMOTE, when
    requested, touches only the training side of each fold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    assignment = _fold_assignment(y, folds, cfg.seed)
    labels = sorted(set(y.tolist()))
    losses = []
    for fold in sorted(set(assignment.tolist())):
        val = assignment == fold
        X_train, y_train = X[~val], y[~val]
        if apply_smote:
            smote_seed = int(seed_sequence(cfg.seed, "smote", fold).generate_state(1)[0])
            X_train, y_train = smote(X_train, y_train, seed=smote_seed)
        fold_cfg = replace(
            cfg, seed=int(seed_sequence(cfg.seed, "fold", fold).generate_state(1)[0])
        )
        draws = fit_multinomial(X_train, y_train, fold_cfg, labels=labels)
        probs = predict_class_probs(draws, X[val])
        losses.append(log_loss(probs.probs, y[val], labels=probs.labels))
    return np.asarray(losses)


def _evaluate_cell(args) -> tuple[int, np.ndarray, float]:
    index, X, y, cfg, assignment, apply_smote = args
    start = time.perf_counter()
    losses = cross_validate(X, y, cfg, folds=assignment, apply_smote=apply_smote)
    return index, losses, time.perf_counter() - start


def grid_search(X, y, grid: Grid, base_config: BartConfig | None = None,
                apply_smote: bool = False, n_jobs: int = 1,
                progress=None) -> TuneResult:
    """Exhaustive CV scoring of every grid cell.

    All cells share one stratified fold assignment built from the grid seed;
    each cell's sampler seed derives from (grid seed, cell index), so
    concurrent evaluation cannot change any number. The winner minimizes
    mean log-loss with ties broken by smaller m, then larger k, then
    candidate-list order.
    """
    grid.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    base = base_config if base_config is not None else BartConfig()
    assignment = _fold_assignment(y, grid.folds, grid.seed)
    tasks = []
    for index, (m, k, power, base_) in enumerate(grid.cells()):
        cfg = replace(
            base, m=m, k=k, power=power, base=base_,
            seed=int(seed_sequence(grid.seed, "cell", index).generate_state(1)[0]),
        )
        tasks.append((index, X, y, cfg, assignment, apply_smote))

    results: list[CellResult | None] = [None] * len(tasks)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for index, losses, elapsed in pool.map(_evaluate_cell, tasks):
                results[index] = CellResult(tasks[index][3], losses,
                                            float(losses.mean()), elapsed)
                if progress:
                    progress(index, len(tasks), results[index])
    else:
        for task in tasks:
            index, losses, elapsed = _evaluate_cell(task)
            results[index] = CellResult(tasks[index][3], losses,
                                        float(losses.mean()), elapsed)
            if progress:
                progress(index, len(tasks), results[index])

    winner_index = min(
        range(len(results)),
        key=lambda i: (results[i].mean_loss, results[i].config.m,
                       -results[i].config.k, i),
    )
    return TuneResult(cells=results, winner_index=winner_index,
                      fold_assignment=assignment)
