"""Spectral preprocessing: PCA, SNV row normalization, purity-class
aggregation, stratified splitting, and SMOTE oversampling for training folds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import substream

#: Adulteration percentages collapsed into the three purity classes:
#: pure (class 1), partially adulterated (class 2), fully non-authentic (class 3).
PARTIAL_LEVELS = (1, 5, 10, 20, 40)


@dataclass
class PcaModel:
    """Principal components of the training matrix.

    ``loadings`` has orthonormal columns (one per retained component) and
    ``explained`` holds each component's fraction of total variance.
    """

    mean: np.ndarray
    loadings: np.ndarray
    explained: np.ndarray
    scale: np.ndarray | None = None  # column sds when standardized, else None

    @property
    def q(self) -> int:
        return self.loadings.shape[1]


def fit_pca(X: np.ndarray, standardize: bool = False) -> PcaModel:
    """Eigendecomposition of the sample covariance of mean-centered ``X``.

    Components are sorted by eigenvalue descending. Sign convention: the
    largest-magnitude entry of each loading vector is made positive, so fits
    are reproducible across runs and BLAS builds. With ``standardize`` the
    columns are also scaled to unit variance before decomposition (spectra
    share units, so this is off by default).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("PCA needs a 2-D matrix with at least 2 rows")
    if not np.isfinite(X).all():
        raise DataError("PCA input contains non-finite values")
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = None
    if standardize:
        scale = Xc.std(axis=0, ddof=1)
        if np.any(scale == 0):
            raise DataError("cannot standardize a constant column")
        Xc = Xc / scale
    # SVD of the centered matrix is the eigendecomposition of its sample
    # covariance (eigenvalues = s^2 / (n - 1)) and is numerically stabler.
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    eigvals = s**2 / (X.shape[0] - 1)
    total = eigvals.sum()
    if total == 0:
        raise DataError("PCA input has zero variance (rank 0)")
    loadings = vt.T
    flip = np.sign(loadings[np.abs(loadings).argmax(axis=0), np.arange(loadings.shape[1])])
    flip[flip == 0] = 1.0
    loadings = loadings * flip
    return PcaModel(mean=mean, loadings=loadings, explained=eigvals / total, scale=scale)


def transform_pca(model: PcaModel, X: np.ndarray, q: int | None = None) -> np.ndarray:
    """Project rows of ``X`` onto the first ``q`` components."""
    X = np.asarray(X, dtype=float)
    q = model.q if q is None else int(q)
    if q < 1 or q > model.q:
        raise DataError(f"q must be in 1..{model.q}")
    Xc = X - model.mean
    if model.scale is not None:
        Xc = Xc / model.scale
    return Xc @ model.loadings[:, :q]


def snv(row: np.ndarray) -> np.ndarray:
    """Standard normal variate: center and scale one spectrum to sd 1.

    Uses the sample standard deviation (ddof=1). Constant rows are rejected.
    """
    row = np.asarray(row, dtype=float)
    sd = row.std(ddof=1)
    if row.max() == row.min() or sd == 0 or not np.isfinite(sd):
        raise DataError("SNV undefined for a constant spectrum (zero variance)")
    return (row - row.mean()) / sd


def aggregate_classes(adulteration_pct) -> int:
    """Map an adulteration percentage onto the three purity classes."""
    level = float(adulteration_pct)
    if level == 0:
        return 1
    if level in PARTIAL_LEVELS:
        return 2
    if level == 100:
        return 3
    raise DataError(f"unknown adulteration level: {adulteration_pct!r}")


@dataclass
class SplitPlan:
    """Calibration/test partition plus k-fold assignments on the calibration set.

    ``folds[i]`` is the fold index (0..k-1) of calibration sample
    ``calibration[i]``. Test rows never enter any fold.
    """

    calibration: np.ndarray
    test: np.ndarray
    folds: np.ndarray
    k: int
    seed: int

    def fold_indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_rows, validation_rows) as original row indices."""
        mask = self.folds == fold
        return self.calibration[~mask], self.calibration[mask]


def stratified_split(labels, test_frac: float, k_folds: int, seed: int) -> SplitPlan:
    """Class-stratified calibration/test split with stratified folds.

    Deterministic given ``seed``; per-class test counts are the rounded
    fraction, and fold assignment cycles within each shuffled class so every
    fold's class proportions sit within one sample of the stratified ideal.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if not 0 <= test_frac < 1:
        raise DataError("test_frac must be in [0, 1)")
    if k_folds < 1:
        raise DataError("k_folds must be >= 1")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2 and k_folds > 1:
        raise DataError("stratification impossible with a single class")
    rng = substream(seed, "split")
    calibration: list[int] = []
    test: list[int] = []
    fold_of: dict[int, int] = {}
    offset = 0  # rotate fold assignment across classes to balance fold sizes
    for cls in classes:
        rows = np.flatnonzero(labels == cls)
        rows = rows[rng.permutation(rows.size)]
        n_test = int(round(test_frac * rows.size))
        test.extend(rows[:n_test].tolist())
        keep = rows[n_test:]
        for i, r in enumerate(keep.tolist()):
            fold_of[r] = (i + offset) % k_folds
        calibration.extend(keep.tolist())
        offset = (offset + keep.size) % k_folds
    calibration_arr = np.array(sorted(calibration), dtype=int)
    folds = np.array([fold_of[r] for r in calibration_arr], dtype=int)
    return SplitPlan(
        calibration=calibration_arr,
        test=np.array(sorted(test), dtype=int),
        folds=folds,
        k=k_folds,
        seed=seed,
    )


def smote(
    X_fold: np.ndarray,
    y_fold: np.ndarray,
    k_neighbors: int = 5,
    target_counts: dict | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Oversample minority classes by interpolating nearest same-class pairs.

    Each synthetic sample is ``x + u * (x_nn - x)`` with ``u ~ Uniform(0, 1)``
    and ``x_nn`` one of the ``k_neighbors`` nearest same-class neighbors in
    Euclidean distance. Defaults oversample every class up to the majority
    count. Only ever apply this to training folds; the signature takes
    a fold's arrays, never a whole split.
    """
    X_fold = np.asarray(X_fold, dtype=float)
    y_fold = np.asarray(y_fold)
    if X_fold.shape[0] != y_fold.shape[0]:
        raise DataError("X and y row counts differ")
    classes, counts = np.unique(y_fold, return_counts=True)
    if target_counts is None:
        majority = int(counts.max())
        target_counts = {cls: majority for cls in classes.tolist()}
    rng = substream(seed, "smote")
    new_X: list[np.ndarray] = [X_fold]
    new_y: list[np.ndarray] = [y_fold]
    for cls in classes.tolist():
        rows = np.flatnonzero(y_fold == cls)
        want = int(target_counts.get(cls, rows.size)) - rows.size
        if want <= 0:
            continue
        if rows.size < 2:
            raise DataError(f"class {cls!r} has fewer than 2 samples; SMOTE impossible")
        Xc = X_fold[rows]
        d2 = ((Xc[:, None, :] - Xc[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        k = min(k_neighbors, rows.size - 1)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        base = rng.integers(0, rows.size, size=want)
        pick = nn[base, rng.integers(0, k, size=want)]
        u = rng.uniform(size=(want, 1))
        synth = Xc[base] + u * (Xc[pick] - Xc[base])
        new_X.append(synth)
        new_y.append(np.full(want, cls, dtype=y_fold.dtype))
    return np.concatenate(new_X, axis=0), np.concatenate(new_y, axis=0)
