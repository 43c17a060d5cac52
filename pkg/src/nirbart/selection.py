"""Variable selection over posterior draws.

Two mechanisms: normalized split-usage frequency (every draw's split counts
row-normalized, then averaged) and sparse-prior posterior selection
probabilities thresholded at 1/p. Also hosts the Dirichlet/concentration
updates the sampler runs when the sparse prior is active.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DataError, NumericError

#: Sparsity hyperparameters: theta/(theta + rho) ~ Beta(GRID_A, GRID_B), rho = p.
SPARSE_A = 0.5
SPARSE_B = 1.0
THETA_GRID_POINTS = 1000

_S_FLOOR = 1e-320  # keeps selection probabilities strictly positive


@dataclass
class UsageSummary:
    """Mean split-usage proportion per variable with credible bounds."""

    mean: np.ndarray
    lower: np.ndarray  # 2.5th percentile over draws
    upper: np.ndarray  # 97.5th percentile over draws
    ranking: np.ndarray  # variable indices, most-used first
    n_draws_used: int
    n_draws_skipped: int  # draws with zero total splits

    @property
    def p(self) -> int:
        return self.mean.shape[0]


@dataclass
class SparseSummary:
    """Posterior selection probabilities per conditional stage.

    ``stage_means[h]`` averages the per-draw selection probabilities of stage
    h + 1; variables strictly above 1/p are in ``selected[h]``. The final
    stage conditions on the smallest subset, so its row is flagged for
    cautious reading.
    """

    stage_means: np.ndarray  # stages x variables
    threshold: float
    selected: list[np.ndarray] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return self.stage_means.shape[0]


def usage_frequencies(varcount: np.ndarray) -> UsageSummary:
    """Average per-draw split-usage proportions.

    Each draw's counts are normalized to proportions first, so draws with
    many splits do not dominate; zero-split draws are skipped and reported.
    The 95% bounds are equal-tailed empirical percentiles over draws, and
    ranking is by mean proportion descending with ties to the lower index.
    """
    varcount = np.asarray(varcount)
    if varcount.ndim != 2 or varcount.shape[0] < 1:
        raise DataError("varcount must be a draws x variables matrix")
    if np.any(varcount < 0):
        raise DataError("split counts cannot be negative")
    totals = varcount.sum(axis=1)
    keep = totals > 0
    if not keep.any():
        raise NumericError("every draw has an all-leaf ensemble; usage undefined")
    fractions = varcount[keep] / totals[keep, None]
    mean = fractions.mean(axis=0)
    lower, upper = np.percentile(fractions, [2.5, 97.5], axis=0)
    order = np.lexsort((np.arange(mean.size), -mean))
    return UsageSummary(
        mean=mean,
        lower=lower,
        upper=upper,
        ranking=order,
        n_draws_used=int(keep.sum()),
        n_draws_skipped=int((~keep).sum()),
    )


def select_top(summary: UsageSummary, n_top: int) -> tuple[np.ndarray, float]:
    """First ``n_top`` variables by usage ranking and their cumulative share."""
    if n_top < 0 or n_top > summary.p:
        raise DataError(f"n_top must be in 0..{summary.p}")
    chosen = summary.ranking[:n_top]
    return chosen, float(summary.mean[chosen].sum())


def dirichlet_update(counts: np.ndarray, theta: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Draw selection probabilities from Dirichlet(theta/p + counts).

    Sampled through log-gamma draws so tiny concentrations cannot underflow
    into an unnormalizable vector; the result is floored at a subnormal so
    every entry stays strictly positive.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size < 1:
        raise DataError("counts must be a non-empty vector")
    if np.any(counts < 0):
        raise DataError("counts cannot be negative")
    if not theta > 0:
        raise DataError("theta must be > 0")
    alpha = theta / counts.size + counts
    log_g = np.empty(counts.size)
    small = alpha < 0.1
    if small.any():
        # Gamma(a) == Gamma(a + 1) * U^(1/a) in distribution; sampling the
        # boost in log space avoids underflow for small shapes.
        a = alpha[small]
        log_g[small] = (
            np.log(rng.standard_gamma(a + 1.0))
            + np.log(rng.uniform(size=a.size)) / a
        )
    if (~small).any():
        log_g[~small] = np.log(rng.standard_gamma(alpha[~small]))
    log_g -= log_g.max()
    g = np.exp(log_g)
    s = g / g.sum()
    return np.maximum(s, _S_FLOOR)


def theta_update(theta: float, s: np.ndarray, rng: np.random.Generator,
                 a: float = SPARSE_A, b: float = SPARSE_B,
                 rho: float | None = None) -> float:
    """Resample the Dirichlet concentration given selection probabilities.

    ``theta / (theta + rho)`` carries a Beta(a, b) prior; the full
    conditional is approximated on a discrete grid over that transformed
    scale and sampled from the normalized grid weights. The incoming value
    only seeds the signature; the grid posterior depends on ``s`` alone.
    """
    s = np.asarray(s, dtype=float)
    p = s.size
    rho = float(p) if rho is None else float(rho)
    lam, weights = _theta_grid_posterior(s, a, b, rho)
    pick = int(rng.choice(lam.size, p=weights))
    return float(lam[pick] * rho / (1.0 - lam[pick]))


def _theta_grid_posterior(s: np.ndarray, a: float, b: float, rho: float):
    """Grid values (on the Beta-transformed scale) and posterior weights."""
    p = s.size
    sum_log_s = float(np.log(s).sum())
    lam = np.arange(1, THETA_GRID_POINTS + 1) / (THETA_GRID_POINTS + 1)
    theta = lam * rho / (1.0 - lam)
    log_post = (
        gammaln(theta)
        - p * gammaln(theta / p)
        + (theta / p) * sum_log_s
        + (a - 1.0) * np.log(lam)
        + (b - 1.0) * np.log1p(-lam)
    )
    log_post -= log_post.max()
    weights = np.exp(log_post)
    weights /= weights.sum()
    return lam, weights


def sparse_selection(draws) -> SparseSummary:
    """Average sparse-prior selection probabilities per conditional stage.

    ``draws`` must be a stacked classifier fit with the sparse prior active
    (every stage carries a draws x variables selection-probability matrix).
    Selection uses the strict 1/p threshold. The last stage row is flagged
    ``conditional, small-support``: it conditions away every earlier class,
    so its support can be too thin to take at face value.
    """
    stages = getattr(draws, "stages", None)
    if not stages:
        raise DataError("expected a fitted stacked classifier")
    means = []
    for h, stage in enumerate(stages, start=1):
        if stage.varprob is None:
            raise DataError(f"stage {h} was fitted without the sparse prior")
        means.append(np.asarray(stage.varprob).mean(axis=0))
    stage_means = np.vstack(means)
    p = stage_means.shape[1]
    threshold = 1.0 / p
    selected = [np.flatnonzero(row > threshold) for row in stage_means]
    flags = ["" for _ in means]
    flags[-1] = "conditional, small-support"
    return SparseSummary(
        stage_means=stage_means, threshold=threshold, selected=selected, flags=flags
    )
