"""MCMC backfitting for sum-of-trees models.

Three fitting modes share one chain engine:

* continuous response regression with conjugate error-variance updates,
* binary probit classification via truncated-normal latent augmentation,
* K-class classification as a stack of K-1 conditional binary probit fits
  (stage h models class h against everything later, trained only on the
  rows not claimed by earlier stages; the last class is the remainder).

Each sweep updates every tree with a Metropolis-Hastings structural proposal
(GROW 0.5 / PRUNE 0.25 / CHANGE 0.25, renormalized over the moves available
to the current tree) against the marginal likelihood of its partial
residuals, then redraws all leaf values from their conjugate normals. Split
variables are chosen uniformly, or from sampled Dirichlet selection
probabilities when the sparse prior is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import chi2

from .errors import ConfigError, DataError, DegenerateLabelsError, InsufficientDataError, NumericError
from .rng import seed_sequence, substream
from .selection import dirichlet_update, theta_update
from .trees import (
    CutpointGrid,
    Ensemble,
    Tree,
    TreeNode,
    build_cutpoint_grid,
    evaluate_ensemble_matrix,
)

_P_GROW, _P_PRUNE, _P_CHANGE = 0.5, 0.25, 0.25

#: Renormalization gate: class-probability rows further than this from 1 are
#: treated as a sampler bug, not float drift.
_ROW_SUM_TOL = 1e-9


@dataclass
class BartConfig:
    """Sampler configuration.

    Defaults follow the usual conventions: 200 trees, k=2, depth prior
    power=2 / base=0.95, 1000 retained draws after 100 burn-in sweeps.
    """

    m: int = 200
    k: float = 2.0
    power: float = 2.0
    base: float = 0.95
    ndpost: int = 1000
    nskip: int = 100
    sparse: bool = False
    seed: int = 0
    sigma_df: float = 3.0
    sigma_quant: float = 0.9
    grid_size: int = 100
    max_depth: int = 32
    theta: float = 0.0  # sparse concentration; 0 means resample it each sweep

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not self.k > 0:
            raise ConfigError("k must be > 0")
        if not 0 < self.base < 1:
            raise ConfigError("base must be in (0, 1)")
        if self.power < 0:
            raise ConfigError("power must be >= 0")
        if self.ndpost < 1:
            raise ConfigError("ndpost must be >= 1")
        if self.nskip < 0:
            raise ConfigError("nskip must be >= 0")
        if not self.sigma_df > 0:
            raise ConfigError("sigma_df must be > 0")
        if not 0 < self.sigma_quant < 1:
            raise ConfigError("sigma_quant must be in (0, 1)")
        if self.grid_size < 1:
            raise ConfigError("grid_size must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.theta < 0:
            raise ConfigError("theta must be >= 0")

    def to_jsonable(self) -> dict:
        return {
            "m": self.m, "k": self.k, "power": self.power, "base": self.base,
            "ndpost": self.ndpost, "nskip": self.nskip, "sparse": self.sparse,
            "seed": self.seed, "sigma_df": self.sigma_df,
            "sigma_quant": self.sigma_quant, "grid_size": self.grid_size,
            "max_depth": self.max_depth, "theta": self.theta,
        }

    @staticmethod
    def from_jsonable(obj: dict) -> "BartConfig":
        known = {f for f in BartConfig.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = BartConfig(**obj)
        cfg.validate()
        return cfg


def probit_probability(latent):
    """Class-1 probability of a latent score under the probit link."""
    return ndtr(np.asarray(latent, dtype=float))


def truncated_normal_positive(mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, 1) conditioned on the result being positive.

    Inverse-CDF sampling except in the far tail (standardized bound above 6),
    where an exponential-proposal rejection step keeps full precision.
    """
    mean = np.asarray(mean, dtype=float)
    a = -mean  # standardized lower truncation bound
    out = np.empty_like(mean)
    easy = a <= 6.0
    if easy.any():
        lo = ndtr(a[easy])
        u = rng.uniform(size=int(easy.sum()))
        v = np.minimum(lo + u * (1.0 - lo), np.nextafter(1.0, 0.0))
        out[easy] = mean[easy] + ndtri(v)
    hard = np.flatnonzero(~easy)
    if hard.size:
        ah = a[hard]
        lam = 0.5 * (ah + np.sqrt(ah * ah + 4.0))
        q = np.empty(hard.size)
        todo = np.arange(hard.size)
        while todo.size:
            prop = ah[todo] + rng.exponential(size=todo.size) / lam[todo]
            accept = rng.uniform(size=todo.size) <= np.exp(-0.5 * (prop - lam[todo]) ** 2)
            q[todo[accept]] = prop[accept]
            todo = todo[~accept]
        out[hard] = mean[hard] + q
    return out


def _depth(nid: int) -> int:
    return nid.bit_length() - 1


class _TreeState:
    """Mutable working tree: split dicts, per-node row indices, cached fit."""

    __slots__ = ("var", "cut", "leaf", "idx", "fit")

    def __init__(self, n: int):
        self.var: dict[int, int] = {}
        self.cut: dict[int, int] = {}
        self.leaf: dict[int, float] = {1: 0.0}
        self.idx: dict[int, np.ndarray] = {1: np.arange(n)}
        self.fit = np.zeros(n)

    @property
    def is_stump(self) -> bool:
        return not self.var

    def growable_leaves(self, max_depth: int) -> list[int]:
        return [
            nid for nid in self.leaf
            if self.idx[nid].size >= 2 and _depth(nid) < max_depth
        ]

    def prunable_nodes(self) -> list[int]:
        return [nid for nid in self.var if 2 * nid in self.leaf and 2 * nid + 1 in self.leaf]

    def freeze(self) -> Tree:
        nodes: dict[int, TreeNode] = {}
        for nid, var in self.var.items():
            nodes[nid] = TreeNode.make_split(var, self.cut[nid])
        for nid, value in self.leaf.items():
            nodes[nid] = TreeNode.make_leaf(value)
        return Tree(dict(sorted(nodes.items())))


class _Chain:
    """One backfitting chain over a fixed design matrix."""

    def __init__(self, X: np.ndarray, grid: CutpointGrid, cfg: BartConfig,
                 rng: np.random.Generator, tau: float, sigma2: float):
        self.X = X
        self.n, self.p = X.shape
        self.grid = grid
        self.cfg = cfg
        self.rng = rng
        self.tau2 = tau * tau
        self.sigma2 = sigma2
        self.trees = [_TreeState(self.n) for _ in range(cfg.m)]
        self.allfit = np.zeros(self.n)
        self.varcount = np.zeros(self.p, dtype=np.int64)
        self.s = np.full(self.p, 1.0 / self.p)
        self.theta = cfg.theta if cfg.theta > 0 else float(self.p)
        # (p, C) grid view plus a column-validity mask for availability checks
        self._G = grid._matrix
        self._colmask = np.arange(self._G.shape[1])[None, :] < grid._sizes[:, None]
        # diagnostics
        self.proposal_varcount = np.zeros(self.p, dtype=np.int64)
        self.accepts = {"grow": 0, "prune": 0, "change": 0}
        self.proposals = {"grow": 0, "prune": 0, "change": 0}
        self.max_fit_gap = 0.0

    # -- tree prior ---------------------------------------------------------

    def _p_split(self, depth: int) -> float:
        if depth >= self.cfg.max_depth:
            return 0.0
        return self.cfg.base * (1.0 + depth) ** (-self.cfg.power)

    def _move_probs(self, n_growable: int, is_stump: bool):
        """(grow, prune, change) probabilities for a tree in the given state."""
        wg = _P_GROW if n_growable > 0 else 0.0
        wp = 0.0 if is_stump else _P_PRUNE
        wc = 0.0 if is_stump else _P_CHANGE
        z = wg + wp + wc
        if z == 0.0:
            return None
        return wg / z, wp / z, wc / z

    # -- split-rule proposal ------------------------------------------------

    def _propose_rule(self, idx: np.ndarray):
        """Draw (var, cut, cut_value, go_left_mask) for the node rows ``idx``.

        The candidate variable is drawn from the current selection
        probabilities restricted to variables with at least one cut value
        strictly inside the node's observed range, then a cut uniformly from
        that range, so both children are guaranteed non-empty. Returns None
        when no variable is splittable inside the node.
        """
        sub = self.X[idx]
        mins = sub.min(axis=0)
        maxs = sub.max(axis=0)
        within = (self._G >= mins[:, None]) & (self._G < maxs[:, None]) & self._colmask
        counts = within.sum(axis=1)
        weights = np.where(counts > 0, self.s, 0.0)
        total = weights.sum()
        if total <= 0.0:
            return None
        var = int(self.rng.choice(self.p, p=weights / total))
        self.proposal_varcount[var] += 1
        lo = int(np.searchsorted(self.grid.cuts[var], mins[var], side="left"))
        cut = lo + int(self.rng.integers(counts[var]))
        cut_value = self.grid.value(var, cut)
        return var, cut, cut_value, sub[:, var] <= cut_value

    # -- marginal likelihood ------------------------------------------------

    def _log_marginal_gain(self, n_left, s_left, n_right, s_right, n_parent, s_parent):
        """Log marginal-likelihood ratio of splitting a node into two children.

        Leaf means are integrated out under their N(0, tau^2) prior, so only
        the per-leaf counts and residual sums matter.
        """
        s2, t2 = self.sigma2, self.tau2

        def term(n, s):
            return -0.5 * math.log1p(n * t2 / s2) + 0.5 * t2 * s * s / (s2 * (s2 + n * t2))

        return term(n_left, s_left) + term(n_right, s_right) - term(n_parent, s_parent)

    # -- structural moves ---------------------------------------------------

    def _try_grow(self, tree: _TreeState, resid: np.ndarray,
                  growable: list[int], p_grow: float) -> None:
        self.proposals["grow"] += 1
        leaf_id = growable[int(self.rng.integers(len(growable)))]
        idx = tree.idx[leaf_id]
        rule = self._propose_rule(idx)
        if rule is None:
            return
        var, cut, _, go_left = rule
        n_parent = idx.size
        n_left = int(go_left.sum())
        n_right = n_parent - n_left
        r = resid[idx]
        s_parent = float(r.sum())
        s_left = float(r[go_left].sum())
        s_right = s_parent - s_left
        depth = _depth(leaf_id)
        p_d = self._p_split(depth)
        p_d1 = self._p_split(depth + 1)
        child_depth_ok = depth + 1 < self.cfg.max_depth
        n_growable_new = (
            len(growable) - 1
            + (n_left >= 2 and child_depth_ok)
            + (n_right >= 2 and child_depth_ok)
        )
        parent = leaf_id // 2
        sibling_is_leaf = parent >= 1 and (leaf_id ^ 1) in tree.leaf
        n_prunable_new = len(tree.prunable_nodes()) + 1 - (1 if sibling_is_leaf else 0)
        probs_new = self._move_probs(n_growable_new, False)
        p_prune_new = probs_new[1]
        log_alpha = (
            self._log_marginal_gain(n_left, s_left, n_right, s_right, n_parent, s_parent)
            + math.log(p_d) + 2.0 * math.log1p(-p_d1) - math.log1p(-p_d)
            + math.log(p_prune_new) - math.log(n_prunable_new)
            - math.log(p_grow) + math.log(len(growable))
        )
        if math.log(self.rng.uniform()) >= log_alpha:
            return
        self.accepts["grow"] += 1
        tree.var[leaf_id] = var
        tree.cut[leaf_id] = cut
        del tree.leaf[leaf_id]
        left, right = 2 * leaf_id, 2 * leaf_id + 1
        tree.idx[left] = idx[go_left]
        tree.idx[right] = idx[~go_left]
        tree.leaf[left] = 0.0
        tree.leaf[right] = 0.0
        self.varcount[var] += 1

    def _try_prune(self, tree: _TreeState, resid: np.ndarray,
                   growable: list[int], p_prune: float) -> None:
        self.proposals["prune"] += 1
        prunable = tree.prunable_nodes()
        node = prunable[int(self.rng.integers(len(prunable)))]
        left, right = 2 * node, 2 * node + 1
        idx_l, idx_r = tree.idx[left], tree.idx[right]
        n_left, n_right = idx_l.size, idx_r.size
        s_left = float(resid[idx_l].sum())
        s_right = float(resid[idx_r].sum())
        n_parent = n_left + n_right
        s_parent = s_left + s_right
        depth = _depth(node)
        p_d = self._p_split(depth)
        p_d1 = self._p_split(depth + 1)
        child_depth_ok = depth + 1 < self.cfg.max_depth
        was_growable = (
            (n_left >= 2 and child_depth_ok) + (n_right >= 2 and child_depth_ok)
        )
        n_growable_new = len(growable) - was_growable + 1  # node becomes a growable leaf
        becomes_stump = len(tree.var) == 1  # the pruned node was the only split
        probs_new = self._move_probs(n_growable_new, becomes_stump)
        p_grow_new = probs_new[0] if probs_new is not None else 0.0
        if p_grow_new == 0.0:
            return  # reverse grow impossible; cannot accept
        log_alpha = (
            -self._log_marginal_gain(n_left, s_left, n_right, s_right, n_parent, s_parent)
            + math.log1p(-p_d) - math.log(p_d) - 2.0 * math.log1p(-p_d1)
            + math.log(p_grow_new) - math.log(n_growable_new)
            - math.log(p_prune) + math.log(len(prunable))
        )
        if math.log(self.rng.uniform()) >= log_alpha:
            return
        self.accepts["prune"] += 1
        self.varcount[tree.var[node]] -= 1
        del tree.var[node], tree.cut[node]
        del tree.idx[left], tree.idx[right]
        del tree.leaf[left], tree.leaf[right]
        tree.leaf[node] = 0.0

    def _try_change(self, tree: _TreeState, resid: np.ndarray,
                    growable: list[int], p_change: float) -> None:
        self.proposals["change"] += 1
        prunable = tree.prunable_nodes()
        node = prunable[int(self.rng.integers(len(prunable)))]
        idx = tree.idx[node]
        rule = self._propose_rule(idx)
        if rule is None:
            return
        var, cut, _, go_left = rule
        left, right = 2 * node, 2 * node + 1
        r = resid[idx]
        s_total = float(r.sum())
        n_left_new = int(go_left.sum())
        n_right_new = idx.size - n_left_new
        s_left_new = float(r[go_left].sum())
        s_right_new = s_total - s_left_new
        n_left_old, n_right_old = tree.idx[left].size, tree.idx[right].size
        s_left_old = float(resid[tree.idx[left]].sum())
        s_right_old = s_total - s_left_old
        s2, t2 = self.sigma2, self.tau2

        def term(n, s):
            return -0.5 * math.log1p(n * t2 / s2) + 0.5 * t2 * s * s / (s2 * (s2 + n * t2))

        log_lik = (
            term(n_left_new, s_left_new) + term(n_right_new, s_right_new)
            - term(n_left_old, s_left_old) - term(n_right_old, s_right_old)
        )
        # Child growability can flip, shifting the move-probability mix.
        child_depth_ok = _depth(node) + 1 < self.cfg.max_depth
        growable_old = (
            (n_left_old >= 2 and child_depth_ok) + (n_right_old >= 2 and child_depth_ok)
        )
        growable_new = (
            (n_left_new >= 2 and child_depth_ok) + (n_right_new >= 2 and child_depth_ok)
        )
        n_growable_new = len(growable) - growable_old + growable_new
        probs_new = self._move_probs(n_growable_new, False)
        log_alpha = log_lik + math.log(probs_new[2]) - math.log(p_change)
        if math.log(self.rng.uniform()) >= log_alpha:
            return
        self.accepts["change"] += 1
        self.varcount[tree.var[node]] -= 1
        self.varcount[var] += 1
        tree.var[node] = var
        tree.cut[node] = cut
        tree.idx[left] = idx[go_left]
        tree.idx[right] = idx[~go_left]

    # -- per-sweep updates ---------------------------------------------------

    def _update_tree(self, tree: _TreeState, resid: np.ndarray) -> None:
        growable = tree.growable_leaves(self.cfg.max_depth)
        probs = self._move_probs(len(growable), tree.is_stump)
        if probs is not None:
            p_grow, p_prune, p_change = probs
            u = self.rng.uniform()
            if u < p_grow:
                self._try_grow(tree, resid, growable, p_grow)
            elif u < p_grow + p_prune:
                self._try_prune(tree, resid, growable, p_prune)
            else:
                self._try_change(tree, resid, growable, p_change)
        # Redraw every leaf from its conjugate normal given the residuals.
        new_fit = np.empty(self.n)
        s2, t2 = self.sigma2, self.tau2
        for leaf_id in sorted(tree.leaf):
            rows = tree.idx[leaf_id]
            if rows.size:
                s_leaf = float(resid[rows].sum())
                post_var = 1.0 / (rows.size / s2 + 1.0 / t2)
                post_mean = post_var * s_leaf / s2
            else:
                post_var = t2
                post_mean = 0.0
            value = post_mean + math.sqrt(post_var) * self.rng.standard_normal()
            tree.leaf[leaf_id] = value
            new_fit[rows] = value
        self.allfit += new_fit - tree.fit
        tree.fit = new_fit

    def sweep_trees(self, target: np.ndarray) -> None:
        for tree in self.trees:
            resid = target - self.allfit + tree.fit
            self._update_tree(tree, resid)
        gap = float(np.abs(self.allfit - sum(t.fit for t in self.trees)).max())
        self.max_fit_gap = max(self.max_fit_gap, gap)

    def update_sparse(self) -> None:
        self.s = dirichlet_update(self.varcount, self.theta, self.rng)
        if self.cfg.theta == 0:
            self.theta = theta_update(self.theta, self.s, self.rng)

    def freeze_ensemble(self) -> Ensemble:
        return Ensemble([tree.freeze() for tree in self.trees])


# ---------------------------------------------------------------------------
# Posterior draw containers
# ---------------------------------------------------------------------------

@dataclass
class RegressionDraws:
    """Post-burn-in ensembles and error-scale draws from a regression fit."""

    ensembles: list[Ensemble]
    sigmas: np.ndarray  # residual sd per draw, response units
    grid: CutpointGrid
    y_center: float
    y_scale: float
    config: BartConfig
    varcount: np.ndarray  # draws x predictors split counts
    varprob: np.ndarray | None = None  # draws x predictors selection probs (sparse)
    proposal_varcount: np.ndarray | None = None
    max_fit_gap: float = 0.0

    @property
    def ndpost(self) -> int:
        return len(self.ensembles)

    def predict_draws(self, Xnew: np.ndarray) -> np.ndarray:
        """Per-draw predictions on the response scale, draws x rows."""
        Xnew = self._check(Xnew)
        out = np.empty((self.ndpost, Xnew.shape[0]))
        for d, ens in enumerate(self.ensembles):
            out[d] = evaluate_ensemble_matrix(ens, self.grid, Xnew)
        return out * self.y_scale + self.y_center

    def predict(self, Xnew: np.ndarray) -> np.ndarray:
        """Posterior-mean prediction on the response scale."""
        return self.predict_draws(Xnew).mean(axis=0)

    def _check(self, Xnew) -> np.ndarray:
        Xnew = np.asarray(Xnew, dtype=float)
        if Xnew.ndim != 2 or Xnew.shape[1] != self.grid.p:
            raise DataError(f"expected {self.grid.p} predictor columns")
        return Xnew


@dataclass
class BinaryProbitDraws:
    """Post-burn-in ensembles from a binary probit fit (latent scale, sd 1)."""

    ensembles: list[Ensemble]
    grid: CutpointGrid
    config: BartConfig
    varcount: np.ndarray
    varprob: np.ndarray | None = None
    proposal_varcount: np.ndarray | None = None
    max_fit_gap: float = 0.0

    @property
    def ndpost(self) -> int:
        return len(self.ensembles)

    def prob_draws(self, Xnew: np.ndarray) -> np.ndarray:
        """Per-draw P(y=1 | x) under the probit link, draws x rows."""
        Xnew = np.asarray(Xnew, dtype=float)
        if Xnew.ndim != 2 or Xnew.shape[1] != self.grid.p:
            raise DataError(f"expected {self.grid.p} predictor columns")
        out = np.empty((self.ndpost, Xnew.shape[0]))
        for d, ens in enumerate(self.ensembles):
            out[d] = probit_probability(evaluate_ensemble_matrix(ens, self.grid, Xnew))
        return out

    def predict_prob(self, Xnew: np.ndarray) -> np.ndarray:
        return self.prob_draws(Xnew).mean(axis=0)


@dataclass
class ClassifierDraws:
    """Stacked conditional probit fits for a K-class problem.

    ``stages[h]`` separates class ``labels[h]`` from all later classes and
    was trained only on rows not belonging to classes ``labels[:h]``. The
    final class has no stage: its conditional probability is the remainder.
    """

    stages: list[BinaryProbitDraws]
    labels: list
    stage_rows: list[np.ndarray]  # training row indices per stage
    config: BartConfig

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @property
    def ndpost(self) -> int:
        return self.stages[0].ndpost

    def varcount_total(self) -> np.ndarray:
        """Split counts pooled over all stages, draws x predictors."""
        return np.sum([stage.varcount for stage in self.stages], axis=0)


@dataclass
class ClassProbs:
    """Per-observation class-probability simplex."""

    probs: np.ndarray  # rows x classes
    labels: list

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2 or self.probs.shape[1] != len(self.labels):
            raise DataError("probability matrix and label list disagree")
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise NumericError("class probabilities outside [0, 1]")
        sums = self.probs.sum(axis=1)
        drift = np.abs(sums - 1.0)
        if np.any(drift > _ROW_SUM_TOL):
            worst = int(drift.argmax())
            raise NumericError(
                f"class-probability row {worst} sums to {sums[worst]:.12f}; "
                "drift too large to be float noise"
            )
        self.probs = self.probs / sums[:, None]


# ---------------------------------------------------------------------------
# Fitting entry points
# ---------------------------------------------------------------------------

def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be a 2-D matrix")
    if not np.isfinite(X).all():
        raise DataError("X contains non-finite values")
    return X


def _sigma_prior_scale(X: np.ndarray, y_scaled: np.ndarray, cfg: BartConfig) -> float:
    """Scale parameter of the scaled-inverse-chi-square error-variance prior.

    Anchored so that P(sigma < sigma_hat) = sigma_quant, with sigma_hat from
    an OLS residual sd when the design allows it, else the sample sd.
    """
    n, p = X.shape
    sigma_hat = 0.0
    if n > p + 1:
        design = np.column_stack([np.ones(n), X])
        coef, _, rank, _ = np.linalg.lstsq(design, y_scaled, rcond=None)
        if rank == p + 1:
            resid = y_scaled - design @ coef
            sigma_hat = math.sqrt(float(resid @ resid) / (n - p - 1))
    if not math.isfinite(sigma_hat) or sigma_hat <= 0:
        sigma_hat = float(np.std(y_scaled, ddof=1))
    sigma_hat = max(sigma_hat, 1e-10)
    quantile = chi2.ppf(1.0 - cfg.sigma_quant, cfg.sigma_df)
    return sigma_hat * sigma_hat * quantile / cfg.sigma_df


def fit_regression(X, y, cfg: BartConfig, rng: np.random.Generator | None = None) -> RegressionDraws:
    """Posterior sampling for a continuous response.

    The response is internally shifted and scaled to [-0.5, 0.5]; predictions
    are mapped back on output. Each sweep runs the backfitting tree updates
    and then draws the error variance from its conjugate conditional.
    """
    cfg.validate()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DataError("y must be a vector matching X rows")
    if X.shape[0] < 10:
        raise InsufficientDataError(f"need at least 10 rows, got {X.shape[0]}")
    if not np.isfinite(y).all():
        raise DataError("y contains non-finite values")

    y_min, y_max = float(y.min()), float(y.max())
    center = 0.5 * (y_min + y_max)
    scale = (y_max - y_min) if y_max > y_min else 1.0
    y_scaled = (y - center) / scale

    grid = build_cutpoint_grid(X, cfg.grid_size)
    rng = substream(cfg.seed, "regression") if rng is None else rng
    tau = 0.5 / (cfg.k * math.sqrt(cfg.m))
    lam = _sigma_prior_scale(X, y_scaled, cfg)
    nu = cfg.sigma_df
    sigma2 = max(float(np.var(y_scaled, ddof=1)), 1e-20)

    chain = _Chain(X, grid, cfg, rng, tau, sigma2)
    n = X.shape[0]
    ensembles: list[Ensemble] = []
    sigmas = np.empty(cfg.ndpost)
    varcount = np.empty((cfg.ndpost, X.shape[1]), dtype=np.int64)
    varprob = np.empty((cfg.ndpost, X.shape[1])) if cfg.sparse else None
    for it in range(cfg.nskip + cfg.ndpost):
        chain.sweep_trees(y_scaled)
        resid = y_scaled - chain.allfit
        chain.sigma2 = (nu * lam + float(resid @ resid)) / rng.chisquare(nu + n)
        if cfg.sparse:
            chain.update_sparse()
        if it >= cfg.nskip:
            d = it - cfg.nskip
            ensembles.append(chain.freeze_ensemble())
            sigmas[d] = math.sqrt(chain.sigma2) * scale
            varcount[d] = chain.varcount
            if cfg.sparse:
                varprob[d] = chain.s
    return RegressionDraws(
        ensembles=ensembles, sigmas=sigmas, grid=grid, y_center=center,
        y_scale=scale, config=cfg, varcount=varcount, varprob=varprob,
        proposal_varcount=chain.proposal_varcount.copy(),
        max_fit_gap=chain.max_fit_gap,
    )


def fit_probit_binary(X, y01, cfg: BartConfig,
                      rng: np.random.Generator | None = None) -> BinaryProbitDraws:
    """Posterior sampling for a binary outcome under the probit link.

    Each sweep draws latent scores from normals truncated to (0, inf) for
    positives and (-inf, 0] for negatives, centered at the current ensemble
    fit, then updates the trees against those latents with unit error
    variance.
    """
    cfg.validate()
    X = _check_matrix(X)
    y01 = np.asarray(y01)
    if y01.ndim != 1 or y01.shape[0] != X.shape[0]:
        raise DataError("y must be a vector matching X rows")
    values = set(np.unique(y01).tolist())
    if not values <= {0, 1}:
        raise DataError(f"binary outcome must be coded 0/1, got values {sorted(values)}")
    if len(values) < 2:
        raise DegenerateLabelsError("both outcome classes must be present")
    y01 = y01.astype(int)

    grid = build_cutpoint_grid(X, cfg.grid_size)
    rng = substream(cfg.seed, "probit") if rng is None else rng
    tau = 3.0 / (cfg.k * math.sqrt(cfg.m))
    chain = _Chain(X, grid, cfg, rng, tau, sigma2=1.0)
    pos = y01 == 1

    ensembles: list[Ensemble] = []
    varcount = np.empty((cfg.ndpost, X.shape[1]), dtype=np.int64)
    varprob = np.empty((cfg.ndpost, X.shape[1])) if cfg.sparse else None
    latent = np.empty(X.shape[0])
    for it in range(cfg.nskip + cfg.ndpost):
        latent[pos] = truncated_normal_positive(chain.allfit[pos], rng)
        latent[~pos] = -truncated_normal_positive(-chain.allfit[~pos], rng)
        chain.sweep_trees(latent)
        if cfg.sparse:
            chain.update_sparse()
        if it >= cfg.nskip:
            d = it - cfg.nskip
            ensembles.append(chain.freeze_ensemble())
            varcount[d] = chain.varcount
            if cfg.sparse:
                varprob[d] = chain.s
    return BinaryProbitDraws(
        ensembles=ensembles, grid=grid, config=cfg, varcount=varcount,
        varprob=varprob, proposal_varcount=chain.proposal_varcount.copy(),
        max_fit_gap=chain.max_fit_gap,
    )


def stage_seed(seed: int, stage: int) -> int:
    """Sampler seed for conditional stage ``stage`` (1-based).

    Stage 1 keeps the master seed so a 2-class fit is identical to a direct
    binary probit fit; later stages get derived sub-seeds.
    """
    if stage == 1:
        return seed
    return int(seed_sequence(seed, "stage", stage).generate_state(1)[0])


def fit_multinomial(X, y, cfg: BartConfig, labels: list | None = None) -> ClassifierDraws:
    """K-class classification as a stack of conditional binary probit fits.

    Stage h (1-based, h = 1..K-1) fits the indicator of class h on the rows
    not assigned to classes 1..h-1; the last class needs no stage because its
    conditional probability is the remainder. ``labels`` declares the class
    set explicitly (defaults to the sorted distinct values of ``y``); a
    declared class missing from a conditional subset fails with the stage
    named.
    """
    cfg.validate()
    X = _check_matrix(X)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DataError("y must be a vector matching X rows")
    observed = set(y.tolist())
    if labels is None:
        labels = sorted(observed)
    else:
        labels = sorted(labels)
        stray = observed - set(labels)
        if stray:
            raise DataError(f"y holds values outside the declared classes: {sorted(stray)}")
    if len(labels) < 2:
        raise DegenerateLabelsError("need at least 2 classes")

    stages: list[BinaryProbitDraws] = []
    stage_rows: list[np.ndarray] = []
    remaining = np.arange(X.shape[0])
    for h, label in enumerate(labels[:-1], start=1):
        y_sub = y[remaining]
        indicator = (y_sub == label).astype(int)
        if indicator.size == 0 or indicator.min() == indicator.max():
            raise DegenerateLabelsError(
                f"stage {h} (class {label!r} vs later classes) has a single outcome"
            )
        sub_cfg = replace(cfg, seed=stage_seed(cfg.seed, h))
        stages.append(fit_probit_binary(X[remaining], indicator, sub_cfg))
        stage_rows.append(remaining.copy())
        remaining = remaining[indicator == 0]
    return ClassifierDraws(stages=stages, labels=labels, stage_rows=stage_rows, config=cfg)


def stack_stage_probs(stage_probs: np.ndarray) -> np.ndarray:
    """Turn conditional stage probabilities into class probabilities.

    ``stage_probs[..., h]`` is the conditional probability of class h given
    that no earlier class claimed the observation; the output appends the
    remainder class, so the rows always sum to one by telescoping.
    """
    stage_probs = np.asarray(stage_probs, dtype=float)
    survival = np.ones_like(stage_probs[..., 0])
    parts = []
    for h in range(stage_probs.shape[-1]):
        parts.append(stage_probs[..., h] * survival)
        survival = survival * (1.0 - stage_probs[..., h])
    parts.append(survival)
    return np.stack(parts, axis=-1)


def predict_class_probs(draws: ClassifierDraws, Xnew) -> ClassProbs:
    """Posterior-mean class probabilities for new rows.

    Per draw, class probabilities telescope out of the conditional stage
    probabilities; the posterior mean is taken over draws and rows are
    renormalized only to absorb float drift.
    """
    Xnew = _check_matrix(Xnew)
    per_stage = np.stack(
        [stage.prob_draws(Xnew) for stage in draws.stages], axis=-1
    )  # draws x rows x stages
    probs = stack_stage_probs(per_stage).mean(axis=0)  # rows x classes
    return ClassProbs(probs, list(draws.labels))


def predict_labels(probs: ClassProbs) -> np.ndarray:
    """Highest-probability class per row; ties go to the lowest class index."""
    winners = probs.probs.argmax(axis=1)
    return np.asarray([probs.labels[i] for i in winners])
