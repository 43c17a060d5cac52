import numpy as np
import pytest

from nirbart.errors import DataError, NumericError
from nirbart.selection import (
    _theta_grid_posterior,
    dirichlet_update,
    select_top,
    sparse_selection,
    theta_update,
    usage_frequencies,
)


# ---------------------------------------------------------------------------
# usage frequencies
# ---------------------------------------------------------------------------

def test_single_draw_proportions():
    summary = usage_frequencies(np.array([[2, 1, 1]]))
    assert np.allclose(summary.mean, [0.5, 0.25, 0.25])
    assert list(summary.ranking) == [0, 1, 2]
    assert summary.n_draws_used == 1 and summary.n_draws_skipped == 0


def test_mean_matches_two_pass_oracle():
    rng = np.random.default_rng(0)
    vc = rng.integers(0, 20, size=(500, 7))
    vc[vc.sum(axis=1) == 0, 0] = 1  # ensure no zero rows for the oracle
    summary = usage_frequencies(vc)
    # naive double loop
    want = np.zeros(7)
    for i in range(500):
        row_total = vc[i].sum()
        for j in range(7):
            want[j] += vc[i, j] / row_total
    want /= 500
    assert np.abs(summary.mean - want).max() < 1e-12
    assert abs(summary.mean.sum() - 1.0) < 1e-9


def test_zero_split_draws_skipped_and_counted():
    vc = np.array([[0, 0, 0], [3, 1, 0], [0, 0, 0], [1, 1, 2]])
    summary = usage_frequencies(vc)
    assert summary.n_draws_skipped == 2
    assert summary.n_draws_used == 2
    assert abs(summary.mean.sum() - 1.0) < 1e-12


def test_all_zero_draws_error():
    with pytest.raises(NumericError, match="all-leaf"):
        usage_frequencies(np.zeros((5, 4), dtype=int))


def test_bounds_are_ordered_percentiles():
    rng = np.random.default_rng(1)
    vc = rng.integers(1, 30, size=(400, 5))
    summary = usage_frequencies(vc)
    fractions = vc / vc.sum(axis=1, keepdims=True)
    assert np.allclose(summary.lower, np.percentile(fractions, 2.5, axis=0))
    assert np.allclose(summary.upper, np.percentile(fractions, 97.5, axis=0))
    assert np.all(summary.lower <= summary.mean + 1e-12)
    assert np.all(summary.mean <= summary.upper + 1e-12)


def test_ranking_tie_breaks_by_index():
    summary = usage_frequencies(np.array([[1, 2, 1, 2]]))
    assert list(summary.ranking) == [1, 3, 0, 2]


def test_select_top_cumulative():
    # counts built to give proportions 0.4704 / 0.2645 / 0.1302 / remainder
    counts = np.array([[4704, 2645, 1302, 800, 549]])
    summary = usage_frequencies(counts)
    top, cumulative = select_top(summary, 3)
    assert list(top) == [0, 1, 2]
    assert cumulative == pytest.approx(0.8651, abs=1e-12)
    everything, total = select_top(summary, 5)
    assert total == pytest.approx(1.0, abs=1e-12)
    none, zero = select_top(summary, 0)
    assert none.size == 0 and zero == 0.0


def test_select_top_range_errors():
    summary = usage_frequencies(np.array([[1, 1]]))
    with pytest.raises(DataError):
        select_top(summary, 3)


# ---------------------------------------------------------------------------
# Dirichlet update
# ---------------------------------------------------------------------------

def test_dirichlet_zero_counts_symmetric():
    rng = np.random.default_rng(2)
    p = 6
    draws = np.stack([
        dirichlet_update(np.zeros(p), theta=float(p), rng=rng) for _ in range(20000)
    ])
    # theta = p makes every concentration 1: symmetric Dirichlet, mean 1/p
    se = np.sqrt(1 / p * (1 - 1 / p) / (p + 1) / 20000)
    assert np.abs(draws.mean(axis=0) - 1 / p).max() < 4 * se


def test_dirichlet_concentrated_mean_formula():
    rng = np.random.default_rng(3)
    p = 5
    theta = 0.5
    counts = np.zeros(p)
    counts[0] = 1000
    n = 100_000
    draws = np.stack([dirichlet_update(counts, theta, rng) for _ in range(n)])
    alpha0 = theta + 1000
    want = (theta / p + 1000) / alpha0
    var = want * (1 - want) / (alpha0 + 1)
    se = np.sqrt(var / n)
    assert abs(draws[:, 0].mean() - want) < 3 * se


def test_dirichlet_simplex_and_positivity():
    rng = np.random.default_rng(4)
    for theta in (0.01, 1.0, 50.0):
        for _ in range(50):
            counts = rng.integers(0, 40, size=8).astype(float)
            s = dirichlet_update(counts, theta, rng)
            assert abs(s.sum() - 1.0) < 1e-12
            assert np.all(s > 0)


def test_dirichlet_tiny_concentration_stays_normalizable():
    rng = np.random.default_rng(5)
    for _ in range(200):
        s = dirichlet_update(np.zeros(3), theta=0.01, rng=rng)
        assert np.isfinite(s).all()
        assert abs(s.sum() - 1.0) < 1e-12
        assert np.all(s > 0)


def test_dirichlet_input_validation():
    rng = np.random.default_rng(6)
    with pytest.raises(DataError):
        dirichlet_update(np.array([1.0, -1.0]), 1.0, rng)
    with pytest.raises(DataError):
        dirichlet_update(np.array([1.0, 1.0]), 0.0, rng)


# ---------------------------------------------------------------------------
# theta update
# ---------------------------------------------------------------------------

def test_theta_grid_is_proper_distribution():
    s = np.full(10, 0.1)
    _, weights = _theta_grid_posterior(s, a=0.5, b=1.0, rho=10.0)
    assert abs(weights.sum() - 1.0) < 1e-12
    assert np.all(weights >= 0)


def test_theta_mode_uniform_vs_concentrated():
    p = 20
    uniform = np.full(p, 1 / p)
    concentrated = np.full(p, 1e-6)
    concentrated[0] = 1 - 19e-6
    lam, w_uniform = _theta_grid_posterior(uniform, 0.5, 1.0, float(p))
    _, w_conc = _theta_grid_posterior(concentrated, 0.5, 1.0, float(p))
    # a flat s supports a larger concentration than a spiked s
    assert lam[np.argmax(w_uniform)] > lam[np.argmax(w_conc)]


def test_theta_stays_positive_finite_over_many_updates():
    rng = np.random.default_rng(7)
    p = 15
    theta = float(p)
    for _ in range(10_000):
        s = dirichlet_update(rng.integers(0, 5, size=p).astype(float), theta, rng)
        theta = theta_update(theta, s, rng)
        assert 0 < theta < np.inf


# ---------------------------------------------------------------------------
# sparse summary plumbing
# ---------------------------------------------------------------------------

class _FakeStage:
    def __init__(self, varprob):
        self.varprob = varprob


class _FakeDraws:
    def __init__(self, stages):
        self.stages = stages


def test_sparse_selection_threshold_and_flags():
    p = 224
    rng = np.random.default_rng(8)
    base = rng.dirichlet(np.full(p, 0.1), size=50)
    draws = _FakeDraws([_FakeStage(base), _FakeStage(base.copy())])
    summary = sparse_selection(draws)
    assert summary.threshold == pytest.approx(1 / 224)
    assert 0.00446 < summary.threshold < 0.00447
    assert summary.n_stages == 2
    for h in range(2):
        assert abs(summary.stage_means[h].sum() - 1.0) < 1e-9
        chosen = set(summary.selected[h].tolist())
        for j in range(p):
            assert (summary.stage_means[h, j] > summary.threshold) == (j in chosen)
    assert summary.flags[0] == ""
    assert summary.flags[1] == "conditional, small-support"


def test_sparse_selection_strict_inequality():
    p = 4
    row = np.full((3, p), 1 / p)  # exactly at threshold everywhere
    summary = sparse_selection(_FakeDraws([_FakeStage(row)]))
    assert summary.selected[0].size == 0


def test_sparse_selection_requires_varprob():
    with pytest.raises(DataError, match="sparse"):
        sparse_selection(_FakeDraws([_FakeStage(None)]))
    with pytest.raises(DataError):
        sparse_selection(object())
