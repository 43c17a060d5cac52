import numpy as np
import pytest

from nirbart.trees import CutpointGrid, Tree, TreeNode, build_cutpoint_grid


def random_tree(rng: np.random.Generator, grid: CutpointGrid, max_splits: int = 6) -> Tree:
    """Grow a random valid tree by splitting random leaves of a stump."""
    nodes = {1: TreeNode.make_leaf(rng.normal())}
    leaves = [1]
    for _ in range(int(rng.integers(0, max_splits + 1))):
        grow_at = leaves[rng.integers(len(leaves))]
        if grow_at >= 2**20:  # keep ids bounded
            continue
        usable = np.flatnonzero(grid.usable)
        if usable.size == 0:
            break
        var = int(rng.choice(usable))
        cut = int(rng.integers(grid.n_cuts(var)))
        nodes[grow_at] = TreeNode.make_split(var, cut)
        left, right = 2 * grow_at, 2 * grow_at + 1
        nodes[left] = TreeNode.make_leaf(rng.normal())
        nodes[right] = TreeNode.make_leaf(rng.normal())
        leaves.remove(grow_at)
        leaves.extend([left, right])
    return Tree(nodes)


@pytest.fixture
def unit_grid():
    """Grid over 4 predictors spanning [0, 1] with 20 interior cuts each."""
    X = np.vstack([np.zeros(4), np.ones(4)])
    return build_cutpoint_grid(X, C=20)


def friedman_data(rng: np.random.Generator, n: int, p: int = 10, noise: float = 1.0):
    """Benchmark surface: 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5,
    plus Gaussian noise; only the first five predictors matter."""
    X = rng.uniform(size=(n, p))
    signal = (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )
    return X, signal + noise * rng.normal(size=n)


@pytest.fixture
def reference_tree_records():
    """Five-node flat dump: root splits var 2 at cut 19, its left child splits
    var 1 at cut 45, leaves carry 0.360 / 0.206 / -0.257."""
    return [
        (5, None, None, None),
        (1, 2, 19, -0.096),
        (2, 1, 45, 0.0982),
        (3, 0, 0, 0.360),
        (4, 0, 0, 0.206),
        (5, 0, 0, -0.257),
    ]
