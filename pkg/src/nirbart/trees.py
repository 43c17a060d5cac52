"""Decision-tree representation, evaluation, cutpoint grids, and the flat
tree dump format.

Trees are binary, heap-indexed (root = 1, children of node ``i`` are ``2i``
and ``2i + 1``) and split on continuous predictors only. A split stores the
predictor index and an index into a shared :class:`CutpointGrid`; routing
sends ``x[var] <= cut_value`` to the left child (ties go left).

The flat dump encodes one tree as a header record carrying the node count
followed by one record per node, columns ``(node, var, cut, leaf)``. Leaves
are written with ``var = cut = 0``; whether a record is a leaf is decided by
topology (a node is internal iff its left child id is present), so a
legitimate split on the first predictor at grid index 0 is never misread.
Variable and cut indices are 0-based both on disk and in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, StructuralError

#: In-memory marker for "no split": a leaf stores this in both var and cut.
SENTINEL_LEAF = -1


@dataclass(frozen=True)
class TreeNode:
    """One node of a decision tree.

    ``var``/``cut`` are ``SENTINEL_LEAF`` for leaves; ``leaf`` is the node
    output (latent-scale units) and is NaN for internal nodes.
    """

    var: int
    cut: int
    leaf: float

    @property
    def is_leaf(self) -> bool:
        return self.var == SENTINEL_LEAF

    @staticmethod
    def make_leaf(value: float) -> "TreeNode":
        return TreeNode(SENTINEL_LEAF, SENTINEL_LEAF, float(value))

    @staticmethod
    def make_split(var: int, cut: int) -> "TreeNode":
        return TreeNode(int(var), int(cut), math.nan)


class CutpointGrid:
    """Per-predictor candidate split values.

    ``cuts[j]`` is a strictly increasing array of candidate cut values for
    predictor ``j``. Predictors with a single distinct observed value get a
    degenerate 1-point grid and are flagged unusable for splits.
    """

    def __init__(self, cuts: list[np.ndarray], usable: np.ndarray):
        self.cuts = [np.asarray(c, dtype=float) for c in cuts]
        self.usable = np.asarray(usable, dtype=bool)
        self.p = len(self.cuts)
        # Dense (p, C) view for vectorised availability checks in the sampler.
        # Degenerate columns are padded with their single value.
        width = max(len(c) for c in self.cuts) if self.cuts else 0
        self._matrix = np.empty((self.p, width))
        for j, c in enumerate(self.cuts):
            self._matrix[j, : len(c)] = c
            self._matrix[j, len(c):] = c[-1] if len(c) else np.nan
        self._sizes = np.array([len(c) for c in self.cuts])

    def value(self, var: int, cut: int) -> float:
        return float(self.cuts[var][cut])

    def n_cuts(self, var: int) -> int:
        return len(self.cuts[var])

    def to_jsonable(self) -> dict:
        return {
            "cuts": [c.tolist() for c in self.cuts],
            "usable": self.usable.astype(int).tolist(),
        }

    @staticmethod
    def from_jsonable(obj: dict) -> "CutpointGrid":
        return CutpointGrid(
            [np.asarray(c, dtype=float) for c in obj["cuts"]],
            np.asarray(obj["usable"], dtype=bool),
        )


def build_cutpoint_grid(X: np.ndarray, C: int = 100) -> CutpointGrid:
    """Equally spaced interior cut candidates for every predictor.

    For a column spanning ``[lo, hi]`` the grid holds ``C`` values
    ``lo + (hi - lo) * i / (C + 1)`` for ``i = 1..C``, all strictly inside
    the observed range. Constant columns get a 1-point degenerate grid
    flagged unusable.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("cutpoint grid needs a 2-D matrix with at least 2 rows")
    if C < 1:
        raise DataError("grid size C must be >= 1")
    bad = np.flatnonzero(~np.isfinite(X).all(axis=0))
    if bad.size:
        raise DataError(f"non-finite values in predictor column {bad[0]}")
    cuts: list[np.ndarray] = []
    usable = np.empty(X.shape[1], dtype=bool)
    steps = np.arange(1, C + 1) / (C + 1)
    for j in range(X.shape[1]):
        lo = X[:, j].min()
        hi = X[:, j].max()
        if lo == hi:
            cuts.append(np.array([lo]))
            usable[j] = False
        else:
            cuts.append(lo + (hi - lo) * steps)
            usable[j] = True
    return CutpointGrid(cuts, usable)


@dataclass
class Tree:
    """Immutable-after-construction decision tree keyed by heap node id."""

    nodes: dict[int, TreeNode]

    def validate(self, p: int | None = None) -> None:
        """Check the structural invariants, naming the offending node."""
        if 1 not in self.nodes:
            raise StructuralError("tree has no root", node_id=1)
        for nid, node in self.nodes.items():
            if nid < 1:
                raise StructuralError("node ids must be positive", node_id=nid)
            if nid > 1 and (nid // 2) not in self.nodes:
                raise StructuralError("node has no parent", node_id=nid)
            left, right = 2 * nid, 2 * nid + 1
            if node.is_leaf:
                if node.cut != SENTINEL_LEAF:
                    raise StructuralError("leaf marker must cover var and cut", node_id=nid)
                if not math.isfinite(node.leaf):
                    raise StructuralError("non-finite leaf value", node_id=nid)
                if left in self.nodes or right in self.nodes:
                    raise StructuralError("leaf node has children", node_id=nid)
            else:
                if node.var < 0 or node.cut < 0:
                    raise StructuralError("internal node with invalid split", node_id=nid)
                if p is not None and node.var >= p:
                    raise StructuralError("split variable out of range", node_id=nid)
                if left not in self.nodes or right not in self.nodes:
                    raise StructuralError("internal node missing a child", node_id=nid)

    def leaves(self) -> list[int]:
        return [nid for nid, node in self.nodes.items() if node.is_leaf]

    def depth(self) -> int:
        return max(int(math.log2(nid)) for nid in self.nodes)

    def n_nodes(self) -> int:
        return len(self.nodes)

    def split_vars(self) -> list[int]:
        return [node.var for node in self.nodes.values() if not node.is_leaf]


@dataclass
class Ensemble:
    """A sum-of-trees model: prediction is the sum of per-tree leaf outputs."""

    trees: list[Tree]

    @property
    def m(self) -> int:
        return len(self.trees)


def evaluate_tree(tree: Tree, grid: CutpointGrid, x: np.ndarray) -> float:
    """Route ``x`` to its unique leaf and return the leaf value.

    Routing rule: go left iff ``x[var] <= grid value`` (ties go left).
    """
    x = np.asarray(x, dtype=float)
    nid = 1
    seen = 0
    while True:
        node = tree.nodes.get(nid)
        if node is None:
            raise StructuralError("routing reached a missing node", node_id=nid)
        if node.is_leaf:
            if not math.isfinite(node.leaf):
                raise StructuralError("non-finite leaf value", node_id=nid)
            return node.leaf
        if node.var >= grid.p or node.var < 0:
            raise StructuralError("split variable out of range", node_id=nid)
        nid = 2 * nid if x[node.var] <= grid.value(node.var, node.cut) else 2 * nid + 1
        seen += 1
        if seen > len(tree.nodes):
            raise StructuralError("routing cycle detected", node_id=nid)


def evaluate_ensemble(ensemble: Ensemble, grid: CutpointGrid, x: np.ndarray) -> float:
    """Sum of per-tree evaluations; an empty ensemble evaluates to 0.0."""
    return float(sum(evaluate_tree(t, grid, x) for t in ensemble.trees))


def evaluate_tree_matrix(tree: Tree, grid: CutpointGrid, X: np.ndarray) -> np.ndarray:
    """Vectorised :func:`evaluate_tree` over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[0])
    stack = [(1, np.arange(X.shape[0]))]
    while stack:
        nid, rows = stack.pop()
        node = tree.nodes.get(nid)
        if node is None:
            raise StructuralError("routing reached a missing node", node_id=nid)
        if node.is_leaf:
            out[rows] = node.leaf
            continue
        go_left = X[rows, node.var] <= grid.value(node.var, node.cut)
        stack.append((2 * nid, rows[go_left]))
        stack.append((2 * nid + 1, rows[~go_left]))
    return out


def evaluate_ensemble_matrix(ensemble: Ensemble, grid: CutpointGrid, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape[0])
    for tree in ensemble.trees:
        out += evaluate_tree_matrix(tree, grid, X)
    return out


# ---------------------------------------------------------------------------
# Flat record serialization
# ---------------------------------------------------------------------------

def serialize_tree(tree: Tree) -> list[tuple]:
    """Flatten a tree into header + per-node records.

    The header record is ``(n_nodes, None, None, None)``; body records are
    ``(node_id, var, cut, leaf)`` sorted by node id, with leaves written as
    ``var = cut = 0`` and internal nodes as ``leaf = 0.0``.
    """
    tree.validate()
    records: list[tuple] = [(len(tree.nodes), None, None, None)]
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if node.is_leaf:
            records.append((nid, 0, 0, float(node.leaf)))
        else:
            records.append((nid, int(node.var), int(node.cut), 0.0))
    return records


def parse_tree(records: list) -> Tree:
    """Inverse of :func:`serialize_tree`.

    A record is internal iff its left child id appears in the record set, so
    the on-disk leaf marker ``var = cut = 0`` never clashes with a genuine
    split on predictor 0 at cut index 0.
    """
    if not records:
        raise DataError("empty tree record list")
    header = records[0]
    try:
        count = int(header[0])
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad tree header record: {header!r}") from exc
    body = records[1:]
    if len(body) != count:
        raise DataError(f"tree header declares {count} nodes but {len(body)} records follow")
    ids = set()
    rows: dict[int, tuple[int, int, float]] = {}
    for rec in body:
        nid = int(rec[0])
        if nid in ids:
            raise StructuralError("duplicate node id", node_id=nid)
        ids.add(nid)
        rows[nid] = (int(rec[1]), int(rec[2]), float(rec[3]))
    nodes: dict[int, TreeNode] = {}
    for nid, (var, cut, leaf) in rows.items():
        if nid > 1 and (nid // 2) not in ids:
            raise StructuralError("node has no parent", node_id=nid)
        if 2 * nid in ids:  # internal by topology
            if (2 * nid + 1) not in ids:
                raise StructuralError("internal node missing right child", node_id=nid)
            nodes[nid] = TreeNode.make_split(var, cut)
        else:
            if var != 0 or cut != 0:
                raise StructuralError("childless node carries split fields", node_id=nid)
            if not math.isfinite(leaf):
                raise StructuralError("non-finite leaf value", node_id=nid)
            nodes[nid] = TreeNode.make_leaf(leaf)
    tree = Tree(nodes)
    tree.validate()
    return tree


def format_tree_block(tree: Tree) -> str:
    """One tree as a plain-text block (header row then node rows)."""
    lines = []
    for rec in serialize_tree(tree):
        if rec[1] is None:
            lines.append(f"{rec[0]} NA NA NA")
        else:
            lines.append(f"{rec[0]} {rec[1]} {rec[2]} {repr(rec[3])}")
    return "\n".join(lines)


def parse_tree_block(block: str) -> Tree:
    records: list[tuple] = []
    for line in block.strip().splitlines():
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"malformed tree record line: {line!r}")
        if parts[1] == "NA":
            records.append((int(parts[0]), None, None, None))
        else:
            records.append((int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
    return parse_tree(records)


def write_tree_dump(trees: list[Tree], path) -> None:
    """Plain-text dump: a column-title line, then one blank-line-separated
    block per tree."""
    blocks = [format_tree_block(t) for t in trees]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node var cut leaf\n")
        fh.write("\n\n".join(blocks))
        fh.write("\n")


def read_tree_dump(path) -> list[Tree]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.strip().splitlines()
    if not lines or lines[0].split() != ["node", "var", "cut", "leaf"]:
        raise DataError("tree dump missing 'node var cut leaf' title line")
    body = "\n".join(lines[1:])
    return [parse_tree_block(b) for b in body.split("\n\n") if b.strip()]
